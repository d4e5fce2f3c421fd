"""Photodetectors and the four-branch angle diversity receiver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Orientation, Room

ADR_AZIMUTHS = (45.0, 135.0, 225.0, 315.0)
ADR_ELEVATION = 70.0
PD_AREA = 4e-6
RESPONSIVITY = 0.4
FOV_DEG = 21.0

# Slack on the FOV gate so rays exactly on the edge are accepted.
_GATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DetectorBranch:
    orientation: Orientation
    area: float = PD_AREA
    responsivity: float = RESPONSIVITY
    fov_deg: float = FOV_DEG

    def __post_init__(self):
        if not self.area > 0.0:
            raise ValueError("detector area must be positive")
        if not 0.0 < self.fov_deg <= 90.0:
            raise ValueError(f"field of view must be in (0, 90], got {self.fov_deg}")
        object.__setattr__(self, "_normal", self.orientation.direction)
        object.__setattr__(self, "_cos_fov", math.cos(math.radians(self.fov_deg)))

    @property
    def normal(self) -> np.ndarray:
        return self._normal

    def effective_area(self, arrival_directions: np.ndarray) -> np.ndarray:
        """Vectorised :func:`incidence_gain` over an (N, 3) stack of directions."""
        cos_d = -(np.asarray(arrival_directions) @ self._normal)
        ok = (cos_d > 0.0) & (cos_d >= self._cos_fov - _GATE_TOL)
        return np.where(ok, self.area * cos_d, 0.0)


def incidence_gain(d: DetectorBranch, arrival_direction: np.ndarray) -> float:
    """Effective collecting area (m^2) for light travelling along ``arrival_direction``.

    Returns ``area * cos(delta)`` inside the field of view and 0 outside, where
    delta is the angle between the detector normal and the reversed direction.
    No concentrator gain is applied.
    """
    return float(d.effective_area(np.atleast_2d(arrival_direction))[0])


@dataclass(frozen=True, eq=False)
class ADR:
    position: np.ndarray
    branches: tuple[DetectorBranch, ...]


def place_adr(
    position,
    room: Room | None = None,
    azimuths=ADR_AZIMUTHS,
    elevation_deg: float = ADR_ELEVATION,
    area: float = PD_AREA,
    responsivity: float = RESPONSIVITY,
    fov_deg: float = FOV_DEG,
) -> ADR:
    p = np.asarray(position, dtype=float)
    if room is not None and not room.contains(p):
        raise ValueError(f"receiver position {tuple(p)} is outside the room")
    branches = tuple(
        DetectorBranch(Orientation(az, elevation_deg), area, responsivity, fov_deg) for az in azimuths
    )
    return ADR(p, branches)
