"""Laser-diode radiation model and the ceiling light units built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geometry import Orientation, unit, vec

ADT_POSITIONS = ((1, 1), (1, 3), (1, 5), (1, 7), (3, 1), (3, 3), (3, 5), (3, 7))
ILLUM_POSITIONS = ((2, 1), (2, 2.5), (2, 4), (2, 5.5), (2, 7))
BRANCH_AZIMUTHS = (45.0, 135.0, 225.0, 315.0)
ADT_ELEVATION = -70.0
ADT_HALF_ANGLE = 21.0
ILLUM_SEMI_ANGLE = 70.0
LDS_PER_BRANCH = 3
LDS_PER_ILLUM_UNIT = 9


def lambertian_order_from_half_angle(phi_half_deg: float) -> float:
    """Lambertian order n for which cos(phi_half)**n == 1/2."""
    if not 0.0 < phi_half_deg < 90.0:
        raise ValueError(f"half-power angle must be in (0, 90) degrees, got {phi_half_deg}")
    return -math.log(2.0) / math.log(math.cos(math.radians(phi_half_deg)))


@dataclass(frozen=True, eq=False)
class Beam:
    """A generalized-Lambertian emitter.

    Parameters
    ----------
    position : (3,) array
    pointing : (3,) unit array
    order : Lambertian order n > 0
    power : optical power in W
    flux : luminous flux in lm
    """

    position: np.ndarray
    pointing: np.ndarray
    order: float
    power: float
    flux: float = 0.0

    def __post_init__(self):
        if not self.order > 0.0:
            raise ValueError(f"Lambertian order must be positive, got {self.order}")
        if self.power < 0.0 or self.flux < 0.0:
            raise ValueError("beam power and flux must be non-negative")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "pointing", unit(self.pointing))

    def scaled(self, power_factor: float = 1.0, flux_factor: float = 1.0) -> Beam:
        return replace(self, power=self.power * power_factor, flux=self.flux * flux_factor)


def _intensity(scale: float, order: float, pointing: np.ndarray, directions: np.ndarray) -> np.ndarray:
    cos_phi = directions @ pointing
    out = np.zeros(cos_phi.shape)
    fwd = cos_phi > 0.0
    out[fwd] = scale * (order + 1.0) / (2.0 * math.pi) * cos_phi[fwd] ** order
    return out


def radiant_intensity(b: Beam, direction: np.ndarray) -> np.ndarray | float:
    """Radiant intensity in W/sr toward unit ``direction`` (or an (N, 3) stack)."""
    d = np.asarray(direction, dtype=float)
    out = _intensity(b.power, b.order, b.pointing, np.atleast_2d(d))
    return float(out[0]) if d.ndim == 1 else out


def luminous_intensity(b: Beam, direction: np.ndarray) -> np.ndarray | float:
    """Same pattern as :func:`radiant_intensity`, carried by luminous flux (cd)."""
    d = np.asarray(direction, dtype=float)
    out = _intensity(b.flux, b.order, b.pointing, np.atleast_2d(d))
    return float(out[0]) if d.ndim == 1 else out


class UnitKind(Enum):
    ADT = "adt"
    ILLUM = "illum"


@dataclass(frozen=True, eq=False)
class Branch:
    """Co-located, co-pointed laser diodes driven as one ADT branch."""

    beams: tuple[Beam, ...]
    orientation: Orientation
    unit_id: int
    branch_id: int

    @property
    def position(self) -> np.ndarray:
        return self.beams[0].position

    @property
    def pointing(self) -> np.ndarray:
        return self.beams[0].pointing

    @property
    def order(self) -> float:
        return self.beams[0].order

    @property
    def power(self) -> float:
        return sum(b.power for b in self.beams)

    @property
    def flux(self) -> float:
        return sum(b.flux for b in self.beams)

    def as_beam(self) -> Beam:
        """The branch as a single source carrying the summed power and flux."""
        return Beam(self.position, self.pointing, self.order, self.power, self.flux)


@dataclass(frozen=True, eq=False)
class LightUnit:
    kind: UnitKind
    unit_id: int
    position: np.ndarray
    branches: tuple[Branch, ...] = ()
    beams: tuple[Beam, ...] = ()

    def all_beams(self) -> list[Beam]:
        if self.kind is UnitKind.ADT:
            return [b for br in self.branches for b in br.beams]
        return list(self.beams)

    def aggregate_beams(self) -> list[Beam]:
        """One source per group of co-located, co-pointed diodes."""
        if self.kind is UnitKind.ADT:
            return [br.as_beam() for br in self.branches]
        b0 = self.beams[0]
        return [Beam(b0.position, b0.pointing, b0.order, sum(b.power for b in self.beams), sum(b.flux for b in self.beams))]

    @property
    def power(self) -> float:
        return sum(b.power for b in self.all_beams())


def build_adt_units(
    ld_power: float = 0.5,
    ld_flux: float = 0.0,
    positions=ADT_POSITIONS,
    height: float = 3.0,
    half_angle_deg: float = ADT_HALF_ANGLE,
    elevation_deg: float = ADT_ELEVATION,
    azimuths=BRANCH_AZIMUTHS,
    lds_per_branch: int = LDS_PER_BRANCH,
) -> list[LightUnit]:
    n = lambertian_order_from_half_angle(half_angle_deg)
    units = []
    for uid, (x, y) in enumerate(positions):
        pos = vec(x, y, height)
        branches = []
        for bid, az in enumerate(azimuths):
            o = Orientation(az, elevation_deg)
            beam = Beam(pos, o.direction, n, ld_power, ld_flux)
            branches.append(Branch((beam,) * lds_per_branch, o, uid, bid))
        units.append(LightUnit(UnitKind.ADT, uid, pos, branches=tuple(branches)))
    return units


def build_illum_units(
    ld_flux: float = 0.0,
    ld_power: float = 0.0,
    positions=ILLUM_POSITIONS,
    height: float = 3.0,
    semi_angle_deg: float = ILLUM_SEMI_ANGLE,
    lds_per_unit: int = LDS_PER_ILLUM_UNIT,
    first_id: int = 0,
) -> list[LightUnit]:
    n = lambertian_order_from_half_angle(semi_angle_deg)
    down = vec(0, 0, -1)
    units = []
    for k, (x, y) in enumerate(positions):
        pos = vec(x, y, height)
        beam = Beam(pos, down, n, ld_power, ld_flux)
        units.append(LightUnit(UnitKind.ILLUM, first_id + k, pos, beams=(beam,) * lds_per_unit))
    return units
