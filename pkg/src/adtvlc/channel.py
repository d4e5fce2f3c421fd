"""Ray-traced optical channel: line of sight plus first and second order diffuse reflections.

Every surface element is a Lambertian (n = 1) re-emitter of the power it
intercepts, scaled by its reflectivity. Arrivals are kept exact as
(time, power, order) triples; binning is only for export.

Arrival lists are assembled in a fixed canonical order (reflection order,
then source index, then element indices) so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Mesh, Room
from .receivers import ADR, DetectorBranch
from .sources import Beam

SPEED_OF_LIGHT = 3e8

# Rows of the element-pair matrix processed at once in second order.
_PAIR_CHUNK = 512


@dataclass(frozen=True)
class Arrival:
    time: float
    power: float
    order: int


@dataclass(frozen=True, eq=False)
class ArrivalList:
    times: np.ndarray
    powers: np.ndarray
    orders: np.ndarray

    @classmethod
    def empty(cls) -> ArrivalList:
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def from_arrivals(cls, arrivals: Iterable[Arrival]) -> ArrivalList:
        arrivals = list(arrivals)
        return cls(
            np.array([a.time for a in arrivals], dtype=float),
            np.array([a.power for a in arrivals], dtype=float),
            np.array([a.order for a in arrivals], dtype=int),
        )

    @classmethod
    def concatenate(cls, parts: Sequence[ArrivalList]) -> ArrivalList:
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.times for p in parts]),
            np.concatenate([p.powers for p in parts]),
            np.concatenate([p.orders for p in parts]),
        )

    def __len__(self) -> int:
        return len(self.powers)

    def __iter__(self):
        for t, p, o in zip(self.times, self.powers, self.orders):
            yield Arrival(float(t), float(p), int(o))

    @property
    def total_power(self) -> float:
        return float(np.sum(self.powers))

    def power_by_order(self, order: int) -> float:
        return float(np.sum(self.powers[self.orders == order]))

    def select(self, order: int) -> ArrivalList:
        m = self.orders == order
        return ArrivalList(self.times[m], self.powers[m], self.orders[m])

    def scaled(self, k: float) -> ArrivalList:
        return ArrivalList(self.times, self.powers * k, self.orders)


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    bin_width: float
    t0: float
    bins: np.ndarray

    @property
    def bin_times(self) -> np.ndarray:
        return self.t0 + self.bin_width * np.arange(len(self.bins))


def _make_list(times, powers, order: int) -> ArrivalList:
    keep = powers > 0.0
    times = np.asarray(times)[keep]
    return ArrivalList(times, np.asarray(powers)[keep], np.full(len(times), order, dtype=int))


def los_arrival(b: Beam, d: DetectorBranch, rx_position, c: float = SPEED_OF_LIGHT) -> Arrival | None:
    v = np.asarray(rx_position, dtype=float) - b.position
    dist = float(np.linalg.norm(v))
    if dist == 0.0:
        raise ValueError("beam and detector are co-located")
    u = v / dist
    cos_phi = float(u @ b.pointing)
    if cos_phi <= 0.0:
        return None
    intensity = b.power * (b.order + 1.0) / (2.0 * math.pi) * cos_phi**b.order
    power = intensity * float(d.effective_area(u[None, :])[0]) / dist**2
    if power <= 0.0:
        return None
    return Arrival(dist / c, power, 0)


def element_irradiation(b: Beam, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Power (W) intercepted by each element directly from ``b`` and the path lengths."""
    v = mesh.centers - b.position
    dist = np.linalg.norm(v, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    u = v / safe[:, None]
    cos_phi = u @ b.pointing
    cos_in = -np.einsum("ij,ij->i", u, mesh.normals)
    ok = (dist > 0.0) & (cos_phi > 0.0) & (cos_in > 0.0)
    power = np.zeros(len(mesh))
    k = b.power * (b.order + 1.0) / (2.0 * math.pi)
    power[ok] = k * cos_phi[ok] ** b.order * mesh.areas[ok] * cos_in[ok] / dist[ok] ** 2
    return power, dist


def detector_view(d: DetectorBranch, rx_position, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of the power re-emitted by each element that reaches the detector.

    Returns (coupling, path length). The coupling excludes reflectivity.
    """
    v = np.asarray(rx_position, dtype=float) - mesh.centers
    dist = np.linalg.norm(v, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    u = v / safe[:, None]
    cos_out = np.einsum("ij,ij->i", u, mesh.normals)
    a_eff = d.effective_area(u)
    ok = (dist > 0.0) & (cos_out > 0.0) & (a_eff > 0.0)
    coupling = np.zeros(len(mesh))
    coupling[ok] = cos_out[ok] * a_eff[ok] / (math.pi * dist[ok] ** 2)
    return coupling, dist


def _first_order(incident, d1, coupling, d2, mesh: Mesh, c: float) -> ArrivalList:
    power = mesh.rho * incident * coupling
    return _make_list((d1 + d2) / c, power, 1)


def _second_order(incident, d1, coupling, d2, mesh: Mesh, c: float) -> ArrivalList:
    src = np.flatnonzero(incident * mesh.rho > 0.0)
    dst = np.flatnonzero(coupling * mesh.rho > 0.0)
    if len(src) == 0 or len(dst) == 0:
        return ArrivalList.empty()
    pos_j = mesh.centers[dst]
    n_j = mesh.normals[dst]
    surf_j = mesh.surface_index[dst]
    # Power leaving each destination element per watt arriving on it, toward the detector.
    out_j = mesh.rho[dst] * coupling[dst]
    times, powers = [], []
    for lo in range(0, len(src), _PAIR_CHUNK):
        i = src[lo : lo + _PAIR_CHUNK]
        v = pos_j[None, :, :] - mesh.centers[i][:, None, :]
        dist = np.sqrt(np.einsum("abk,abk->ab", v, v))
        dist = np.where(dist > 0.0, dist, np.inf)
        cos_out = np.einsum("abk,ak->ab", v, mesh.normals[i]) / dist
        cos_in = -np.einsum("abk,bk->ab", v, n_j) / dist
        ok = (cos_out > 0.0) & (cos_in > 0.0) & (mesh.surface_index[i][:, None] != surf_j[None, :])
        emitted = (mesh.rho[i] * incident[i])[:, None]
        p = np.where(ok, emitted * cos_out * cos_in * mesh.areas[dst][None, :] / (math.pi * dist**2), 0.0)
        p = p * out_j[None, :]
        keep = p > 0.0
        # Boolean indexing is row-major, so the canonical (i, j) order survives the filter.
        times.append(((d1[i][:, None] + dist + d2[dst][None, :]) / c)[keep])
        powers.append(p[keep])
    return _make_list(np.concatenate(times), np.concatenate(powers), 2)


def first_order_arrivals(b: Beam, d: DetectorBranch, rx_position, mesh: Mesh, c: float = SPEED_OF_LIGHT) -> ArrivalList:
    incident, d1 = element_irradiation(b, mesh)
    coupling, d2 = detector_view(d, rx_position, mesh)
    return _first_order(incident, d1, coupling, d2, mesh, c)


def second_order_arrivals(b: Beam, d: DetectorBranch, rx_position, mesh: Mesh, c: float = SPEED_OF_LIGHT) -> ArrivalList:
    incident, d1 = element_irradiation(b, mesh)
    coupling, d2 = detector_view(d, rx_position, mesh)
    return _second_order(incident, d1, coupling, d2, mesh, c)


def channel_response(
    sources: Sequence[Beam],
    adr: ADR,
    room: Room,
    c: float = SPEED_OF_LIGHT,
    max_order: int = 2,
) -> list[ArrivalList]:
    """Arrival lists for each ADR branch from all ``sources`` up to ``max_order`` reflections."""
    sources = [s for s in sources if s.power > 0.0]
    fine, coarse = room.mesh_first, room.mesh_second
    irr_fine = [element_irradiation(s, fine) for s in sources] if max_order >= 1 else []
    irr_coarse = [element_irradiation(s, coarse) for s in sources] if max_order >= 2 else []

    out = []
    for det in adr.branches:
        parts = []
        for s in sources:
            a = los_arrival(s, det, adr.position, c)
            if a is not None:
                parts.append(ArrivalList.from_arrivals([a]))
        if max_order >= 1:
            view = detector_view(det, adr.position, fine)
            parts.extend(_first_order(*irr, *view, fine, c) for irr in irr_fine)
        if max_order >= 2:
            view = detector_view(det, adr.position, coarse)
            parts.extend(_second_order(*irr, *view, coarse, c) for irr in irr_coarse)
        out.append(ArrivalList.concatenate(parts))
    return out


def bin_arrivals(a: ArrivalList, bin_width: float) -> ImpulseResponse:
    if not bin_width > 0.0:
        raise ValueError("bin width must be positive")
    if len(a) == 0:
        return ImpulseResponse(bin_width, 0.0, np.zeros(0))
    t0 = float(np.min(a.times))
    # Nudge guards against 2.9999999 style rounding at exact bin edges.
    idx = np.floor((a.times - t0) / bin_width + 1e-9).astype(int)
    bins = np.zeros(int(idx.max()) + 1)
    np.add.at(bins, idx, a.powers)
    return ImpulseResponse(bin_width, t0, bins)


def export_impulse_response(h: ImpulseResponse, path) -> Path:
    path = Path(path)
    rows = np.column_stack([h.bin_times, h.bins]) if len(h.bins) else np.zeros((0, 2))
    np.savetxt(path, rows, fmt="%.9e", header="time_s power_W", comments="# ")
    return path
