"""Pilot-based branch selection and quadrant-search beam steering.

Every ADT branch in turn sends a pilot; the receiver reports its SNR over an
ideal feedback link and the controller keeps the best branch. The branch's
footprint on the communication floor is then split into quadrants
repeatedly, keeping the quadrant whose probe gives the highest SNR, until the
cell is no larger than 10 cm x 10 cm. Half of the branch power is finally
steered at that cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import SPEED_OF_LIGHT, channel_response
from .geometry import Room, unit
from .metrics import NoiseModel, link_snr_db
from .receivers import ADR
from .sources import ADT_HALF_ANGLE, Beam, Branch, LightUnit, lambertian_order_from_half_angle

QUADRANTS = ("NW", "NE", "SW", "SE")
MIN_HALF_WIDTH = 0.05
STEER_HALF_ANGLE = 1.75
STEER_FRACTION = 0.5

# Scores closer than this are treated as ties (dB for SNR-driven searches).
TIE_TOL = 1e-9


class NoCoverageError(RuntimeError):
    """No branch delivers any signal to the receiver."""


@dataclass(frozen=True, eq=False)
class CoverageCell:
    center: np.ndarray
    half_width_x: float
    half_width_y: float

    def __post_init__(self):
        if not (self.half_width_x > 0.0 and self.half_width_y > 0.0):
            raise ValueError("cell half-widths must be positive")

    def contains(self, x: float, y: float) -> bool:
        return (
            abs(x - self.center[0]) <= self.half_width_x * (1 + 1e-12)
            and abs(y - self.center[1]) <= self.half_width_y * (1 + 1e-12)
        )

    def quadrants(self) -> list[CoverageCell]:
        """Sub-cells in NW, NE, SW, SE order (north is +y, east is +x)."""
        hx, hy = self.half_width_x / 2.0, self.half_width_y / 2.0
        cx, cy, cz = self.center
        offsets = ((-hx, hy), (hx, hy), (-hx, -hy), (hx, -hy))
        return [CoverageCell(np.array([cx + dx, cy + dy, cz]), hx, hy) for dx, dy in offsets]


@dataclass(frozen=True)
class SearchStep:
    iteration: int
    cell_center_x: float
    cell_center_y: float
    half_width: float
    chosen_quadrant: str
    snr_db: float


@dataclass(frozen=True, eq=False)
class SteeringState:
    unit_id: int
    branch_id: int
    cell: CoverageCell
    iterations: int
    steered_beam: Beam
    residual_beam: Beam
    trace: tuple[SearchStep, ...] = field(default=())


@dataclass(frozen=True, eq=False)
class SourceSet:
    """Sources carrying the user's data, and the rest of the installed light."""

    signal: tuple[Beam, ...]
    ambient: tuple[Beam, ...]

    @property
    def total_power(self) -> float:
        return sum(b.power for b in self.signal) + sum(b.power for b in self.ambient)


@dataclass(frozen=True, eq=False)
class LinkEvaluator:
    """Best-ADR-branch SNR of a set of signal sources, via the full channel model."""

    room: Room
    noise: NoiseModel = NoiseModel()
    bit_rate: float = 10e9
    c: float = SPEED_OF_LIGHT
    max_order: int = 2

    def snr_db(self, sources: Sequence[Beam], adr: ADR) -> float:
        per_branch = channel_response(sources, adr, self.room, self.c, self.max_order)
        return max(link_snr_db(a, d.responsivity, self.noise, self.bit_rate) for a, d in zip(per_branch, adr.branches))


def pilot_snr(branch: Branch, adr: ADR, evaluator: LinkEvaluator) -> float:
    """SNR reported back for a pilot sent on ``branch`` alone; -inf if nothing arrives."""
    return evaluator.snr_db([branch.as_beam()], adr)


def _argmax_first(scores: Sequence[float], tol: float = TIE_TOL) -> int:
    best = max(scores)
    if best == -math.inf:
        return 0
    return next(i for i, s in enumerate(scores) if s >= best - tol)


def select_best_branch(adr: ADR, units: Sequence[LightUnit], evaluator: LinkEvaluator) -> tuple[int, int, float]:
    """Pilot every branch in unit/branch order; return (unit id, branch id, SNR).

    Ties go to the lowest unit id, then the lowest branch id.
    """
    branches = [br for u in sorted(units, key=lambda u: u.unit_id) for br in u.branches]
    if not branches:
        raise ValueError("no ADT branches to select from")
    scores = [pilot_snr(br, adr, evaluator) for br in branches]
    if max(scores) == -math.inf:
        raise NoCoverageError(f"no branch reaches the receiver at {tuple(adr.position)}")
    k = _argmax_first(scores)
    return branches[k].unit_id, branches[k].branch_id, scores[k]


def _perp_basis(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(a, helper))
    return e1, np.cross(a, e1)


def _ratio_extremes(p, q, r, s, u, w) -> tuple[float, float]:
    """Min and max over alpha of (p + q cos a + r sin a) / (s + u cos a + w sin a)."""
    a, b, c = p * u - q * s, r * s - p * w, r * u - q * w
    f = lambda t: (p + q * math.cos(t) + r * math.sin(t)) / (s + u * math.cos(t) + w * math.sin(t))
    rad = math.hypot(a, b)
    if rad < 1e-15:
        # Numerator and denominator vary in lockstep; the ratio is constant.
        v = f(0.0)
        return v, v
    base = math.atan2(b, a)
    k = max(-1.0, min(1.0, -c / rad))
    cand = [math.asin(k) - base, math.pi - math.asin(k) - base]
    vals = [f(t) for t in cand]
    return min(vals), max(vals)


def initial_coverage_cell(branch: Branch, cf_height: float, room: Room, half_angle_deg: float = ADT_HALF_ANGLE) -> CoverageCell:
    """Bounding box on the communication floor of the branch's beam cone, clipped to the room."""
    a = branch.pointing
    src = branch.position
    h = math.radians(half_angle_deg)
    # Every ray on the cone must descend to reach the plane.
    if a[2] * math.cos(h) + math.sqrt(max(0.0, 1.0 - a[2] ** 2)) * math.sin(h) >= 0.0:
        raise ValueError("branch cone is not entirely below the horizontal")
    drop = cf_height - src[2]
    if drop >= 0.0:
        raise ValueError("branch must sit above the communication floor")
    e1, e2 = _perp_basis(a)
    ch, sh = math.cos(h), math.sin(h)
    s, u, w = ch * a[2], sh * e1[2], sh * e2[2]
    lo, hi = [], []
    for k in (0, 1):
        rmin, rmax = _ratio_extremes(ch * a[k], sh * e1[k], sh * e2[k], s, u, w)
        # drop < 0 flips the ordering
        lo.append(src[k] + drop * rmax)
        hi.append(src[k] + drop * rmin)
    x0, x1 = max(lo[0], 0.0), min(hi[0], room.width)
    y0, y1 = max(lo[1], 0.0), min(hi[1], room.length)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("branch footprint lies outside the room")
    center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0, cf_height])
    return CoverageCell(center, (x1 - x0) / 2.0, (y1 - y0) / 2.0)


def search_cells(
    cell: CoverageCell,
    score: Callable[[CoverageCell, CoverageCell], float],
    min_half_width: float = MIN_HALF_WIDTH,
    tie_tol: float = TIE_TOL,
) -> tuple[CoverageCell, list[SearchStep]]:
    """Recursive quadrant search driven by ``score(quadrant, parent)``; higher is better."""
    trace = []
    it = 0
    while max(cell.half_width_x, cell.half_width_y) > min_half_width:
        it += 1
        quads = cell.quadrants()
        scores = [score(q, cell) for q in quads]
        k = _argmax_first(scores, tie_tol)
        cell = quads[k]
        trace.append(
            SearchStep(it, float(cell.center[0]), float(cell.center[1]), max(cell.half_width_x, cell.half_width_y), QUADRANTS[k], scores[k])
        )
    return cell, trace


def expected_iterations(initial: CoverageCell, min_half_width: float = MIN_HALF_WIDTH) -> int:
    w = max(initial.half_width_x, initial.half_width_y)
    return max(0, math.ceil(math.log2(w / min_half_width)))


def aimed_beam(source: Beam, target: np.ndarray, order: float, power: float) -> Beam:
    return Beam(source.position, np.asarray(target) - source.position, order, power, 0.0)


def probe_order(branch: Branch, cell: CoverageCell, steer_half_angle: float, mode: str) -> float:
    """Lambertian order of the probes used to score the four quadrants of ``cell``.

    ``narrow`` always uses the steering divergence. ``adaptive`` widens the
    probe so its half-power cone reaches the corners of a quadrant, never
    narrower than the steering beam.
    """
    if mode == "narrow":
        return lambertian_order_from_half_angle(steer_half_angle)
    if mode != "adaptive":
        raise ValueError(f"unknown probe mode {mode!r}")
    dist = float(np.linalg.norm(cell.center - branch.position))
    reach = math.hypot(cell.half_width_x, cell.half_width_y) / 2.0
    half = max(steer_half_angle, math.degrees(math.atan2(reach, dist)))
    return lambertian_order_from_half_angle(min(half, 89.0))


def quadrant_search(
    branch: Branch,
    adr: ADR,
    evaluator: LinkEvaluator,
    cf_height: float | None = None,
    steer_half_angle: float = STEER_HALF_ANGLE,
    steer_fraction: float = STEER_FRACTION,
    min_half_width: float = MIN_HALF_WIDTH,
    probe_mode: str = "adaptive",
) -> SteeringState:
    cf = float(adr.position[2]) if cf_height is None else cf_height
    whole = branch.as_beam()
    steer_power = whole.power * steer_fraction
    steer_flux = whole.flux * steer_fraction
    # Subtraction keeps steered + residual equal to the branch total exactly.
    residual = Beam(whole.position, whole.pointing, whole.order, whole.power - steer_power, whole.flux - steer_flux)
    start = initial_coverage_cell(branch, cf, evaluator.room)

    def score(q: CoverageCell, parent: CoverageCell) -> float:
        order = probe_order(branch, parent, steer_half_angle, probe_mode)
        probe = aimed_beam(whole, q.center, order, steer_power)
        return evaluator.snr_db([probe, residual], adr)

    final, trace = search_cells(start, score, min_half_width)
    if trace and trace[-1].snr_db == -math.inf:
        raise NoCoverageError("steering probes deliver no signal")
    n = lambertian_order_from_half_angle(steer_half_angle)
    steered = Beam(whole.position, final.center - whole.position, n, steer_power, steer_flux)
    return SteeringState(branch.unit_id, branch.branch_id, final, len(trace), steered, residual, tuple(trace))


def steered_scenario(state: SteeringState, adt_units: Sequence[LightUnit], illum_units: Sequence[LightUnit] = ()) -> SourceSet:
    """Sources after steering: the chosen branch is split into its residual and steered parts."""
    ambient = []
    signal = (state.residual_beam, state.steered_beam)
    for u in adt_units:
        for br in u.branches:
            if (u.unit_id, br.branch_id) != (state.unit_id, state.branch_id):
                ambient.append(br.as_beam())
    for u in illum_units:
        ambient.extend(u.aggregate_beams())
    return SourceSet(signal, tuple(ambient))


def find_branch(units: Sequence[LightUnit], unit_id: int, branch_id: int) -> Branch:
    for u in units:
        if u.unit_id == unit_id:
            return u.branches[branch_id]
    raise KeyError(f"no unit {unit_id}")
