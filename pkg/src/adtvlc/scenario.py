"""Scenario configuration, the proposed and baseline experiments, and CSV export."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .channel import channel_response
from .geometry import Room, RoomConfig, build_room
from .metrics import (
    LinkMetrics,
    NoiseModel,
    UndefinedMetricError,
    best_branch_metrics,
    calibrate_flux,
    illuminance_at,
    illuminance_grid,
    snr_ook,
)
from .receivers import ADR, place_adr
from .sources import (
    ADT_POSITIONS,
    BRANCH_AZIMUTHS,
    ILLUM_POSITIONS,
    Beam,
    LightUnit,
    build_adt_units,
    build_illum_units,
)
from .steering import (
    LinkEvaluator,
    NoCoverageError,
    SearchStep,
    SteeringState,
    find_branch,
    quadrant_search,
    select_best_branch,
    steered_scenario,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _pairs(values) -> tuple[tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in values)


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved scenario. Field names are the config file keys."""

    mode: str = "steered"
    # room
    room_width: float = 4.0
    room_length: float = 8.0
    room_height: float = 3.0
    rho_ceiling: float = 0.8
    rho_walls: float = 0.8
    rho_floor: float = 0.3
    mesh_first: float = 0.05
    mesh_second: float = 0.20
    mesh_truncate: bool = False
    cf_height: float = 1.0
    speed_of_light: float = 3e8
    # transmitters
    adt_positions: tuple = ADT_POSITIONS
    adt_half_angle: float = 21.0
    adt_elevation: float = -70.0
    branch_azimuths: tuple = BRANCH_AZIMUTHS
    lds_per_branch: int = 3
    illum_positions: tuple = ILLUM_POSITIONS
    illum_semi_angle: float = 70.0
    lds_per_illum_unit: int = 9
    ld_power: float = 0.5
    ld_flux: float = 100.0
    # illuminance
    calibrate: bool = True
    target_min_lux: float = 313.7
    illum_pitch: float = 0.1
    illum_plane_height: float = 0.0
    max_lux_warning: float = 1000.0
    # receiver
    adr_azimuths: tuple = (45.0, 135.0, 225.0, 315.0)
    adr_elevation: float = 70.0
    fov: float = 21.0
    pd_area: float = 4e-6
    responsivity: float = 0.4
    positions: tuple = tuple((2.0, float(y)) for y in range(1, 8))
    # noise and rates
    preamp_density: float = 4.5e-12
    background_current: float = 0.0
    bandwidth_factor: float = 0.7
    shot_noise: bool = True
    bit_rate: float = 10e9
    rate_min: float = 0.5e9
    rate_max: float = 30e9
    rate_step: float = 0.1e9
    target_snr_db: float = 15.6
    # steering
    steering: bool = True
    steer_half_angle: float = 1.75
    steer_fraction: float = 0.5
    cell_min_half_width: float = 0.05
    probe_mode: str = "adaptive"
    # baseline
    baseline_kind: str = "illum"
    baseline_power_match: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, key: str, msg: str):
            if not cond:
                raise ConfigError(f"{key}: {msg}")

        need(self.mode in ("steered", "baseline"), "mode", "must be 'steered' or 'baseline'")
        for k in ("room_width", "room_length", "room_height", "mesh_first", "mesh_second", "speed_of_light",
                  "pd_area", "responsivity", "bit_rate", "rate_min", "rate_max", "rate_step", "illum_pitch",
                  "cell_min_half_width", "target_min_lux"):
            need(getattr(self, k) > 0, k, "must be positive")
        for k in ("rho_ceiling", "rho_walls", "rho_floor"):
            need(0.0 <= getattr(self, k) <= 1.0, k, "reflectivity must be in [0, 1]")
        for k in ("ld_power", "ld_flux", "preamp_density", "background_current", "bandwidth_factor"):
            need(getattr(self, k) >= 0, k, "must be non-negative")
        need(0.0 < self.cf_height < self.room_height, "cf_height", "must lie between floor and ceiling")
        need(0.0 < self.steer_fraction < 1.0, "steer_fraction", "must be in (0, 1)")
        need(0.0 < self.fov <= 90.0, "fov", "must be in (0, 90]")
        for k in ("adt_half_angle", "illum_semi_angle", "steer_half_angle"):
            need(0.0 < getattr(self, k) < 90.0, k, "must be in (0, 90)")
        need(self.rate_min <= self.rate_max, "rate_min", "must not exceed rate_max")
        need(self.probe_mode in ("adaptive", "narrow"), "probe_mode", "must be 'adaptive' or 'narrow'")
        need(self.baseline_kind in ("illum", "adt"), "baseline_kind", "must be 'illum' or 'adt'")
        need(self.lds_per_branch >= 1 and self.lds_per_illum_unit >= 1, "lds_per_branch", "need at least one diode")
        need(len(self.positions) >= 1, "positions", "need at least one receiver position")
        for i, (x, y) in enumerate(self.positions):
            need(0 <= x <= self.room_width and 0 <= y <= self.room_length, f"positions[{i}]", "outside the room")
        for key, pts in (("adt_positions", self.adt_positions), ("illum_positions", self.illum_positions)):
            for i, (x, y) in enumerate(pts):
                need(0 <= x <= self.room_width and 0 <= y <= self.room_length, f"{key}[{i}]", "outside the room")
        if not self.mesh_truncate:
            for side_key in ("mesh_first", "mesh_second"):
                side = getattr(self, side_key)
                for dim_key in ("room_width", "room_length", "room_height"):
                    r = getattr(self, dim_key) / side
                    need(abs(r - round(r)) <= 1e-9 * max(1.0, r), side_key,
                         f"{side} m does not divide {dim_key} = {getattr(self, dim_key)} m")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: [list(p) for p in v] if k.endswith("positions") else (list(v) if isinstance(v, tuple) else v)
                for k, v in d.items()}

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.preamp_density, self.background_current, bandwidth_factor=self.bandwidth_factor,
                          shot_noise=self.shot_noise)

    @property
    def room_config(self) -> RoomConfig:
        return RoomConfig(self.room_width, self.room_length, self.room_height, self.rho_ceiling, self.rho_walls,
                          self.rho_floor, self.mesh_first, self.mesh_second, not self.mesh_truncate)

    def rate_grid(self) -> np.ndarray:
        n = int(math.floor((self.rate_max - self.rate_min) / self.rate_step + 1e-9))
        return self.rate_min + self.rate_step * np.arange(n + 1)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_PAIR_KEYS = {"adt_positions", "illum_positions", "positions"}
_LIST_KEYS = {"branch_azimuths", "adr_azimuths"}


def config_from_mapping(data: dict[str, Any]) -> ScenarioConfig:
    kwargs = {}
    for key, value in data.items():
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown key")
        default = _FIELDS[key].default
        try:
            if key in _PAIR_KEYS:
                value = _pairs(value)
            elif key in _LIST_KEYS:
                value = tuple(float(v) for v in value)
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError("expected true or false")
            elif isinstance(default, int):
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError("expected an integer")
                value = int(value)
            elif isinstance(default, float):
                if isinstance(value, bool):
                    raise TypeError("expected a number")
                value = float(value)
            elif isinstance(default, str) and not isinstance(value, str):
                raise TypeError("expected a string")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
        kwargs[key] = value
    return ScenarioConfig(**kwargs)


def parse_config(text: str) -> ScenarioConfig:
    """Parse flat TOML ``key = value`` text; missing keys take the defaults."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"{k}: tables are not supported, use flat keys")
    return config_from_mapping(data)


def load_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class IlluminanceSummary:
    flux_scale: float
    ld_flux: float
    min_lux: float
    max_lux: float
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    lux: np.ndarray = field(repr=False)  # shape (len(xs), len(ys))


@dataclass
class PositionResult:
    position: tuple[float, float, float]
    metrics: LinkMetrics | None
    snr_by_rate: np.ndarray | None = None
    unit_id: int | None = None
    branch_id: int | None = None
    trace: tuple[SearchStep, ...] = ()
    error: str | None = None

    def max_rate(self, rates: np.ndarray, target_db: float) -> float | None:
        if self.snr_by_rate is None:
            return None
        ok = rates[self.snr_by_rate >= target_db]
        return float(ok.max()) if len(ok) else None


@dataclass
class RunResult:
    mode: str
    config: ScenarioConfig
    positions: list[PositionResult]
    rates: np.ndarray
    max_data_rate: float | None
    illuminance: IlluminanceSummary
    version: str = __version__

    @property
    def metrics(self) -> list[LinkMetrics | None]:
        return [p.metrics for p in self.positions]


def snr_versus_rate(per_branch, adr: ADR, noise: NoiseModel, rates: np.ndarray) -> np.ndarray:
    """Best-branch SNR (dB) at every rate of the grid, from exact arrivals."""
    best = np.full(len(rates), -np.inf)
    for a, det in zip(per_branch, adr.branches):
        if len(a) == 0:
            continue
        rel = a.times - np.min(a.times)
        order = np.argsort(rel, kind="stable")
        rel, cum = rel[order], np.cumsum(a.powers[order])
        total = cum[-1]
        for k, r in enumerate(rates):
            n_in = np.searchsorted(rel, 1.0 / r, side="left")
            p1 = float(cum[n_in - 1]) if n_in else 0.0
            p0 = total - p1
            if p1 > p0:
                best[k] = max(best[k], snr_ook(p1, max(p0, 0.0), det.responsivity, noise, float(r)))
    return best


class Simulation:
    """Everything built once per configuration: room, light units, evaluator."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.room: Room = build_room(config.room_config)
        c = config
        self.adt_units = build_adt_units(c.ld_power, c.ld_flux, c.adt_positions, c.room_height, c.adt_half_angle,
                                         c.adt_elevation, c.branch_azimuths, c.lds_per_branch)
        self.illum_units = build_illum_units(c.ld_flux, 0.0, c.illum_positions, c.room_height, c.illum_semi_angle,
                                             c.lds_per_illum_unit, first_id=len(self.adt_units))
        self.evaluator = LinkEvaluator(self.room, c.noise, c.bit_rate, c.speed_of_light)
        self.rates = c.rate_grid()

    def adr_at(self, x: float, y: float) -> ADR:
        c = self.config
        return place_adr((x, y, c.cf_height), self.room, c.adr_azimuths, c.adr_elevation, c.pd_area,
                         c.responsivity, c.fov)

    def baseline_units(self) -> list[LightUnit]:
        c = self.config
        if c.baseline_kind == "adt":
            return build_adt_units(c.ld_power, c.ld_flux, c.adt_positions, c.room_height, c.adt_half_angle,
                                   c.adt_elevation, c.branch_azimuths, c.lds_per_branch)
        power = c.ld_power
        if c.baseline_power_match:
            adt_total = len(c.adt_positions) * len(c.branch_azimuths) * c.lds_per_branch * c.ld_power
            power = adt_total / (len(c.adt_positions) * c.lds_per_illum_unit)
        return build_illum_units(c.ld_flux, power, c.adt_positions, c.room_height, c.illum_semi_angle,
                                 c.lds_per_illum_unit)

    def evaluate_link(self, signal: Sequence[Beam], adr: ADR) -> tuple[LinkMetrics, np.ndarray]:
        c = self.config
        per_branch = channel_response(signal, adr, self.room, c.speed_of_light)
        metrics = best_branch_metrics(per_branch, [d.responsivity for d in adr.branches], c.noise, c.bit_rate)
        return metrics, snr_versus_rate(per_branch, adr, c.noise, self.rates)

    def steer(self, x: float, y: float) -> SteeringState:
        c = self.config
        adr = self.adr_at(x, y)
        uid, bid, _ = select_best_branch(adr, self.adt_units, self.evaluator)
        branch = find_branch(self.adt_units, uid, bid)
        return quadrant_search(branch, adr, self.evaluator, c.cf_height, c.steer_half_angle, c.steer_fraction,
                               c.cell_min_half_width, c.probe_mode)

    def proposed_position(self, x: float, y: float) -> PositionResult:
        pos = (x, y, self.config.cf_height)
        log.info("steered link at %s", pos)
        try:
            adr = self.adr_at(x, y)
            if not self.config.steering:
                signal = [br.as_beam() for u in self.adt_units for br in u.branches]
                m, snrs = self.evaluate_link(signal, adr)
                return PositionResult(pos, m, snrs)
            state = self.steer(x, y)
            sources = steered_scenario(state, self.adt_units, self.illum_units)
            m, snrs = self.evaluate_link(sources.signal, adr)
            return PositionResult(pos, m, snrs, state.unit_id, state.branch_id, state.trace)
        except (NoCoverageError, UndefinedMetricError, ValueError) as exc:
            log.warning("position %s failed: %s", pos, exc)
            return PositionResult(pos, None, error=str(exc))

    def baseline_position(self, x: float, y: float, units: Sequence[LightUnit]) -> PositionResult:
        pos = (x, y, self.config.cf_height)
        log.info("baseline link at %s", pos)
        try:
            adr = self.adr_at(x, y)
            signal = [b for u in units for b in u.aggregate_beams()]
            m, snrs = self.evaluate_link(signal, adr)
            return PositionResult(pos, m, snrs)
        except (UndefinedMetricError, ValueError) as exc:
            log.warning("position %s failed: %s", pos, exc)
            return PositionResult(pos, None, error=str(exc))

    def illuminance(self, units: Sequence[LightUnit]) -> IlluminanceSummary:
        c = self.config
        beams = [b for u in units for b in u.aggregate_beams()]
        xs, ys, pts = illuminance_grid(c.room_width, c.room_length, c.illum_pitch, c.illum_plane_height)
        lux = illuminance_at(pts, beams)
        scale = 1.0
        if c.calibrate:
            scale = calibrate_flux(float(lux.min()), c.target_min_lux)
            lux = lux * scale
        if lux.max() > c.max_lux_warning:
            log.warning("peak illuminance %.1f lx exceeds %.0f lx", lux.max(), c.max_lux_warning)
        return IlluminanceSummary(scale, c.ld_flux * scale, float(lux.min()), float(lux.max()), xs, ys,
                                  lux.reshape(len(xs), len(ys)))

    def _run(self, fn, threads: int) -> list[PositionResult]:
        pts = list(self.config.positions)
        if threads <= 1:
            return [fn(x, y) for x, y in pts]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda p: fn(*p), pts))

    def _result(self, mode: str, positions: list[PositionResult], illum: IlluminanceSummary) -> RunResult:
        c = self.config
        rate = None
        if all(p.snr_by_rate is not None for p in positions):
            worst = np.min(np.vstack([p.snr_by_rate for p in positions]), axis=0)
            ok = self.rates[worst >= c.target_snr_db]
            rate = float(ok.max()) if len(ok) else None
        return RunResult(mode, c, positions, self.rates, rate, illum)

    def run_proposed(self, threads: int = 1) -> RunResult:
        positions = self._run(self.proposed_position, threads)
        return self._result("steered", positions, self.illuminance(self.adt_units + self.illum_units))

    def run_baseline(self, threads: int = 1) -> RunResult:
        units = self.baseline_units()
        positions = self._run(lambda x, y: self.baseline_position(x, y, units), threads)
        return self._result("baseline", positions, self.illuminance(units))


def run_proposed(config: ScenarioConfig, threads: int = 1) -> RunResult:
    return Simulation(config).run_proposed(threads)


def run_baseline(config: ScenarioConfig, threads: int = 1) -> RunResult:
    return Simulation(config).run_baseline(threads)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".9g")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


METRICS_COLUMNS = ("x_m", "y_m", "p1_w", "p0_w", "delay_spread_s", "snr_db")
SELECTION_COLUMNS = ("x_m", "y_m", "unit_id", "branch_id", "adr_branch", "max_rate_bps")
TRACE_COLUMNS = ("iteration", "cell_center_x", "cell_center_y", "half_width", "chosen_quadrant", "snr_db")


def illuminance_rows(il: IlluminanceSummary):
    return ((x, y, il.lux[i, j]) for i, x in enumerate(il.xs) for j, y in enumerate(il.ys))


def trace_rows(trace: Sequence[SearchStep]):
    return [(s.iteration, s.cell_center_x, s.cell_center_y, s.half_width, s.chosen_quadrant, s.snr_db) for s in trace]


def export_results(r: RunResult, directory) -> list[Path]:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    c = r.config
    rows, sel, traces = [], [], []
    for p in r.positions:
        x, y, _ = p.position
        m = p.metrics
        if m is None:
            rows.append((x, y, None, None, None, None))
        else:
            rows.append((x, y, m.received_power_p1, m.received_power_p0, m.delay_spread, m.snr_db))
        sel.append((x, y, p.unit_id, p.branch_id, None if m is None else m.best_branch_index,
                    p.max_rate(r.rates, c.target_snr_db)))
        traces.extend((x, y, *row) for row in trace_rows(p.trace))

    files = [out / "metrics.csv", out / "selection.csv", out / "traces.csv", out / "illuminance.csv", out / "run.json"]
    write_csv(files[0], METRICS_COLUMNS, rows)
    write_csv(files[1], SELECTION_COLUMNS, sel)
    write_csv(files[2], ("x_m", "y_m") + TRACE_COLUMNS, traces)
    il = r.illuminance
    write_csv(files[3], ("x_m", "y_m", "lux"), illuminance_rows(il))
    echo = {
        "version": r.version,
        "mode": r.mode,
        "max_data_rate_bps": r.max_data_rate,
        "illuminance": {"flux_scale": il.flux_scale, "ld_flux_lm": il.ld_flux, "min_lux": il.min_lux,
                        "max_lux": il.max_lux},
        "errors": {f"{p.position}": p.error for p in r.positions if p.error},
        "config": c.to_dict(),
    }
    files[4].write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return files
