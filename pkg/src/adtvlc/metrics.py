"""Link metrics: RMS delay spread, OOK SNR and BER, achievable rate, illuminance."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import ArrivalList
from .sources import Beam

log = logging.getLogger(__name__)

ELECTRON_CHARGE = 1.602e-19
OOK_TARGET_SNR_DB = 15.6


class UndefinedMetricError(ValueError):
    """A metric was requested for input that carries no information (e.g. no power)."""


class SaturatedSNRWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NoiseModel:
    preamp_current_density: float = 4.5e-12  # A/sqrt(Hz)
    background_current: float = 0.0  # A
    electron_charge: float = ELECTRON_CHARGE
    bandwidth_factor: float = 0.7  # receiver bandwidth / bit rate
    shot_noise: bool = True  # False leaves only signal-independent noise

    def __post_init__(self):
        for name in ("preamp_current_density", "background_current", "electron_charge", "bandwidth_factor"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"noise parameter {name} must be non-negative")


@dataclass(frozen=True)
class LinkMetrics:
    received_power_p1: float
    received_power_p0: float
    delay_spread: float
    snr_db: float
    best_branch_index: int


def delay_spread(a: ArrivalList) -> float:
    """RMS delay spread about the power-weighted mean arrival time."""
    total = float(np.sum(a.powers)) if len(a) else 0.0
    if not total > 0.0:
        raise UndefinedMetricError("delay spread of a channel with no received power")
    # Relative times keep the second moment well conditioned.
    t = a.times - np.min(a.times)
    w = a.powers / total
    mu = float(np.sum(w * t))
    return math.sqrt(max(0.0, float(np.sum(w * (t - mu) ** 2))))


def mean_delay(a: ArrivalList) -> float:
    total = a.total_power
    if not total > 0.0:
        raise UndefinedMetricError("mean delay of a channel with no received power")
    return float(np.sum(a.powers * a.times)) / total


def snr_ook(p1: float, p0: float, responsivity: float, noise: NoiseModel, bit_rate: float) -> float:
    """OOK SNR in dB: ``(R (P1 - P0) / (sigma1 + sigma0))**2``.

    Each sigma combines shot noise from the signal level and the background
    current with preamplifier noise over a bandwidth of
    ``bandwidth_factor * bit_rate``.
    """
    if not bit_rate > 0.0:
        raise ValueError("bit rate must be positive")
    if p0 < 0.0 or p1 < p0:
        raise ValueError(f"need p1 >= p0 >= 0, got p1={p1}, p0={p0}")
    bw = noise.bandwidth_factor * bit_rate
    q = noise.electron_charge
    floor = 2.0 * q * noise.background_current * bw + noise.preamp_current_density**2 * bw
    shot = 2.0 * q * responsivity * bw if noise.shot_noise else 0.0
    sigma1 = math.sqrt(shot * p1 + floor)
    sigma0 = math.sqrt(shot * p0 + floor)
    signal = responsivity * (p1 - p0)
    if sigma1 + sigma0 == 0.0:
        if signal == 0.0:
            raise UndefinedMetricError("SNR undefined with zero noise and zero signal")
        warnings.warn("noise-free link: SNR saturated at +inf", SaturatedSNRWarning, stacklevel=2)
        return math.inf
    snr = (signal / (sigma1 + sigma0)) ** 2
    return 10.0 * math.log10(snr) if snr > 0.0 else -math.inf


def p1_p0_from_arrivals(a: ArrivalList, bit_rate: float) -> tuple[float, float]:
    """Split received power at one bit period after the first arrival.

    Power arriving within the bit counts toward the '1' level; the remainder
    spills into the next bit and is treated as worst-case eye closure.
    """
    if len(a) == 0:
        raise UndefinedMetricError("no arrivals")
    period = 1.0 / bit_rate
    late = (a.times - np.min(a.times)) >= period
    return float(np.sum(a.powers[~late])), float(np.sum(a.powers[late]))


def link_snr_db(a: ArrivalList, responsivity: float, noise: NoiseModel, bit_rate: float) -> float:
    """SNR of one detector branch; -inf when nothing is received."""
    if len(a) == 0 or not a.total_power > 0.0:
        return -math.inf
    p1, p0 = p1_p0_from_arrivals(a, bit_rate)
    if p1 <= p0:
        return -math.inf
    return snr_ook(p1, p0, responsivity, noise, bit_rate)


def best_branch_metrics(
    per_branch: Sequence[ArrivalList], responsivities: Sequence[float], noise: NoiseModel, bit_rate: float
) -> LinkMetrics:
    """Select-best combining across ADR branches (lowest index wins ties)."""
    snrs = [link_snr_db(a, r, noise, bit_rate) for a, r in zip(per_branch, responsivities)]
    best = int(np.argmax(snrs))
    a = per_branch[best]
    if not math.isfinite(snrs[best]) and snrs[best] < 0:
        raise UndefinedMetricError("no ADR branch receives the signal")
    p1, p0 = p1_p0_from_arrivals(a, bit_rate)
    return LinkMetrics(p1, p0, delay_spread(a), snrs[best], best)


def mrc_snr_db(per_branch: Sequence[ArrivalList], responsivities: Sequence[float], noise: NoiseModel, bit_rate: float) -> float:
    """Maximal-ratio combining: linear SNRs of the branches add."""
    total = 0.0
    for a, r in zip(per_branch, responsivities):
        s = link_snr_db(a, r, noise, bit_rate)
        if s > -math.inf:
            total += 10.0 ** (s / 10.0)
    return 10.0 * math.log10(total) if total > 0.0 else -math.inf


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_to_ber(snr_db: float) -> float:
    """BER of OOK with a Gaussian decision statistic, ``Q(sqrt(SNR))``."""
    if snr_db == -math.inf:
        return 0.5
    return q_function(math.sqrt(10.0 ** (snr_db / 10.0)))


def default_rate_grid(start: float = 0.5e9, stop: float = 30e9, step: float = 0.1e9) -> np.ndarray:
    n = int(round((stop - start) / step))
    return start + step * np.arange(n + 1)


def max_data_rate(
    evaluate: Callable[[float], float],
    rates: Iterable[float],
    target_snr_db: float = OOK_TARGET_SNR_DB,
) -> float | None:
    """Largest rate whose SNR (as returned by ``evaluate``) meets the target.

    ``evaluate`` should already return the worst case over whatever set of
    positions the caller cares about.
    """
    rates = sorted(float(r) for r in rates)
    snrs = [evaluate(r) for r in rates]
    if any(b > a + 1e-9 for a, b in zip(snrs, snrs[1:])):
        log.warning("SNR is not monotone in bit rate over the grid")
    ok = [r for r, s in zip(rates, snrs) if s >= target_snr_db]
    return max(ok) if ok else None


def illuminance_at(points: np.ndarray, beams: Sequence[Beam], plane_normal=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Direct illuminance in lux at each point of an (N, 3) array on a plane."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nrm = np.asarray(plane_normal, dtype=float)
    e = np.zeros(len(pts))
    for b in beams:
        if b.flux == 0.0:
            continue
        v = pts - b.position
        dist = np.linalg.norm(v, axis=1)
        u = v / dist[:, None]
        cos_phi = u @ b.pointing
        cos_theta = -(u @ nrm)
        ok = (cos_phi > 0.0) & (cos_theta > 0.0)
        iv = b.flux * (b.order + 1.0) / (2.0 * math.pi) * np.where(ok, cos_phi, 0.0) ** b.order
        e += np.where(ok, iv * cos_theta / dist**2, 0.0)
    return e


def illuminance_grid(width: float, length: float, pitch: float = 0.1, height: float = 0.0):
    """Evaluation points as (xs, ys, (N, 3) points) with y varying fastest."""
    nx = int(round(width / pitch)) + 1
    ny = int(round(length / pitch)) + 1
    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, length, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, height)])
    return xs, ys, pts


def calibrate_flux(current_min_lux: float, target_min_lux: float = 313.7) -> float:
    """Flux multiplier that moves the grid minimum onto the target (illuminance is linear in flux)."""
    if not current_min_lux > 0.0:
        raise UndefinedMetricError("cannot calibrate flux: current minimum illuminance is zero")
    return target_min_lux / current_min_lux
