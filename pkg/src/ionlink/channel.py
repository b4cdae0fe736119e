"""On-off keying timing-channel metrics.

A 1-bit releases one ion, a 0-bit releases nothing, and an ion that misses
its slot is removed.  False alarms are therefore impossible and the channel
seen by the receiver is a Z-channel with crossover ``1 - p_v``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .arrival import (
    DEFAULT_QUADRATURE,
    ArrivalDistribution,
    Window,
    build_distribution,
    detection_window,
)
from .errors import DomainError, NumericError
from .wien import pass_band, pass_probability


@dataclass(frozen=True)
class ChannelReport:
    """Per-point channel summary; ``rate`` is exactly ``1 / slot``."""

    slot: float
    missed: float
    p_v: float | None = None
    mutual_info: float | None = None

    CSV_COLUMNS = ("slot_s", "missed_detection", "rate_bps", "p_v", "mutual_info_bits", "info_rate_bps")

    def __post_init__(self):
        if not self.slot > 0:
            raise DomainError("slot length must be positive")

    @property
    def rate(self) -> float:
        return ook_rate(self.slot)

    @property
    def info_rate(self) -> float | None:
        return None if self.mutual_info is None else self.mutual_info / self.slot

    def to_row(self):
        blank = ""
        return (
            self.slot,
            self.missed,
            self.rate,
            blank if self.p_v is None else self.p_v,
            blank if self.mutual_info is None else self.mutual_info,
            blank if self.info_rate is None else self.info_rate,
        )

    def as_dict(self):
        d = asdict(self)
        d.update(rate=self.rate, info_rate=self.info_rate)
        return d


def missed_detection(dist: ArrivalDistribution, window, conditional: bool = False) -> float:
    """Probability that a released ion does not arrive inside ``window``.

    ``window`` is a :class:`Window` or ``(start, length)``.  With
    ``conditional=True`` the probability is taken over ions that arrive at all
    (for filtered distributions this excludes ions stopped by the filter).
    """
    start, length = window[0], window[1]
    if length < 0:
        raise DomainError("window length must be non-negative")
    lo, hi = dist.tau_grid[0], dist.tau_grid[-1]
    if start + length < lo or start > hi:
        raise DomainError(f"window [{start:g}, {start + length:g}] lies outside the tabulated support [{lo:g}, {hi:g}]")
    caught = dist.integrate(start, start + length)
    if conditional:
        caught /= dist.arrival_probability
    return float(min(max(1.0 - caught, 0.0), 1.0))


def ook_rate(slot: float) -> float:
    """Data rate ``1 / slot`` in bit/s."""
    if not slot > 0:
        raise DomainError("slot length must be positive")
    return 1.0 / slot


def _check_prob(p, name):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


def likelihood_table(p_v: float) -> np.ndarray:
    """Rows ``x = 0, 1``; columns ``y = 0, 1``."""
    _check_prob(p_v, "p_v")
    return np.array([[1.0, 0.0], [1.0 - p_v, p_v]])


def binary_entropy(p) -> float:
    """Binary entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(p < 1, (1 - p) * np.log2(1 - p), 0.0))
    return float(h) if h.ndim == 0 else h


def mutual_information(p_v: float, prior: float = 0.5) -> float:
    """``I(X;Y) = H(prior * p_v) - prior * H(p_v)`` in bits."""
    _check_prob(p_v, "p_v")
    _check_prob(prior, "prior")
    return max(binary_entropy(prior * p_v) - prior * binary_entropy(p_v), 0.0)


def optimal_prior(p_v: float, tol: float = 1e-9) -> tuple[float, float]:
    """Capacity-achieving prior and the capacity in bits (golden-section search)."""
    _check_prob(p_v, "p_v")
    if p_v == 0:
        return 0.5, 0.0
    res = minimize_scalar(
        lambda q: -mutual_information(p_v, q),
        bracket=(0.0, 0.5, 1.0),
        method="golden",
        tol=tol,
    )
    q = float(min(max(res.x, 0.0), 1.0))
    return q, mutual_information(p_v, q)


def filtered_distribution(species, config, spread, wien, settings=DEFAULT_QUADRATURE, grid="auto"):
    """Arrival distribution of the ions that pass the selector aperture."""
    band = pass_band(wien)
    if band.v_high <= band.v_low:
        raise DomainError("empty pass band")
    try:
        return build_distribution(species, config, spread, grid=grid, settings=settings, band=tuple(band))
    except NumericError as exc:
        if "no probability mass" in str(exc):
            raise DomainError(f"empty pass band: {exc}") from None
        raise


def filtered_slot(species, config, wien, spread, policy="sigma", settings=DEFAULT_QUADRATURE) -> float:
    """Slot length of the arrival distribution restricted to the pass band."""
    dist = filtered_distribution(species, config, spread, wien, settings)
    return detection_window(dist, policy).length


def channel_report(dist: ArrivalDistribution, window: Window, p_v=None, prior=0.5) -> ChannelReport:
    missed = missed_detection(dist, window, conditional=p_v is not None)
    mi = None if p_v is None else mutual_information(p_v, prior)
    return ChannelReport(window.length, missed, p_v, mi)


def wien_report(species, config, spread, wien, mode="post-acceleration", policy="sigma",
                prior=0.5, settings=DEFAULT_QUADRATURE) -> ChannelReport:
    """Filtered slot, pass probability and mutual information for one selector setting."""
    p_v = pass_probability(species, config, wien, mode, spread, settings)
    dist = filtered_distribution(species, config, spread, wien, settings)
    window = detection_window(dist, policy)
    return ChannelReport(window.length, missed_detection(dist, window, conditional=True), p_v,
                         mutual_information(p_v, prior))


def slot_from_band(L: float, band) -> float:
    """Drift-time spread ``L / v_low - L / v_high`` of the admitted speeds alone."""
    return L / band[0] - L / band[1]


__all__ = [
    "ChannelReport",
    "binary_entropy",
    "channel_report",
    "filtered_distribution",
    "filtered_slot",
    "likelihood_table",
    "missed_detection",
    "mutual_information",
    "ook_rate",
    "optimal_prior",
    "slot_from_band",
    "wien_report",
]

