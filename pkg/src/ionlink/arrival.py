"""Arrival-time distributions of ions leaving a two-field source.

The ion is created at a Gaussian-distributed position ``x0`` and velocity
``v0`` at a Gaussian-distributed time ``t0``; its arrival time is
``tau = t0 + T(x0, v0)``.  The marginal density of ``tau`` is computed in
three independent ways:

* :func:`flight_time_moments` -- tensor Gauss-Hermite moments of ``T``
  (smooth integrand, converges fast; used for calibration and cross-checks);
* :func:`marginal_pdf` / :func:`build_distribution` -- a deterministic
  piecewise-linear cell quadrature over the standardized ``(x0, v0)`` plane
  followed by an exact Gaussian smoothing in ``t0``;
* :func:`sample_arrivals` -- Monte-Carlo sampling.

The cell quadrature exists because the integrand of the marginal density is
a thin ridge along ``tau = T(x0, v0)`` whenever ``sigma_t`` is small against
the flight-time spread; a tensor Gauss-Hermite rule with the Gaussian time
kernel would need hundreds of nodes per axis to resolve it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr, ndtri

from .csvio import write_csv
from .errors import DomainError, NumericError, QuadratureError
from .physics import (
    FWHM_PER_SIGMA,
    NEVER_ARRIVES,
    IonSpecies,
    SourceConfig,
    accelerated_speed,
    flight_time,
    thermal_velocity_sigma,
)
from .rng import as_streams

log = logging.getLogger(__name__)

_SQRT2PI = math.sqrt(2.0 * math.pi)


def sigma_from_fwhm(fwhm: float) -> float:
    """Gaussian standard deviation for a full width at half maximum."""
    return fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class SpreadModel:
    """Means and standard deviations of the initial ion state (SI units)."""

    x0_mean: float
    sigma_x: float
    sigma_v: float
    v0_mean: float = 0.0
    t0_mean: float = 0.0
    sigma_t: float = 0.0

    def __post_init__(self):
        for name in ("sigma_x", "sigma_v", "sigma_t"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise DomainError(f"{name} must be finite and non-negative, got {val}")
        if not self.x0_mean > 0:
            raise DomainError(f"x0_mean must be positive, got {self.x0_mean}")

    @classmethod
    def from_config(cls, species: IonSpecies, config: SourceConfig, *, v0_mean=0.0, t0_mean=0.0):
        """Spreads stored on ``config`` with the thermal velocity width at its temperature."""
        return cls(
            x0_mean=config.x0_mean,
            sigma_x=config.sigma_x,
            sigma_v=thermal_velocity_sigma(species, config.temperature),
            v0_mean=v0_mean,
            t0_mean=t0_mean,
            sigma_t=config.sigma_t,
        )

    @classmethod
    def from_temperature(cls, species, temperature, *, x0_mean, sigma_x, sigma_t, v0_mean=0.0, t0_mean=0.0):
        return cls(x0_mean, sigma_x, thermal_velocity_sigma(species, temperature), v0_mean, t0_mean, sigma_t)

    def with_(self, **changes) -> "SpreadModel":
        return replace(self, **changes)


@dataclass(frozen=True)
class QuadratureSettings:
    """Accuracy knobs shared by the deterministic integrators.

    ``gh_orders`` is the Gauss-Hermite order-doubling ladder used for
    moments and pass probabilities; ``cells`` is the number of cells per
    axis at the finest level of the density quadrature (the level below it
    uses half as many and the two are compared against ``cell_tol``).
    """

    gh_orders: tuple = (16, 32, 64)
    gh_tol: float = 1e-6
    cells: int = 512
    cell_tol: float = 2e-3
    z_max: float = 8.0
    grid_points: int = 4097
    grid_halfwidth: float = 8.0

    @classmethod
    def from_order(cls, order: int, **kw) -> "QuadratureSettings":
        """Settings whose Gauss-Hermite ladder doubles from 16 up to ``order``."""
        if order < 16:
            raise DomainError("quadrature order must be at least 16")
        ladder = [16]
        while ladder[-1] * 2 <= order:
            ladder.append(ladder[-1] * 2)
        return cls(gh_orders=tuple(ladder), cells=max(64, 8 * ladder[-1]), **kw)


DEFAULT_QUADRATURE = QuadratureSettings()


# --------------------------------------------------------------------------
# helpers on the standard normal


def _interval_mass(a, b):
    """P(a < Z < b) for standard normal Z, accurate in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    m = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return np.maximum(m, 0.0)


def _npdf(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _conditional_mean(a, b, mass):
    """Mean of a standard normal restricted to (a, b)."""
    mid = 0.5 * (a + b)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        z = (_npdf(a) - _npdf(b)) / mass
    ok = (mass > 1e-12) & np.isfinite(z)
    return np.clip(np.where(ok, z, mid), a, b)


def _hermite_rule(n):
    z, w = hermegauss(n)
    return z, w / _SQRT2PI


# --------------------------------------------------------------------------
# Gauss-Hermite moments


def _axis_rule(mean, sigma, n):
    if sigma == 0:
        return np.array([mean]), np.array([1.0])
    z, w = _hermite_rule(n)
    return mean + sigma * z, w


def flight_time_moments(species, config, spread, settings=DEFAULT_QUADRATURE):
    """Mean and standard deviation of ``tau = t0 + T(x0, v0)``.

    Tensor Gauss-Hermite quadrature in ``(x0, v0)`` with order doubling until
    successive orders agree to ``settings.gh_tol`` (relative).  Nodes outside
    the ionization region ``(0, d1)`` are dropped and the weights renormalized.
    """
    if config.zero_field:
        raise DomainError("zero-field arrival times have no finite moments")
    history = []
    prev = None
    for n in settings.gh_orders:
        xs, wx = _axis_rule(spread.x0_mean, spread.sigma_x, n)
        vs, wv = _axis_rule(spread.v0_mean, spread.sigma_v, n)
        keep = (xs > 0) & (xs < config.d1)
        xs, wx = xs[keep], wx[keep] / wx[keep].sum()
        X, V = np.meshgrid(xs, vs, indexing="ij")
        W = np.outer(wx, wv)
        T = flight_time(species, config, X, V)
        mean_T = float(np.sum(W * T))
        var_T = float(np.sum(W * (T - mean_T) ** 2))
        cur = (mean_T + spread.t0_mean, math.sqrt(var_T + spread.sigma_t**2))
        history.append((n, *cur))
        if prev is not None:
            d_mean = abs(cur[0] - prev[0]) / abs(cur[0])
            d_std = abs(cur[1] - prev[1]) / max(cur[1], 1e-300)
            if d_mean < settings.gh_tol and d_std < settings.gh_tol:
                return cur
        prev = cur
    if len(settings.gh_orders) == 1:
        return prev
    raise QuadratureError(
        f"Gauss-Hermite moments did not converge to {settings.gh_tol:g} by order {settings.gh_orders[-1]}",
        history,
    )


# --------------------------------------------------------------------------
# cell quadrature for accelerating configurations


@dataclass(frozen=True)
class _Cells:
    """Flight-time cells: each carries probability ``mass`` spread uniformly
    over ``[center - width/2, center + width/2]`` (flight time, t0 excluded)."""

    center: np.ndarray
    width: np.ndarray
    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def moments(self):
        m = self.mass.sum()
        mean = float((self.mass * self.center).sum() / m)
        var = float((self.mass * ((self.center - mean) ** 2 + self.width**2 / 12.0)).sum() / m)
        return mean, var


def _axis_cells(mean, sigma, n, z_max, clip=(-math.inf, math.inf)):
    """Equal-width cells in standardized coordinates, clipped to ``clip``.

    Returns ``(lo, hi, mean, mass)`` arrays in absolute coordinates; cells
    that fall entirely outside ``clip`` are dropped.
    """
    if sigma == 0:
        inside = clip[0] <= mean <= clip[1]
        one = np.array([mean] if inside else [])
        return one, one, one, np.ones(len(one))
    ze = np.linspace(-z_max, z_max, n + 1)
    a = np.maximum(ze[:-1], (clip[0] - mean) / sigma)
    b = np.minimum(ze[1:], (clip[1] - mean) / sigma)
    keep = b > a
    a, b = a[keep], b[keep]
    mass = _interval_mass(a, b)
    zc = _conditional_mean(a, b, mass)
    return mean + sigma * a, mean + sigma * b, mean + sigma * zc, mass


def _band_v0_intervals(species, config, x0, band):
    """Initial velocities whose drift-entry speed lies in ``band`` for fixed ``x0``."""
    k = 2.0 * species.charge_to_mass * (x0 * config.E1 + config.d2 * config.E2)
    top = band[1] ** 2 - k
    if top < 0:
        return []
    u_hi = math.sqrt(top)
    u_lo = math.sqrt(max(band[0] ** 2 - k, 0.0))
    if u_lo == 0:
        return [(-u_hi, u_hi)]
    return [(-u_hi, -u_lo), (u_lo, u_hi)]


def _band_x0_limits(species, config, v0, band):
    """Ionization positions whose drift-entry speed lies in ``band`` for given ``v0``."""
    qm = species.charge_to_mass
    a1 = qm * config.E1
    k2 = 2.0 * qm * config.E2 * config.d2
    lo = (band[0] ** 2 - v0**2 - k2) / (2.0 * a1)
    hi = (band[1] ** 2 - v0**2 - k2) / (2.0 * a1)
    return lo, hi


def _tof_cells(species, config, spread, n, z_max, band=None) -> _Cells:
    """Discretize the ``(x0, v0)`` plane into ``n x n`` Gaussian cells.

    Rows are velocity cells; inside each row the position cells are clipped
    to the ionization region ``(0, d1)`` and, for a velocity band, to the
    positions whose drift-entry speed passes the band.  Cell masses are exact
    Gaussian interval probabilities; within a cell the flight time is taken
    as linear, represented by a uniform segment of matching variance.
    """
    mu, sx = spread.x0_mean, spread.sigma_x
    if band is not None and sx == 0:
        # fixed position: the band becomes a condition on v0 alone
        pieces = [_axis_cells(spread.v0_mean, spread.sigma_v, n, z_max, iv)
                  for iv in _band_v0_intervals(species, config, mu, band)]
        pieces = [p for p in pieces if len(p[0])]
        if not pieces:
            return _Cells(np.empty(0), np.empty(0), np.empty(0))
        va, vb, vbar, vmass = (np.concatenate(parts) for parts in zip(*pieces))
        band = None
    else:
        va, vb, vbar, vmass = _axis_cells(spread.v0_mean, spread.sigma_v, n, z_max)

    if sx > 0:
        ze = np.linspace(-z_max, z_max, n + 1)
        xa = np.maximum(mu + sx * ze[:-1], 0.0)
        xb = np.minimum(mu + sx * ze[1:], config.d1)
        trunc = float(_interval_mass(-mu / sx, (config.d1 - mu) / sx))
    else:
        xa = xb = np.array([mu])
        trunc = 1.0
    A = np.broadcast_to(xa, (len(vbar), len(xa))).copy()
    B = np.broadcast_to(xb, (len(vbar), len(xb))).copy()
    if band is not None:
        lo, hi = _band_x0_limits(species, config, vbar, band)
        A = np.maximum(A, lo[:, None])
        B = np.minimum(B, hi[:, None])

    if sx > 0:
        za, zb = (A - mu) / sx, (B - mu) / sx
        valid = zb > za
        za = np.where(valid, za, 0.0)
        zb = np.where(valid, zb, 0.0)
        xmass = np.where(valid, _interval_mass(za, zb), 0.0) / trunc
        xbar = mu + sx * _conditional_mean(za, zb, np.maximum(xmass * trunc, 0.0))
    else:
        valid = B >= A
        xmass = valid.astype(float)
        xbar = A

    mass = vmass[:, None] * xmass
    keep = mass > 0
    if not keep.any():
        return _Cells(np.empty(0), np.empty(0), np.empty(0))
    rows = np.nonzero(keep)[0]
    A, B, xbar, mass = A[keep], B[keep], xbar[keep], mass[keep]
    v_mid, v_lo, v_hi = vbar[rows], va[rows], vb[rows]

    T_c = flight_time(species, config, xbar, v_mid)
    dT_x = flight_time(species, config, B, v_mid) - flight_time(species, config, A, v_mid)
    dT_v = flight_time(species, config, xbar, v_hi) - flight_time(species, config, xbar, v_lo)
    width = np.hypot(dT_x, dT_v)
    return _Cells(T_c, width, mass)


def _cells_cdf(cells: _Cells, edges: np.ndarray, scale: float) -> np.ndarray:
    """Exact CDF of the piecewise-uniform cell mixture at sorted ``edges``."""
    origin = edges[0]
    u_e = (edges - origin) / scale
    c = (cells.center - origin) / scale
    w = cells.width / scale
    m = cells.mass
    G = np.zeros_like(u_e)

    point = w < 1e-6
    if point.any():
        order = np.argsort(c[point])
        cs = c[point][order]
        cum = np.concatenate(([0.0], np.cumsum(m[point][order])))
        G += cum[np.searchsorted(cs, u_e, side="right")]
    ramp = ~point
    if ramp.any():
        lo = c[ramp] - 0.5 * w[ramp]
        hi = c[ramp] + 0.5 * w[ramp]
        slope = m[ramp] / w[ramp]
        for ends, sign in ((lo, 1.0), (hi, -1.0)):
            order = np.argsort(ends)
            e_s = ends[order]
            k_s = slope[order]
            cum_k = np.concatenate(([0.0], np.cumsum(k_s)))
            cum_ke = np.concatenate(([0.0], np.cumsum(k_s * e_s)))
            idx = np.searchsorted(e_s, u_e, side="right")
            G += sign * (u_e * cum_k[idx] - cum_ke[idx])
    return np.clip(G, 0.0, None)


def _cells_density(cells: _Cells, tau_shifted: np.ndarray, sigma_t: float, chunk=32) -> np.ndarray:
    """Pointwise density of (cell mixture) convolved with N(0, sigma_t)."""
    out = np.empty(len(tau_shifted))
    lo = cells.center - 0.5 * cells.width
    hi = cells.center + 0.5 * cells.width
    wide = cells.width > 1e-9 * max(sigma_t, 1e-300) if sigma_t > 0 else cells.width > 0
    for s in range(0, len(tau_shifted), chunk):
        t = tau_shifted[s : s + chunk, None]
        if sigma_t > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                seg = np.where(
                    wide,
                    (ndtr((t - lo) / sigma_t) - ndtr((t - hi) / sigma_t)) / np.where(wide, cells.width, 1.0),
                    _npdf((t - cells.center) / sigma_t) / sigma_t,
                )
        else:
            inside = (t > lo) & (t < hi) & wide
            seg = np.where(inside, 1.0 / np.where(wide, cells.width, 1.0), 0.0)
        out[s : s + chunk] = seg @ cells.mass
    return out


def _gaussian_bin_kernel(h, sigma_t):
    """Density at bin centers of (uniform bin of width h) * N(0, sigma_t)."""
    if sigma_t == 0:
        return np.array([1.0 / h])
    half = int(math.ceil(9.0 * sigma_t / h)) + 1
    k = np.arange(-half, half + 1)
    return (ndtr((k + 0.5) * h / sigma_t) - ndtr((k - 0.5) * h / sigma_t)) / h


def _density_on_grid(cells, grid, t0_mean, sigma_t):
    h = grid[1] - grid[0]
    edges = np.concatenate(([grid[0] - 0.5 * h], grid + 0.5 * h)) - t0_mean
    G = _cells_cdf(cells, edges, h)
    bins = np.diff(G)
    kernel = _gaussian_bin_kernel(h, sigma_t)
    half = len(kernel) // 2
    dens = np.convolve(bins, kernel, mode="full")[half : half + len(grid)]
    return np.clip(dens, 0.0, None), float(G[-1] - G[0])


# --------------------------------------------------------------------------
# zero-field (ballistic) model


def _zero_field_rules(config, spread, n):
    xs, wx = _axis_rule(spread.x0_mean, spread.sigma_x, n)
    keep = (xs > 0) & (xs < config.d1)
    xs, wx = xs[keep], wx[keep] / wx[keep].sum()
    ts, wt = _axis_rule(0.0, spread.sigma_t, n)
    paths = xs + config.d2 + config.L
    return paths, wx, ts, wt


def _zero_field_density(config, spread, tau, n):
    paths, wx, ts, wt = _zero_field_rules(config, spread, n)
    s = np.asarray(tau, dtype=float)[:, None, None] - spread.t0_mean - ts[None, None, :]
    D = paths[None, :, None]
    pos = s > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.where(pos, D / np.where(pos, s, 1.0), 0.0)
        g = np.where(pos, _npdf((v - spread.v0_mean) / spread.sigma_v) / spread.sigma_v * v / np.where(pos, s, 1.0), 0.0)
    return np.einsum("tij,i,j->t", g, wx, wt)


def _zero_field_cdf(config, spread, tau, n):
    paths, wx, ts, wt = _zero_field_rules(config, spread, n)
    s = np.asarray(tau, dtype=float)[:, None, None] - spread.t0_mean - ts[None, None, :]
    D = paths[None, :, None]
    pos = s > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(pos, D / np.where(pos, s, 1.0), np.inf)
    g = np.where(pos, ndtr((spread.v0_mean - v) / spread.sigma_v), 0.0)
    return np.einsum("tij,i,j->t", g, wx, wt)


def _zero_field_converged(fn, config, spread, tau, settings):
    prev = None
    history = []
    for n in settings.gh_orders:
        cur = fn(config, spread, tau, n)
        if prev is not None:
            scale = max(np.max(np.abs(cur)), 1e-300)
            diff = float(np.max(np.abs(cur - prev)) / scale)
            history.append((n, diff))
            if diff < settings.gh_tol:
                return cur
        prev = cur
    if len(settings.gh_orders) == 1:
        return prev
    raise QuadratureError("zero-field quadrature did not converge", history)


# --------------------------------------------------------------------------
# public: pointwise density


def marginal_pdf(species, config, spread, tau, settings=DEFAULT_QUADRATURE):
    """Marginal arrival-time density ``f(tau)`` in 1/s at the given times.

    The double integral over ``(x0, v0)`` is evaluated on a cell grid that
    is refined once (``cells/2 -> cells`` per axis); the two levels must agree
    to ``settings.cell_tol`` relative to the larger density, otherwise
    :class:`QuadratureError` is raised.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if config.zero_field:
        out = _zero_field_converged(_zero_field_density, config, spread, tau, settings)
        return out
    shifted = tau - spread.t0_mean
    levels = []
    for n in (settings.cells // 2, settings.cells):
        cells = _tof_cells(species, config, spread, n, settings.z_max)
        levels.append(_cells_density(cells, shifted, spread.sigma_t))
    peak = max(float(np.max(levels[1])), _peak_floor(species, config, spread, settings))
    diff = float(np.max(np.abs(levels[1] - levels[0]))) / peak
    if diff > settings.cell_tol:
        raise QuadratureError(
            f"density refinement changed f by {diff:.3g} (> {settings.cell_tol:g}) relative to peak",
            [(settings.cells // 2, settings.cells, diff)],
        )
    return levels[1]


def _peak_floor(species, config, spread, settings):
    # Gaussian peak height with the distribution's standard deviation
    _, std = flight_time_moments(species, config, spread, settings)
    return 1.0 / (_SQRT2PI * std) if std > 0 else 0.0


# --------------------------------------------------------------------------
# tabulated distributions


class Window(NamedTuple):
    start: float
    length: float
    policy: str = "sigma"

    @property
    def stop(self) -> float:
        return self.start + self.length


@dataclass(frozen=True, eq=False)
class ArrivalDistribution:
    """Tabulated arrival-time density.

    ``density`` integrates (trapezoid) to ``mass_captured``, the probability
    that an ion arrives inside the tabulated range.  ``arrival_probability``
    is the probability that it arrives at all (1 for accelerating sources,
    the Wien pass probability for filtered sources, ``P(v0 > 0)`` in the
    zero-field mode).  ``mean``, ``std`` and quantiles are conditional on
    arriving inside the table.
    """

    tau_grid: np.ndarray
    density: np.ndarray
    mean: float
    std: float
    mass_captured: float
    arrival_probability: float = 1.0
    heavy_tailed: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_density(cls, tau, density, *, mass_captured=None, arrival_probability=1.0, heavy_tailed=False, meta=None):
        tau = np.asarray(tau, dtype=float)
        density = np.asarray(density, dtype=float)
        if tau.ndim != 1 or tau.shape != density.shape or len(tau) < 2:
            raise DomainError("tau grid and density must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(tau) <= 0):
            raise DomainError("tau grid must be strictly increasing")
        if np.any(density < 0):
            raise DomainError("density must be non-negative")
        total = float(np.trapezoid(density, tau))
        if not total > 0:
            raise NumericError("tabulated density has zero mass")
        mean = float(np.trapezoid(tau * density, tau) / total)
        var = float(np.trapezoid((tau - mean) ** 2 * density, tau) / total)
        if mass_captured is None:
            mass_captured = total
        elif not 0.995 * mass_captured <= total <= 1.005 * mass_captured:
            raise NumericError(
                f"grid too coarse: tabulated mass {total:.6g} vs captured {mass_captured:.6g}; refine the grid"
            )
        return cls(tau, density, mean, math.sqrt(max(var, 0.0)), float(mass_captured),
                   float(arrival_probability), bool(heavy_tailed), dict(meta or {}))

    # cumulative mass of the piecewise-linear density
    def _cum(self):
        h = np.diff(self.tau_grid)
        return np.concatenate(([0.0], np.cumsum(0.5 * h * (self.density[1:] + self.density[:-1]))))

    @property
    def total_mass(self) -> float:
        return float(self._cum()[-1])

    def cdf(self, t):
        """Unconditional probability of arriving inside the table before ``t``."""
        t = np.asarray(t, dtype=float)
        tau, f = self.tau_grid, self.density
        cum = self._cum()
        tc = np.clip(t, tau[0], tau[-1])
        i = np.clip(np.searchsorted(tau, tc, side="right") - 1, 0, len(tau) - 2)
        d = tc - tau[i]
        h = tau[i + 1] - tau[i]
        out = cum[i] + f[i] * d + 0.5 * (f[i + 1] - f[i]) * d * d / h
        return float(out) if out.ndim == 0 else out

    def integrate(self, a: float, b: float) -> float:
        return float(self.cdf(b) - self.cdf(a))

    def quantile(self, p):
        """Conditional quantile: the time by which a fraction ``p`` of the tabulated mass has arrived."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise DomainError("quantile level must be in [0, 1]")
        cum = self._cum()
        target = p * cum[-1]
        i = np.clip(np.searchsorted(cum, target, side="left") - 1, 0, len(cum) - 2)
        tau, f = self.tau_grid, self.density
        h = tau[i + 1] - tau[i]
        rem = target - cum[i]
        a = 0.5 * (f[i + 1] - f[i]) / h
        b = f[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            # solve a d^2 + b d = rem on [0, h]
            disc = np.sqrt(np.maximum(b * b + 4.0 * a * rem, 0.0))
            d_quad = 2.0 * rem / (b + disc)
            d = np.where(b + disc > 0, d_quad, 0.0)
        out = tau[i] + np.clip(d, 0.0, h)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path, meta=None) -> Path:
        info = dict(self.meta)
        info.update(meta or {})
        info.update(mean_s=self.mean, std_s=self.std, mass_captured=self.mass_captured,
                    arrival_probability=self.arrival_probability, heavy_tailed=self.heavy_tailed)
        return write_csv(path, ["tau_seconds", "density_per_second"], zip(self.tau_grid, self.density), info)


@dataclass(frozen=True)
class GridSpec:
    """Explicit uniform tau grid ``[start, stop]`` with ``points`` nodes."""

    start: float
    stop: float
    points: int = 4097

    def array(self):
        if not self.stop > self.start or self.points < 3:
            raise DomainError("grid needs stop > start and at least 3 points")
        return np.linspace(self.start, self.stop, self.points)


def build_distribution(species, config, spread, grid="auto", settings=DEFAULT_QUADRATURE, band=None):
    """Tabulate the arrival-time density and its summary statistics.

    ``grid`` is ``"auto"``, a :class:`GridSpec` or a ``(start, stop, points)``
    tuple.  ``band`` optionally restricts drift-entry speeds to
    ``(v_low, v_high)`` (Wien filtering); the resulting density then
    integrates to the pass probability.
    """
    if config.zero_field:
        if band is not None:
            return _build_zero_field(config, spread, grid, settings, band)
        return _build_zero_field(config, spread, grid, settings, None)

    n_fine = settings.cells
    coarse = _tof_cells(species, config, spread, n_fine // 2, settings.z_max, band)
    if coarse.total <= 0:
        raise NumericError("no probability mass passes the velocity band")
    fine = _tof_cells(species, config, spread, n_fine, settings.z_max, band)
    if fine.total <= 0:
        raise NumericError("no probability mass passes the velocity band")

    mean_T, var_T = fine.moments()
    std = math.sqrt(var_T + spread.sigma_t**2)
    if grid == "auto":
        if not std > 0:
            raise NumericError("degenerate arrival distribution (all spreads are zero)")
        halfwidth = settings.grid_halfwidth
        for _ in range(6):
            mid = mean_T + spread.t0_mean
            tau = np.linspace(mid - halfwidth * std, mid + halfwidth * std, settings.grid_points)
            dens, captured = _density_on_grid(fine, tau, spread.t0_mean, spread.sigma_t)
            if captured >= (1.0 - 1e-6) * fine.total:
                break
            halfwidth *= 1.5
    else:
        tau = grid.array() if isinstance(grid, GridSpec) else GridSpec(*grid).array()
        pointwise = tau[1] - tau[0] > 0.25 * std
        if pointwise:
            # bin averages no longer stand in for point values: evaluate the
            # density at the nodes and take the mass from a fine reference grid
            dens = _cells_density(fine, tau - spread.t0_mean, spread.sigma_t)
            n_ref = int(min(max(settings.grid_points, 16 * (tau[-1] - tau[0]) / std + 1), 1_000_001))
            ref = np.linspace(tau[0], tau[-1], n_ref)
            captured = float(np.trapezoid(_density_on_grid(fine, ref, spread.t0_mean, spread.sigma_t)[0], ref))
        else:
            dens, captured = _density_on_grid(fine, tau, spread.t0_mean, spread.sigma_t)

    if grid != "auto" and pointwise:
        dens_coarse = _cells_density(coarse, tau - spread.t0_mean, spread.sigma_t)
    else:
        dens_coarse, _ = _density_on_grid(coarse, tau, spread.t0_mean, spread.sigma_t)
    peak = float(dens.max())
    diff = float(np.max(np.abs(dens - dens_coarse))) / peak if peak > 0 else 0.0
    if diff > settings.cell_tol:
        raise QuadratureError(
            f"density refinement {n_fine // 2}->{n_fine} cells changed f by {diff:.3g} relative "
            f"(tolerance {settings.cell_tol:g}); increase the quadrature order",
            [(n_fine // 2, n_fine, diff)],
        )
    meta = {"species": species.name, "method": "cells", "cells": n_fine, "refinement_diff": diff}
    if band is not None:
        meta["band_v_low"], meta["band_v_high"] = band
    return ArrivalDistribution.from_density(
        tau, dens, mass_captured=captured, arrival_probability=fine.total, meta=meta
    )


def _build_zero_field(config, spread, grid, settings, band):
    if band is not None:
        raise DomainError("velocity bands are not modeled for the zero-field source")
    if not spread.sigma_v > 0:
        raise NumericError("zero-field mode needs a positive velocity spread")
    mu, s = spread.v0_mean, spread.sigma_v
    p_arrive = float(ndtr(mu / s))
    if not p_arrive > 0:
        raise NumericError("no ion moves toward the receiver")
    path = spread.x0_mean + config.d2 + config.L
    if grid == "auto":
        v_fast = mu + s * 9.0
        # slow-tail speed below which only 1e-6 of arriving ions remain
        p_slow = float(ndtr(-mu / s)) + 1e-6 * p_arrive
        v_slow = mu + s * float(ndtri(p_slow))
        if not v_slow > 0:
            v_slow = s * 1e-9
        lo = max(path / v_fast, 1e-15)
        hi = path / v_slow
        tau = np.geomspace(lo, hi, settings.grid_points) + spread.t0_mean
        tau = tau[tau > 0]
    else:
        tau = grid.array() if isinstance(grid, GridSpec) else GridSpec(*grid).array()
    dens = _zero_field_converged(_zero_field_density, config, spread, tau, settings)
    F = _zero_field_converged(_zero_field_cdf, config, spread, np.array([tau[0], tau[-1]]), settings)
    captured = float(F[1] - F[0])
    meta = {"method": "zero-field", "window_policy_forced": "quantile"}
    return ArrivalDistribution.from_density(
        tau, dens, mass_captured=captured, arrival_probability=p_arrive, heavy_tailed=True, meta=meta
    )


# --------------------------------------------------------------------------
# detection window


def detection_window(dist: ArrivalDistribution, policy: str = "sigma", *, n_sigma: float = 3.0, mass: float = 0.99) -> Window:
    """Slot placement and length for a tabulated arrival distribution.

    ``"sigma"``: ``[mean - n_sigma*std, mean + n_sigma*std]`` (6 sigma wide by
    default).  ``"quantile"``: the central interval holding ``mass`` of the
    tabulated arrivals.  Heavy-tailed distributions always use ``"quantile"``.
    """
    if policy not in ("sigma", "quantile"):
        raise DomainError(f"unknown window policy {policy!r}")
    if dist.heavy_tailed and policy == "sigma":
        log.info("heavy-tailed distribution: forcing the quantile window policy")
        policy = "quantile"
    if policy == "sigma":
        return Window(dist.mean - n_sigma * dist.std, 2.0 * n_sigma * dist.std, "sigma")
    if not 0 < mass < 1:
        raise DomainError("window mass must be in (0, 1)")
    tail = 0.5 * (1.0 - mass)
    a, b = dist.quantile([tail, 1.0 - tail])
    return Window(float(a), float(b - a), "quantile")


# --------------------------------------------------------------------------
# sampling


def sample_initial_states(config, spread, rng, size):
    """Draw ``(x0, v0, t0)`` arrays; ``x0`` is truncated to ``(0, d1)`` by rejection."""
    streams = as_streams(rng)
    size = int(size)
    x = spread.x0_mean + spread.sigma_x * streams["position"].standard_normal(size)
    bad = (x <= 0) | (x >= config.d1)
    rejected = 0
    while bad.any():
        k = int(bad.sum())
        rejected += k
        x[bad] = spread.x0_mean + spread.sigma_x * streams["position"].standard_normal(k)
        bad = (x <= 0) | (x >= config.d1)
    if size and rejected / size > 0.01:
        log.warning("ionization-position rejection rate %.2f%% exceeds 1%%", 100.0 * rejected / size)
    v = spread.v0_mean + spread.sigma_v * streams["velocity"].standard_normal(size)
    t = spread.t0_mean + spread.sigma_t * streams["ionization_time"].standard_normal(size)
    return x, v, t


def sample_arrivals(species, config, spread, rng, size):
    """Monte-Carlo arrival times; ``NEVER_ARRIVES`` (inf) marks ions that never arrive."""
    x, v, t = sample_initial_states(config, spread, rng, size)
    return t + flight_time(species, config, x, v)


def sample_arrival(species, config, spread, rng) -> float:
    """One Monte-Carlo arrival time, or ``NEVER_ARRIVES``."""
    out = float(sample_arrivals(species, config, spread, rng, 1)[0])
    return NEVER_ARRIVES if math.isinf(out) else out


def sample_speeds(species, config, x0, v0):
    """Drift-entry speeds for sampled initial states."""
    if config.zero_field:
        return np.where(np.asarray(v0) > 0, v0, 0.0)
    return accelerated_speed(species, config, x0, v0)


# --------------------------------------------------------------------------
# calibration


def calibrate_sigma_t(species, config, spread, slot, *, n_sigma=3.0, settings=DEFAULT_QUADRATURE) -> SpreadModel:
    """Return ``spread`` with ``sigma_t`` chosen so the ``2*n_sigma`` window equals ``slot``.

    Ionization-time jitter is independent of the flight time, so the arrival
    variance is ``sigma_t**2 + Var[T]``.
    """
    _, std_T = flight_time_moments(species, config, spread.with_(sigma_t=0.0), settings)
    target = slot / (2.0 * n_sigma)
    if target < std_T:
        raise NumericError(
            f"slot {slot:g} s is shorter than the flight-time spread alone ({2 * n_sigma * std_T:g} s)"
        )
    return spread.with_(sigma_t=math.sqrt(target**2 - std_T**2))
