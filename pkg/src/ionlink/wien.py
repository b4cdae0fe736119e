"""Crossed-field velocity selector placed between the source and the drift tube.

The selector passes ions at ``v_s = E / B`` undeflected.  Other speeds are
bent onto a circular path; the aperture at distance ``l`` from the selector
centre then admits the band ``[v_s / (1 + kappa), v_s / (1 - kappa)]`` with
``kappa = 2 V d / (l b E)``.  The filter is an ideal gate: transit time and
fringing fields are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .arrival import DEFAULT_QUADRATURE, SpreadModel, _hermite_rule, _interval_mass
from .errors import ConfigError, DomainError, QuadratureError
from .physics import SourceConfig, accelerated_speed

MODES = ("post-acceleration", "paper-literal")

# Defaults of the reference selector geometry
DEFAULT_E_FIELD = 4000.0  # V/m
DEFAULT_PLATE_LENGTH = 0.3937  # m
DEFAULT_APERTURE_DISTANCE = 3.45  # m


class VelocityBand(NamedTuple):
    v_low: float
    v_high: float

    @property
    def width(self) -> float:
        return self.v_high - self.v_low

    def contains(self, v):
        return (np.asarray(v) >= self.v_low) & (np.asarray(v) <= self.v_high)


@dataclass(frozen=True)
class WienConfig:
    """Selector fields and geometry.

    ``plate_length`` is the length of the field region, ``aperture_distance``
    the distance from the selector centre to the aperture, ``aperture`` the
    admitted half-opening and ``accel_voltage`` the potential the ions fell
    through before entering.
    """

    E_field: float
    B_field: float
    aperture: float
    accel_voltage: float
    plate_length: float = DEFAULT_PLATE_LENGTH
    aperture_distance: float = DEFAULT_APERTURE_DISTANCE

    def __post_init__(self):
        for name in ("E_field", "B_field", "aperture", "accel_voltage", "plate_length", "aperture_distance"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be positive and finite, got {val}")

    @classmethod
    def matched(cls, v_select: float, *, aperture: float, accel_voltage: float, E_field=DEFAULT_E_FIELD, **kw):
        """Selector tuned so that ``v_select`` passes undeflected (``B = E / v_select``)."""
        if not v_select > 0:
            raise ConfigError("selected velocity must be positive")
        return cls(E_field=E_field, B_field=E_field / v_select, aperture=aperture, accel_voltage=accel_voltage, **kw)

    @property
    def kappa(self) -> float:
        return 2.0 * self.accel_voltage * self.aperture / (self.aperture_distance * self.plate_length * self.E_field)

    def with_(self, **changes) -> "WienConfig":
        return replace(self, **changes)


def selected_velocity(wien: WienConfig) -> float:
    return wien.E_field / wien.B_field


def matched_wien(species, config: SourceConfig, aperture: float, *, E_field=DEFAULT_E_FIELD, **kw) -> WienConfig:
    """Selector centred on the drift-entry speed of an ion created at rest at ``x0_mean``."""
    V = config.accel_voltage()
    v_s = accelerated_speed(species, config, config.x0_mean, 0.0)
    return WienConfig.matched(v_s, aperture=aperture, accel_voltage=V, E_field=E_field, **kw)


def net_force(wien: WienConfig, v, charge: float) -> float:
    """Transverse force ``q v B - q E`` on an ion moving at ``v`` (newtons)."""
    return charge * (np.asarray(v) * wien.B_field - wien.E_field)


def deflection_radius(wien: WienConfig, v: float) -> float:
    """Radius ``2V / (E (v/v_s - 1))`` of the bent path; ``+inf`` at ``v = v_s``.

    The sign gives the bending direction.  The expression substitutes the
    accelerating energy ``2qV`` for ``m v**2`` and is therefore exact only
    near ``v_s``.
    """
    if not v > 0:
        raise DomainError("speed must be positive")
    ratio = v / selected_velocity(wien) - 1.0
    if ratio == 0:
        return math.inf
    return 2.0 * wien.accel_voltage / (wien.E_field * ratio)


def aperture_offset(wien: WienConfig, v):
    """Offset at the aperture plane, ``l b E (v_s - v) / (2 V v)`` (meters).

    This is the relation the pass band inverts; it differs from
    ``l b / deflection_radius(v)`` by the factor ``v_s / v``.
    """
    v = np.asarray(v, dtype=float)
    scale = wien.aperture_distance * wien.plate_length * wien.E_field / (2.0 * wien.accel_voltage)
    out = scale * (selected_velocity(wien) - v) / v
    return float(out) if out.ndim == 0 else out


def pass_band(wien: WienConfig) -> VelocityBand:
    """Speeds whose aperture offset stays within ``+-aperture``."""
    kappa = wien.kappa
    if kappa >= 1:
        raise ConfigError(f"aperture admits unbounded band (kappa={kappa:.4g} >= 1)")
    v_s = selected_velocity(wien)
    return VelocityBand(v_s / (1.0 + kappa), v_s / (1.0 - kappa))


def speed_pass_probability(species, config: SourceConfig, spread: SpreadModel, band, settings=DEFAULT_QUADRATURE) -> float:
    """Probability that the drift-entry speed falls inside ``band``.

    Gauss-Hermite over ``v0``; for each node the admitted ``x0`` interval is
    exact, so its probability is a difference of normal CDFs.
    """
    lo, hi = band
    if config.zero_field:
        # speeds are v0 itself; ions with v0 <= 0 never reach the selector
        z = (np.array([max(lo, 0.0), max(hi, 0.0)]) - spread.v0_mean) / spread.sigma_v
        return float(_interval_mass(z[0], z[1]))
    qm = species.charge_to_mass
    a1 = qm * config.E1
    k2 = 2.0 * qm * config.E2 * config.d2
    mu, sx = spread.x0_mean, spread.sigma_x
    d1 = config.d1

    def p_given_v(v0):
        x_lo = np.maximum((lo**2 - v0**2 - k2) / (2.0 * a1), 0.0)
        x_hi = np.minimum((hi**2 - v0**2 - k2) / (2.0 * a1), d1)
        if sx == 0:
            return ((x_lo <= mu) & (mu <= x_hi)).astype(float)
        trunc = float(_interval_mass(-mu / sx, (d1 - mu) / sx))
        m = _interval_mass((x_lo - mu) / sx, (np.maximum(x_hi, x_lo) - mu) / sx)
        return m / trunc

    if spread.sigma_v == 0:
        return float(p_given_v(np.array([spread.v0_mean]))[0])
    prev = None
    history = []
    for n in settings.gh_orders:
        z, w = _hermite_rule(n)
        cur = float(np.sum(w * p_given_v(spread.v0_mean + spread.sigma_v * z)))
        history.append((n, cur))
        if prev is not None and abs(cur - prev) <= settings.gh_tol * max(abs(cur), 1e-300):
            return min(max(cur, 0.0), 1.0)
        prev = cur
    # the x0-interval edges make the integrand only piecewise smooth in v0;
    # fall back to a dense midpoint rule when the ladder stalls
    z = np.linspace(-settings.z_max, settings.z_max, 20001)
    mid = 0.5 * (z[1:] + z[:-1])
    w = np.diff(ndtr(z))
    dense = float(np.sum(w * p_given_v(spread.v0_mean + spread.sigma_v * mid)))
    if abs(dense - prev) > 1e-3 * max(dense, 1e-12) and dense > 1e-12:
        raise QuadratureError("pass probability did not converge", history + [("midpoint", dense)])
    return min(max(dense, 0.0), 1.0)


def pass_probability(species, config: SourceConfig, wien: WienConfig, mode="post-acceleration",
                     spread: SpreadModel | None = None, settings=DEFAULT_QUADRATURE) -> float:
    """Fraction of ions that leave the selector through the aperture.

    ``"post-acceleration"`` uses the speed distribution after the source
    fields.  ``"paper-literal"`` integrates the thermal (mean-zero) velocity
    distribution over the band, which is vanishingly small at accelerated
    selector speeds and is kept only as a fidelity check.
    """
    if mode not in MODES:
        raise DomainError(f"unknown pass-probability mode {mode!r}; expected one of {MODES}")
    band = pass_band(wien)
    spread = spread or SpreadModel.from_config(species, config)
    if mode == "paper-literal":
        return float(_interval_mass(band.v_low / spread.sigma_v, band.v_high / spread.sigma_v))
    return speed_pass_probability(species, config, spread, band, settings)
