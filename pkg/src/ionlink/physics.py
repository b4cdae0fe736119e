"""Ion species, two-field source geometry and exact SI flight-time kinematics.

All quantities are SI.  The accelerator has two uniform field regions
(grid G0 -> G1 of width ``d1`` and G1 -> G2 of width ``d2``) followed by a
field-free drift tube of length ``L``.  An ion is created at distance ``x0``
in front of G1 with signed initial velocity ``v0`` (positive = toward the
receiver) at time ``t0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

AMU_KG = 1.66054e-27
ELEMENTARY_CHARGE = 1.602177e-19
BOLTZMANN = 1.380649e-23

# Wiley-McLaren practical units: amu, eV, cm, V/cm -> microseconds.
WILEY_MCLAREN_CONSTANT = 1.02

NEVER_ARRIVES = math.inf
"""Arrival time reported for an ion that can never reach the receiver."""

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.3548...


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float  # amu
    charge_multiple: int = 1

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"{self.name}: mass must be positive, got {self.mass}")
        if int(self.charge_multiple) != self.charge_multiple or self.charge_multiple < 1:
            raise DomainError(f"{self.name}: charge multiple must be an integer >= 1")

    @property
    def mass_kg(self) -> float:
        return self.mass * AMU_KG

    @property
    def charge_coulombs(self) -> float:
        return self.charge_multiple * ELEMENTARY_CHARGE

    @property
    def charge_to_mass(self) -> float:
        return self.charge_coulombs / self.mass_kg


HYDROGEN = IonSpecies("hydrogen", 1.007)
NITROGEN = IonSpecies("nitrogen", 14.006)
ARGON = IonSpecies("argon", 39.94)
BENZENE = IonSpecies("benzene", 78.0)

SPECIES = {s.name: s for s in (HYDROGEN, NITROGEN, ARGON, BENZENE)}


def get_species(name: str) -> IonSpecies:
    try:
        return SPECIES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown species {name!r}; known: {', '.join(SPECIES)}") from None


@dataclass(frozen=True)
class SourceConfig:
    """Grid potentials, geometry and ionization spreads of the ion source.

    The defaults are the benzene worked example: ``V0 = 65.96 V``,
    ``V1 = -65.96 V``, ``V2 = -1000 V``, ``d1 = 11.6 mm``, ``d2 = 10.0 mm``,
    ``L = 623.6 mm``.  ``x0_mean`` defaults to ``d1 / 2``.
    """

    V0: float = 65.96
    V1: float = -65.96
    V2: float = -1000.0
    d1: float = 0.0116
    d2: float = 0.010
    L: float = 0.6236
    x0_mean: float | None = None
    sigma_x: float = 1.0e-4
    sigma_t: float = 2.0e-9
    temperature: float = 300.0

    def __post_init__(self):
        if self.x0_mean is None:
            object.__setattr__(self, "x0_mean", self.d1 / 2.0)
        for name in ("d1", "d2", "L"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be a positive length, got {val}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.sigma_x < 0 or self.sigma_t < 0:
            raise ConfigError("sigma_x and sigma_t must be non-negative")
        if not 0 < self.x0_mean < self.d1:
            raise ConfigError(f"x0_mean={self.x0_mean} must lie strictly inside (0, d1={self.d1})")
        if not self.x0_mean + 3.0 * self.sigma_x < self.d1:
            raise ConfigError("x0_mean + 3*sigma_x must stay below d1")
        if not self.zero_field:
            if self.E1 < 0 or self.E2 < 0:
                raise ConfigError(
                    f"decelerating configuration (E1={self.E1:g} V/m, E2={self.E2:g} V/m); "
                    "both fields must drive ions toward the receiver"
                )
            if self.E1 == 0:
                raise ConfigError("E1 = 0 with non-zero grid voltages is not supported; use the zero-field mode")

    @classmethod
    def zero_field_config(cls, **kwargs) -> "SourceConfig":
        return cls(V0=0.0, V1=0.0, V2=0.0, **kwargs)

    @property
    def zero_field(self) -> bool:
        return self.V0 == 0 and self.V1 == 0 and self.V2 == 0

    @property
    def E1(self) -> float:
        return (self.V0 - self.V1) / self.d1

    @property
    def E2(self) -> float:
        return (self.V1 - self.V2) / self.d2

    def accel_voltage(self, x0: float | None = None) -> float:
        """Potential drop seen by an ion created at ``x0`` (default: ``x0_mean``)."""
        x0 = self.x0_mean if x0 is None else x0
        return x0 * self.E1 + self.d2 * self.E2

    def with_(self, **changes) -> "SourceConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialState:
    x0: float
    v0: float = 0.0
    t0: float = 0.0
    d1: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.x0 > 0:
            raise DomainError(f"x0 must be positive, got {self.x0}")
        if self.d1 is not None and not self.x0 < self.d1:
            raise DomainError(f"x0={self.x0} must be below d1={self.d1}")


def thermal_velocity_sigma(species: IonSpecies, temperature: float) -> float:
    """Standard deviation ``sqrt(k T / m)`` of the 1-D Maxwell-Boltzmann velocity."""
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return math.sqrt(BOLTZMANN * temperature / species.mass_kg)


def accelerated_speed(species, config, x0, v0):
    """Speed entering the drift region, ``sqrt(v0**2 + 2q/m (x0 E1 + d2 E2))``.

    Accepts scalars or numpy arrays for ``x0`` and ``v0``.
    """
    k = 2.0 * species.charge_to_mass * (np.asarray(x0) * config.E1 + config.d2 * config.E2)
    out = np.sqrt(np.asarray(v0, dtype=float) ** 2 + k)
    return float(out) if out.ndim == 0 else out


def _cross_region(v_in, accel, length):
    """Time and exit speed through a uniform field region of given length.

    ``accel > 0`` handles turnaround automatically because
    ``(v_out - v_in) / accel`` includes the reversal leg for ``v_in < 0``.
    """
    if accel > 0:
        v_out = np.sqrt(v_in * v_in + 2.0 * accel * length)
        return (v_out - v_in) / accel, v_out
    with np.errstate(divide="ignore"):
        t = np.where(v_in > 0, length / np.where(v_in > 0, v_in, 1.0), np.inf)
    return t, v_in


def flight_time(species: IonSpecies, config: SourceConfig, x0, v0):
    """Vectorized flight time from ionization to the receiver (``t0`` excluded).

    Returns ``inf`` for ions that never arrive (zero-field mode with ``v0 <= 0``).
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if config.zero_field:
        path = x0 + config.d2 + config.L
        with np.errstate(divide="ignore"):
            t = np.where(v0 > 0, path / np.where(v0 > 0, v0, 1.0), np.inf)
        return float(t) if t.ndim == 0 else t
    qm = species.charge_to_mass
    t1, v1 = _cross_region(v0, qm * config.E1, x0)
    t2, v2 = _cross_region(v1, qm * config.E2, config.d2)
    t = t1 + t2 + config.L / v2
    return float(t) if np.ndim(t) == 0 else t


def time_of_flight(species: IonSpecies, config: SourceConfig, state: InitialState) -> float:
    """Arrival time ``t0 + t1 + t2 + t3`` of one ion, or ``NEVER_ARRIVES``."""
    if not state.x0 < config.d1:
        raise DomainError(f"x0={state.x0} must lie inside region 1 (d1={config.d1})")
    return state.t0 + flight_time(species, config, state.x0, state.v0)


def flight_time_components(species: IonSpecies, config: SourceConfig, x0: float, v0: float):
    """Return ``(t1, t2, t3)``: time to G1, time across region 2, drift time."""
    if config.zero_field:
        if v0 <= 0:
            return (math.inf, math.inf, math.inf)
        return (x0 / v0, config.d2 / v0, config.L / v0)
    qm = species.charge_to_mass
    t1, v1 = _cross_region(np.float64(v0), qm * config.E1, x0)
    t2, v2 = _cross_region(v1, qm * config.E2, config.d2)
    return (float(t1), float(t2), float(config.L / v2))


def wiley_mclaren_tof(species: IonSpecies, config: SourceConfig, state: InitialState) -> float:
    """Flight time in the classic energy form with the rounded 1.02 unit constant.

    Works in amu, eV, cm and V/cm and returns seconds.  The ``sqrt(2m)``
    prefactor is applied to both terms of the region-1 time (the turnaround
    term included), which is what the practical-unit derivation gives.
    Only defined for accelerating configurations.
    """
    if config.zero_field:
        raise DomainError("the practical-unit form needs non-zero fields")
    m = species.mass
    z = species.charge_multiple
    E1 = config.E1 / 100.0  # V/cm
    E2 = config.E2 / 100.0
    x0 = state.x0 * 100.0
    d2 = config.d2 * 100.0
    L = config.L * 100.0
    U0 = 0.5 * species.mass_kg * state.v0**2 / ELEMENTARY_CHARGE  # eV
    U1 = U0 + z * x0 * E1
    U = U1 + z * d2 * E2
    c = WILEY_MCLAREN_CONSTANT
    sign = -1.0 if state.v0 > 0 else 1.0  # turnaround adds time for v0 < 0
    t_x0 = c * math.sqrt(2.0 * m) / (z * E1) * (math.sqrt(U1) + sign * math.sqrt(U0))
    if E2 > 0:
        t_d2 = c * math.sqrt(2.0 * m) / (z * E2) * (math.sqrt(U) - math.sqrt(U1))
    else:
        t_d2 = c * math.sqrt(2.0 * m) * d2 / (2.0 * math.sqrt(U1))
    t_L = c * math.sqrt(2.0 * m) * L / (2.0 * math.sqrt(U))
    return state.t0 + (t_x0 + t_d2 + t_L) * 1e-6
