"""Molecular communication through a vacuum drift tube.

Ion kinematics in a two-field source, arrival-time distributions, Wien
velocity filtering, on-off-keying timing-channel metrics and a Monte-Carlo
link simulator.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NumericError, QuadratureError  # noqa: E402
from .physics import (  # noqa: E402
    NEVER_ARRIVES,
    SPECIES,
    InitialState,
    IonSpecies,
    SourceConfig,
    accelerated_speed,
    get_species,
    thermal_velocity_sigma,
    time_of_flight,
    wiley_mclaren_tof,
)
