"""Simulation library for the collisional quantum interface between
alkali-metal and noble-gas spin ensembles."""

from .params import (
    PhysicalConfig,
    DerivedRates,
    FieldSchedule,
    slowing_down_factor,
    derive_rates,
    compensation_field,
    incoherent_occupation,
    vacuum_background_probability,
    zeta_from_enhancement,
    potassium_helium_config,
)

__version__ = "0.1.0"

__all__ = [
    "PhysicalConfig",
    "DerivedRates",
    "FieldSchedule",
    "slowing_down_factor",
    "derive_rates",
    "compensation_field",
    "incoherent_occupation",
    "vacuum_background_probability",
    "zeta_from_enhancement",
    "potassium_helium_config",
    "__version__",
]
