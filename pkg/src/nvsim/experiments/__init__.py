"""Protocol-level simulators built on the dynamics engine."""

from .cpt import (
    BathConfig,
    CoolingResult,
    CPTConfig,
    cpt_linewidth,
    nuclear_flip_probability,
    simulate_bath_preparation,
    simulate_cpt,
    simulate_nuclear_cooling,
)
from .entangle import (
    EntanglementConfig,
    EntanglementRun,
    entangled_conditional_probability,
    fidelity_lower_bound,
    dilution_budget_config,
    simulate_entanglement_run,
)
from .ple import PLEProtocol, simulate_ple
from .rabi import (
    ReadoutPopulation,
    readout_pulse,
    resonant_readout_population,
    simulate_rabi,
)

__all__ = [
    "BathConfig",
    "CoolingResult",
    "CPTConfig",
    "cpt_linewidth",
    "nuclear_flip_probability",
    "simulate_bath_preparation",
    "simulate_cpt",
    "simulate_nuclear_cooling",
    "EntanglementConfig",
    "EntanglementRun",
    "entangled_conditional_probability",
    "fidelity_lower_bound",
    "dilution_budget_config",
    "simulate_entanglement_run",
    "PLEProtocol",
    "simulate_ple",
    "ReadoutPopulation",
    "readout_pulse",
    "resonant_readout_population",
    "simulate_rabi",
]
