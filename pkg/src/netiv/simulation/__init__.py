"""Simulation designs, population oracles and the replication harness."""

from .dgp import Coefficients, DgpSpec, Model, default_iem, draw_coefficients, generate, ring_band
from .oracle import PopulationTable, population_params_closed_form, population_params_mc
from .runner import McConfig, McSummary, load_config, monte_carlo_run

__all__ = [
    "Coefficients", "DgpSpec", "Model", "default_iem", "draw_coefficients", "generate", "ring_band",
    "PopulationTable", "population_params_closed_form", "population_params_mc",
    "McConfig", "McSummary", "load_config", "monte_carlo_run",
]
