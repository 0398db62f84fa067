"""Instrumental-variable estimation of causal effects under network interference."""

from .errors import DegenerateDenominator, EmptyCell, NetivError
from .exposure import ExposureSpec, ExposureValues, compute_exposures, exposure_support
from .graph import (
    UNREACHABLE,
    DistanceOracle,
    InterferenceSets,
    Network,
    Subpopulation,
    build_network,
    degree_subpopulation,
    denseness_moments,
    full_population,
    interference_sets,
    load_edge_list,
    neighborhood,
    path_distance,
    subpopulation,
)
from .estimators import (
    EstimateReport,
    KnownProbabilities,
    StudyData,
    ade,
    aie,
    aoe,
    ase,
    cell_probability,
    ipw_mean_conditional,
    ipw_mean_marginal,
    spillover_diagnostic,
)
from .variance import HacResult, ResidualVector, hac_variance, residuals_ade, residuals_aie, residuals_aoe, residuals_ase
from .bootstrap import BootstrapKernel, BootstrapResult, build_kernel, psd_sqrt, wild_bootstrap

__version__ = "0.1.0"
