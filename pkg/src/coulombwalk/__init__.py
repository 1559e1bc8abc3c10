"""Simulation and verification toolkit for Coulomb-penalized Brownian paths.

Discretized 3D paths are penalized by a pairwise inverse-distance energy;
the package samples the resulting tilted path measure by Metropolis moves
that preserve the Wiener base law, estimates its partition function by three
independent routes, and evaluates every closed-form bound behind the
ballistic scaling of the gyration radius.
"""

from .core import (
    ConsistencyError,
    DegeneratePathError,
    DomainError,
    Estimate,
    EventPredicate,
    ModelParams,
    ParameterError,
    SeedSpec,
    TimeGrid,
    default_c2,
    event_thresholds,
    make_grid,
)
from .functionals import (
    FunctionalSeries,
    PathFunctionals,
    coulomb_delta_pivot,
    coulomb_energy,
    holder_check,
    log_gibbs_weight,
    path_functionals,
    radius_gyration_centered,
    radius_gyration_pairwise,
)
from .mcmc import (
    ChainOutput,
    ChainStats,
    McmcConfig,
    effective_sample_size,
    reweighted_event_prob,
    run_chain,
)
from .paths import (
    PathSample,
    apply_global_autoregressive,
    apply_pivot,
    random_rotation,
    resample_block,
    sample_path,
)
from .estimators import q_mean_radius, sample_functionals, z_girsanov, z_naive, z_thermo
from .bounds import scaling_window
from .harness import ExperimentConfig, ExperimentReport, run_experiment

__version__ = "0.1.0"
