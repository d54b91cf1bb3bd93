"""Bayesian estimation of wall thermal properties from in-situ
temperature and heat-flux time series.

The package infers the thermal resistance R, the areal heat capacity
rho*C and the initial mid-wall temperature tau0 of a solid wall by
combining a 1D heat-equation forward model with analytic marginalization
of the uncertain boundary temperatures, Laplace/MCMC posterior
approximation, and Kullback-Leibler scoring of experimental setups.
"""

from .core import (Campaign, Grid, InitialConditionKind, NoiseModel, PriorBox,
                   ThetaParams, TimeSeries, WallGeometry, ensure_valid,
                   read_campaign_csv, validate_campaign, write_campaign_csv)
from .design import (DesignSetup, GainResult, detect_cycles, gain_vs_duration,
                     information_gain, rank_cycles)
from .forward import (FluxOperators, PropagatorSequences, SpatialOperator,
                      assemble_flux_operators, initial_profile,
                      propagator_sequences, solve_forward, step)
from .inference import (GaussianApprox, McmcChain, McmcConfig, aic, hessian_fd,
                        laplace, latin_hypercube_starts, maximize,
                        rw_metropolis, summarize_marginals)
from .likelihood import (BoundaryPrior, MarginalWorkspace,
                         log_likelihood_deterministic, log_marginal_likelihood,
                         log_posterior, log_prior, marginal_workspace)
from .pipeline import InferenceSetup, boundary_prior, fit_laplace, fit_map, grid_for
from .preprocess import (PreprocessConfig, SmoothingFit, WhitenessReport, acf,
                         average_campaign, estimate_noise_sd, ljung_box,
                         moving_average, select_lag, select_smoothing,
                         smoothing_spline)
from .robustness import SubsampleConfig, VariabilitySummary, run_study, subsample_once
from .synthetic import (ScenarioSpec, default_scenario, oracle_marginal_gaussian,
                        oracle_marginal_mc, simulate_campaign)

__version__ = "0.1.0"
