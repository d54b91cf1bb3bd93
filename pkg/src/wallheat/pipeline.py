"""Shared wiring between the data model, likelihoods and the inference
front ends: spline-smoothed boundary priors, likelihood factories, MAP and
Laplace runners, and per-window inference for the design module."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ._threads import single_thread_blas
from .core import (Campaign, Grid, InitialConditionKind, NoiseModel, PriorBox,
                   ThetaParams, TimeSeries, WallGeometry, ensure_valid)
from .design import DesignSetup
from .inference import (GaussianApprox, laplace, latin_hypercube_starts,
                        maximize)
from .likelihood import (BoundaryPrior, log_likelihood_deterministic,
                         log_marginal_likelihood, log_posterior)
from .preprocess import PreprocessConfig, estimate_noise_sd, ljung_box, select_smoothing

__all__ = [
    "InferenceSetup",
    "grid_for",
    "boundary_prior",
    "smooth_series",
    "noise_report",
    "make_log_likelihood",
    "make_log_posterior",
    "fit_map",
    "fit_laplace",
    "window_inference",
]


@dataclass(frozen=True)
class InferenceSetup:
    """Everything the likelihood-based commands need besides the data."""

    geometry: WallGeometry = WallGeometry()
    m_cells: int = 60
    priors: PriorBox = PriorBox()
    noise: NoiseModel = NoiseModel()
    ic_kind: InitialConditionKind = InitialConditionKind.PIECEWISE_LINEAR
    likelihood: str = "marginal"        # or "deterministic"
    bc_source: str = "smoothed"         # deterministic path: or "observed"
    ic_endpoints: str = "smoothed"      # T0 endpoints: or "observed"
    n_starts: int = 8
    seed: int = 0
    max_iter: int = 200
    hessian_rel_step: float = 1e-3
    preprocess: PreprocessConfig = PreprocessConfig()

    def __post_init__(self) -> None:
        if self.likelihood not in ("marginal", "deterministic"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if self.bc_source not in ("smoothed", "observed"):
            raise ValueError(f"unknown bc_source {self.bc_source!r}")
        if self.ic_endpoints not in ("smoothed", "observed"):
            raise ValueError(f"unknown ic_endpoints {self.ic_endpoints!r}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


def grid_for(campaign: Campaign, m_cells: int) -> Grid:
    """Solver grid matching the campaign cadence (minutes to seconds)."""
    return Grid(m_cells=m_cells, dt=campaign.dt_sample * 60.0,
                n_steps=len(campaign) - 1)


def smooth_series(series: TimeSeries, cfg: PreprocessConfig):
    """Autocorrelation-selected smoothing-spline fit of one series."""
    return select_smoothing(series, cfg.lambda_grid, cfg.acf_lags)


def boundary_prior(campaign_avg: Campaign, setup: InferenceSetup) -> BoundaryPrior:
    """Smoothing-spline means for both boundary-temperature series plus the
    configured prior sd."""
    _, fit_int = smooth_series(campaign_avg.temp_int, setup.preprocess)
    _, fit_ext = smooth_series(campaign_avg.temp_ext, setup.preprocess)
    return BoundaryPrior(fit_int.fitted, fit_ext.fitted,
                         setup.noise.sigma_temp_prior)


def noise_report(campaign_avg: Campaign, cfg: PreprocessConfig) -> dict:
    """Per-series smoothing and residual diagnostics for the preprocess
    command: selected penalty, zero-mean noise sd, Ljung-Box p-value."""
    report: dict = {"series": {}}
    for name, series in campaign_avg.series().items():
        lam, fit = select_smoothing(series, cfg.lambda_grid, cfg.acf_lags)
        resid = fit.residuals.values
        entry = {
            "lambda": lam,
            "sigma": estimate_noise_sd(resid),
        }
        if len(resid) > cfg.ljung_box_lags and float(np.var(resid)) > 0:
            lb = ljung_box(resid, cfg.ljung_box_lags)
            entry["ljung_box_q"] = lb.q_statistic
            entry["ljung_box_p"] = lb.p_value
        report["series"][name] = entry
    return report


def _ic_endpoints(campaign_avg: Campaign, bprior: BoundaryPrior,
                  setup: InferenceSetup) -> tuple[float, float] | None:
    if setup.ic_endpoints == "observed":
        return (float(campaign_avg.temp_int.values[0]),
                float(campaign_avg.temp_ext.values[0]))
    return None  # default: smoothed means mu[0]


def make_log_likelihood(campaign_avg: Campaign, setup: InferenceSetup,
                        bprior: BoundaryPrior | None = None,
                        ) -> Callable[[ThetaParams], float]:
    """Bind the configured likelihood to one averaged campaign."""
    ensure_valid(campaign_avg)
    grid = grid_for(campaign_avg, setup.m_cells)
    if setup.likelihood == "marginal":
        bp = bprior if bprior is not None else boundary_prior(campaign_avg, setup)
        endpoints = _ic_endpoints(campaign_avg, bp, setup)

        def loglik(theta: ThetaParams) -> float:
            return log_marginal_likelihood(theta, campaign_avg, bp, setup.noise,
                                           setup.geometry, grid, setup.ic_kind,
                                           t0_endpoints=endpoints)

        return loglik

    if setup.bc_source == "smoothed":
        bp = bprior if bprior is not None else boundary_prior(campaign_avg, setup)
        bc_int, bc_ext = bp.mu_int, bp.mu_ext
    else:
        bc_int, bc_ext = campaign_avg.temp_int, campaign_avg.temp_ext

    def loglik_det(theta: ThetaParams) -> float:
        return log_likelihood_deterministic(theta, campaign_avg, bc_int, bc_ext,
                                            setup.noise, setup.geometry, grid,
                                            setup.ic_kind)

    return loglik_det


def make_log_posterior(campaign_avg: Campaign, setup: InferenceSetup,
                       bprior: BoundaryPrior | None = None,
                       ) -> Callable[[ThetaParams], float]:
    loglik = make_log_likelihood(campaign_avg, setup, bprior)

    def logpost(theta: ThetaParams) -> float:
        return log_posterior(theta, setup.priors, loglik)

    return logpost


def _starts(setup: InferenceSetup, dim: int = 3) -> list[ThetaParams]:
    starts = [setup.priors.center(dim)]
    if setup.n_starts > 1:
        starts += latin_hypercube_starts(setup.priors, setup.n_starts - 1,
                                         seed=setup.seed, dim=dim)
    return starts


def fit_map(campaign_avg: Campaign, setup: InferenceSetup,
            bprior: BoundaryPrior | None = None,
            ic_kind: InitialConditionKind | None = None,
            ) -> tuple[ThetaParams, float]:
    """MAP (equivalently the box-constrained MLE) of the configured model."""
    eff = setup if ic_kind is None else replace(setup, ic_kind=ic_kind)
    dim = 4 if eff.ic_kind is InitialConditionKind.CUBIC else 3
    logpost = make_log_posterior(campaign_avg, eff, bprior)
    with single_thread_blas():
        return maximize(logpost, eff.priors, _starts(eff, dim), max_iter=eff.max_iter)


def fit_laplace(campaign_avg: Campaign, setup: InferenceSetup,
                bprior: BoundaryPrior | None = None) -> GaussianApprox:
    dim = 4 if setup.ic_kind is InitialConditionKind.CUBIC else 3
    logpost = make_log_posterior(campaign_avg, setup, bprior)
    with single_thread_blas():
        return laplace(logpost, setup.priors, _starts(setup, dim),
                       rel_step=setup.hessian_rel_step, max_iter=setup.max_iter)


def window_inference(campaign_avg: Campaign, setup: InferenceSetup,
                     bprior: BoundaryPrior | None = None,
                     ) -> Callable[[DesignSetup], GaussianApprox]:
    """Per-window MAP + Laplace runner for the design sweeps.

    The boundary-prior means are fitted once on the whole record and
    sliced per window; tau0 is re-inferred inside each window because the
    initial profile is window-local by construction.
    """
    ensure_valid(campaign_avg)
    if setup.likelihood == "marginal" and bprior is None:
        bprior = boundary_prior(campaign_avg, setup)

    def infer(window: DesignSetup) -> GaussianApprox:
        if window.end > len(campaign_avg):
            raise ValueError(f"window {window} exceeds campaign length")
        sub = campaign_avg.slice(window.start, window.end)
        sub_prior = bprior.slice(window.start, window.end) if bprior is not None else None
        return fit_laplace(sub, setup, sub_prior)

    return infer
