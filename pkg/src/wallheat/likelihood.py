"""Log-likelihoods and log-posterior for the wall parameter vector.

Three likelihoods are exposed:

* :func:`log_likelihood_deterministic` treats supplied boundary-temperature
  series as exact and scores only the flux misfit;
* :func:`log_marginal_likelihood` integrates the boundary temperatures out
  analytically against independent Gaussian priors N(mu, sigma_p^2 I)
  centred on smoothed measurements;
* :func:`log_posterior` adds the uniform box prior to either.

All covariances are scalar multiples of the identity, so every quadratic
form x' Sigma^-1 y reduces to a dot product divided by sigma^2; the dense
algebra is confined to the two (n_obs x n_obs) precision factorizations of
the marginalization.  Normalization constants are kept exact (with n_obs,
the number of samples per series, in the exponent) so the values are proper
log-densities and AIC / information-gain comparisons are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .core import (Campaign, Grid, InitialConditionKind, NoiseModel, PriorBox,
                   ThetaParams, TimeSeries, WallGeometry)
from .forward import (assemble_flux_operators, initial_profile,
                      propagator_sequences, solve_forward)

__all__ = [
    "BoundaryPrior",
    "MarginalWorkspace",
    "NumericalError",
    "log_likelihood_deterministic",
    "marginal_workspace",
    "log_marginal_likelihood",
    "log_prior",
    "log_posterior",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalError(RuntimeError):
    """A likelihood evaluation failed for numerical reasons (named theta)."""


@dataclass(frozen=True)
class BoundaryPrior:
    """Gaussian prior for the nuisance boundary temperatures: mean series
    from smoothing-spline fits, shared scalar sd ``sigma_temp_prior``."""

    mu_int: TimeSeries
    mu_ext: TimeSeries
    sigma_temp_prior: float

    def __post_init__(self) -> None:
        if not (self.sigma_temp_prior > 0):
            raise ValueError("sigma_temp_prior must be positive")
        if len(self.mu_int) != len(self.mu_ext):
            raise ValueError("mu_int and mu_ext must have equal length")

    def __len__(self) -> int:
        return len(self.mu_int)

    def slice(self, start: int, end: int) -> "BoundaryPrior":
        return BoundaryPrior(self.mu_int.slice(start, end),
                             self.mu_ext.slice(start, end),
                             self.sigma_temp_prior)


@dataclass(frozen=True)
class MarginalWorkspace:
    """Intermediate quantities of the analytic boundary marginalization."""

    lambda0_chol: np.ndarray   # upper Cholesky factor of Lambda0^-1
    lambda1_chol: np.ndarray   # upper Cholesky factor of Lambda1^-1
    u_term: float
    t_int_2: np.ndarray
    t_ext_1: np.ndarray
    log_det_lambda0: float
    log_det_lambda1: float

    def quad_lambda0(self, v: np.ndarray) -> float:
        """v' Lambda0 v via the factor of Lambda0^-1."""
        return float(v @ cho_solve((self.lambda0_chol, False), v))

    def quad_lambda1(self, v: np.ndarray) -> float:
        return float(v @ cho_solve((self.lambda1_chol, False), v))


def _check_alignment(campaign: Campaign, grid: Grid) -> int:
    n_obs = len(campaign)
    if n_obs != grid.n_times:
        raise ValueError(f"campaign length {n_obs} does not match grid "
                         f"n_steps+1 = {grid.n_times}")
    dt_s = campaign.dt_sample * 60.0
    if abs(dt_s - grid.dt) > 1e-9 * max(dt_s, grid.dt):
        raise ValueError(f"campaign cadence {dt_s} s does not match grid dt {grid.dt} s")
    return n_obs


def log_likelihood_deterministic(theta: ThetaParams, campaign_avg: Campaign,
                                 bc_int: TimeSeries, bc_ext: TimeSeries,
                                 noise: NoiseModel, geometry: WallGeometry,
                                 grid: Grid,
                                 ic: InitialConditionKind = InitialConditionKind.PIECEWISE_LINEAR,
                                 refine: int = 1,
                                 flux_sample: str = "point") -> float:
    """Gaussian flux log-likelihood with the boundary series taken as exact.

    With ``refine > 1`` the solver sub-steps between observations on
    linearly interpolated boundaries; the modeled flux at each observation
    time is then either the sub-step value at that time (``"point"``) or
    the mean over the preceding refine sub-steps (``"mean"``).
    """
    n_obs = _check_alignment(campaign_avg, grid)
    if flux_sample not in ("point", "mean"):
        raise ValueError(f"flux_sample must be 'point' or 'mean', got {flux_sample!r}")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    if len(bc_int) != n_obs or len(bc_ext) != n_obs:
        raise ValueError("boundary series must match the observation length")

    if refine == 1:
        f_int, f_ext = solve_forward(theta, geometry, grid,
                                     bc_int.values, bc_ext.values, ic)
    else:
        fine_grid = Grid(grid.m_cells, grid.dt / refine, grid.n_steps * refine)
        coarse_t = np.arange(grid.n_times)
        fine_t = np.arange(fine_grid.n_times) / refine
        ti = np.interp(fine_t, coarse_t, bc_int.values)
        te = np.interp(fine_t, coarse_t, bc_ext.values)
        fi, fe = solve_forward(theta, geometry, fine_grid, ti, te, ic)
        if flux_sample == "point":
            f_int, f_ext = fi[::refine], fe[::refine]
        else:
            f_int = _block_mean_with_head(fi, refine)
            f_ext = _block_mean_with_head(fe, refine)

    if not (np.isfinite(f_int).all() and np.isfinite(f_ext).all()):
        raise NumericalError(f"non-finite model flux at theta={theta}")

    si, se = noise.sigma_flux_int, noise.sigma_flux_ext
    res_int = campaign_avg.flux_int.values - f_int
    res_ext = campaign_avg.flux_ext.values - f_ext
    return (-n_obs * (LOG_2PI + np.log(si) + np.log(se))
            - 0.5 * float(res_int @ res_int) / si**2
            - 0.5 * float(res_ext @ res_ext) / se**2)


def _block_mean_with_head(fine: np.ndarray, refine: int) -> np.ndarray:
    """Observation 0 keeps the initial value; observation j >= 1 averages
    the refine sub-step fluxes in ((j-1)*dt, j*dt]."""
    out = np.empty(1 + (len(fine) - 1) // refine)
    out[0] = fine[0]
    out[1:] = fine[1:].reshape(-1, refine).mean(axis=1)
    return out


def _initial_vector(theta: ThetaParams, bprior: BoundaryPrior,
                    geometry: WallGeometry, grid: Grid, ic: InitialConditionKind,
                    t0_endpoints: tuple[float, float] | None) -> np.ndarray:
    """Initial interior profile; endpoint temperatures default to the
    smoothed prior means at t0, optionally overridden (e.g. raw first
    samples)."""
    if t0_endpoints is None:
        t0_endpoints = (float(bprior.mu_int.values[0]), float(bprior.mu_ext.values[0]))
    return initial_profile(ic, t0_endpoints[0], t0_endpoints[1], theta, geometry, grid)


def marginal_workspace(theta: ThetaParams, campaign_avg: Campaign,
                       bprior: BoundaryPrior, noise: NoiseModel,
                       geometry: WallGeometry, grid: Grid,
                       ic: InitialConditionKind = InitialConditionKind.PIECEWISE_LINEAR,
                       t0_endpoints: tuple[float, float] | None = None,
                       ) -> MarginalWorkspace:
    """Assemble the marginalization quantities for one theta.

    The boundary temperatures are integrated out in two stages (internal
    first, then external); Lambda1^-1 is the Schur complement left after
    the first integration.  Log-determinants come from Cholesky factors of
    the precision matrices; Lambda0/Lambda1 are only ever applied through
    factored solves.

    The integration variables are centred at the prior means, so U and the
    two linear-term vectors are built from the deterministic-model residual
    Q - F(mu) instead of carrying mu'mu/sigma_p^2-sized terms.  The
    assembled log-density is algebraically identical to the uncentred
    expansion but stays accurate as sigma_temp_prior -> 0, where the raw
    grouping cancels catastrophically.
    """
    n_obs = _check_alignment(campaign_avg, grid)
    if len(bprior) != n_obs:
        raise ValueError("boundary prior length does not match the observations")

    si2 = noise.sigma_flux_int**2
    se2 = noise.sigma_flux_ext**2
    sp2 = noise.sigma_temp_prior**2

    seqs = propagator_sequences(theta, geometry, grid)
    ops = assemble_flux_operators(seqs, theta, geometry, grid, n_obs=grid.n_steps)

    t0_vec = _initial_vector(theta, bprior, geometry, grid, ic, t0_endpoints)
    mu_int = bprior.mu_int.values
    mu_ext = bprior.mu_ext.values

    # residuals of the plug-in model at the prior means
    r_int = campaign_avg.flux_int.values - ops.flux_int(t0_vec, mu_int, mu_ext)
    r_ext = campaign_avg.flux_ext.values - ops.flux_ext(t0_vec, mu_int, mu_ext)

    u_term = float(r_int @ r_int) / si2 + float(r_ext @ r_ext) / se2

    diag = np.diag_indices(n_obs)
    lam0_inv = ops.h_int.T @ ops.h_int / si2 + ops.g_int.T @ ops.g_int / se2
    lam0_inv[diag] += 1.0 / sp2
    try:
        c0 = cholesky(lam0_inv, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"marginal covariance not positive definite at theta={theta} "
            "(internal stage)") from exc
    log_det_lambda0 = -2.0 * float(np.sum(np.log(np.diag(c0))))

    t_int_2 = ops.h_int.T @ r_int / si2 + ops.g_int.T @ r_ext / se2

    # W' = H_int' Sigma_int^-1 H_ext + G_int' Sigma_ext^-1 G_ext
    w_t = ops.h_int.T @ ops.h_ext / si2 + ops.g_int.T @ ops.g_ext / se2
    lam0_wt = cho_solve((c0, False), w_t, check_finite=False)  # Lambda0 W'
    lam1_inv = (ops.h_ext.T @ ops.h_ext / si2 + ops.g_ext.T @ ops.g_ext / se2
                - w_t.T @ lam0_wt)
    lam1_inv[diag] += 1.0 / sp2
    try:
        c1 = cholesky(lam1_inv, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"marginal covariance not positive definite at theta={theta} "
            "(external stage)") from exc
    log_det_lambda1 = -2.0 * float(np.sum(np.log(np.diag(c1))))

    t_ext_1 = (ops.h_ext.T @ r_int / si2 + ops.g_ext.T @ r_ext / se2
               - lam0_wt.T @ t_int_2)

    return MarginalWorkspace(lambda0_chol=c0, lambda1_chol=c1, u_term=u_term,
                             t_int_2=t_int_2, t_ext_1=t_ext_1,
                             log_det_lambda0=log_det_lambda0,
                             log_det_lambda1=log_det_lambda1)


def log_marginal_likelihood(theta: ThetaParams, campaign_avg: Campaign,
                            bprior: BoundaryPrior, noise: NoiseModel,
                            geometry: WallGeometry, grid: Grid,
                            ic: InitialConditionKind = InitialConditionKind.PIECEWISE_LINEAR,
                            t0_endpoints: tuple[float, float] | None = None,
                            ) -> float:
    """Log-density of both flux records with boundary temperatures
    integrated out; exact constants included."""
    ws = marginal_workspace(theta, campaign_avg, bprior, noise, geometry, grid,
                            ic, t0_endpoints)
    n_obs = len(campaign_avg)
    const = -n_obs * (LOG_2PI + np.log(noise.sigma_flux_int)
                      + np.log(noise.sigma_flux_ext)
                      + 2.0 * np.log(noise.sigma_temp_prior))
    value = (const
             + 0.5 * ws.log_det_lambda0 + 0.5 * ws.log_det_lambda1
             - 0.5 * ws.u_term
             + 0.5 * ws.quad_lambda0(ws.t_int_2)
             + 0.5 * ws.quad_lambda1(ws.t_ext_1))
    if not np.isfinite(value):
        raise NumericalError(f"non-finite marginal log-likelihood at theta={theta}")
    return value


def log_prior(theta: ThetaParams, box: PriorBox) -> float:
    """-log(volume) inside the closed box, -inf outside."""
    if not box.contains(theta):
        return -np.inf
    return -float(np.log(box.volume(theta.dim)))


def log_posterior(theta: ThetaParams, box: PriorBox, loglik_fn) -> float:
    """log-likelihood plus box log-prior; the likelihood is skipped entirely
    outside the box so -inf propagates cheaply."""
    lp = log_prior(theta, box)
    if lp == -np.inf:
        return -np.inf
    return float(loglik_fn(theta)) + lp
