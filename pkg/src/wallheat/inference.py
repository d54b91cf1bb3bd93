"""Point estimation, Laplace approximation, MCMC sampling and AIC.

All optimizers and finite-difference stencils work on parameters rescaled
to the unit box (the heat capacity is five orders of magnitude larger than
the resistance, so raw finite differences would be ill-conditioned); the
prior box acts as a hard constraint.  Under the uniform box prior the MAP
coincides with the box-constrained MLE, so fitting and posterior-mode
finding share :func:`maximize`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from ._threads import single_thread_blas
from .core import PriorBox, ThetaParams

__all__ = [
    "GaussianApprox",
    "McmcConfig",
    "McmcChain",
    "OptimizationError",
    "McmcError",
    "maximize",
    "hessian_fd",
    "laplace",
    "rw_metropolis",
    "aic",
    "summarize_marginals",
    "latin_hypercube_starts",
    "ParamSummary",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("R", "rhoC", "tau0", "tau1")


class OptimizationError(RuntimeError):
    pass


class McmcError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianApprox:
    """Laplace approximation: MAP point, posterior covariance, mode height."""

    map_point: ThetaParams
    covariance: np.ndarray
    log_posterior_at_map: float

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        d = self.map_point.dim
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
        np.linalg.cholesky(cov)  # raises if not positive definite

    @property
    def dim(self) -> int:
        return self.map_point.dim

    def sds(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        names = PARAM_NAMES[: self.dim]
        return {
            "map": dict(zip(names, self.map_point.to_array().tolist())),
            "covariance": np.asarray(self.covariance).ravel().tolist(),
            "log_posterior_at_map": self.log_posterior_at_map,
        }


def _as_objective_on_unit_box(objective: Callable[[ThetaParams], float],
                              box: PriorBox, dim: int):
    lo = box.lowers(dim)
    w = box.widths(dim)

    def unscale(u: np.ndarray) -> ThetaParams:
        return ThetaParams.from_array(lo + w * np.clip(u, 0.0, 1.0))

    def f(u: np.ndarray) -> float:
        val = objective(unscale(u))
        return float(val)

    return f, unscale


def _value_and_grad(f, u: np.ndarray, step: float = 1e-6):
    """Objective value plus central-difference gradient on the unit box;
    stencil points are clamped into [0, 1] and the divisor adjusted."""
    val = f(u)
    grad = np.empty_like(u)
    for i in range(u.size):
        hi = min(u[i] + step, 1.0)
        lo = max(u[i] - step, 0.0)
        up, dn = u.copy(), u.copy()
        up[i], dn[i] = hi, lo
        grad[i] = (f(up) - f(dn)) / (hi - lo)
    return val, grad


def latin_hypercube_starts(box: PriorBox, n: int, seed: int = 0,
                           dim: int = 3) -> list[ThetaParams]:
    """n Latin-hypercube start points spread over the prior box."""
    sampler = qmc.LatinHypercube(d=dim, seed=seed)
    u = sampler.random(n)
    lo, w = box.lowers(dim), box.widths(dim)
    return [ThetaParams.from_array(lo + w * row) for row in u]


def maximize(objective: Callable[[ThetaParams], float], box: PriorBox,
             starts: Sequence[ThetaParams], max_iter: int = 200,
             ) -> tuple[ThetaParams, float]:
    """Multi-start quasi-Newton ascent of the objective over the box.

    Numerical gradients are central differences (relative step 1e-6 per
    coordinate after rescaling to the unit box).  Returns the best local
    optimum; deterministic tie-break by highest value then lexicographic
    parameter order.  Raises with per-start diagnostics if every start
    fails.
    """
    if not starts:
        raise ValueError("need at least one start point")
    dim = starts[0].dim
    for s in starts:
        if s.dim != dim:
            raise ValueError("all starts must have the same dimension")
        if not box.contains(s):
            raise ValueError(f"start {s} lies outside the prior box")

    f, unscale = _as_objective_on_unit_box(objective, box, dim)
    lo, w = box.lowers(dim), box.widths(dim)

    def guarded(u: np.ndarray):
        # L-BFGS-B cannot digest non-finite objective values; map failures
        # to a large penalty so the line search backs off instead.
        try:
            val, grad = _value_and_grad(f, u)
        except Exception:
            return 1e30, np.zeros_like(u)
        if not np.isfinite(val):
            return 1e30, np.zeros_like(u)
        return -val, -grad

    candidates: list[tuple[float, tuple, ThetaParams]] = []
    failures: list[str] = []
    for s in starts:
        u0 = (s.to_array() - lo) / w
        val0 = f(u0)
        if not np.isfinite(val0):
            failures.append(f"start {s}: objective not finite ({val0})")
            continue
        try:
            res = minimize(guarded, u0, jac=True, method="L-BFGS-B",
                           bounds=[(0.0, 1.0)] * dim,
                           options={"maxiter": max_iter, "ftol": 1e-12,
                                    "gtol": 1e-9})
        except Exception as exc:  # pragma: no cover - scipy internal failure
            failures.append(f"start {s}: {exc}")
            continue
        theta = unscale(res.x)
        value = float(-res.fun)
        if not np.isfinite(value):
            failures.append(f"start {s}: optimizer returned non-finite value")
            continue
        candidates.append((value, tuple(theta.to_array()), theta))

    if not candidates:
        raise OptimizationError("all starts failed:\n" + "\n".join(failures))
    candidates.sort(key=lambda c: (-c[0], c[1]))
    best = candidates[0]
    return best[2], best[0]


def hessian_fd(objective: Callable[[ThetaParams], float], theta_hat: ThetaParams,
               box: PriorBox, rel_step: float = 1e-3) -> np.ndarray:
    """Central second differences of the objective at theta_hat.

    Differencing happens on the unit-box rescaled parameters and the result
    is mapped back to the original parameterization; the matrix is
    symmetrized as (H + H')/2 (exact symmetry by construction here, since
    each off-diagonal stencil is evaluated once).
    """
    dim = theta_hat.dim
    lo, w = box.lowers(dim), box.widths(dim)
    u0 = (theta_hat.to_array() - lo) / w
    if np.any(u0 < 2 * rel_step) or np.any(u0 > 1 - 2 * rel_step):
        raise OptimizationError(
            f"theta_hat {theta_hat} is within 2 steps of the box boundary; "
            "widen the box or use an interior maximum")

    f, _ = _as_objective_on_unit_box(objective, box, dim)
    h = rel_step
    f0 = f(u0)
    hess = np.empty((dim, dim))
    for i in range(dim):
        up, dn = u0.copy(), u0.copy()
        up[i] += h
        dn[i] -= h
        hess[i, i] = (f(up) - 2.0 * f0 + f(dn)) / h**2
    for i in range(dim):
        for j in range(i + 1, dim):
            pp, pm, mp, mm = u0.copy(), u0.copy(), u0.copy(), u0.copy()
            pp[[i, j]] += h
            mm[[i, j]] -= h
            pm[i] += h
            pm[j] -= h
            mp[i] -= h
            mp[j] += h
            hess[i, j] = hess[j, i] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h**2)
    hess = 0.5 * (hess + hess.T)
    return hess / np.outer(w, w)


def laplace(log_post: Callable[[ThetaParams], float], box: PriorBox,
            starts: Sequence[ThetaParams], rel_step: float = 1e-3,
            max_iter: int = 200) -> GaussianApprox:
    """Gaussian posterior approximation at the MAP.

    The covariance is the inverse of the negative log-posterior Hessian,
    obtained by a Cholesky solve (never an explicit inverse of quadratic
    forms downstream).
    """
    theta_hat, value = maximize(log_post, box, starts, max_iter=max_iter)
    hess = hessian_fd(log_post, theta_hat, box, rel_step=rel_step)
    neg_hess = -hess
    try:
        factor = cho_factor(neg_hess)
    except np.linalg.LinAlgError as exc:
        raise OptimizationError(
            "MAP is not a proper interior maximum (negative Hessian not "
            f"positive definite at {theta_hat})") from exc
    cov = cho_solve(factor, np.eye(theta_hat.dim))
    cov = 0.5 * (cov + cov.T)
    return GaussianApprox(map_point=theta_hat, covariance=cov,
                          log_posterior_at_map=value)


@dataclass(frozen=True)
class McmcConfig:
    """Random-walk Metropolis-Hastings settings; defaults follow the
    101,000 / 1,000 / keep-every-20th recipe.

    ``pilot_adapt`` switches on a pre-run scale tuning phase (rounds of 500
    iterations, scales halved/doubled until acceptance lands in 20-40%)
    that is frozen before the recorded chain starts; off by default so the
    recorded algorithm is the plain random-walk sampler.
    """

    n_iter: int = 101_000
    burn_in: int = 1_000
    thin: int = 20
    proposal_scales: tuple[float, ...] | None = None  # per-parameter sds
    proposal_frac: float = 0.02  # of box width, when scales not given
    pilot_adapt: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("bad MCMC sizes")
        if self.burn_in >= self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")

    def scales(self, box: PriorBox, dim: int) -> np.ndarray:
        if self.proposal_scales is not None:
            s = np.asarray(self.proposal_scales, dtype=float)
            if s.shape != (dim,) or np.any(s <= 0):
                raise ValueError("proposal_scales must be positive, one per parameter")
            return s
        return self.proposal_frac * box.widths(dim)


@dataclass(frozen=True)
class McmcChain:
    """Kept posterior samples (post burn-in, post thinning)."""

    samples: np.ndarray       # (n_kept, dim)
    log_posts: np.ndarray     # (n_kept,)
    acceptance_rate: float
    config: McmcConfig
    param_names: tuple[str, ...]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def thetas(self) -> list[ThetaParams]:
        return [ThetaParams.from_array(row) for row in self.samples]


def rw_metropolis(log_post: Callable[[ThetaParams], float], theta0: ThetaParams,
                  box: PriorBox, config: McmcConfig | None = None) -> McmcChain:
    """Random-walk Metropolis-Hastings with diagonal Gaussian proposals.

    Implements the textbook accept rule min(1, exp(b - a)) > U(0, 1) with a
    symmetric proposal, then applies burn-in and thinning.  Seeded
    explicitly; identical seeds give identical chains.  Raises if the first
    1,000 iterations accept nothing (proposal scales far too large).
    """
    cfg = config or McmcConfig()
    dim = theta0.dim
    x = theta0.to_array()
    current = float(log_post(theta0))
    if not np.isfinite(current):
        raise ValueError(f"theta0 must have finite log posterior, got {current}")
    scales = cfg.scales(box, dim)
    rng = np.random.default_rng(cfg.seed)
    if cfg.pilot_adapt:
        scales = _pilot_adapt(log_post, x, current, scales, rng)

    kept: list[np.ndarray] = []
    kept_lp: list[float] = []
    n_accept = 0
    check_at = min(1_000, cfg.n_iter)
    with single_thread_blas():
        for it in range(1, cfg.n_iter + 1):
            prop = x + scales * rng.standard_normal(dim)
            try:
                prop_theta = ThetaParams.from_array(prop)
                b = float(log_post(prop_theta))
            except ValueError:
                b = -np.inf  # unphysical proposal (non-positive R or rho_c)
            ratio = np.exp(min(0.0, b - current))
            if ratio > rng.uniform():
                x = prop
                current = b
                n_accept += 1
            if it == check_at and n_accept == 0:
                raise McmcError(
                    f"no proposal accepted in the first {check_at} iterations; "
                    f"reduce the proposal scales (currently {scales})")
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                kept.append(x.copy())
                kept_lp.append(current)

    return McmcChain(samples=np.asarray(kept), log_posts=np.asarray(kept_lp),
                     acceptance_rate=n_accept / cfg.n_iter, config=cfg,
                     param_names=PARAM_NAMES[:dim])


def _pilot_adapt(log_post, x0: np.ndarray, lp0: float, scales: np.ndarray,
                 rng: np.random.Generator, rounds: int = 20,
                 pilot_iters: int = 500) -> np.ndarray:
    """Halve/double the proposal scales until a 500-iteration pilot lands
    in the 20-40% acceptance band; the result is frozen for the real run."""
    scales = scales.copy()
    for _ in range(rounds):
        x, lp = x0.copy(), lp0
        n_accept = 0
        for _ in range(pilot_iters):
            prop = x + scales * rng.standard_normal(x.size)
            try:
                b = float(log_post(ThetaParams.from_array(prop)))
            except ValueError:
                b = -np.inf
            if np.exp(min(0.0, b - lp)) > rng.uniform():
                x, lp = prop, b
                n_accept += 1
        rate = n_accept / pilot_iters
        if rate < 0.20:
            scales *= 0.5
        elif rate > 0.40:
            scales *= 2.0
        else:
            break
    log.info("pilot adaptation frozen at scales %s", scales)
    return scales


def aic(max_log_lik: float, n_params: int) -> float:
    """Akaike information criterion: 2p - 2 max log-likelihood."""
    return 2.0 * n_params - 2.0 * max_log_lik


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    q025: float
    median: float
    q975: float
    hist_edges: np.ndarray
    hist_density: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "q2.5": self.q025,
                "median": self.median, "q97.5": self.q975,
                "hist_edges": self.hist_edges.tolist(),
                "hist_density": self.hist_density.tolist()}


def summarize_marginals(result: McmcChain | GaussianApprox,
                        bins: int = 50) -> dict[str, ParamSummary]:
    """Per-parameter marginal summaries; analytic for a Gaussian
    approximation, empirical for a chain."""
    out: dict[str, ParamSummary] = {}
    if isinstance(result, GaussianApprox):
        means = result.map_point.to_array()
        sds = result.sds()
        names = PARAM_NAMES[: result.dim]
        for name, m, s in zip(names, means, sds):
            edges = np.linspace(m - 4 * s, m + 4 * s, bins + 1) if s > 0 \
                else np.linspace(m - 1, m + 1, bins + 1)
            centers = 0.5 * (edges[:-1] + edges[1:])
            dens = norm.pdf(centers, loc=m, scale=s) if s > 0 else np.zeros(bins)
            q = norm.ppf([0.025, 0.5, 0.975], loc=m, scale=s) if s > 0 \
                else np.array([m, m, m])
            out[name] = ParamSummary(float(m), float(s), float(q[0]), float(q[1]),
                                     float(q[2]), edges, dens)
        return out
    if len(result) == 0:
        raise ValueError("empty chain")
    for j, name in enumerate(result.param_names):
        col = result.samples[:, j]
        q = np.percentile(col, [2.5, 50.0, 97.5])
        dens, edges = np.histogram(col, bins=bins, density=True)
        sd = float(np.std(col, ddof=1)) if len(col) > 1 else 0.0
        out[name] = ParamSummary(float(np.mean(col)), sd, float(q[0]), float(q[1]),
                                 float(q[2]), edges, dens)
    return out
