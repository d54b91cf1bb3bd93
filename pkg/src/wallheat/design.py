"""Information-gain scoring of experimental setups.

The utility of a measurement window is the Kullback-Leibler divergence from
the uniform box prior to the posterior, evaluated under the Laplace
approximation:

    D_KL = log(V_box) - (1/2) log((2 pi e)^d |Sigma|) - c_trunc

i.e. prior log-volume minus the Gaussian differential entropy, with a
truncation correction for posterior mass outside the box.  ``c_trunc`` uses
a product-of-marginals approximation (per-coordinate Gaussian tails) and is
reported separately; it vanishes when the MAP sits several sds inside the
box.  A Monte-Carlo estimator of the same divergence is included for
validation only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .core import PriorBox, TimeSeries
from .inference import GaussianApprox

__all__ = [
    "DesignSetup",
    "GainResult",
    "InfoGainBreakdown",
    "information_gain",
    "information_gain_breakdown",
    "information_gain_mc",
    "gain_vs_duration",
    "detect_cycles",
    "rank_cycles",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignSetup:
    """A half-open index window [start, end) into an averaged campaign."""

    start: int
    end: int
    label: str = ""

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"need 0 <= start < end, got [{self.start}, {self.end})")

    @property
    def n_samples(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class GainResult:
    setup: DesignSetup
    d_kl: float  # nats
    laplace: GaussianApprox
    c_trunc: float = 0.0

    def __post_init__(self) -> None:
        if self.d_kl < 0:
            raise ValueError("information gain must be non-negative")


@dataclass(frozen=True)
class InfoGainBreakdown:
    log_volume: float
    gaussian_entropy: float
    c_trunc: float

    @property
    def d_kl(self) -> float:
        return max(0.0, self.log_volume - self.gaussian_entropy - self.c_trunc)


def information_gain_breakdown(approx: GaussianApprox, box: PriorBox,
                               ) -> InfoGainBreakdown:
    d = approx.dim
    cov = np.asarray(approx.covariance, dtype=float)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("posterior covariance must have positive determinant")
    entropy = 0.5 * (d * np.log(2.0 * np.pi * np.e) + logdet)

    # per-coordinate truncated-normal entropy correction:
    # c_j = log Z_j + (alpha phi(alpha) - beta phi(beta)) / (2 Z_j)
    m = approx.map_point.to_array()
    s = approx.sds()
    lo, hi = box.lowers(d), box.uppers(d)
    alpha = (lo - m) / s
    beta = (hi - m) / s
    z = norm.cdf(beta) - norm.cdf(alpha)
    if np.any(z <= 0):
        raise ValueError("posterior mass inside the box underflows; MAP is "
                         "far outside the prior box")
    c_trunc = float(np.sum(np.log(z)
                           + (alpha * norm.pdf(alpha) - beta * norm.pdf(beta))
                           / (2.0 * z)))
    return InfoGainBreakdown(log_volume=float(np.log(box.volume(d))),
                             gaussian_entropy=float(entropy), c_trunc=c_trunc)


def information_gain(approx: GaussianApprox, box: PriorBox) -> float:
    """KL divergence (nats) from the uniform box prior to the Laplace
    posterior; clamped at zero (the exact divergence is non-negative)."""
    return information_gain_breakdown(approx, box).d_kl


def information_gain_mc(post_logpdf: Callable[[np.ndarray], float],
                        post_sampler: Callable[[np.random.Generator, int], np.ndarray],
                        box: PriorBox, n_draws: int = 100_000, seed: int = 0,
                        dim: int = 3) -> float:
    """Monte-Carlo estimate of E_post[log post - log prior].

    ``post_sampler(rng, n)`` must return draws from the posterior (shape
    (n, dim)) and ``post_logpdf`` its normalized log-density; used only to
    validate the closed form.
    """
    rng = np.random.default_rng(seed)
    draws = post_sampler(rng, n_draws)
    log_prior = -np.log(box.volume(dim))
    vals = np.fromiter((post_logpdf(x) for x in draws), dtype=float, count=len(draws))
    return float(np.mean(vals) - log_prior)


def truncated_gaussian_mc_gain(approx: GaussianApprox, box: PriorBox,
                               n_draws: int = 100_000, seed: int = 0) -> float:
    """MC information gain for the box-truncated Laplace posterior.

    Rejection-samples the Gaussian against the box; the acceptance fraction
    estimates the box mass that normalizes the truncated density.
    """
    d = approx.dim
    rng = np.random.default_rng(seed)
    m = approx.map_point.to_array()
    cov = np.asarray(approx.covariance)
    chol = np.linalg.cholesky(cov)
    lo, hi = box.lowers(d), box.uppers(d)

    kept = []
    total = 0
    batch = max(n_draws, 1000)
    while sum(len(k) for k in kept) < n_draws:
        z = rng.standard_normal((batch, d))
        x = m + z @ chol.T
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        kept.append(x[inside])
        total += batch
        if total > 100 * n_draws:
            raise RuntimeError("box mass too small for rejection sampling")
    draws = np.concatenate(kept)[:n_draws]
    z_mass = sum(len(k) for k in kept) / total

    sign, logdet = np.linalg.slogdet(cov)
    resid = draws - m
    sol = np.linalg.solve(cov, resid.T).T
    log_gauss = (-0.5 * np.einsum("ij,ij->i", resid, sol)
                 - 0.5 * (d * np.log(2 * np.pi) + logdet))
    log_post = log_gauss - np.log(z_mass)
    return float(np.mean(log_post) + np.log(box.volume(d)))


WindowInference = Callable[[DesignSetup], GaussianApprox]


def gain_vs_duration(checkpoints: Sequence[int], infer: WindowInference,
                     box: PriorBox, min_window: int = 100,
                     ) -> list[GainResult]:
    """Information gain of the nested windows [0, c) for each checkpoint.

    ``infer`` runs MAP + Laplace on one window (the CLI wires in the full
    marginal-likelihood pipeline).  Failed checkpoints are logged and
    skipped rather than aborting the sweep.
    """
    cps = list(checkpoints)
    if any(c2 <= c1 for c1, c2 in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    results: list[GainResult] = []
    for c in cps:
        if c < min_window:
            raise ValueError(f"checkpoint {c} below the minimum window {min_window}")
        setup = DesignSetup(0, int(c), label=f"first-{c}")
        try:
            approx = infer(setup)
            bd = information_gain_breakdown(approx, box)
            results.append(GainResult(setup, bd.d_kl, approx, bd.c_trunc))
        except Exception as exc:
            log.warning("checkpoint %s failed: %s", c, exc)
    return results


def detect_cycles(temp_ext_smoothed: TimeSeries, min_separation_min: float,
                  min_prominence: float) -> list[DesignSetup]:
    """Partition the record at the local minima of the smoothed external
    temperature; windows tile the series, partial lead/tail windows are
    labeled as such.  Falls back to one whole-series window when no
    qualifying minimum exists."""
    from scipy.signal import find_peaks

    vals = temp_ext_smoothed.values
    n = len(vals)
    distance = max(1, int(round(min_separation_min / temp_ext_smoothed.dt_sample)))
    minima, _ = find_peaks(-vals, distance=distance, prominence=min_prominence)
    if minima.size == 0:
        return [DesignSetup(0, n, label="full-series")]

    edges = [int(i) for i in minima]
    windows: list[DesignSetup] = []
    k = 0
    if edges[0] > 0:
        windows.append(DesignSetup(0, edges[0], label="lead-partial"))
    for s, e in zip(edges, edges[1:]):
        k += 1
        windows.append(DesignSetup(s, e, label=f"cycle-{k}"))
    if edges[-1] < n:
        label = "tail-partial" if k else "cycle-1"
        windows.append(DesignSetup(edges[-1], n, label=label))
    return windows


def rank_cycles(cycles: Sequence[DesignSetup], infer: WindowInference,
                box: PriorBox) -> list[GainResult]:
    """Gain per cycle, most informative first; ties favour the shorter
    window.  Per-cycle failures are logged and excluded."""
    results: list[GainResult] = []
    for setup in cycles:
        try:
            approx = infer(setup)
            bd = information_gain_breakdown(approx, box)
            results.append(GainResult(setup, bd.d_kl, approx, bd.c_trunc))
        except Exception as exc:
            log.warning("cycle %s failed: %s", setup, exc)
    results.sort(key=lambda r: (-r.d_kl, r.setup.n_samples))
    return results
