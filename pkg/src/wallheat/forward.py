"""Backward-Euler solver for the 1D heat equation with Dirichlet boundaries.

Two equivalent evaluation paths are provided on purpose:

* :func:`solve_forward` marches the tridiagonal system step by step in
  O(N*M) and extracts boundary fluxes with one-sided second-order stencils;
* :func:`propagator_sequences` + :func:`assemble_flux_operators` build the
  dense matrices that express both flux vectors as linear functions of the
  initial interior profile and the two boundary-temperature vectors, which
  the analytic marginalization requires.

Flux sign convention: both stencils carry a +k/(2*dx) prefactor, so at
steady state the internal flux equals (T_int - T_ext)/R while the external
flux equals its negative.  The synthetic generator and the likelihoods use
the same convention throughout, so signs cancel end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, toeplitz

from .core import Grid, InitialConditionKind, ThetaParams, WallGeometry

__all__ = [
    "SpatialOperator",
    "PropagatorSequences",
    "FluxOperators",
    "initial_profile",
    "step",
    "solve_forward",
    "propagator_sequences",
    "assemble_flux_operators",
]


@dataclass(frozen=True)
class SpatialOperator:
    """Second-difference operator A on the M-1 interior nodes plus the
    boundary selection vectors (a, b) and flux stencil vectors (c, d)."""

    m_cells: int

    def __post_init__(self) -> None:
        if self.m_cells < 3:
            raise ValueError("flux stencils need m_cells >= 3")

    @property
    def n_interior(self) -> int:
        return self.m_cells - 1

    def matrix(self) -> np.ndarray:
        """Dense A: -2 on the diagonal, 1 off-diagonal."""
        m = self.n_interior
        return toeplitz(np.r_[-2.0, 1.0, np.zeros(m - 2)])

    def a_vec(self) -> np.ndarray:
        v = np.zeros(self.n_interior)
        v[0] = 1.0
        return v

    def b_vec(self) -> np.ndarray:
        v = np.zeros(self.n_interior)
        v[-1] = 1.0
        return v

    def c_vec(self) -> np.ndarray:
        v = np.zeros(self.n_interior)
        v[0], v[1] = -4.0, 1.0
        return v

    def d_vec(self) -> np.ndarray:
        v = np.zeros(self.n_interior)
        v[-1], v[-2] = -4.0, 1.0
        return v


def _coefficients(theta: ThetaParams, geometry: WallGeometry, grid: Grid):
    """(k, dx, eta*lambda) for the discrete system; eta*lambda must be > 0."""
    k = geometry.conductivity(theta)
    dx = grid.dx(geometry)
    eta_lam = geometry.diffusivity(theta) * grid.lambda_grid(geometry)
    if not (eta_lam > 0) or not np.isfinite(eta_lam):
        raise ValueError(f"eta*lambda must be positive and finite, got {eta_lam}")
    return k, dx, eta_lam


def _banded_factor(m_interior: int, eta_lam: float) -> np.ndarray:
    """Cholesky factor of (I - eta*lambda*A) in banded storage.

    The matrix is symmetric positive definite (diagonally dominant with
    positive diagonal for any eta*lambda > 0), so the factorization is
    computed once per theta and reused across all time steps.
    """
    ab = np.empty((2, m_interior))
    ab[0, :] = -eta_lam          # superdiagonal (first entry unused)
    ab[1, :] = 1.0 + 2.0 * eta_lam
    return cholesky_banded(ab, lower=False)


def initial_profile(kind: InitialConditionKind, t_int0: float, t_ext0: float,
                    theta: ThetaParams, geometry: WallGeometry, grid: Grid) -> np.ndarray:
    """Initial interior temperatures T0(x_m), m = 1..M-1.

    ``linear`` interpolates the endpoint temperatures (tau0 unused);
    ``piecewise_linear`` puts a knot (L/2, tau0); ``quadratic`` is the
    parabola through the endpoints and (L/2, tau0); ``cubic`` additionally
    interpolates (L/4, tau1).
    """
    if kind is InitialConditionKind.CUBIC:
        if theta.tau1 is None:
            raise ValueError("cubic initial condition requires tau1")
    elif theta.tau1 is not None:
        raise ValueError(f"tau1 is only meaningful for the cubic model, got kind={kind.value}")

    L = geometry.thickness
    x = grid.dx(geometry) * np.arange(1, grid.m_cells)
    if kind is InitialConditionKind.LINEAR:
        return t_int0 + (t_ext0 - t_int0) * x / L
    if kind is InitialConditionKind.PIECEWISE_LINEAR:
        tau0 = theta.tau0
        left = t_int0 + 2.0 * (tau0 - t_int0) / L * x
        right = tau0 + 2.0 * (t_ext0 - tau0) / L * (x - L / 2.0)
        return np.where(x <= L / 2.0, left, right)
    if kind is InitialConditionKind.QUADRATIC:
        nodes_x = np.array([0.0, L / 2.0, L])
        nodes_y = np.array([t_int0, theta.tau0, t_ext0])
    else:  # cubic
        nodes_x = np.array([0.0, L / 4.0, L / 2.0, L])
        nodes_y = np.array([t_int0, theta.tau1, theta.tau0, t_ext0])
    coeffs = np.linalg.solve(np.vander(nodes_x / L, increasing=True), nodes_y)
    return np.polynomial.polynomial.polyval(x / L, coeffs)


def step(state: np.ndarray, t_int_next: float, t_ext_next: float,
         theta: ThetaParams, geometry: WallGeometry, grid: Grid) -> np.ndarray:
    """One backward-Euler step: solve (I - eta*lam*A) T_{n+1} = rhs."""
    state = np.asarray(state, dtype=float)
    if state.shape != (grid.m_cells - 1,):
        raise ValueError(f"state must have length {grid.m_cells - 1}, got {state.shape}")
    _, _, eta_lam = _coefficients(theta, geometry, grid)
    factor = _banded_factor(grid.m_cells - 1, eta_lam)
    rhs = state.copy()
    rhs[0] += eta_lam * t_int_next
    rhs[-1] += eta_lam * t_ext_next
    return cho_solve_banded((factor, False), rhs)


def _flux_pair(k_over_2dx: float, t_int_n: float, t_ext_n: float,
               interior: np.ndarray) -> tuple[float, float]:
    f_int = k_over_2dx * (3.0 * t_int_n - 4.0 * interior[0] + interior[1])
    f_ext = k_over_2dx * (3.0 * t_ext_n - 4.0 * interior[-1] + interior[-2])
    return f_int, f_ext


def solve_forward(theta: ThetaParams, geometry: WallGeometry, grid: Grid,
                  t_int: np.ndarray, t_ext: np.ndarray,
                  ic: InitialConditionKind = InitialConditionKind.PIECEWISE_LINEAR,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """March the solver over the whole boundary record and return both
    boundary heat-flux series (length n_steps + 1 each)."""
    t_int = np.asarray(t_int, dtype=float)
    t_ext = np.asarray(t_ext, dtype=float)
    if t_int.shape != (grid.n_times,) or t_ext.shape != (grid.n_times,):
        raise ValueError(f"boundary series must have length {grid.n_times}, "
                         f"got {t_int.shape} and {t_ext.shape}")
    if grid.m_cells < 3:
        raise ValueError("flux stencils need m_cells >= 3")
    k, dx, eta_lam = _coefficients(theta, geometry, grid)
    k2dx = k / (2.0 * dx)
    factor = _banded_factor(grid.m_cells - 1, eta_lam)

    state = initial_profile(ic, t_int[0], t_ext[0], theta, geometry, grid)
    f_int = np.empty(grid.n_times)
    f_ext = np.empty(grid.n_times)
    f_int[0], f_ext[0] = _flux_pair(k2dx, t_int[0], t_ext[0], state)
    for n in range(1, grid.n_times):
        rhs = state.copy()
        rhs[0] += eta_lam * t_int[n]
        rhs[-1] += eta_lam * t_ext[n]
        state = cho_solve_banded((factor, False), rhs)
        f_int[n], f_ext[n] = _flux_pair(k2dx, t_int[n], t_ext[n], state)
    return f_int, f_ext


@dataclass(frozen=True)
class PropagatorSequences:
    """Scalar kernels alpha/beta/gamma/delta and the propagated stencil rows.

    Index n holds the quantity built from B^n, where B = (I - eta*lam*A)^-1;
    entry 0 is the unpropagated stencil (alpha[0] = c'a = -4, etc.).
    """

    m_cells: int
    n_steps: int
    eta_lambda: float
    alpha: np.ndarray   # c' B^n a
    beta: np.ndarray    # c' B^n b
    gamma: np.ndarray   # d' B^n a
    delta: np.ndarray   # d' B^n b
    rows_c: np.ndarray  # (n_steps+1, M-1); row n = c' B^n
    rows_d: np.ndarray  # (n_steps+1, M-1); row n = d' B^n


@lru_cache(maxsize=16)
def _propagate(m_cells: int, n_steps: int, eta_lam: float) -> PropagatorSequences:
    op = SpatialOperator(m_cells)
    m = op.n_interior
    factor = _banded_factor(m, eta_lam)
    rows_c = np.empty((n_steps + 1, m))
    rows_d = np.empty((n_steps + 1, m))
    rows_c[0] = op.c_vec()
    rows_d[0] = op.d_vec()
    # B is symmetric, so c'B^{n+1} solves the same SPD system as the state
    # update; both stencil rows advance in one two-column solve.
    pair = np.empty((m, 2))
    for n in range(n_steps):
        pair[:, 0] = rows_c[n]
        pair[:, 1] = rows_d[n]
        out = cho_solve_banded((factor, False), pair, check_finite=False)
        rows_c[n + 1] = out[:, 0]
        rows_d[n + 1] = out[:, 1]
    seqs = PropagatorSequences(
        m_cells=m_cells, n_steps=n_steps, eta_lambda=eta_lam,
        alpha=rows_c[:, 0].copy(), beta=rows_c[:, -1].copy(),
        gamma=rows_d[:, 0].copy(), delta=rows_d[:, -1].copy(),
        rows_c=rows_c, rows_d=rows_d)
    for arr in (seqs.alpha, seqs.beta, seqs.gamma, seqs.delta, rows_c, rows_d):
        arr.setflags(write=False)
    return seqs


def propagator_sequences(theta: ThetaParams, geometry: WallGeometry,
                         grid: Grid) -> PropagatorSequences:
    """Kernels of B^n for n = 0..n_steps, cached on (eta*lambda, M, N).

    The cache makes repeated evaluations at identical theta (finite
    difference gradients and Hessians) nearly free.
    """
    _, _, eta_lam = _coefficients(theta, geometry, grid)
    return _propagate(grid.m_cells, grid.n_steps, eta_lam)


@dataclass(frozen=True)
class FluxOperators:
    """Dense linear maps from (T0, T_int, T_ext) to the two flux vectors:

    F_int = H @ T0 + H_int @ T_int + H_ext @ T_ext
    F_ext = G @ T0 + G_int @ T_int + G_ext @ T_ext
    """

    h: np.ndarray       # (n_obs+1, M-1)
    h_int: np.ndarray   # (n_obs+1, n_obs+1), lower triangular
    h_ext: np.ndarray
    g: np.ndarray
    g_int: np.ndarray
    g_ext: np.ndarray

    @property
    def n_times(self) -> int:
        return self.h.shape[0]

    def flux_int(self, t0_vec, t_int, t_ext) -> np.ndarray:
        return self.h @ t0_vec + self.h_int @ t_int + self.h_ext @ t_ext

    def flux_ext(self, t0_vec, t_int, t_ext) -> np.ndarray:
        return self.g @ t0_vec + self.g_int @ t_int + self.g_ext @ t_ext


def _lower_toeplitz(kernel: np.ndarray, n: int, diag_add: float) -> np.ndarray:
    """n x n matrix, zero first row and column; block [1:, 1:] is the lower
    triangular Toeplitz of kernel[1:] with diag_add added on its diagonal."""
    out = np.zeros((n, n))
    if n > 1:
        first_col = kernel[1:n]
        out[1:, 1:] = toeplitz(first_col, np.zeros(n - 1))
        if diag_add:
            idx = np.arange(1, n)
            out[idx, idx] += diag_add
    return out


def assemble_flux_operators(seqs: PropagatorSequences, theta: ThetaParams,
                            geometry: WallGeometry, grid: Grid,
                            n_obs: int | None = None) -> FluxOperators:
    """Build the six flux operator matrices for the first n_obs+1 times."""
    if n_obs is None:
        n_obs = grid.n_steps
    if n_obs > seqs.n_steps or n_obs > grid.n_steps:
        raise ValueError(f"n_obs={n_obs} exceeds available steps {seqs.n_steps}")
    k, dx, eta_lam = _coefficients(theta, geometry, grid)
    if abs(eta_lam - seqs.eta_lambda) > 1e-12 * max(1.0, eta_lam) or \
            seqs.m_cells != grid.m_cells:
        raise ValueError("propagator sequences were built for a different (theta, grid)")

    n = n_obs + 1
    base = k / (2.0 * dx)
    scale = base * eta_lam
    three = 3.0 / eta_lam

    h = base * seqs.rows_c[:n]
    g = base * seqs.rows_d[:n]
    h_int = scale * _lower_toeplitz(seqs.alpha, n, diag_add=three)
    h_int[0, 0] = base * 3.0
    h_ext = scale * _lower_toeplitz(seqs.beta, n, diag_add=0.0)
    g_int = scale * _lower_toeplitz(seqs.gamma, n, diag_add=0.0)
    g_ext = scale * _lower_toeplitz(seqs.delta, n, diag_add=three)
    g_ext[0, 0] = base * 3.0
    return FluxOperators(h=h, h_int=h_int, h_ext=h_ext, g=g, g_int=g_int, g_ext=g_ext)
