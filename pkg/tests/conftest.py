import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

try:
    import threadpoolctl

    threadpoolctl.threadpool_limits(1, "blas")
except Exception:
    pass

from wallheat.core import (Campaign, Grid, InitialConditionKind, NoiseModel,
                           PriorBox, ThetaParams, TimeSeries, WallGeometry)
from wallheat.forward import solve_forward
from wallheat.likelihood import BoundaryPrior


@pytest.fixture(scope="session")
def geom():
    return WallGeometry(0.215)


@pytest.fixture(scope="session")
def theta_true():
    return ThetaParams(0.31, 3.2e5, 15.0)


@pytest.fixture(scope="session")
def paper_box():
    return PriorBox((0.17, 0.36), (234_000.0, 431_000.0), (5.0, 25.0))


def make_series(values, t0=0.0, dt=5.0):
    return TimeSeries(t0=t0, dt_sample=dt, values=np.asarray(values, dtype=float))


def model_consistent_case(geom, theta, n_obs=30, m_cells=10, dt_min=5.0,
                          sigma_flux=0.5, sigma_temp=0.03, noise_seed=0,
                          ext_amплitude=None, ext_amplitude=4.0,
                          ic=InitialConditionKind.PIECEWISE_LINEAR):
    """Averaged-stage campaign whose fluxes come from the forward model at
    theta plus i.i.d. noise; boundary-prior means are the exact boundary
    curves.  For likelihood algebra tests (same grid as inference, on
    purpose)."""
    rng = np.random.default_rng(noise_seed)
    grid = Grid(m_cells, dt_min * 60.0, n_obs - 1)
    t = np.arange(n_obs, dtype=float)
    mu_int = 20.0 + 0.3 * np.sin(2 * np.pi * t / 37.0)
    mu_ext = 10.0 + ext_amplitude * np.sin(2 * np.pi * t / 53.0 + 0.4)
    f_int, f_ext = solve_forward(theta, geom, grid, mu_int, mu_ext, ic)
    q_int = f_int + sigma_flux * rng.standard_normal(n_obs)
    q_ext = f_ext + sigma_flux * rng.standard_normal(n_obs)
    campaign = Campaign(
        temp_int=make_series(mu_int + sigma_temp * rng.standard_normal(n_obs), dt=dt_min),
        temp_ext=make_series(mu_ext + sigma_temp * rng.standard_normal(n_obs), dt=dt_min),
        flux_int=make_series(q_int, dt=dt_min),
        flux_ext=make_series(q_ext, dt=dt_min),
        stage="averaged")
    bprior = BoundaryPrior(make_series(mu_int, dt=dt_min),
                           make_series(mu_ext, dt=dt_min),
                           sigma_temp_prior=0.02)
    noise = NoiseModel(sigma_flux_int=sigma_flux, sigma_flux_ext=sigma_flux,
                       sigma_temp_prior=bprior.sigma_temp_prior)
    return campaign, bprior, noise, grid
