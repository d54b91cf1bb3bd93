"""Domain types shared across the package.

Conventions used everywhere:

* temperatures are degrees Celsius, heat fluxes W/m2,
* time-series timestamps are minutes, solver time steps are seconds,
* thermal resistance ``R`` is m2K/W, areal heat capacity ``rho_c`` is J/m2K,
* all value objects are immutable after construction and safe to share
  across threads.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "InitialConditionKind",
    "ThetaParams",
    "WallGeometry",
    "Grid",
    "TimeSeries",
    "Campaign",
    "PriorBox",
    "NoiseModel",
    "validate_campaign",
    "ensure_valid",
    "read_campaign_csv",
    "write_campaign_csv",
    "CAMPAIGN_CSV_HEADER",
]

SECONDS_PER_MINUTE = 60.0


class InitialConditionKind(enum.Enum):
    """Family of initial mid-wall temperature profiles."""

    LINEAR = "linear"
    PIECEWISE_LINEAR = "piecewise_linear"
    QUADRATIC = "quadratic"
    CUBIC = "cubic"


DEFAULT_IC_KIND = InitialConditionKind.PIECEWISE_LINEAR


@dataclass(frozen=True)
class ThetaParams:
    """The inferred parameter triple (R, rho*C, tau0), optionally with tau1.

    ``tau1`` is the extra interior-temperature parameter of the cubic
    initial-condition model and must be absent for every other model.
    """

    r_value: float
    rho_c: float
    tau0: float
    tau1: float | None = None

    def __post_init__(self) -> None:
        if not (self.r_value > 0):
            raise ValueError(f"r_value must be positive, got {self.r_value}")
        if not (self.rho_c > 0):
            raise ValueError(f"rho_c must be positive, got {self.rho_c}")
        for name in ("r_value", "rho_c", "tau0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.tau1 is not None and not math.isfinite(self.tau1):
            raise ValueError("tau1 must be finite when present")

    @property
    def dim(self) -> int:
        return 3 if self.tau1 is None else 4

    def to_array(self) -> np.ndarray:
        vals = [self.r_value, self.rho_c, self.tau0]
        if self.tau1 is not None:
            vals.append(self.tau1)
        return np.asarray(vals, dtype=float)

    @staticmethod
    def from_array(x: Sequence[float]) -> "ThetaParams":
        x = np.asarray(x, dtype=float)
        if x.shape == (3,):
            return ThetaParams(float(x[0]), float(x[1]), float(x[2]))
        if x.shape == (4,):
            return ThetaParams(float(x[0]), float(x[1]), float(x[2]), float(x[3]))
        raise ValueError(f"expected 3 or 4 parameters, got shape {x.shape}")

    def with_tau1(self, tau1: float) -> "ThetaParams":
        return replace(self, tau1=tau1)


@dataclass(frozen=True)
class WallGeometry:
    """Solid-wall geometry: only the thickness matters in 1D."""

    thickness: float = 0.215  # m; brick partition default, configurable

    def __post_init__(self) -> None:
        if not (self.thickness > 0):
            raise ValueError(f"thickness must be positive, got {self.thickness}")

    def conductivity(self, theta: ThetaParams) -> float:
        """Thermal conductivity k = L/R, W/mK."""
        return self.thickness / theta.r_value

    def volumetric_heat_capacity(self, theta: ThetaParams) -> float:
        """rho*c_p = rho_c/L, J/m3K."""
        return theta.rho_c / self.thickness

    def diffusivity(self, theta: ThetaParams) -> float:
        """Thermal diffusivity eta = k/(rho*c_p) = L^2/(R*rho_c), m2/s."""
        return self.thickness**2 / (theta.r_value * theta.rho_c)


@dataclass(frozen=True)
class Grid:
    """Uniform space-time discretization for the forward solver.

    ``m_cells`` spatial intervals over the wall thickness, ``n_steps`` time
    intervals of ``dt`` seconds; a boundary series fed to the solver must
    have ``n_steps + 1`` samples.
    """

    m_cells: int
    dt: float  # s
    n_steps: int

    def __post_init__(self) -> None:
        if self.m_cells < 2:
            raise ValueError(f"m_cells must be >= 2, got {self.m_cells}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    def dx(self, geometry: WallGeometry) -> float:
        """Spatial step L/M, m."""
        return geometry.thickness / self.m_cells

    def lambda_grid(self, geometry: WallGeometry) -> float:
        """Grid ratio dt/dx^2, s/m2 (not the smoothing parameter)."""
        return self.dt / self.dx(geometry) ** 2

    @property
    def n_times(self) -> int:
        return self.n_steps + 1


def _frozen_values(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled series; timestamps are implicit t0 + i*dt_sample.

    ``t0`` and ``dt_sample`` are in minutes.  Construction enforces only the
    structural invariants; data-quality checks (finiteness, cross-series
    alignment) are the job of :func:`validate_campaign` so that defective
    measurement files can still be loaded and diagnosed.
    """

    t0: float
    dt_sample: float
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen_values(self.values))
        if not (self.dt_sample > 0):
            raise ValueError(f"dt_sample must be positive, got {self.dt_sample}")
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a non-empty 1-D sequence")

    def __len__(self) -> int:
        return int(self.values.size)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt_sample * np.arange(len(self))

    def slice(self, start: int, end: int) -> "TimeSeries":
        """Sub-series over [start, end), timestamps preserved."""
        if not (0 <= start < end <= len(self)):
            raise ValueError(f"bad slice [{start}, {end}) for length {len(self)}")
        return TimeSeries(self.t0 + start * self.dt_sample, self.dt_sample,
                          self.values[start:end])

    def decimate(self, step: int) -> "TimeSeries":
        """Every step-th sample starting at index 0."""
        if step < 1:
            raise ValueError("step must be >= 1")
        if step == 1:
            return self
        return TimeSeries(self.t0, self.dt_sample * step, self.values[::step])


_SERIES_FIELDS = ("temp_int", "temp_ext", "flux_int", "flux_ext")
_STAGES = ("raw", "averaged")


@dataclass(frozen=True)
class Campaign:
    """Four aligned measurement series from the two faces of one wall."""

    temp_int: TimeSeries  # degC
    temp_ext: TimeSeries  # degC
    flux_int: TimeSeries  # W/m2
    flux_ext: TimeSeries  # W/m2
    stage: str = "raw"

    def __post_init__(self) -> None:
        if self.stage not in _STAGES:
            raise ValueError(f"stage must be one of {_STAGES}, got {self.stage!r}")

    def __len__(self) -> int:
        return len(self.temp_int)

    @property
    def t0(self) -> float:
        return self.temp_int.t0

    @property
    def dt_sample(self) -> float:
        return self.temp_int.dt_sample

    def series(self) -> dict[str, TimeSeries]:
        return {name: getattr(self, name) for name in _SERIES_FIELDS}

    def slice(self, start: int, end: int) -> "Campaign":
        return Campaign(*(getattr(self, n).slice(start, end) for n in _SERIES_FIELDS),
                        stage=self.stage)

    def decimate(self, step: int) -> "Campaign":
        return Campaign(*(getattr(self, n).decimate(step) for n in _SERIES_FIELDS),
                        stage=self.stage)


def validate_campaign(c: Campaign) -> list[str]:
    """Check Campaign invariants; returns [] iff everything holds.

    A diagnostic, not a gate: each violation names the offending series
    (and sample index for non-finite entries).
    """
    problems: list[str] = []
    ref = c.temp_int
    for name in _SERIES_FIELDS:
        s: TimeSeries = getattr(c, name)
        vals = np.asarray(s.values, dtype=float)
        for i in np.flatnonzero(~np.isfinite(vals)):
            problems.append(f"non-finite value at ({name}, {int(i)})")
        if len(s) != len(ref):
            problems.append(f"length mismatch: {name} has {len(s)}, "
                            f"temp_int has {len(ref)}")
        if s.t0 != ref.t0:
            problems.append(f"t0 mismatch: {name}")
        if s.dt_sample != ref.dt_sample:
            problems.append(f"dt_sample mismatch: {name}")
    return problems


def ensure_valid(c: Campaign) -> Campaign:
    """Raise with the full violation list unless the campaign is valid."""
    problems = validate_campaign(c)
    if problems:
        raise ValueError("invalid campaign: " + "; ".join(problems))
    return c


@dataclass(frozen=True)
class PriorBox:
    """Independent uniform prior intervals for the parameter vector.

    ``tau1_interval`` is only consulted for the four-parameter cubic model;
    when unset it defaults to ``tau0_interval`` (both are interior wall
    temperatures).
    """

    r_interval: tuple[float, float] = (0.17, 0.36)
    rho_c_interval: tuple[float, float] = (234_000.0, 431_000.0)
    tau0_interval: tuple[float, float] = (5.0, 25.0)
    tau1_interval: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        for name in ("r_interval", "rho_c_interval", "tau0_interval", "tau1_interval"):
            iv = getattr(self, name)
            if iv is None:
                continue
            lo, hi = iv
            if not (lo < hi):
                raise ValueError(f"{name} must satisfy lower < upper, got {iv}")

    def intervals(self, dim: int = 3) -> list[tuple[float, float]]:
        ivs = [self.r_interval, self.rho_c_interval, self.tau0_interval]
        if dim == 4:
            ivs.append(self.tau1_interval or self.tau0_interval)
        elif dim != 3:
            raise ValueError(f"dim must be 3 or 4, got {dim}")
        return ivs

    def lowers(self, dim: int = 3) -> np.ndarray:
        return np.array([iv[0] for iv in self.intervals(dim)])

    def uppers(self, dim: int = 3) -> np.ndarray:
        return np.array([iv[1] for iv in self.intervals(dim)])

    def widths(self, dim: int = 3) -> np.ndarray:
        return self.uppers(dim) - self.lowers(dim)

    def volume(self, dim: int = 3) -> float:
        return float(np.prod(self.widths(dim)))

    def contains(self, theta: ThetaParams) -> bool:
        """Closed-box membership (boundary points count as inside)."""
        x = theta.to_array()
        lo, hi = self.lowers(theta.dim), self.uppers(theta.dim)
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def center(self, dim: int = 3) -> ThetaParams:
        return ThetaParams.from_array((self.lowers(dim) + self.uppers(dim)) / 2.0)


@dataclass(frozen=True)
class NoiseModel:
    """Scalar i.i.d. noise scales: flux likelihood sds and the shared
    boundary-temperature prior sd (covariances are sigma^2 * I)."""

    sigma_flux_int: float = 0.66
    sigma_flux_ext: float = 0.66
    sigma_temp_prior: float = 0.01

    def __post_init__(self) -> None:
        for name in ("sigma_flux_int", "sigma_flux_ext", "sigma_temp_prior"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")


CAMPAIGN_CSV_HEADER = ["t_min", "temp_int_C", "flux_int_Wm2", "temp_ext_C", "flux_ext_Wm2"]


def write_campaign_csv(campaign: Campaign, path: str | Path) -> None:
    """Write a campaign as CSV with shortest round-trip float formatting."""
    t = campaign.temp_int.times()
    cols = (campaign.temp_int.values, campaign.flux_int.values,
            campaign.temp_ext.values, campaign.flux_ext.values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CAMPAIGN_CSV_HEADER)
        for i in range(len(campaign)):
            w.writerow([repr(float(t[i]))] + [repr(float(c[i])) for c in cols])


def read_campaign_csv(path: str | Path, stage: str = "raw") -> Campaign:
    """Parse a campaign CSV; timestamps must be uniform in minutes."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != CAMPAIGN_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CAMPAIGN_CSV_HEADER)}, "
                             f"got {header}")
        rows = [[float(x) for x in row] for row in r if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    data = np.asarray(rows, dtype=float)
    t = data[:, 0]
    dt = t[1] - t[0]
    if dt <= 0:
        raise ValueError(f"{path}: timestamps must be strictly increasing")
    expected = t[0] + dt * np.arange(len(t))
    if np.max(np.abs(t - expected)) > 1e-6 * dt:
        raise ValueError(f"{path}: timestamps are not uniformly spaced")

    def ts(col: int) -> TimeSeries:
        return TimeSeries(t0=float(t[0]), dt_sample=float(dt), values=data[:, col])

    return Campaign(temp_int=ts(1), flux_int=ts(2), temp_ext=ts(3), flux_ext=ts(4),
                    stage=stage)
