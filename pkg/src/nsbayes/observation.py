"""Pointwise velocity observations and the Gaussian data misfit.

Observations are both velocity components at every collocation grid point,
taken at a set of times that must coincide with solver knots (no silent
interpolation).  The data vector ordering is fixed: time-major, then grid
row-major (first index fastest varying last), then component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .forward import Trajectory, WienerPath, solve_forward
from .spectral import SpectralField, WavenumberLattice, to_physical

POINTWISE_VELOCITY = "pointwise-velocity"


@dataclass
class ObservationConfig:
    """What is observed, when, and how noisily.

    Attributes:
        lattice: Collocation lattice of the observation grid.
        times: Strictly increasing observation times in ``(0, T]``.
        gamma: Observation noise standard deviation; the noise covariance
            is ``gamma^2 I``.  A diagonal covariance can be supplied via
            ``noise_diag`` instead for forward compatibility.
        kind: Functional type; only pointwise velocity is implemented.
        noise_diag: Optional per-entry noise variances, length ``J * K``.
    """

    lattice: WavenumberLattice
    times: np.ndarray
    gamma: float
    kind: str = POINTWISE_VELOCITY
    noise_diag: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ConfigError("at least one observation time is required")
        if np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise ConfigError("observation times must be positive and increasing")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if self.kind != POINTWISE_VELOCITY:
            raise ConfigError(f"unsupported observation kind {self.kind!r}")
        if self.noise_diag is not None:
            diag = np.asarray(self.noise_diag, dtype=float)
            if diag.shape != (self.n_total,) or np.any(diag <= 0):
                raise ConfigError("noise_diag must be positive with length J*K")
            self.noise_diag = diag
        self.times = times

    @property
    def n_per_time(self) -> int:
        """Functionals per observation time: two components on the grid."""
        return 2 * self.lattice.modes_per_dim**2

    @property
    def n_total(self) -> int:
        return self.times.size * self.n_per_time


@dataclass
class ObservationSet:
    """Concatenated data vector together with its configuration."""

    config: ObservationConfig
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.config.n_total,):
            raise ConfigError(
                f"data vector length {vals.shape} does not match "
                f"config ({self.config.n_total} entries)"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigError("data vector contains non-finite entries")
        self.values = vals


def forward_observe(traj: Trajectory, cfg: ObservationConfig) -> np.ndarray:
    """Evaluate the observation operator along a trajectory.

    Returns the concatenation over observation times of the grid values of
    the velocity, flattened in the fixed ordering.  Times not on the knot
    grid raise a :class:`ConfigError`.
    """
    if not traj.lattice.compatible_with(cfg.lattice):
        raise ConfigError("trajectory and observations use different lattices")
    blocks = []
    for t in cfg.times:
        idx = traj.knot_of_time(t)
        phys = to_physical(traj.field_at(idx))
        blocks.append(phys.values.ravel())
    return np.concatenate(blocks)


def synthesize_data(
    traj: Trajectory, cfg: ObservationConfig, rng: np.random.Generator
) -> ObservationSet:
    """Generate data: forward observation plus i.i.d. Gaussian noise."""
    clean = forward_observe(traj, cfg)
    noise = rng.standard_normal(clean.size)
    if cfg.noise_diag is not None:
        values = clean + np.sqrt(cfg.noise_diag) * noise
    else:
        values = clean + cfg.gamma * noise
    return ObservationSet(cfg, values)


def _misfit_from_prediction(data: ObservationSet, predicted: np.ndarray) -> float:
    cfg = data.config
    resid = data.values - predicted
    if cfg.noise_diag is not None:
        return 0.5 * float(np.sum(resid**2 / cfg.noise_diag))
    if cfg.gamma <= 0:
        raise ConfigError("misfit requires a positive noise level")
    return 0.5 * float(np.sum((resid / cfg.gamma) ** 2))


def misfit(
    path: WienerPath,
    u0: SpectralField,
    data: ObservationSet,
    nu: float,
    include_nonlinear: bool = True,
    blowup_cap: float = 1.0e6,
) -> float:
    """Negative log-likelihood ``0.5 |Sigma^(-1/2) (data - G)|^2``.

    Runs one forward solve; solver blow-ups propagate to the caller.
    """
    traj = solve_forward(
        u0, path, nu, include_nonlinear=include_nonlinear, blowup_cap=blowup_cap
    )
    return _misfit_from_prediction(data, forward_observe(traj, data.config))


class GridObservationLikelihood:
    """Misfit evaluator for pointwise grid data; counts forward solves.

    Any object with this ``evaluate`` signature and an ``n_evals`` counter
    can drive the samplers, which is how reduced observation designs (for
    example a single spectral mode) are plugged in by tests.
    """

    def __init__(
        self,
        data: ObservationSet,
        nu: float,
        include_nonlinear: bool = True,
        blowup_cap: float = 1.0e6,
    ):
        if data.config.noise_diag is None and data.config.gamma <= 0:
            raise ConfigError("likelihood requires a positive noise level")
        self.data = data
        self.nu = nu
        self.include_nonlinear = include_nonlinear
        self.blowup_cap = blowup_cap
        self.n_evals = 0

    def evaluate(self, u0: SpectralField, path: WienerPath):
        """Return ``(misfit value, trajectory)`` for a state."""
        self.n_evals += 1
        traj = solve_forward(
            u0,
            path,
            self.nu,
            include_nonlinear=self.include_nonlinear,
            blowup_cap=self.blowup_cap,
        )
        value = _misfit_from_prediction(self.data, forward_observe(traj, self.data.config))
        return value, traj


class NullLikelihood:
    """Constant-zero misfit: chains driven by it sample the prior.

    No forward solve is performed, so trajectory statistics are not
    available from such runs.
    """

    def __init__(self):
        self.n_evals = 0

    def evaluate(self, u0, path):
        self.n_evals += 1
        return 0.0, None
