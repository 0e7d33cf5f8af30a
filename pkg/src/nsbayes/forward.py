"""Time integration of the stochastically forced flow for a fixed driving path.

The dynamics per tangent amplitude are

    da_k = -nu |k|^2 a_k dt - [P (u.grad) u]_k dt + dW_k(t),

integrated with an exponential Euler scheme: the stiff linear factor is
applied exactly, the nonlinear term is frozen over the step with the
standard first-order exponential weight, and the noise increment enters
through the same decay factor (interpreted as a left-endpoint increment;
a raw-increment variant is available as an option).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowupError, ConfigError, NumericalError
from .spectral import SpectralField, WavenumberLattice, nonlinear_term

DEFAULT_BLOWUP_CAP = 1.0e6


@dataclass
class WienerPath:
    """Driving path sampled on a uniform time grid.

    Attributes:
        lattice: Spatial lattice of the per-knot fields.
        times: Knot times ``0 = t_0 < ... < t_N = T``, uniformly spaced.
        values: Complex array ``(N + 1, M, M)`` of per-mode path values,
            with ``values[0] == 0``.  Between knots the path is interpreted
            as piecewise linear.
    """

    lattice: WavenumberLattice
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=np.complex128)
        m = self.lattice.modes_per_dim
        if times.ndim != 1 or times.size < 2:
            raise ConfigError("a path needs at least two knots")
        if values.shape != (times.size, m, m):
            raise ConfigError(
                f"path values shape {values.shape} does not match "
                f"{times.size} knots on a lattice of size {m}"
            )
        if abs(times[0]) > 1e-12:
            raise ConfigError("path must start at t = 0")
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
            raise ConfigError("knot times must be uniform and increasing")
        if np.max(np.abs(values[0])) != 0.0:
            raise ConfigError("path must satisfy W(0) = 0")
        self.times = times
        self.values = values

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    @classmethod
    def zeros(cls, lattice: WavenumberLattice, times) -> "WienerPath":
        times = np.asarray(times, dtype=float)
        m = lattice.modes_per_dim
        return cls(lattice, times, np.zeros((times.size, m, m), np.complex128))

    def refine(self, factor: int) -> "WienerPath":
        """Subdivide each knot interval, interpolating the path linearly.

        Exact for the piecewise-linear interpretation, so a refined path
        describes the same continuous driving signal on a finer grid.
        """
        if factor < 1 or int(factor) != factor:
            raise ConfigError("refinement factor must be a positive integer")
        if factor == 1:
            return WienerPath(self.lattice, self.times.copy(), self.values.copy())
        n = self.n_steps
        fine_times = self.times[0] + np.arange(n * factor + 1) * (self.dt / factor)
        frac = (np.arange(factor) / factor)[None, :, None, None]
        left = self.values[:-1, None]
        inc = self.increments[:, None]
        fine = (left + frac * inc).reshape(n * factor, *self.values.shape[1:])
        fine = np.concatenate([fine, self.values[-1:]], axis=0)
        return WienerPath(self.lattice, fine_times, fine)

    def sup_norm(self, s: float) -> float:
        """Sup over knots of the order-``s`` Sobolev norm of the path value."""
        lat = self.lattice
        lam = np.where(lat.mode_mask, lat.eigenvalues, 1.0)
        weights = np.where(lat.mode_mask, lam**s, 0.0)
        per_knot = np.sqrt(np.sum(weights * np.abs(self.values) ** 2, axis=(1, 2)))
        return float(np.max(per_knot))


@dataclass
class Trajectory:
    """Solution states on the knot grid of the driving path."""

    lattice: WavenumberLattice
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.complex128)
        m = self.lattice.modes_per_dim
        if self.states.shape != (self.times.size, m, m):
            raise ConfigError("trajectory state array does not match knots")

    def field_at(self, index: int) -> SpectralField:
        return SpectralField(self.lattice, self.states[index].copy())

    def knot_of_time(self, t: float) -> int:
        """Index of the knot at time ``t``; rejects off-grid times."""
        hits = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-9))[0]
        if hits.size != 1:
            raise ConfigError(f"time {t} is not on the trajectory knot grid")
        return int(hits[0])


class _Stepper:
    """Precomputed per-mode multipliers for one (lattice, nu, dt)."""

    def __init__(self, lattice, nu, dt, include_nonlinear, decay_noise):
        if dt <= 0:
            raise ConfigError(f"time step must be positive, got {dt}")
        if nu <= 0:
            raise ConfigError(f"viscosity must be positive, got {nu}")
        self.lattice = lattice
        self.include_nonlinear = include_nonlinear
        lam = lattice.eigenvalues
        self.decay = np.exp(-nu * lam * dt)
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = (1.0 - self.decay) / (nu * lam)
        self.weight = np.where(lattice.mode_mask, weight, 0.0)
        self.noise_factor = self.decay if decay_noise else np.ones_like(self.decay)

    def advance(self, coeffs, d_path):
        if not np.all(np.isfinite(coeffs)):
            raise NumericalError("non-finite coefficients entering time step")
        if self.include_nonlinear:
            tendency = -nonlinear_term(SpectralField(self.lattice, coeffs)).coeffs
        else:
            tendency = 0.0
        return (
            self.decay * coeffs
            + self.weight * tendency
            + self.noise_factor * d_path
        )


def step(
    u_n: SpectralField,
    d_path: SpectralField,
    dt: float,
    nu: float,
    include_nonlinear: bool = True,
    decay_noise: bool = True,
) -> SpectralField:
    """Advance one exponential Euler step.

    Per mode ``a' = e^{-nu lam dt} a + (1 - e^{-nu lam dt})/(nu lam) b
    + e^{-nu lam dt} dW`` with ``b`` the negated projected self-advection
    frozen at the left endpoint.  Exact for purely linear dynamics.
    """
    if not u_n.lattice.compatible_with(d_path.lattice):
        raise ConfigError("field and increment live on different lattices")
    if not np.all(np.isfinite(d_path.coeffs)):
        raise NumericalError("non-finite path increment")
    stepper = _Stepper(u_n.lattice, nu, dt, include_nonlinear, decay_noise)
    return SpectralField(u_n.lattice, stepper.advance(u_n.coeffs, d_path.coeffs))


def solve_forward(
    u0: SpectralField,
    path: WienerPath,
    nu: float,
    include_nonlinear: bool = True,
    decay_noise: bool = True,
    blowup_cap: float = DEFAULT_BLOWUP_CAP,
) -> Trajectory:
    """Integrate the flow along the knot grid of ``path``.

    Args:
        u0: Initial velocity field.
        path: Driving path; its knots become the trajectory knots.
        nu: Viscosity.
        include_nonlinear: Disable to integrate the linear (Stokes) flow.
        decay_noise: Apply the linear decay factor to noise increments.
        blowup_cap: Abort when the L2 norm of the state exceeds this.

    Raises:
        BlowupError: If the norm cap is exceeded (reports the knot).
        NumericalError: On non-finite input coefficients.
    """
    if not u0.lattice.compatible_with(path.lattice):
        raise ConfigError("initial condition and path live on different lattices")
    if not np.all(np.isfinite(path.values)):
        raise NumericalError("non-finite values in driving path")
    stepper = _Stepper(path.lattice, nu, path.dt, include_nonlinear, decay_noise)
    states = np.empty_like(path.values)
    states[0] = u0.coeffs
    increments = path.increments
    for n in range(path.n_steps):
        states[n + 1] = stepper.advance(states[n], increments[n])
        norm = np.sqrt(np.sum(np.abs(states[n + 1]) ** 2))
        if not np.isfinite(norm) or norm > blowup_cap:
            raise BlowupError(
                f"solution norm {norm:.3e} exceeded cap {blowup_cap:.3e} "
                f"at knot {n + 1} (t = {path.times[n + 1]:.6g})"
            )
    return Trajectory(path.lattice, path.times.copy(), states)


def stochastic_convolution(path: WienerPath, t: float, nu: float) -> SpectralField:
    """Damped response of the linear flow to the driving path at time ``t``.

    Evaluates, per mode,

        z_k(t) = w_k(t) - int_0^t w_k(s) nu lam e^{-nu lam (t - s)} ds,

    the mild solution of ``dz = -nu A z dt + dW`` with ``z(0) = 0``.  The
    integral is taken in closed form on each linear segment of the path,
    so the result is exact for the piecewise-linear interpretation and is
    exactly linear in the path.
    """
    if nu <= 0:
        raise ConfigError(f"viscosity must be positive, got {nu}")
    if t < -1e-12 or t > path.horizon + 1e-12:
        raise ConfigError(f"time {t} outside the path horizon [0, {path.horizon}]")
    t = min(max(t, 0.0), path.horizon)
    lat = path.lattice
    lam = lat.eigenvalues
    nl = nu * np.where(lat.mode_mask, lam, 1.0)

    z = np.zeros_like(path.values[0])
    if t == 0.0:
        return SpectralField(lat, z)

    dt = path.dt
    n_full = int(np.floor(t / dt + 1e-12))
    n_full = min(n_full, path.n_steps)
    increments = path.increments

    def segment(z_in, slope, h):
        # Exact update of z' = -nu lam z + slope over a span of length h.
        decay = np.exp(-nl * h)
        out = decay * z_in + slope * (1.0 - decay) / nl
        return np.where(lat.mode_mask, out, 0.0)

    for n in range(n_full):
        z = segment(z, increments[n] / dt, dt)
    remainder = t - n_full * dt
    if remainder > 1e-12 * dt and n_full < path.n_steps:
        z = segment(z, increments[n_full] / dt, remainder)
    return SpectralField(lat, z)


def weak_form_residual(
    traj: Trajectory,
    path: WienerPath,
    mode,
    t_index: int,
    nu: float,
    include_nonlinear: bool = True,
) -> float:
    """Residual of the time-integrated weak form for one test wavenumber.

    Pairs the equation against the (complex) mode functional, covering both
    real test functions of the wavenumber at once, and evaluates the time
    integrals with trapezoidal quadrature on the knot grid:

        | a_k(t_n) - a_k(0) - W_k(t_n)
          + int_0^{t_n} ( nu lam_k a_k(s) + b_k(s) ) ds |

    where ``b`` is the projected self-advection.  Zero for an exact
    solution up to quadrature and scheme error.  Pass
    ``include_nonlinear=False`` to check trajectories of the linear
    (Stokes) flow against the linear weak form.
    """
    if t_index < 0 or t_index >= traj.times.size:
        raise ConfigError(f"t_index {t_index} outside trajectory")
    lat = traj.lattice
    i1, i2 = lat.index_of(mode)
    lam_k = lat.eigenvalues[i1, i2]

    a_series = traj.states[: t_index + 1, i1, i2]
    if include_nonlinear:
        b_series = np.array(
            [
                nonlinear_term(SpectralField(lat, traj.states[n])).coeffs[i1, i2]
                for n in range(t_index + 1)
            ]
        )
    else:
        b_series = np.zeros_like(a_series)
    integrand = nu * lam_k * a_series + b_series
    integral = np.trapezoid(integrand, traj.times[: t_index + 1])
    resid = (
        a_series[-1]
        - a_series[0]
        - path.values[t_index, i1, i2]
        + integral
    )
    return float(abs(resid))
