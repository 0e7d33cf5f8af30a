"""Preconditioned Crank-Nicolson Metropolis-Hastings over driving paths.

The proposal blends the current path (and, in joint mode, the initial
condition) with a fresh prior draw; because the blend preserves the prior,
the acceptance probability depends only on the change in the data misfit.
One misfit evaluation — hence one forward solve — is performed per step.

Likelihood objects are duck-typed: anything with
``evaluate(u0, path) -> (float, trajectory_or_None)`` and an ``n_evals``
counter works, which keeps reduced observation designs pluggable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError, ConfigError, NumericalError
from .forward import WienerPath
from .observation import NullLikelihood
from .prior import (
    InitialConditionPrior,
    PriorSpec,
    blend_fields,
    pcn_blend,
    sample_initial,
    sample_path,
)
from .spectral import SpectralField

logger = logging.getLogger(__name__)


def acceptance_probability(phi_current: float, phi_proposed: float) -> float:
    """Metropolis ratio ``min(1, exp(phi_current - phi_proposed))``.

    ``+inf`` proposals (e.g. solver blow-up) give probability zero; a
    large negative exponent would overflow, so the result is clamped to 1.
    """
    if math.isnan(phi_current) or math.isnan(phi_proposed):
        raise NumericalError("NaN misfit in acceptance probability")
    if phi_proposed <= phi_current:
        return 1.0
    diff = phi_current - phi_proposed
    return math.exp(diff) if diff > -745.0 else 0.0


@dataclass
class ChainState:
    """Current sampler state with its cached misfit and trajectory."""

    path: WienerPath
    u0: SpectralField
    phi: float
    trajectory: object
    iteration: int
    beta: float
    accepted: bool = True


def mcmc_step(
    state: ChainState,
    likelihood,
    prior: PriorSpec,
    rng: np.random.Generator,
    ic_prior: InitialConditionPrior | None = None,
) -> ChainState:
    """Advance the chain by one pCN Metropolis step.

    Draws a fresh prior path (and initial condition in joint mode), blends
    with step size ``state.beta``, evaluates the misfit once, and accepts
    or rejects.  A solver blow-up on the proposal counts as infinite
    misfit and is rejected.  The random stream is consumed identically on
    both branches: path draw, optional initial draw, then one uniform.
    """
    fresh = sample_path(prior, rng)
    proposal_path = pcn_blend(state.path, fresh, state.beta)
    if ic_prior is not None:
        fresh0 = sample_initial(ic_prior, rng)
        proposal_u0 = blend_fields(state.u0, fresh0, state.beta)
    else:
        proposal_u0 = state.u0

    try:
        phi_prop, traj_prop = likelihood.evaluate(proposal_u0, proposal_path)
    except BlowupError as exc:
        logger.warning("proposal rejected after solver blow-up: %s", exc)
        phi_prop, traj_prop = math.inf, None

    alpha = acceptance_probability(state.phi, phi_prop)
    u = rng.uniform()
    if u < alpha:
        return ChainState(
            path=proposal_path,
            u0=proposal_u0,
            phi=phi_prop,
            trajectory=traj_prop,
            iteration=state.iteration + 1,
            beta=state.beta,
            accepted=True,
        )
    return ChainState(
        path=state.path,
        u0=state.u0,
        phi=state.phi,
        trajectory=state.trajectory,
        iteration=state.iteration + 1,
        beta=state.beta,
        accepted=False,
    )


class RunningMoments:
    """One-pass mean/variance accumulator for complex arrays (Welford).

    Real and imaginary parts keep separate second-moment accumulators so
    per-component variances are available; ``merge`` combines accumulators
    from independent chains associatively.
    """

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape, dtype=np.complex128)
        self.m2_re = np.zeros(shape, dtype=float)
        self.m2_im = np.zeros(shape, dtype=float)

    def update(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        delta2 = x - self.mean
        self.m2_re += delta.real * delta2.real
        self.m2_im += delta.imag * delta2.imag

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        out = RunningMoments(self.mean.shape)
        n = self.n + other.n
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.n = n
        out.mean = self.mean + delta * (other.n / n)
        w = self.n * other.n / n
        out.m2_re = self.m2_re + other.m2_re + delta.real**2 * w
        out.m2_im = self.m2_im + other.m2_im + delta.imag**2 * w
        return out

    def variance_re(self) -> np.ndarray:
        return self.m2_re / max(self.n - 1, 1)

    def variance_im(self) -> np.ndarray:
        return self.m2_im / max(self.n - 1, 1)

    def std_combined(self) -> np.ndarray:
        """Standard deviation combining both components, ``sqrt(var_re + var_im)``."""
        return np.sqrt(self.variance_re() + self.variance_im())


@dataclass
class ChainSettings:
    """Operational knobs of one chain run."""

    iterations: int
    beta: float
    burn_in: int
    thin: int
    watch_modes: tuple
    joint: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.burn_in < 0 or self.burn_in > self.iterations:
            raise ConfigError("burn-in must lie within the iteration budget")
        if self.thin < 1:
            raise ConfigError("thinning interval must be >= 1")
        if not self.watch_modes:
            raise ConfigError("at least one watch mode is required")
        self.watch_modes = tuple((int(a), int(b)) for a, b in self.watch_modes)


@dataclass
class ChainSummary:
    """Online statistics and traces accumulated over a chain run.

    ``w_moments``/``u_moments`` hold per-knot, per-mode moments of the path
    and of the solution trajectory (the latter only when the likelihood
    produces trajectories).  ``phi_trace`` and ``watch_w`` record every
    iteration; statistics honour burn-in and thinning.
    """

    times: np.ndarray
    watch_modes: tuple
    beta: float
    burn_in: int
    thin: int
    n_iterations: int = 0
    accept_count: int = 0
    w_moments: RunningMoments | None = None
    u_moments: RunningMoments | None = None
    has_u_stats: bool = False
    phi_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    watch_w: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))

    @property
    def acceptance_rate(self) -> float:
        if self.n_iterations == 0:
            return float("nan")
        return self.accept_count / self.n_iterations

    @property
    def n_recorded(self) -> int:
        return 0 if self.w_moments is None else self.w_moments.n

    def merge(self, other: "ChainSummary") -> "ChainSummary":
        """Combine statistics of two independent chains (traces dropped)."""
        if self.times.shape != other.times.shape or self.watch_modes != other.watch_modes:
            raise ConfigError("cannot merge summaries from different setups")
        out = ChainSummary(
            times=self.times,
            watch_modes=self.watch_modes,
            beta=self.beta,
            burn_in=self.burn_in,
            thin=self.thin,
        )
        out.n_iterations = self.n_iterations + other.n_iterations
        out.accept_count = self.accept_count + other.accept_count
        if self.w_moments is not None and other.w_moments is not None:
            out.w_moments = self.w_moments.merge(other.w_moments)
        if self.has_u_stats and other.has_u_stats:
            out.u_moments = self.u_moments.merge(other.u_moments)
            out.has_u_stats = True
        return out


def run_chain(
    settings: ChainSettings,
    likelihood,
    prior: PriorSpec,
    rng: np.random.Generator,
    *,
    u0: SpectralField | None = None,
    ic_prior: InitialConditionPrior | None = None,
    trace_writer=None,
    checkpoint_saver=None,
    resume_payload: dict | None = None,
) -> tuple[ChainSummary, ChainState]:
    """Run a pCN chain with burn-in, thinning, and online statistics.

    Args:
        settings: Iteration budget and sampler knobs.
        likelihood: Misfit evaluator (see module docstring).
        prior: Path prior; also provides the knot grid.
        rng: Chain random generator (consumed deterministically).
        u0: Fixed initial condition for forcing-only inference (defaults
            to zero); ignored as a starting value in joint mode, where the
            initial condition is drawn from ``ic_prior``.
        ic_prior: Required when ``settings.joint`` is set.
        trace_writer: Optional sink with a ``row(iteration, phi, accepted,
            watch_values)`` method, called every iteration.
        checkpoint_saver: Optional callable ``(state, summary, rng)``
            invoked every ``settings.checkpoint_every`` iterations.
        resume_payload: Restored chain snapshot (see ``storage``); the run
            continues bit-identically to an uninterrupted one.

    Returns:
        The accumulated summary and the final state.
    """
    if settings.joint and ic_prior is None:
        raise ConfigError("joint mode requires an initial-condition prior")
    lattice = prior.lattice
    watch_idx = [lattice.index_of(mode) for mode in settings.watch_modes]
    m = lattice.modes_per_dim
    n_knots = prior.n_steps + 1

    summary = ChainSummary(
        times=prior.times,
        watch_modes=settings.watch_modes,
        beta=settings.beta,
        burn_in=settings.burn_in,
        thin=settings.thin,
    )
    summary.phi_trace = np.zeros(settings.iterations)
    summary.watch_w = np.zeros((settings.iterations, len(watch_idx)), complex)
    summary.w_moments = RunningMoments((n_knots, m, m))
    summary.u_moments = RunningMoments((n_knots, m, m))

    if resume_payload is None:
        start_path = sample_path(prior, rng)
        if settings.joint:
            start_u0 = sample_initial(ic_prior, rng)
        else:
            start_u0 = u0 if u0 is not None else SpectralField.zeros(lattice)
        phi0, traj0 = likelihood.evaluate(start_u0, start_path)
        state = ChainState(
            path=start_path,
            u0=start_u0,
            phi=phi0,
            trajectory=traj0,
            iteration=0,
            beta=settings.beta,
        )
    else:
        state, rng = _restore(resume_payload, summary, likelihood, prior, rng)

    ic = ic_prior if settings.joint else None
    while state.iteration < settings.iterations:
        state = mcmc_step(state, likelihood, prior, rng, ic_prior=ic)
        it = state.iteration - 1  # completed iteration index
        summary.n_iterations = state.iteration
        summary.accept_count += int(state.accepted)
        summary.phi_trace[it] = state.phi
        summary.watch_w[it] = [state.path.values[-1][ij] for ij in watch_idx]

        if it >= settings.burn_in and (it - settings.burn_in) % settings.thin == 0:
            summary.w_moments.update(state.path.values)
            if state.trajectory is not None:
                summary.u_moments.update(state.trajectory.states)
                summary.has_u_stats = True

        if trace_writer is not None:
            trace_writer.row(it, state.phi, state.accepted, summary.watch_w[it])

        if (
            checkpoint_saver is not None
            and settings.checkpoint_every > 0
            and state.iteration % settings.checkpoint_every == 0
        ):
            checkpoint_saver(state, summary, rng)

    summary.phi_trace = summary.phi_trace[: summary.n_iterations]
    summary.watch_w = summary.watch_w[: summary.n_iterations]
    if not summary.has_u_stats:
        summary.u_moments = None
    return summary, state


def _restore(payload, summary, likelihood, prior, rng):
    """Rebuild chain state and accumulators from a checkpoint payload."""
    state = ChainState(
        path=WienerPath(prior.lattice, prior.times, payload["path_values"]),
        u0=SpectralField(prior.lattice, payload["u0"]),
        phi=float(payload["phi"]),
        trajectory=None,
        iteration=int(payload["iteration"]),
        beta=float(payload["beta"]),
        accepted=bool(payload["accepted"]),
    )
    # Re-derive the cached trajectory and audit the stored misfit.
    if not isinstance(likelihood, NullLikelihood):
        phi_check, traj = likelihood.evaluate(state.u0, state.path)
        likelihood.n_evals -= 1  # audit solve, not a chain step
        rel = abs(phi_check - state.phi) / max(1.0, abs(state.phi))
        if rel > 1e-10:
            raise NumericalError(
                f"checkpoint misfit {state.phi} disagrees with recomputation "
                f"{phi_check} (relative error {rel:.2e})"
            )
        state.trajectory = traj

    summary.n_iterations = state.iteration
    summary.accept_count = int(payload["accept_count"])
    n = state.iteration
    summary.phi_trace[:n] = payload["phi_trace"]
    summary.watch_w[:n] = payload["watch_w"]
    wm = summary.w_moments
    wm.n = int(payload["w_n"])
    wm.mean = payload["w_mean"].copy()
    wm.m2_re = payload["w_m2_re"].copy()
    wm.m2_im = payload["w_m2_im"].copy()
    if bool(payload["has_u"]):
        um = summary.u_moments
        um.n = int(payload["u_n"])
        um.mean = payload["u_mean"].copy()
        um.m2_re = payload["u_m2_re"].copy()
        um.m2_im = payload["u_m2_im"].copy()
        summary.has_u_stats = True

    import json

    restored = np.random.Generator(np.random.PCG64())
    restored.bit_generator.state = json.loads(str(payload["rng_state"]))
    return state, restored


def batch_mean_se(series: np.ndarray, n_batches: int = 32) -> tuple[float, float]:
    """Chain-average and its Monte Carlo standard error via batch means."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 2 * n_batches:
        raise ConfigError("series too short for the requested batch count")
    length = n // n_batches
    trimmed = series[n - n_batches * length :]
    batches = trimmed.reshape(n_batches, length).mean(axis=1)
    se = float(np.std(batches, ddof=1) / np.sqrt(n_batches))
    return float(np.mean(trimmed)), se


def batch_variance_se(series: np.ndarray, n_batches: int = 32) -> tuple[float, float]:
    """Sample variance about the global mean, with a batch-means error bar."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 2 * n_batches:
        raise ConfigError("series too short for the requested batch count")
    length = n // n_batches
    trimmed = series[n - n_batches * length :]
    centered = (trimmed - trimmed.mean()) ** 2
    batches = centered.reshape(n_batches, length).mean(axis=1)
    se = float(np.std(batches, ddof=1) / np.sqrt(n_batches))
    return float(centered.mean()), se
