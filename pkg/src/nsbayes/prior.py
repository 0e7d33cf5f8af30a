"""Gaussian priors on driving paths and initial conditions, and the pCN blend.

The path prior is a spatially correlated Brownian motion: independent
standard Brownian motions per spatial mode, scaled by per-mode standard
deviations ``sigma_k``.  The default rule ``sigma_k = pi^2 / |k|^2``
realises a squared-inverse-Stokes spatial covariance; the temporal factor
is plain Brownian covariance ``min(s, t)``, so sampling reduces to i.i.d.
Gaussian increments of variance ``dt * sigma_k^2`` per knot.

Complex-mode convention: real and imaginary parts of a mode amplitude each
carry variance ``dt * sigma_k^2 / 2``, so the per-mode energy matches the
scalar rule for the underlying real orthonormal basis.  The stated
``sigma_k`` assume the unit-norm basis of :mod:`nsbayes.spectral`; rescale
them when porting to another normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .forward import WienerPath
from .spectral import SpectralField, WavenumberLattice

SIGMA_RULES = ("pi2_over_lambda", "table")
TAU_RULES = ("pi2_over_lambda", "zero", "table")

TAIL_RATIO_THRESHOLD = 1.0e-3


def _per_mode_values(lattice, rule, table, what):
    lam = lattice.eigenvalues
    if rule == "pi2_over_lambda":
        with np.errstate(divide="ignore"):
            vals = np.where(lattice.mode_mask, np.pi**2 / np.where(lam > 0, lam, 1.0), 0.0)
        return vals
    if rule == "zero":
        return np.zeros_like(lam)
    if rule == "table":
        if table is None:
            raise ConfigError(f"{what} rule 'table' requires a table")
        mapping = {float(l): float(s) for l, s in table}
        vals = np.zeros_like(lam)
        for (i, j), l in np.ndenumerate(lam):
            if not lattice.mode_mask[i, j]:
                continue
            if float(l) not in mapping:
                raise ConfigError(f"{what} table missing eigenvalue {l}")
            vals[i, j] = mapping[float(l)]
        if np.any(vals < 0):
            raise ConfigError(f"{what} values must be nonnegative")
        return vals
    raise ConfigError(f"unknown {what} rule {rule!r}; expected one of {SIGMA_RULES}")


@dataclass
class PriorSpec:
    """Path prior: per-mode deviations plus the time grid they act on.

    Attributes:
        lattice: Spatial lattice.
        sigma: Per-mode standard deviations, shape ``(M, M)``, depending
            only on ``|k|`` for the built-in rules.
        horizon: Final time ``T``.
        dt: Knot spacing.
        epsilon: Regularity margin used by the summability check.
    """

    lattice: WavenumberLattice
    sigma: np.ndarray
    horizon: float
    dt: float
    epsilon: float = 0.25

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        m = self.lattice.modes_per_dim
        if sig.shape != (m, m):
            raise ConfigError("sigma array does not match lattice")
        if np.any(sig < 0):
            raise ConfigError("sigma values must be nonnegative")
        if self.horizon <= 0 or self.dt <= 0:
            raise ConfigError("horizon and dt must be positive")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(
                f"dt {self.dt} does not divide the horizon {self.horizon}"
            )
        sig = sig.copy()
        sig[~self.lattice.mode_mask] = 0.0
        if np.max(np.abs(sig - self.lattice.conjugate_flip(sig))) > 0:
            raise ConfigError("sigma must be symmetric under mode negation")
        self.sigma = sig

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def total_energy_rate(self) -> float:
        """Sum of ``sigma_k^2`` over the retained lattice."""
        return float(np.sum(self.sigma**2))


def make_prior(
    lattice: WavenumberLattice,
    horizon: float,
    dt: float,
    rule: str = "pi2_over_lambda",
    table=None,
    epsilon: float = 0.25,
) -> PriorSpec:
    """Build a path prior from a named per-mode deviation rule."""
    sigma = _per_mode_values(lattice, rule, table, "sigma")
    return PriorSpec(lattice, sigma, horizon, dt, epsilon)


@dataclass
class TraceClassReport:
    """Outcome of the covariance summability check."""

    passed: bool
    epsilon: float
    partial_sum: float
    tail_ratio: float
    tail_shell_radius: float

    def describe(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"summability check (epsilon={self.epsilon}): {verdict}\n"
            f"  truncated sum of sigma_k^2 lam_k^(1/2+eps): {self.partial_sum:.6e}\n"
            f"  outermost-shell share (|k| >= {self.tail_shell_radius:g}): "
            f"{self.tail_ratio:.3e} (threshold {TAIL_RATIO_THRESHOLD:g})"
        )


def check_trace_class(spec: PriorSpec, epsilon: float | None = None) -> TraceClassReport:
    """Check summability of ``sigma_k^2 lam_k^(1/2 + eps)`` at the truncation.

    The infinite sum itself is out of reach; as a proxy the truncated sum
    is reported together with the share contributed by the outermost
    occupied shell of ``floor(|k|)``.  A vanishing tail share (< 1e-3)
    indicates the shell sums decay and the series is effectively summable;
    deviations rules growing with ``|k|`` fail it.
    """
    if epsilon is None:
        epsilon = spec.epsilon
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    lat = spec.lattice
    mask = lat.mode_mask
    lam = np.where(mask, lat.eigenvalues, 1.0)
    terms = np.where(mask, spec.sigma**2 * lam ** (0.5 + epsilon), 0.0)
    total = float(np.sum(terms))
    shell = np.floor(np.sqrt(lam)).astype(int)
    shell[~mask] = -1
    outer = shell.max()
    tail = float(np.sum(terms[shell == outer]))
    ratio = tail / total if total > 0 else 0.0
    return TraceClassReport(
        passed=(ratio < TAIL_RATIO_THRESHOLD),
        epsilon=float(epsilon),
        partial_sum=total,
        tail_ratio=ratio,
        tail_shell_radius=float(outer),
    )


def _hermitian_gaussian(lattice, rng, scale, shape_prefix=()):
    """Independent centered Gaussians per mode with Hermitian symmetry.

    ``scale`` is the per-mode standard deviation of the full complex
    amplitude; real and imaginary parts get half the variance each, and
    self-conjugate modes come out real with full variance.
    """
    shape = (*shape_prefix, lattice.modes_per_dim, lattice.modes_per_dim)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    g = (re + 1j * im) * (scale / np.sqrt(2.0))
    h = (g + np.conj(lattice.conjugate_flip(g))) / np.sqrt(2.0)
    h[..., ~lattice.mode_mask] = 0.0
    return h


def sample_path(spec: PriorSpec, rng: np.random.Generator) -> WienerPath:
    """Draw a path from the prior: Gaussian increments, ``W(0) = 0``.

    Mode-``k`` increments are centered Gaussians of variance
    ``dt * sigma_k^2``, independent across knots and modes, with conjugate
    symmetry enforced.  The draw consumes a fixed number of variates, so
    results are reproducible per seed.
    """
    n = spec.n_steps
    scale = spec.sigma * np.sqrt(spec.dt)
    increments = _hermitian_gaussian(spec.lattice, rng, scale, (n,))
    m = spec.lattice.modes_per_dim
    values = np.zeros((n + 1, m, m), dtype=np.complex128)
    np.cumsum(increments, axis=0, out=values[1:])
    return WienerPath(spec.lattice, spec.times, values)


def pcn_blend(current: WienerPath, fresh: WienerPath, beta: float) -> WienerPath:
    """Autoregressive blend ``sqrt(1 - beta^2) current + beta fresh``.

    Applied knot- and mode-wise; maps two independent prior draws to a
    prior draw, which is what makes the pCN proposal prior-reversible.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    if not current.lattice.compatible_with(fresh.lattice):
        raise ConfigError("blend operands live on different lattices")
    if current.times.shape != fresh.times.shape or np.max(
        np.abs(current.times - fresh.times)
    ) > 1e-12:
        raise ConfigError("blend operands live on different knot grids")
    mixed = np.sqrt(1.0 - beta**2) * current.values + beta * fresh.values
    return WienerPath(current.lattice, current.times.copy(), mixed)


@dataclass
class InitialConditionPrior:
    """Centered Gaussian on initial velocity fields, per-mode deviations tau."""

    lattice: WavenumberLattice
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        m = self.lattice.modes_per_dim
        if tau.shape != (m, m):
            raise ConfigError("tau array does not match lattice")
        if np.any(tau < 0):
            raise ConfigError("tau values must be nonnegative")
        tau = tau.copy()
        tau[~self.lattice.mode_mask] = 0.0
        self.tau = tau

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.tau**2))


def make_initial_prior(
    lattice: WavenumberLattice,
    rule: str = "pi2_over_lambda",
    table=None,
) -> InitialConditionPrior:
    if rule not in TAU_RULES:
        raise ConfigError(f"unknown tau rule {rule!r}; expected one of {TAU_RULES}")
    tau = _per_mode_values(lattice, rule, table, "tau")
    return InitialConditionPrior(lattice, tau)


def sample_initial(
    icp: InitialConditionPrior, rng: np.random.Generator
) -> SpectralField:
    """Draw an initial field: per-mode variance ``tau_k^2``, symmetry enforced."""
    coeffs = _hermitian_gaussian(icp.lattice, rng, icp.tau)
    return SpectralField(icp.lattice, coeffs)


def blend_fields(
    current: SpectralField, fresh: SpectralField, beta: float
) -> SpectralField:
    """The pCN blend applied to an initial-condition component."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    if not current.lattice.compatible_with(fresh.lattice):
        raise ConfigError("blend operands live on different lattices")
    mixed = np.sqrt(1.0 - beta**2) * current.coeffs + beta * fresh.coeffs
    return SpectralField(current.lattice, mixed)
