"""Bayesian inference of white-noise forcing in 2D incompressible flow.

The package couples a pseudo-spectral solver for the stochastically forced
incompressible flow on the periodic box with a preconditioned
Crank-Nicolson sampler over driving Brownian paths, recovering the forcing
(and optionally the initial condition) from noisy velocity observations.
"""

from .config import RunConfig, load_config, preset
from .errors import BlowupError, ConfigError, NsbError, NumericalError, StorageError
from .forward import (
    Trajectory,
    WienerPath,
    solve_forward,
    step,
    stochastic_convolution,
    weak_form_residual,
)
from .mcmc import (
    ChainSettings,
    ChainState,
    ChainSummary,
    acceptance_probability,
    mcmc_step,
    run_chain,
)
from .observation import (
    GridObservationLikelihood,
    NullLikelihood,
    ObservationConfig,
    ObservationSet,
    forward_observe,
    misfit,
    synthesize_data,
)
from .prior import (
    InitialConditionPrior,
    PriorSpec,
    TraceClassReport,
    blend_fields,
    check_trace_class,
    make_initial_prior,
    make_prior,
    pcn_blend,
    sample_initial,
    sample_path,
)
from .spectral import (
    PhysicalField,
    SpectralField,
    WavenumberLattice,
    basis_field,
    build_lattice,
    grid_l2_norm,
    leray_project,
    nonlinear_term,
    read_field,
    reality_defect,
    sobolev_norm,
    to_physical,
    to_spectral,
    vorticity,
    write_field,
)

__version__ = "0.1.0"
