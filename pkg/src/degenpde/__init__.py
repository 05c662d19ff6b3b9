"""Finite-volume solvers for degenerate/singular parabolic systems.

A biomass density with degenerate-singular diffusion, coupled to mobile or
immobile substrates: Kirchhoff-transformed backward-Euler stepping, monotone
per-step elliptic solves, contraction-windowed fixed-point coupling, and the
qualitative diagnostics (comparison envelopes, blow-up detection, barrier
margins, front-regularity exponents).
"""

from .bounds import (
    BoundsReport,
    Classification,
    barrier_delta,
    bounds_report,
    classify,
    comparison_system,
    constant_state_blowup_time,
    hat_M,
)
from .coupling import (
    CoupledResult,
    CouplingConfig,
    SubstrateHistory,
    contraction_window,
    run_coupled,
    step_substrate_ode,
    step_substrate_pde,
)
from .elliptic import EllipticConfig, solve_poisson_barrier, solve_time_step
from .errors import (
    ConfigError,
    DomainError,
    FixedPointStall,
    MonotonicityViolation,
    NoFront,
    NonCauchyWarning,
    NonConvergence,
    OracleUnavailable,
    RangeError,
    SingularSystem,
    SolverError,
    TauTooLarge,
)
from .grid import (
    Field,
    StructuredGrid,
    apply_advection_upwind,
    apply_diffusion,
    face_velocities,
    integrate,
    read_snapshot,
    write_snapshot,
)
from .model import (
    AffineLaw,
    ConstantD,
    Kinetics,
    KirchhoffTransform,
    MixedD,
    PowerLaw,
    PowerLawSingular,
    Preset,
    ProblemSpec,
    RegularizedTransform,
    SubstrateD,
    SubstrateSpec,
    Tabulated,
    beta_eps,
    estimate_lipschitz,
    eval_D0,
    kirchhoff,
    kirchhoff_inv,
    monod,
    phi_eps,
    preset_cellulolytic2017,
    preset_eberl2001,
    preset_pme,
    zero_kinetics,
)
from .oracles import BarenblattSolution
from .regularity import (
    FrontFit,
    RegularityConfig,
    fit_front_exponent,
    psi_eps,
    theoretical_exponent,
    weighted_gradient_functional,
)
from .stepper import (
    EpsSchedule,
    TimeGrid,
    Trajectory,
    eval_interpolant,
    run_eps_continuation,
    run_M_given_S,
)

__version__ = "0.1.0"
