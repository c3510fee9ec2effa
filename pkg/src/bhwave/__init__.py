"""Blow-up laboratory for damped semilinear waves outside a static black hole.

Modules:
    geometry      closed-form background, coordinates, exponents
    testfuncs     certified dual test functions and their averages
    solver        explicit evolution of the reduced 1+1-d equation
    certificates  cutoffs and proof functionals as diagnostics
    experiments   amplitude sweeps, lifespan fits, consistency verdicts
    cli           command-line entry point
"""

from .errors import (
    CertificateError,
    ConeViolationError,
    ConfigError,
    DomainError,
    InstabilityError,
    InsufficientSnapshotsError,
    InsufficientSpanError,
    IntegrationError,
    QuadratureError,
)
from .geometry import (
    CriticalExponents,
    GeometryParams,
    LifespanLaw,
    amplitude_weight,
    background_tables,
    critical_exponents,
    fj_coefficient,
    lapse,
    lifespan_law,
    ode_blowup_bound,
    profiles,
    reduced_potential,
    sphere_area,
    tortoise,
    tortoise_gap,
    tortoise_inverse,
)
from .testfuncs import (
    LambdaAverageTable,
    ModeFamily,
    TestFunction,
    build_lambda_average,
    radial_mode,
    solve_exp_mode,
    solve_static_weight,
    verify_lambda_average,
)
from .solver import (
    CoefficientTables,
    Grid1D,
    InitialData,
    RunResult,
    energy,
    make_grid,
    make_initial_data,
    rhs_nonlinearity,
    run,
    run_refined,
    support_extent,
)
from .certificates import (
    Cutoffs,
    FunctionalReport,
    ZReport,
    glassey_monitor,
    initial_functionals,
    make_cutoffs,
    smooth_step,
    solution_functionals,
)
from .experiments import (
    FitResult,
    SweepConfig,
    SweepRecord,
    Verdict,
    compare_theorem,
    fit_lifespan,
    run_sweep,
)

__version__ = "0.1.0"
