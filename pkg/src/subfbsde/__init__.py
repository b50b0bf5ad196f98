"""Monte Carlo solvers for fully coupled FBSDEs driven by sub-diffusions.

The driving noise is a Brownian motion evaluated along the inverse of a
drift-positive subordinator; the solver walks a continuation parameter from
an explicitly solvable linear system to the target coupled system, running
a Picard recursion of regression Monte Carlo linear solves at each step.
"""

from .clock import (
    ClockPath,
    InsufficientHorizonError,
    SubordinatorSkeleton,
    SubordinatorSpec,
    TimeGrid,
    invert_clock,
    sample_clock_ensemble,
    sample_subordinator,
)
from .coefficients import (
    BUNDLE_NAMES,
    CoefficientBundle,
    ContinuationParams,
    HypothesisReport,
    PointCloud,
    check_hypothesis,
    continuation_transform,
    default_c1,
    eta0,
    get_bundle,
    mirror_bundle,
    register_bundle,
)
from .diagnostics import AprioriReport, MNormValue, apriori_ratio, contraction_fit, m_norm
from .fbsde_solver import (
    ContinuationConfig,
    DivergedError,
    SolveDiagnostics,
    picard_forcings,
    solve_fbsde,
    solve_level,
)
from .linear_solver import (
    ForcingSet,
    LinearWorkspace,
    SolutionTriple,
    apriori_linear_check,
    build_xi,
    solve_linear,
)
from .regression import (
    BasisSpec,
    CondExpEstimator,
    SingularSliceError,
    extract_z,
    fit_condexp,
    polynomial_features,
)
from .subdiffusion import (
    MarkovState,
    PathEnsemble,
    SubDiffusionPath,
    build_ensemble,
    markov_state,
    sample_subdiffusion,
)

__version__ = "0.1.0"
