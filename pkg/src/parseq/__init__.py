"""parseq: parallel evaluation of nonlinear state space models, with
predictability diagnostics that tell you when it is worth doing."""

from .core import (
    DynamicsModel,
    Residual,
    Trajectory,
    load_trajectory_csv,
    merit,
    merit_gradient,
    residual,
    save_trajectory_csv,
    sequential_rollout,
)
from .scan import AffinePair, MultiplyCounter, affine_scan, affine_scan_diag, combine, identity_pair
from .solvers import (
    SolveAborted,
    SolverConfig,
    SolverReport,
    deer_solve,
    gd_solve,
    quasi_deer_solve,
)
from .analysis import (
    ConditioningReport,
    basin_radius,
    build_full_jacobian,
    conditioning_report,
    estimate_lle,
    estimate_lipschitz,
    fit_convergence_rate,
    measure_burn_in,
    neumann_inverse_norm_check,
    pl_bounds,
    predict_steps,
    tilde_mu,
)
from . import linalg, systems

__version__ = "0.1.0"
