"""Physics-informed networks for 1-D linear advection, trained under GD, ADAM,
LBFGS and BBI, with on-the-fly training-trajectory curvature telemetry."""

from .analysis import RunRecord, final_scatter, median_over_seeds, spearman
from .autodiff import eval_with_input_derivs, finite_diff_gradient, grad_params
from .errors import (
    ConfigurationError,
    DegenerateStartError,
    DivergenceError,
    DomainError,
    InsufficientDataError,
)
from .geom import CurvatureSample, CurvatureTracker, cosine_similarity, kappa_omega, kappa_t, track
from .model import (
    ARCHITECTURES,
    AdvectionProblem,
    LossBreakdown,
    MlpArchitecture,
    exact_solution,
    forward,
    grid_mse,
    init_params,
    param_count,
    pinn_loss,
    pinn_loss_and_grad,
    sample_dataset,
)
from .optim import OptimizerConfig
from .runner import ExperimentConfig, run_batch, run_single

__version__ = "0.1.0"
