"""Posterior uncertainty for differentiable 2D Gaussian-splat rendering.

Diagonal Fisher information (batch and online EMA), Laplace covariance,
delta-method propagation to pixels, object-masked scores and simulated
next-best-view planning.
"""

from .fisher import CovDiag, FisherDiag, NoiseModel, ema_update, fisher_diag_batch, fisher_full, laplace_cov, nll, nll_gradient
from .nbv import active_capture_loop, generate_candidates, select_next_view
from .propagation import object_pixel_cov, object_score, pixel_variance, truncation_bound, variance_heatmap
from .renderer import CameraPose, render, render_jacobian, splat_alpha, world_to_pixel
from .scene import GaussianSplat, SceneParams, flatten, perturb, unflatten
from .trainer import TrainConfig, sgd_step, train

__version__ = "0.1.0"
