"""Per-group SGD fit of a scene to posed images, with the online Fisher EMA."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fisher import DEFAULT_LAMBDA, FisherDiag, NoiseModel, ema_alpha, ema_update, nll, nll_gradient
from .renderer import CameraPose, render_full
from .scene import SceneParams, flatten, group_index, unflatten

DEFAULT_LEARNING_RATES = {
    "positions": 1e-3,
    "log_scales": 1e-3,
    "phi": 1e-3,
    "opacity": 5e-2,
    "color": 5e-2,
}


class TrainingDiverged(ArithmeticError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 200
    learning_rates: dict = field(default_factory=lambda: dict(DEFAULT_LEARNING_RATES))
    sigma: float = 1.0
    lam: float = DEFAULT_LAMBDA
    rng_seed: int = 0
    view_schedule: str = "round-robin"

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        rates = dict(DEFAULT_LEARNING_RATES)
        unknown = set(self.learning_rates) - set(rates)
        if unknown:
            raise ValueError(f"unknown learning-rate group(s): {sorted(unknown)}")
        rates.update(self.learning_rates)
        if any(not (v >= 0 and np.isfinite(v)) for v in rates.values()):
            raise ValueError("learning rates must be finite and nonnegative")
        object.__setattr__(self, "learning_rates", rates)
        if self.view_schedule not in ("round-robin", "random"):
            raise ValueError(f"unknown view schedule {self.view_schedule!r}")
        NoiseModel(self.sigma)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    view_id: int
    loss: float
    grad_norm: float
    alpha: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    gradients: list = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


def learning_rate_vector(dim: int, rates: dict) -> np.ndarray:
    groups = group_index(dim)
    return np.array([rates[g] for g in groups], dtype=float)


def sgd_step(theta, grad, rates) -> np.ndarray:
    """theta - lr * grad, with ``rates`` a per-group dict or an explicit length-d vector."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if theta.shape != grad.shape:
        raise ValueError(f"dimension mismatch: {theta.shape} vs {grad.shape}")
    lr = learning_rate_vector(theta.size, rates) if isinstance(rates, dict) else np.asarray(rates)
    if lr.shape != theta.shape:
        raise ValueError("dimension mismatch: learning-rate vector")
    return theta - lr * grad


def train(
    init: SceneParams,
    views: Sequence[tuple[CameraPose, np.ndarray]],
    config: TrainConfig = TrainConfig(),
    checkpoint: Optional[Callable[[int, SceneParams, FisherDiag], None]] = None,
    checkpoint_every: int = 0,
):
    """Fit ``init`` to ``views`` for ``config.total_steps`` steps (t = 1..T).

    Returns ``(scene, fisher, trace)``. Each step renders one view, takes a
    gradient step on its loss, and folds the same gradient into the Fisher EMA.
    """
    if not views:
        raise ValueError("at least one view is required")
    for cam, img in views:
        if np.shape(img) != (cam.height, cam.width, 3):
            raise ValueError(f"image shape {np.shape(img)} does not match camera")

    noise = NoiseModel(config.sigma)
    theta = flatten(init)
    lr = learning_rate_vector(theta.size, config.learning_rates)
    T = config.total_steps
    fisher = FisherDiag.zeros(theta.size, T)
    trace = TrainTrace()
    rng = np.random.default_rng(config.rng_seed)

    scene = init
    for t in range(1, T + 1):
        if config.view_schedule == "round-robin":
            v = (t - 1) % len(views)
        else:
            v = int(rng.integers(len(views)))
        cam, gt = views[v]
        pred, _, jac = render_full(scene, cam)
        loss = nll(pred, gt, noise)
        if not np.isfinite(loss):
            raise TrainingDiverged(t, loss)
        grad = nll_gradient(jac, pred, gt, noise)
        if not np.all(np.isfinite(grad)):
            raise TrainingDiverged(t, loss)
        theta = sgd_step(theta, grad, lr)
        fisher = ema_update(fisher, grad, t)
        scene = unflatten(theta, init)
        trace.records.append(
            TraceRecord(t, v, loss, float(np.linalg.norm(grad)), ema_alpha(t, T))
        )
        trace.gradients.append(grad)
        if checkpoint is not None and checkpoint_every > 0 and t % checkpoint_every == 0:
            checkpoint(t, scene, fisher)
    return scene, fisher, trace


def replay_ema(gradients, total_steps: int) -> FisherDiag:
    """Re-run the Fisher EMA over recorded per-step gradients (steps 1..T)."""
    gradients = list(gradients)
    state = FisherDiag.zeros(len(gradients[0]), total_steps)
    for t, g in enumerate(gradients, start=1):
        state = ema_update(state, g, t)
    return state
