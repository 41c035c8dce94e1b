"""Gaussian-noise likelihood, Fisher information and Laplace covariance.

Jacobians are passed around as a stacked array of shape (P, 3, d): one 3xd
block per pixel, in the canonical parameter layout of :mod:`splatuq.scene`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FULL_FIM_MAX_DIM = 200
DEFAULT_LAMBDA = 1e-4
EMA_ALPHA0 = 0.95


class FisherError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise FisherError("noise sigma must be positive and finite")

    @property
    def precision(self) -> float:
        return 1.0 / self.sigma**2


@dataclass(frozen=True)
class FisherDiag:
    values: np.ndarray
    step_count: int = 0
    total_steps: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise FisherError("Fisher diagonal must be a vector")
        if np.any(values < 0):
            raise FisherError("Fisher diagonal entries must be nonnegative")
        if self.step_count > self.total_steps:
            raise FisherError("step_count exceeds total_steps")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dim: int, total_steps: int) -> "FisherDiag":
        return cls(np.zeros(dim), 0, total_steps)


@dataclass(frozen=True)
class CovDiag:
    values: np.ndarray
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def scaled(self, s: float) -> "CovDiag":
        return CovDiag(self.values * s, self.lam)


def _as_jacobians(jacobians) -> np.ndarray:
    jac = np.asarray(jacobians, dtype=float)
    if jac.ndim == 2:
        jac = jac[None]
    if jac.ndim != 3 or jac.shape[1] != 3:
        raise FisherError("jacobians must have shape (P, 3, d)")
    return jac


def _check_images(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise FisherError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def nll(pred, gt, noise: NoiseModel = NoiseModel()) -> float:
    """Squared-error negative log-likelihood, summed over pixels and channels."""
    pred, gt = _check_images(pred, gt)
    return 0.5 * noise.precision * float(np.sum((pred - gt) ** 2))


def nll_gradient(jacobians, pred, gt, noise: NoiseModel = NoiseModel()) -> np.ndarray:
    """sum_u J_u^T (pred(u) - gt(u)) / sigma^2.

    ``pred``/``gt`` are flattened to (P, 3) in the same pixel order as ``jacobians``.
    """
    jac = _as_jacobians(jacobians)
    pred, gt = _check_images(pred, gt)
    resid = (pred - gt).reshape(-1, 3)
    if resid.shape[0] != jac.shape[0]:
        raise FisherError(
            f"dimension mismatch: {jac.shape[0]} Jacobians for {resid.shape[0]} pixels"
        )
    return noise.precision * np.einsum("pcd,pc->d", jac, resid)


def fisher_full(jacobians, noise: NoiseModel = NoiseModel()) -> np.ndarray:
    jac = _as_jacobians(jacobians)
    d = jac.shape[2]
    if d > FULL_FIM_MAX_DIM:
        raise FisherError("full FIM restricted to desk scale")
    stacked = jac.reshape(-1, d)
    return noise.precision * (stacked.T @ stacked)


def fisher_diag_values(jacobians, noise: NoiseModel = NoiseModel()) -> np.ndarray:
    jac = _as_jacobians(jacobians)
    return noise.precision * np.einsum("pcd,pcd->d", jac, jac)


def fisher_diag_batch(jacobians, noise: NoiseModel = NoiseModel()) -> FisherDiag:
    return FisherDiag(fisher_diag_values(jacobians, noise))


def ema_alpha(t: int, total_steps: int) -> float:
    """Mixing weight of the Fisher EMA: 0.95 at t = 0, decaying linearly to 0 at t = T."""
    if total_steps < 1:
        raise FisherError("total_steps must be >= 1")
    if t < 0 or t > total_steps:
        raise FisherError(f"step {t} outside [0, {total_steps}]")
    return EMA_ALPHA0 * (1.0 - t / total_steps)


def ema_update(state: FisherDiag, grad, t: int) -> FisherDiag:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.values.shape:
        raise FisherError(f"dimension mismatch: {grad.shape} vs {state.values.shape}")
    a = ema_alpha(t, state.total_steps)
    return FisherDiag(a * state.values + (1.0 - a) * grad**2, t, state.total_steps)


def laplace_cov(fisher: FisherDiag, lam: float = DEFAULT_LAMBDA) -> CovDiag:
    if not lam > 0:
        raise FisherError("lambda must be positive")
    return CovDiag(1.0 / (fisher.values + lam), lam)
