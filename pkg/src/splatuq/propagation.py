"""Delta-method propagation of a diagonal parameter covariance into pixel space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fisher import CovDiag
from .renderer import CameraPose, render_full
from .scene import SceneParams

MASK_FLOOR = 1e-6


class PropagationError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectScore:
    object_id: int
    view_id: int
    score: float
    pixel_count: int


def _cov_values(cov, d: int) -> np.ndarray:
    values = cov.values if isinstance(cov, CovDiag) else np.asarray(cov, dtype=float)
    if values.shape != (d,):
        raise PropagationError(f"dimension mismatch: covariance {values.shape}, Jacobian d={d}")
    return values


def pixel_variance(jac_u, cov) -> np.ndarray:
    """J_u diag(cov) J_u^T for one pixel (3x3) or a stack of pixels (P, 3, 3)."""
    jac = np.asarray(jac_u, dtype=float)
    values = _cov_values(cov, jac.shape[-1])
    out = np.einsum("...kd,d,...ld->...kl", jac, values, jac)
    # exact symmetry regardless of summation order
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def pixel_variance_trace(jacobians, cov) -> np.ndarray:
    """trace(J_u diag(cov) J_u^T) for each pixel of a (P, 3, d) stack."""
    jac = np.asarray(jacobians, dtype=float)
    values = _cov_values(cov, jac.shape[-1])
    return np.einsum("pkd,pkd->pd", jac, jac) @ values


def object_pixel_cov(jac_u, cov, mask_value: float) -> np.ndarray:
    if not 0.0 <= mask_value <= 1.0:
        raise PropagationError(f"mask value {mask_value} outside [0, 1]")
    return mask_value**2 * pixel_variance(jac_u, cov)


def score_from_maps(trace_map, mask, object_id: int, view_id: int = 0) -> ObjectScore:
    """Masked sum of per-pixel variance traces over pixels with mask above the floor."""
    trace_map = np.asarray(trace_map, dtype=float).ravel()
    mask = np.asarray(mask, dtype=float).ravel()
    sel = mask > MASK_FLOOR
    score = float(np.sum(mask[sel] ** 2 * trace_map[sel]))
    return ObjectScore(object_id, view_id, score, int(sel.sum()))


def view_scores(scene: SceneParams, camera: CameraPose, cov, objects=None, view_id: int = 0):
    """Scores for several objects from one render pass; returns (scores, heatmap)."""
    _, masks, jac = render_full(scene, camera)
    trace_map = pixel_variance_trace(jac, cov)
    ids = scene.object_ids if objects is None else list(objects)
    scores = []
    for k in ids:
        if k not in masks:
            raise PropagationError(f"unknown object id {k}")
        scores.append(score_from_maps(trace_map, masks[k], k, view_id))
    return scores, trace_map.reshape(camera.height, camera.width)


def object_score(scene: SceneParams, camera: CameraPose, cov, k: int, view_id: int = 0) -> ObjectScore:
    return view_scores(scene, camera, cov, [k], view_id)[0][0]


def variance_heatmap(scene: SceneParams, camera: CameraPose, cov) -> np.ndarray:
    _, _, jac = render_full(scene, camera)
    return pixel_variance_trace(jac, cov).reshape(camera.height, camera.width)


def truncation_bound(hessian_frobenius: float, cov_frobenius: float) -> float:
    """Leading term 1/4 ||H||_F ||Sigma||_F^2 of the first-order propagation error."""
    if hessian_frobenius < 0 or cov_frobenius < 0:
        raise PropagationError("norms must be nonnegative")
    return 0.25 * hessian_frobenius * cov_frobenius**2
