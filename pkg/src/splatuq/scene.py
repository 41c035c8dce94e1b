"""Scene parameterization: 2D Gaussian splats and the flat parameter vector.

Every splat owns nine optimized scalars, laid out per splat (in depth order)
as ``[mu_x, mu_y, log_sx, log_sy, phi, opacity_logit, r_logit, g_logit, b_logit]``.
Jacobian columns, Fisher entries and covariance entries all use this layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

PARAMS_PER_SPLAT = 9

PARAM_NAMES = (
    "mu_x",
    "mu_y",
    "log_sx",
    "log_sy",
    "phi",
    "opacity_logit",
    "r_logit",
    "g_logit",
    "b_logit",
)

# Learning-rate groups, indexed by position within a splat's 9-slot block.
PARAM_GROUPS = (
    "positions",
    "positions",
    "log_scales",
    "log_scales",
    "phi",
    "opacity",
    "color",
    "color",
    "color",
)


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianSplat:
    mu: tuple[float, float]
    log_scale: tuple[float, float]
    phi: float
    opacity_logit: float
    color_logit: tuple[float, float, float]
    depth_rank: int = 0
    object_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        object.__setattr__(self, "log_scale", tuple(float(v) for v in self.log_scale))
        object.__setattr__(self, "color_logit", tuple(float(v) for v in self.color_logit))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "opacity_logit", float(self.opacity_logit))
        object.__setattr__(self, "depth_rank", int(self.depth_rank))
        object.__setattr__(self, "object_id", int(self.object_id))
        if len(self.mu) != 2 or len(self.log_scale) != 2 or len(self.color_logit) != 3:
            raise SceneError("splat field has wrong arity")

    @property
    def opacity(self) -> float:
        return float(expit(self.opacity_logit))

    @property
    def color(self) -> np.ndarray:
        return expit(np.asarray(self.color_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_scale))

    def to_row(self) -> np.ndarray:
        return np.array(
            [*self.mu, *self.log_scale, self.phi, self.opacity_logit, *self.color_logit]
        )

    def with_row(self, row: Sequence[float]) -> "GaussianSplat":
        row = [float(v) for v in row]
        return GaussianSplat(
            mu=(row[0], row[1]),
            log_scale=(row[2], row[3]),
            phi=row[4],
            opacity_logit=row[5],
            color_logit=(row[6], row[7], row[8]),
            depth_rank=self.depth_rank,
            object_id=self.object_id,
        )


@dataclass(frozen=True)
class SceneParams:
    """An immutable scene. Splats are stored sorted by ``depth_rank`` (front first)."""

    splats: tuple[GaussianSplat, ...]
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        splats = tuple(sorted(self.splats, key=lambda s: s.depth_rank))
        ranks = [s.depth_rank for s in splats]
        if len(set(ranks)) != len(ranks):
            raise SceneError("depth_rank must be unique within a scene")
        bg = tuple(float(v) for v in self.background)
        if len(bg) != 3 or not all(0.0 <= v <= 1.0 for v in bg):
            raise SceneError("background must be an RGB triple in [0, 1]")
        object.__setattr__(self, "splats", splats)
        object.__setattr__(self, "background", bg)

    def __len__(self) -> int:
        return len(self.splats)

    @property
    def dim(self) -> int:
        return PARAMS_PER_SPLAT * len(self.splats)

    @property
    def object_ids(self) -> list[int]:
        return sorted({s.object_id for s in self.splats})

    def param_matrix(self) -> np.ndarray:
        """(N, 9) array of optimized parameters, one row per splat in depth order."""
        if not self.splats:
            raise SceneError("empty scene")
        return np.stack([s.to_row() for s in self.splats])

    def object_labels(self) -> np.ndarray:
        return np.array([s.object_id for s in self.splats], dtype=int)

    def param_slice(self, splat_index: int) -> slice:
        start = PARAMS_PER_SPLAT * splat_index
        return slice(start, start + PARAMS_PER_SPLAT)


def flatten(scene: SceneParams) -> np.ndarray:
    if len(scene.splats) == 0:
        raise SceneError("empty scene")
    return scene.param_matrix().reshape(-1)


def unflatten(theta, template: SceneParams) -> SceneParams:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size != template.dim:
        raise SceneError(
            f"dimension mismatch: got {theta.size} values for {len(template)} splats"
        )
    rows = theta.reshape(-1, PARAMS_PER_SPLAT)
    splats = tuple(s.with_row(r) for s, r in zip(template.splats, rows))
    return SceneParams(splats=splats, background=template.background)


def perturb(theta, delta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if theta.shape != delta.shape:
        raise SceneError(f"dimension mismatch: {theta.shape} vs {delta.shape}")
    return theta + delta


def group_index(dim: int) -> np.ndarray:
    """Learning-rate group name for every entry of a length-``dim`` vector."""
    if dim % PARAMS_PER_SPLAT:
        raise SceneError("dimension mismatch: length is not a multiple of 9")
    return np.array(PARAM_GROUPS * (dim // PARAMS_PER_SPLAT))
