"""Deterministic benchmark scenes and their camera rigs.

``one-splat``    minimal scene, one splat.
``three-splat``  three large, strongly anisotropic, overlapping splats that fill
                 the 32x32 benchmark view. No benchmark pixel lies in a splat's
                 far tail, so central differences stay above round-off there.
``two-object``   object A (id 0) near (-4, 0), object B (id 1) near (4, 0).
                 The four training views orbit A and never see B's footprint
                 (Mahalanobis distance^2 > 50 everywhere), so B's Fisher entries
                 are exactly zero after training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .renderer import CameraPose
from .scene import GaussianSplat, SceneParams, flatten, unflatten

PRESETS = ("one-splat", "three-splat", "two-object")


@dataclass(frozen=True)
class Preset:
    name: str
    scene: SceneParams
    training_cameras: tuple
    candidate_spec: dict
    heldout_cameras: tuple
    benchmark_camera: CameraPose
    benchmark_pixels: tuple = ()


def ring_cameras(center, radius: float, n: int, zoom: float, width: int, height: int, phase: float = 0.0):
    """``n`` poses on a circle, pose i at angle ``phase + 2*pi*i/n``.

    Each camera is rotated so that image "up" (decreasing pixel y) points at
    the ring center.
    """
    if n < 1:
        raise ValueError("ring needs n >= 1 poses")
    cx, cy = center
    cams = []
    for i in range(n):
        a = phase + 2.0 * np.pi * i / n
        cams.append(
            CameraPose(
                center=(cx + radius * np.cos(a), cy + radius * np.sin(a)),
                psi=a - np.pi / 2.0,
                zoom=zoom,
                width=width,
                height=height,
            )
        )
    return tuple(cams)


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


def _splat(mu, scale, phi, opacity, color, rank, obj=0):
    return GaussianSplat(
        mu=mu,
        log_scale=tuple(np.log(scale)),
        phi=phi,
        opacity_logit=float(_logit(opacity)),
        color_logit=tuple(_logit(color)),
        depth_rank=rank,
        object_id=obj,
    )


def _one_splat() -> Preset:
    scene = SceneParams(
        (_splat((0.13, -0.07), (1.2, 0.7), 0.4, 0.8, (0.8, 0.3, 0.2), 0),),
        background=(0.1, 0.1, 0.15),
    )
    cam = CameraPose((0.03, -0.02), 0.1, 8.0, 32, 32)
    return Preset(
        name="one-splat",
        scene=scene,
        training_cameras=ring_cameras((0.0, 0.0), 0.25, 4, 8.0, 32, 32),
        candidate_spec={"kind": "ring", "center": (0.0, 0.0), "radius": 0.25, "n": 4, "zoom": 8.0, "width": 32, "height": 32},
        heldout_cameras=(cam,),
        benchmark_camera=cam,
        benchmark_pixels=((16, 16), (10, 20), (22, 12)),
    )


def _three_splat() -> Preset:
    scene = SceneParams(
        (
            _splat((0.31, -0.17), (1.45, 0.85), 0.35, 0.55, (0.85, 0.25, 0.2), 0, 0),
            _splat((-0.42, 0.23), (0.95, 1.7), -0.6, 0.6, (0.2, 0.75, 0.3), 1, 1),
            _splat((0.07, 0.41), (1.6, 1.05), 1.2, 0.7, (0.25, 0.3, 0.8), 2, 2),
        ),
        background=(0.15, 0.12, 0.1),
    )
    cam = CameraPose((0.037, -0.021), 0.13, 8.0, 32, 32)
    return Preset(
        name="three-splat",
        scene=scene,
        training_cameras=ring_cameras((0.0, 0.0), 0.25, 4, 8.0, 32, 32),
        candidate_spec={"kind": "ring", "center": (0.0, 0.0), "radius": 0.25, "n": 4, "zoom": 8.0, "width": 32, "height": 32},
        heldout_cameras=(cam,),
        benchmark_camera=cam,
        benchmark_pixels=((16, 16), (5, 9), (25, 7), (11, 26), (28, 22)),
    )


def _two_object() -> Preset:
    a = (-4.0, 0.0)
    b = (4.0, 0.0)
    scene = SceneParams(
        (
            _splat((a[0] + 0.25, a[1] - 0.1), (0.5, 0.3), 0.3, 0.8, (0.85, 0.2, 0.15), 0, 0),
            _splat((a[0] - 0.2, a[1] + 0.2), (0.35, 0.45), -0.5, 0.75, (0.9, 0.7, 0.2), 1, 0),
            _splat((b[0] - 0.2, b[1] + 0.15), (0.45, 0.3), 0.8, 0.8, (0.15, 0.3, 0.85), 2, 1),
            _splat((b[0] + 0.25, b[1] - 0.2), (0.3, 0.45), -0.2, 0.75, (0.2, 0.8, 0.6), 3, 1),
        ),
        background=(0.05, 0.05, 0.05),
    )
    heldout = (
        CameraPose(a, 0.3, 8.0, 32, 32),
        CameraPose((a[0] + 0.2, a[1] - 0.1), 1.9, 8.0, 32, 32),
        CameraPose(b, 0.3, 8.0, 32, 32),
        CameraPose((b[0] - 0.2, b[1] + 0.1), 1.9, 8.0, 32, 32),
    )
    return Preset(
        name="two-object",
        scene=scene,
        training_cameras=ring_cameras(a, 0.5, 4, 8.0, 32, 32),
        candidate_spec={"kind": "ring", "center": (0.0, 0.0), "radius": 4.0, "n": 8, "zoom": 8.0, "width": 32, "height": 32},
        heldout_cameras=heldout,
        benchmark_camera=heldout[2],
    )


def get_preset(name: str) -> Preset:
    builders = {"one-splat": _one_splat, "three-splat": _three_splat, "two-object": _two_object}
    if name not in builders:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return builders[name]()


def initial_guess(scene: SceneParams, seed: int) -> SceneParams:
    """Seeded starting point for fitting: geometry jittered, colours re-drawn."""
    rng = np.random.default_rng(seed)
    rows = flatten(scene).reshape(-1, 9).copy()
    n = rows.shape[0]
    rows[:, 0:2] += rng.normal(0.0, 0.05, (n, 2))
    rows[:, 2:4] += rng.normal(0.0, 0.05, (n, 2))
    rows[:, 4] += rng.normal(0.0, 0.05, n)
    rows[:, 5] += rng.normal(0.0, 0.3, n)
    rows[:, 6:9] = rng.normal(0.0, 1.0, (n, 3))
    return unflatten(rows.ravel(), scene)
