"""Front-to-back alpha compositing of 2D Gaussian splats and its exact Jacobian.

A camera is a similarity transform of the world plane onto a pixel grid.
Pixel ``(x, y)`` (column, row) is sampled at its center ``(x + 0.5, y + 0.5)``.

The Jacobian is the hand-derived chain rule of the compositing formula,
vectorized over pixels. With ``B_i`` the colour composited behind splat ``i``
(starting from transmittance 1) and ``T_i`` the transmittance in front of it::

    dC/d alpha_i = T_i * (c_i - B_{i+1})

so no division by ``1 - alpha`` is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .scene import PARAMS_PER_SPLAT, SceneParams

ALPHA_CAP = 0.999
FOOTPRINT_CUTOFF = 50.0  # squared Mahalanobis distance beyond which alpha is exactly 0


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    center: tuple[float, float]
    psi: float
    zoom: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "psi", float(self.psi))
        object.__setattr__(self, "zoom", float(self.zoom))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not (self.zoom > 0 and np.isfinite(self.zoom)):
            raise RenderError("camera zoom must be positive")
        if self.width < 1 or self.height < 1:
            raise RenderError("camera width and height must be >= 1")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def _rot(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def world_to_pixel(camera: CameraPose, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    offset = np.array([camera.width / 2.0, camera.height / 2.0])
    return camera.zoom * (x - np.asarray(camera.center)) @ _rot(-camera.psi).T + offset


def pixel_to_world(camera: CameraPose, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    offset = np.array([camera.width / 2.0, camera.height / 2.0])
    return (u - offset) @ _rot(camera.psi).T / camera.zoom + np.asarray(camera.center)


def pixel_grid(camera: CameraPose) -> np.ndarray:
    """All integer pixel indices ``(x, y)`` in row-major order, shape (H*W, 2)."""
    ys, xs = np.mgrid[0 : camera.height, 0 : camera.width]
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def pixel_centers(pixels) -> np.ndarray:
    return np.asarray(pixels, dtype=float) + 0.5


def _check_pixels(camera: CameraPose, pixels) -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[1] != 2:
        raise RenderError("pixels must be an (n, 2) array of (x, y) indices")
    x, y = pixels[:, 0], pixels[:, 1]
    bad = (x < 0) | (x >= camera.width) | (y < 0) | (y >= camera.height)
    if np.any(bad):
        raise RenderError(f"pixel {tuple(int(v) for v in pixels[np.argmax(bad)])} out of bounds")
    return pixels


class _Footprint:
    """Per-splat, per-pixel geometric terms for a (possibly batched) parameter array.

    ``params`` has shape (..., N, 9); ``pts`` has shape (P, 2) in continuous pixel
    coordinates. Every per-pixel array below has shape (..., N, P).
    """

    def __init__(self, params: np.ndarray, camera: CameraPose, pts: np.ndarray):
        zoom, psi = camera.zoom, camera.psi
        offset = np.array([camera.width / 2.0, camera.height / 2.0])
        mu = params[..., 0:2]
        self.scale = np.exp(params[..., 2:4])
        self.phi = params[..., 4]
        self.opacity = expit(params[..., 5])
        self.color = expit(params[..., 6:9])

        mean_px = zoom * (mu - np.asarray(camera.center)) @ _rot(-psi).T + offset
        dx = pts[:, 0] - mean_px[..., 0:1]
        dy = pts[:, 1] - mean_px[..., 1:2]
        ang = (self.phi - psi)[..., None]
        ca, sa = np.cos(ang), np.sin(ang)
        # offset expressed in the splat's principal frame, in pixels
        self.ex = ca * dx + sa * dy
        self.ey = -sa * dx + ca * dy
        self.psx = zoom * self.scale[..., 0:1]
        self.psy = zoom * self.scale[..., 1:2]
        self.qx = self.ex / self.psx
        self.qy = self.ey / self.psy
        self.m2 = self.qx**2 + self.qy**2

        self.visible = self.m2 <= FOOTPRINT_CUTOFF
        raw = self.opacity[..., None] * np.exp(-0.5 * np.where(self.visible, self.m2, 0.0))
        self.capped = raw > ALPHA_CAP
        self.alpha = np.where(self.visible, np.minimum(raw, ALPHA_CAP), 0.0)

    def alpha_gradients(self) -> np.ndarray:
        """d alpha / d(first six splat params), shape (6, ..., N, P)."""
        a = np.where(self.capped, 0.0, self.alpha)
        vx = self.qx / self.scale[..., 0:1]
        vy = self.qy / self.scale[..., 1:2]
        cp, sp = np.cos(self.phi)[..., None], np.sin(self.phi)[..., None]
        return np.stack(
            [
                a * (cp * vx - sp * vy),
                a * (sp * vx + cp * vy),
                a * self.qx**2,
                a * self.qy**2,
                -a * self.qx * self.qy * (self.psy / self.psx - self.psx / self.psy),
                a * (1.0 - self.opacity[..., None]),
            ]
        )


def _composite(alpha: np.ndarray, color: np.ndarray, background: np.ndarray):
    """Front-to-back compositing over the splat axis (-2).

    Returns (rgb (..., P, 3), weights (..., N, P), transmittance_in_front (..., N, P)).
    """
    one_minus = 1.0 - alpha
    trans = np.cumprod(one_minus, axis=-2)
    front = np.concatenate([np.ones_like(trans[..., :1, :]), trans[..., :-1, :]], axis=-2)
    weights = alpha * front
    rgb = np.einsum("...np,...nc->...pc", weights, color)
    rgb = rgb + trans[..., -1, :, None] * background
    return rgb, weights, front


def splat_alpha(splat, camera: CameraPose, u) -> float:
    """Opacity-weighted Gaussian falloff of one splat at continuous pixel coordinate ``u``."""
    params = splat.to_row()[None, :]
    fp = _Footprint(params, camera, np.asarray(u, dtype=float).reshape(1, 2))
    return float(fp.alpha[0, 0])


def render_points(params: np.ndarray, background, camera: CameraPose, pts: np.ndarray):
    """Composite colour and per-splat weights at continuous pixel coordinates.

    ``params`` may carry leading batch dimensions, (..., N, 9); this is what the
    Monte-Carlo and finite-difference oracles use to evaluate many parameter
    vectors at once.
    """
    params = np.asarray(params)
    if params.dtype.kind != "f":
        params = params.astype(float)
    fp = _Footprint(params, camera, np.asarray(pts, dtype=float))
    rgb, weights, _ = _composite(fp.alpha, fp.color, np.asarray(background, dtype=float))
    return rgb, weights


def render(scene: SceneParams, camera: CameraPose):
    """Render the full image and per-object soft masks.

    Returns ``(image, masks)`` with ``image`` of shape (H, W, 3) and ``masks`` a
    dict mapping object id to an (H, W) array of composited object weights.
    """
    pts = pixel_centers(pixel_grid(camera))
    rgb, weights = render_points(scene.param_matrix(), scene.background, camera, pts)
    image = rgb.reshape(camera.height, camera.width, 3)
    return image, _object_masks(scene, weights, camera)


def composite_weights(scene: SceneParams, camera: CameraPose):
    """Per-splat compositing weights (N, H, W) and the background weight (H, W)."""
    fp = _Footprint(scene.param_matrix(), camera, pixel_centers(pixel_grid(camera)))
    _, weights, _ = _composite(fp.alpha, fp.color, np.asarray(scene.background))
    shape = (camera.height, camera.width)
    return weights.reshape(-1, *shape), np.prod(1.0 - fp.alpha, axis=0).reshape(shape)


def _object_masks(scene: SceneParams, weights: np.ndarray, camera: CameraPose) -> dict:
    labels = scene.object_labels()
    return {
        k: weights[labels == k].sum(axis=0).reshape(camera.height, camera.width)
        for k in scene.object_ids
    }


def render_jacobian(scene: SceneParams, camera: CameraPose, pixels) -> np.ndarray:
    """Exact dC/dtheta at the given pixel indices, shape (P, 3, d)."""
    pixels = _check_pixels(camera, pixels)
    _, _, jac = _render_with_jacobian(scene, camera, pixel_centers(pixels))
    return jac


def render_full(scene: SceneParams, camera: CameraPose):
    """Image, masks and the full-image Jacobian (H*W, 3, d) in one pass.

    Jacobian rows follow ``pixel_grid`` order (row-major).
    """
    pts = pixel_centers(pixel_grid(camera))
    rgb, weights, jac = _render_with_jacobian(scene, camera, pts)
    image = rgb.reshape(camera.height, camera.width, 3)
    return image, _object_masks(scene, weights, camera), jac


def _render_with_jacobian(scene: SceneParams, camera: CameraPose, pts: np.ndarray):
    params = scene.param_matrix()
    bg = np.asarray(scene.background)
    n, p = params.shape[0], pts.shape[0]
    fp = _Footprint(params, camera, pts)
    rgb, weights, front = _composite(fp.alpha, fp.color, bg)

    # colour composited behind each splat, back to front: behind[i] = B_{i+1}
    behind = np.empty((n, p, 3))
    acc = np.broadcast_to(bg, (p, 3)).copy()
    for i in range(n - 1, -1, -1):
        behind[i] = acc
        a = fp.alpha[i][:, None]
        acc = a * fp.color[i] + (1.0 - a) * acc

    dC_dalpha = front[:, :, None] * (fp.color[:, None, :] - behind)  # (N, P, 3)
    dalpha = fp.alpha_gradients()  # (6, N, P)

    jac = np.zeros((p, 3, n, PARAMS_PER_SPLAT))
    jac[:, :, :, 0:6] = np.einsum("npc,knp->pcnk", dC_dalpha, dalpha)
    dcolor = weights[:, :, None] * (fp.color * (1.0 - fp.color))[:, None, :]  # (N, P, 3)
    for ch in range(3):
        jac[:, ch, :, 6 + ch] = dcolor[:, :, ch].T
    return rgb, weights, jac.reshape(p, 3, n * PARAMS_PER_SPLAT)
