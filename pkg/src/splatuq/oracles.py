"""Brute-force reference computations used to check the analytic paths.

None of these call into the analytic Jacobian: derivatives come from central
differences of ``render_points`` and pixel covariances from Monte-Carlo
sampling of the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .fisher import FULL_FIM_MAX_DIM, NoiseModel
from .renderer import CameraPose, render_points
from .scene import PARAMS_PER_SPLAT, SceneParams, flatten

MC_CHUNK = 10_000


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 100_000
    rng_seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise OracleError("need at least 2 Monte-Carlo samples")
        if not self.scale > 0:
            raise OracleError("covariance scale must be positive")


def _color_at(thetas: np.ndarray, scene: SceneParams, camera: CameraPose, pts: np.ndarray) -> np.ndarray:
    """Colour at ``pts`` for a batch of flat parameter vectors, shape (B, P, 3)."""
    params = thetas.reshape(thetas.shape[0], -1, PARAMS_PER_SPLAT)
    rgb, _ = render_points(params, scene.background, camera, pts)
    return rgb


def _pixel_point(pixel) -> np.ndarray:
    return np.asarray(pixel, dtype=float).reshape(1, 2) + 0.5


def fd_jacobian(scene: SceneParams, camera: CameraPose, pixel, h: float = 1e-5, dtype=np.float64) -> np.ndarray:
    """Central-difference dC/dtheta at one pixel, shape (3, d).

    ``dtype=np.longdouble`` evaluates the renderer in extended precision, which
    pushes the round-off floor well below that of 64-bit differencing.
    """
    if not h > 0:
        raise OracleError("step h must be positive")
    theta = flatten(scene).astype(dtype)
    d = theta.size
    step = np.eye(d, dtype=dtype) * dtype(h)
    both = np.concatenate([theta + step, theta - step])
    rgb = _color_at(both, scene, camera, _pixel_point(pixel).astype(dtype))[:, 0, :]
    return ((rgb[:d] - rgb[d:]) / (2 * dtype(h))).T.astype(np.float64)


def fd_hessian(scene: SceneParams, camera: CameraPose, pixel, h: float = 1e-4) -> np.ndarray:
    """Second-order central-difference Hessian of each channel, shape (3, d, d)."""
    theta = flatten(scene)
    d = theta.size
    if d > FULL_FIM_MAX_DIM:
        raise OracleError("Hessian oracle restricted to desk scale")
    if not h > 0:
        raise OracleError("step h must be positive")
    pts = _pixel_point(pixel)
    eye = np.eye(d) * h
    pp = theta + eye[:, None, :] + eye[None, :, :]
    pm = theta + eye[:, None, :] - eye[None, :, :]
    mp = theta - eye[:, None, :] + eye[None, :, :]
    mm = theta - eye[:, None, :] - eye[None, :, :]
    batch = np.concatenate([a.reshape(-1, d) for a in (pp, pm, mp, mm)])
    rgb = _color_at(batch, scene, camera, pts)[:, 0, :].reshape(4, d, d, 3)
    hess = (rgb[0] - rgb[1] - rgb[2] + rgb[3]) / (4.0 * h * h)
    hess = np.moveaxis(hess, -1, 0)
    return 0.5 * (hess + np.swapaxes(hess, 1, 2))


def fd_hessian_frobenius(scene: SceneParams, camera: CameraPose, pixel, h: float = 1e-4) -> float:
    """Root-sum-square of the three channel Hessians' Frobenius norms."""
    return float(np.sqrt(np.sum(fd_hessian(scene, camera, pixel, h) ** 2)))


def _chunk_seeds(seed: int, n_samples: int):
    n_chunks = -(-n_samples // MC_CHUNK)
    return np.random.SeedSequence(seed).spawn(n_chunks)


def mc_pixel_samples(scene: SceneParams, camera: CameraPose, pixels, cov, mc: McConfig) -> np.ndarray:
    """Rendered colours at ``pixels`` for theta ~ N(theta*, s * diag(cov)), shape (n, P, 3).

    Samples are drawn in fixed-size chunks, each from its own spawned seed, so
    the draw does not depend on how the chunks are scheduled.
    """
    values = getattr(cov, "values", cov)
    std = np.sqrt(mc.scale * np.asarray(values, dtype=float))
    theta = flatten(scene)
    if std.shape != theta.shape:
        raise OracleError("dimension mismatch between covariance and scene")
    pts = np.asarray(pixels, dtype=float).reshape(-1, 2) + 0.5
    out = np.empty((mc.n_samples, pts.shape[0], 3))
    for i, ss in enumerate(_chunk_seeds(mc.rng_seed, mc.n_samples)):
        lo = i * MC_CHUNK
        hi = min(lo + MC_CHUNK, mc.n_samples)
        z = np.random.default_rng(ss).standard_normal((hi - lo, theta.size))
        out[lo:hi] = _color_at(theta + std * z, scene, camera, pts)
    return out


def mc_pixel_variance(scene: SceneParams, camera: CameraPose, pixel, cov, mc: McConfig) -> np.ndarray:
    """Sample 3x3 channel covariance at one pixel under Gaussian parameter draws."""
    samples = mc_pixel_samples(scene, camera, [pixel], cov, mc)[:, 0, :]
    return np.cov(samples, rowvar=False)


def mc_trace_with_error(samples: np.ndarray):
    """Trace of the sample covariance of (n, 3) colours and its standard error."""
    centered = samples - samples.mean(axis=0)
    sq = np.sum(centered**2, axis=1)
    n = samples.shape[0]
    trace = float(sq.sum() / (n - 1))
    stderr = float(sq.std(ddof=1) / np.sqrt(n))
    return trace, stderr


def full_laplace_cov(jacobians, noise: NoiseModel = NoiseModel(), lam: float = 1e-4) -> np.ndarray:
    """Dense sigma^2 (J^T J + lambda I)^-1 via Cholesky."""
    jac = np.asarray(jacobians, dtype=float)
    d = jac.shape[-1]
    if d > FULL_FIM_MAX_DIM:
        raise OracleError("full Laplace covariance restricted to desk scale")
    if not lam > 0:
        raise OracleError("lambda must be positive")
    stacked = jac.reshape(-1, d)
    a = stacked.T @ stacked + lam * np.eye(d)
    factor = cho_factor(a, lower=True)
    return noise.sigma**2 * cho_solve(factor, np.eye(d))


def taylor_term_magnitudes(jac_u: np.ndarray, hess_u: np.ndarray, cov) -> tuple[float, float]:
    """RMS size of the linear term and mean size of the quadratic term at one pixel.

    Linear: sqrt(trace(J diag(cov) J^T)). Quadratic: ||0.5 * trace(H_k diag(cov))||
    over channels. Reported only; no ordering between them is asserted.
    """
    values = np.asarray(getattr(cov, "values", cov), dtype=float)
    linear = float(np.sqrt(np.einsum("kd,d,kd->", jac_u, values, jac_u)))
    quad = 0.5 * np.einsum("kdd,d->k", hess_u, values)
    return linear, float(np.linalg.norm(quad))
