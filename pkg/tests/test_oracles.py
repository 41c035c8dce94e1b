import numpy as np
import pytest
from scipy.linalg import cho_factor

from splatuq.fisher import CovDiag, NoiseModel, fisher_diag_batch, laplace_cov
from splatuq.oracles import (
    McConfig,
    OracleError,
    fd_hessian,
    fd_hessian_frobenius,
    fd_jacobian,
    full_laplace_cov,
    mc_pixel_samples,
    mc_pixel_variance,
    mc_trace_with_error,
    taylor_term_magnitudes,
)
from splatuq.propagation import pixel_variance
from splatuq.renderer import CameraPose, render_full, render_jacobian
from splatuq.scene import GaussianSplat, SceneParams

from conftest import random_scene


def _isolated():
    """One small splat with background pixels far from it."""
    cam = CameraPose((0.0, 0.0), 0.0, 8.0, 32, 32)
    scene = SceneParams((GaussianSplat((0.0, 0.0), (-1.5, -1.5), 0.0, 0.5, (0.2, -0.3, 0.4)),), (0.25, 0.5, 0.75))
    return scene, cam


class TestFdJacobian:
    def test_background_pixel(self):
        scene, cam = _isolated()
        assert np.all(fd_jacobian(scene, cam, (0, 0)) == 0)

    def test_error_decreases_with_step(self, rng, camera):
        scene = random_scene(rng, 3)
        pix = np.array([[14, 17]])
        exact = render_jacobian(scene, camera, pix)[0]
        coarse = np.abs(fd_jacobian(scene, camera, pix[0], 1e-4, np.longdouble) - exact).max()
        fine = np.abs(fd_jacobian(scene, camera, pix[0], 1e-5, np.longdouble) - exact).max()
        assert fine < coarse

    def test_quadratic_convergence(self):
        scene, cam = _isolated()
        pix = (17, 15)
        exact = render_jacobian(scene, cam, [pix])[0]
        # opacity logit enters through a logistic, so the central-difference error is O(h^2)
        errs = [abs(fd_jacobian(scene, cam, pix, h, np.longdouble)[0, 5] - exact[0, 5]) for h in (1e-2, 5e-3)]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_bad_step(self, camera, rng):
        with pytest.raises(OracleError):
            fd_jacobian(random_scene(rng, 1), camera, (0, 0), 0.0)


class TestFdHessian:
    def test_background_pixel(self):
        scene, cam = _isolated()
        assert fd_hessian_frobenius(scene, cam, (0, 0)) == 0.0

    def test_symmetric(self, rng, camera):
        h = fd_hessian(random_scene(rng, 2), camera, (16, 15))
        assert np.abs(h - np.swapaxes(h, 1, 2)).max() < 1e-6

    def test_colour_block_matches_logistic(self):
        # at a pixel covered by a single splat, d2C/dc^2 = w * s(1-s)(1-2s)
        scene, cam = _isolated()
        s = scene.splats[0]
        _, masks, _ = render_full(scene, cam)
        w = masks[0][16, 16]
        c = s.color
        h = fd_hessian(scene, cam, (16, 16))
        expected = w * c * (1 - c) * (1 - 2 * c)
        np.testing.assert_allclose([h[k, 6 + k, 6 + k] for k in range(3)], expected, rtol=1e-5)

    def test_guard(self):
        splats = tuple(GaussianSplat((i, 0), (0, 0), 0, 0, (0, 0, 0), i) for i in range(23))
        with pytest.raises(OracleError, match="desk scale"):
            fd_hessian(SceneParams(splats), CameraPose((0, 0), 0, 1, 4, 4), (0, 0))


class TestMonteCarlo:
    def test_zero_covariance(self, rng, camera):
        scene = random_scene(rng, 2)
        v = mc_pixel_variance(scene, camera, (16, 16), np.zeros(18), McConfig(2000, 0))
        # identical draws; only summation-order round-off in the batched render remains
        np.testing.assert_allclose(v, 0.0, atol=1e-24)

    def test_symmetric_psd(self, rng, camera):
        scene = random_scene(rng, 2)
        v = mc_pixel_variance(scene, camera, (16, 16), CovDiag(np.full(18, 0.01)), McConfig(5000, 1))
        np.testing.assert_allclose(v, v.T, rtol=0, atol=1e-15)
        assert np.linalg.eigvalsh(v).min() >= -1e-12

    def test_deterministic_and_chunked(self, rng, camera):
        scene = random_scene(rng, 2)
        cov = CovDiag(np.full(18, 0.01))
        a = mc_pixel_samples(scene, camera, [(3, 4), (16, 16)], cov, McConfig(25_000, 9))
        b = mc_pixel_samples(scene, camera, [(3, 4), (16, 16)], cov, McConfig(25_000, 9))
        np.testing.assert_array_equal(a, b)
        # the first chunk does not depend on how many samples are requested in total
        c = mc_pixel_samples(scene, camera, [(3, 4), (16, 16)], cov, McConfig(10_000, 9))
        np.testing.assert_array_equal(a[:10_000], c)

    def test_small_scale_matches_delta_method(self, rng, camera):
        scene = random_scene(rng, 2)
        cov = CovDiag(rng.uniform(0.05, 0.2, 18))
        s = 1e-3
        v = mc_pixel_variance(scene, camera, (15, 16), cov, McConfig(40_000, 2, s))
        analytic = s * pixel_variance(render_jacobian(scene, camera, [(15, 16)])[0], cov)
        assert np.trace(v) == pytest.approx(np.trace(analytic), rel=0.05)

    def test_standard_error_scales_as_root_n(self, rng, camera):
        scene = random_scene(rng, 2)
        cov = CovDiag(np.full(18, 0.02))
        ratios = []
        for seed in range(5):
            small = mc_pixel_samples(scene, camera, [(16, 16)], cov, McConfig(10_000, seed))[:, 0]
            big = mc_pixel_samples(scene, camera, [(16, 16)], cov, McConfig(20_000, seed + 100))[:, 0]
            ratios.append(mc_trace_with_error(small)[1] / mc_trace_with_error(big)[1])
        assert np.mean(ratios) == pytest.approx(np.sqrt(2), rel=0.3)

    def test_config_validation(self):
        with pytest.raises(OracleError):
            McConfig(1)
        with pytest.raises(OracleError):
            McConfig(1000, 0, 0.0)


class TestFullLaplace:
    def test_zero_jacobian(self):
        cov = full_laplace_cov(np.zeros((4, 3, 5)), NoiseModel(2.0), 1e-4)
        np.testing.assert_allclose(cov, 4.0 / 1e-4 * np.eye(5), rtol=1e-14)

    def test_spd_and_ratio_table(self, three_splat):
        jac = np.concatenate([render_full(three_splat.scene, c)[2] for c in three_splat.training_cameras])
        full = full_laplace_cov(jac)
        np.testing.assert_allclose(full, full.T, rtol=1e-10, atol=1e-12)
        cho_factor(full)
        diag_approx = laplace_cov(fisher_diag_batch(jac)).values
        ratio = np.diag(full) / diag_approx
        # ratio table only: the two approximations are not expected to agree
        assert ratio.shape == (27,) and np.all(np.isfinite(ratio)) and np.all(ratio > 0)

    def test_guard(self):
        with pytest.raises(OracleError):
            full_laplace_cov(np.zeros((1, 3, 201)))


def test_taylor_terms_reported(three_splat):
    cam = three_splat.benchmark_camera
    px = three_splat.benchmark_pixels[0]
    jac = render_jacobian(three_splat.scene, cam, [px])[0]
    lin, quad = taylor_term_magnitudes(jac, fd_hessian(three_splat.scene, cam, px), np.full(27, 1e-3))
    assert lin > 0 and quad >= 0
