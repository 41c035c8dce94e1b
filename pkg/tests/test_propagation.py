import numpy as np
import pytest

from splatuq.fisher import CovDiag
from splatuq.propagation import (
    MASK_FLOOR,
    PropagationError,
    object_pixel_cov,
    object_score,
    pixel_variance,
    score_from_maps,
    truncation_bound,
    variance_heatmap,
    view_scores,
)
from splatuq.renderer import CameraPose, pixel_grid, render, render_full, render_jacobian
from splatuq.scene import GaussianSplat, SceneParams

from conftest import random_scene


def _cov(rng, d):
    return CovDiag(rng.uniform(0.01, 2.0, d))


class TestPixelVariance:
    def test_zero_jacobian(self, rng):
        assert np.all(pixel_variance(np.zeros((3, 9)), _cov(rng, 9)) == 0)

    def test_rank_one(self, rng):
        cov = _cov(rng, 9)
        jac = np.zeros((3, 9))
        jac[0, 4] = 1.7
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.7**2 * cov.values[4]
        np.testing.assert_allclose(pixel_variance(jac, cov), expected, rtol=1e-15)

    def test_symmetric_psd(self, rng):
        for _ in range(20):
            m = pixel_variance(rng.normal(size=(3, 18)), _cov(rng, 18))
            np.testing.assert_array_equal(m, m.T)
            assert np.linalg.eigvalsh(m).min() >= -1e-10
            assert np.trace(m) >= 0

    def test_equals_dense_form(self, rng):
        jac = rng.normal(size=(3, 18))
        cov = _cov(rng, 18)
        np.testing.assert_allclose(pixel_variance(jac, cov), jac @ np.diag(cov.values) @ jac.T, rtol=1e-13)

    def test_monotone_in_cov(self, rng):
        jac = rng.normal(size=(3, 9))
        cov = _cov(rng, 9)
        base = np.diag(pixel_variance(jac, cov))
        for j in range(9):
            bigger = cov.values.copy()
            bigger[j] *= 3.0
            assert np.all(np.diag(pixel_variance(jac, bigger)) >= base)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(PropagationError):
            pixel_variance(np.zeros((3, 9)), _cov(rng, 18))


class TestObjectCov:
    @pytest.mark.parametrize("mask,factor", [(0.0, 0.0), (1.0, 1.0), (0.5, 0.25)])
    def test_mask_factor(self, rng, mask, factor):
        jac = rng.normal(size=(3, 9))
        cov = _cov(rng, 9)
        np.testing.assert_array_equal(object_pixel_cov(jac, cov, mask), factor * pixel_variance(jac, cov))

    @pytest.mark.parametrize("mask", [-0.1, 1.5])
    def test_mask_range(self, rng, mask):
        with pytest.raises(PropagationError):
            object_pixel_cov(np.zeros((3, 9)), _cov(rng, 9), mask)


class TestObjectScore:
    def test_outside_frustum(self, rng, camera):
        far = GaussianSplat((50.0, 0.0), (0, 0), 0, 0, (0, 0, 0), 0, 7)
        near = GaussianSplat((0.0, 0.0), (0, 0.2), 0, 0, (0, 0, 0), 1, 1)
        scene = SceneParams((far, near))
        s = object_score(scene, camera, _cov(rng, 18), 7)
        assert s.score == 0.0 and s.pixel_count == 0

    def test_linear_in_cov(self, rng, camera):
        scene = random_scene(rng, 3)
        cov = _cov(rng, 27)
        a = object_score(scene, camera, cov, 1).score
        b = object_score(scene, camera, cov.scaled(4.5), 1).score
        assert b == pytest.approx(4.5 * a, rel=1e-13)

    def test_unknown_object(self, rng, camera):
        with pytest.raises(PropagationError, match="unknown object"):
            object_score(random_scene(rng, 2), camera, _cov(rng, 18), 99)

    def test_matches_per_pixel_sum(self, rng, camera):
        scene = random_scene(rng, 4, n_objects=2, big=False)
        cov = _cov(rng, 36)
        _, masks = render(scene, camera)
        pix = pixel_grid(camera)
        jac = render_jacobian(scene, camera, pix)
        for k in (0, 1):
            m = masks[k].ravel()
            expected = sum(np.trace(object_pixel_cov(jac[u], cov, m[u])) for u in range(len(pix)) if m[u] > MASK_FLOOR)
            assert object_score(scene, camera, cov, k).score == pytest.approx(expected, rel=1e-12)

    def test_larger_covariance_object_scores_higher(self, camera):
        # mirror-image objects: equal footprints, object 0 gets 10x the covariance
        a = GaussianSplat((-0.9, 0.0), (-0.7, -0.3), 0.4, 0.5, (1.0, -1.0, 0.0), 0, 0)
        b = GaussianSplat((0.9, 0.0), (-0.7, -0.3), -0.4, 0.5, (1.0, -1.0, 0.0), 1, 1)
        scene = SceneParams((a, b), (0.2, 0.2, 0.2))
        cov = CovDiag(np.concatenate([np.full(9, 10.0), np.full(9, 1.0)]))
        sa = object_score(scene, camera, cov, 0)
        sb = object_score(scene, camera, cov, 1)
        assert sa.score > sb.score
        assert sa.pixel_count > 0 and sb.pixel_count > 0

    def test_additive_over_disjoint_pixel_sets(self, rng):
        trace_map = rng.uniform(size=100)
        mask = rng.uniform(size=100)
        part = rng.uniform(size=100) < 0.4
        whole = score_from_maps(trace_map, mask, 0).score
        left = score_from_maps(trace_map, np.where(part, mask, 0), 0).score
        right = score_from_maps(trace_map, np.where(part, 0, mask), 0).score
        assert whole == pytest.approx(left + right, rel=1e-13)

    def test_masked_below_unmasked(self, rng, camera):
        scene = random_scene(rng, 3, big=False)
        cov = _cov(rng, 27)
        scores, heat = view_scores(scene, camera, cov)
        _, masks = render(scene, camera)
        for s in scores:
            unmasked = heat.ravel()[masks[s.object_id].ravel() > MASK_FLOOR].sum()
            assert s.score <= unmasked


class TestHeatmap:
    def test_zero_cov(self, rng, camera):
        scene = random_scene(rng, 2)
        assert np.all(variance_heatmap(scene, camera, np.zeros(18)) == 0)

    def test_background_pixels_zero_and_peak_on_footprint(self, rng):
        cam = CameraPose((0, 0), 0.0, 8.0, 48, 48)
        scene = SceneParams((GaussianSplat((0.5, 0.3), (-1.2, -0.8), 0.2, 0.4, (1, 0, -1), 0),), (0.5, 0.5, 0.5))
        heat = variance_heatmap(scene, cam, _cov(rng, 9))
        _, masks = render(scene, cam)
        covered = masks[0] > 0
        assert np.all(heat[~covered] == 0)
        assert covered[np.unravel_index(np.argmax(heat), heat.shape)]
        assert np.all(heat >= 0)


class TestTruncationBound:
    def test_values(self):
        assert truncation_bound(4.0, 0.0) == 0.0
        assert truncation_bound(4.0, 0.1) == pytest.approx(0.01, rel=1e-15)
        assert truncation_bound(3.0, 0.05) == pytest.approx(truncation_bound(3.0, 0.1) / 4, rel=1e-15)

    def test_negative(self):
        with pytest.raises(PropagationError):
            truncation_bound(-1.0, 0.1)
