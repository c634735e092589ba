# tests/test_losses_metrics.py

import math

import numpy as np
import pytest
from pydantic import ValidationError

from spherekit.errors import DegenerateInputError, ShapeError
from spherekit.losses_metrics import (
    AlignParams,
    DepthMap,
    alignment_error,
    evaluate,
    gradient_check,
    l_grad,
    l_pix,
    loss_gradient,
    ssi_align,
    total_loss,
)


def _grid_search_align(pred: np.ndarray, gt: np.ndarray, rounds: int = 20):
    """Coarse-to-fine 41 x 41 search over (s, t) for the least-squares minimum."""
    mask = gt > 0
    p, g = pred[mask], gt[mask]
    best_s, best_t, step = 0.0, 0.0, 0.25
    offsets = np.arange(-20, 21)
    for _ in range(rounds):
        s = best_s + offsets[:, None] * step
        t = best_t + offsets[None, :] * step
        residual = s[:, :, None] * p + t[:, :, None] - g
        cost = np.sum(residual * residual, axis=-1)
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        best_s, best_t = float(s[i, 0]), float(t[0, j])
        step *= 6.0 / 20.0
    return best_s, best_t


class TestDepthMap:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            DepthMap(values=[[1.0, float("inf")]])

    def test_valid_mask(self):
        depth = DepthMap(values=[[1.0, 0.0], [-2.0, 3.0]])
        np.testing.assert_array_equal(depth.valid_mask(), [[True, False], [False, True]])


class TestAlignment:
    def test_exact_recovery_of_affine_prediction(self, rng):
        gt = rng.uniform(1.0, 5.0, size=(8, 16))
        params = ssi_align(DepthMap(values=2.0 * gt + 0.5), DepthMap(values=gt))
        assert params.s == pytest.approx(0.5, rel=1e-12)
        assert params.t == pytest.approx(-0.25, abs=1e-12)

    @pytest.mark.parametrize("scale, shift, expected", [(1.0, 0.0, (1.0, 0.0)), (2.0, 3.0, (0.5, -1.5))])
    def test_inverse_of_affine_map(self, rng, scale, shift, expected):
        gt = rng.uniform(1.0, 5.0, size=(4, 8))
        params = ssi_align(DepthMap(values=scale * gt + shift), DepthMap(values=gt))
        assert params.s == pytest.approx(expected[0], rel=1e-12)
        assert params.t == pytest.approx(expected[1], abs=1e-12)

    def test_agrees_with_grid_search(self, rng):
        pred = rng.uniform(-1.0, 1.0, size=(8, 16))
        gt = 2.0 + 0.5 * pred + rng.normal(scale=0.05, size=pred.shape)
        params = ssi_align(DepthMap(values=pred), DepthMap(values=gt))
        s, t = _grid_search_align(pred, gt)
        assert params.s == pytest.approx(s, abs=1e-6)
        assert params.t == pytest.approx(t, abs=1e-6)

    def test_minimizes_squared_error(self, rng):
        pred = DepthMap(values=rng.uniform(0.5, 2.0, size=(4, 8)))
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(4, 8)))
        best = ssi_align(pred, gt)
        base = alignment_error(pred, gt, best)
        for ds, dt in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)]:
            nudged = AlignParams(s=best.s + ds, t=best.t + dt)
            assert alignment_error(pred, gt, nudged) > base

    def test_ignores_invalid_pixels(self, rng):
        gt = rng.uniform(1.0, 2.0, size=(4, 8))
        gt[0, :3] = 0.0
        pred = 3.0 * gt - 1.0
        pred[0, :3] = rng.normal(size=3) * 100.0
        params = ssi_align(DepthMap(values=pred), DepthMap(values=gt))
        assert params.s == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_constant_prediction(self):
        with pytest.raises(DegenerateInputError):
            ssi_align(DepthMap(values=np.ones((2, 4))), DepthMap(values=np.arange(1.0, 9.0).reshape(2, 4)))

    def test_too_few_valid_pixels(self):
        gt = np.zeros((2, 4))
        gt[0, 0] = 1.0
        with pytest.raises(DegenerateInputError):
            ssi_align(DepthMap(values=np.arange(8.0).reshape(2, 4)), DepthMap(values=gt))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssi_align(DepthMap(values=np.ones((2, 4))), DepthMap(values=np.ones((4, 2))))


class TestLosses:
    def test_terms_match_scalar_loops(self, rng):
        gt = rng.uniform(0.5, 3.0, size=(4, 8))
        gt[1, 2] = 0.0
        gt[3, 7] = -1.0
        aligned = gt + rng.normal(scale=0.2, size=gt.shape)
        height, width = gt.shape

        delta = [[(aligned[r, c] - gt[r, c]) if gt[r, c] > 0 else 0.0 for c in range(width)] for r in range(height)]
        pix = sum(abs(delta[r][c]) for r in range(height) for c in range(width)) / (height * width)
        grad = 0.0
        for r in range(height):
            for c in range(width):
                grad += abs(delta[r][(c + 1) % width] - delta[r][c])
                if r + 1 < height:
                    grad += abs(delta[r + 1][c] - delta[r][c])

        pred_map, gt_map = DepthMap(values=aligned), DepthMap(values=gt)
        assert l_pix(pred_map, gt_map) == pytest.approx(pix, abs=1e-12)
        assert l_grad(pred_map, gt_map) == pytest.approx(grad, abs=1e-12)

    def test_perfect_and_masked_cases_are_zero(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(4, 8)))
        assert l_pix(gt, gt) == 0.0
        assert l_grad(gt, gt) == 0.0
        invalid = DepthMap(values=-gt.values)
        pred = DepthMap(values=rng.normal(size=(4, 8)))
        assert l_pix(pred, invalid) == 0.0
        assert l_grad(pred, invalid) == 0.0

    def test_constant_residual_has_no_edges(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(4, 8)))
        assert l_grad(DepthMap(values=gt.values + 0.75), gt) == pytest.approx(0.0, abs=1e-12)

    def test_affine_prediction_has_zero_loss(self, rng):
        gt = rng.uniform(1.0, 3.0, size=(4, 8))
        report, _ = total_loss(DepthMap(values=3.0 * gt - 1.0), DepthMap(values=gt))
        assert report.l_total == pytest.approx(0.0, abs=1e-10)

    def test_total_loss_combines_terms(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(4, 8)))
        pred = DepthMap(values=rng.uniform(0.0, 1.0, size=(4, 8)))
        report, params = total_loss(pred, gt)
        aligned = params.apply(pred)
        assert report.l_pix == pytest.approx(l_pix(aligned, gt), abs=1e-15)
        assert report.l_total == pytest.approx(report.l_pix + 0.5 * report.l_grad, abs=1e-15)
        assert report.valid_count == 32

    def test_affine_invariance(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(8, 16)))
        pred = rng.uniform(0.0, 1.0, size=(8, 16))
        base, _ = total_loss(DepthMap(values=pred), gt)
        moved, _ = total_loss(DepthMap(values=3.0 * pred - 2.0), gt)
        assert moved.l_total == pytest.approx(base.l_total, abs=1e-9)

    def test_invalid_pixels_do_not_matter(self, rng):
        values = rng.uniform(1.0, 3.0, size=(4, 8))
        values[2, 2] = 0.0
        gt = DepthMap(values=values)
        pred = rng.uniform(0.0, 1.0, size=(4, 8))
        other = pred.copy()
        other[2, 2] = 50.0
        a, _ = total_loss(DepthMap(values=pred), gt)
        b, _ = total_loss(DepthMap(values=other), gt)
        assert a == b

    def test_gradient_without_edge_term_is_scaled_sign(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 3.0, size=(4, 8)))
        pred = DepthMap(values=rng.uniform(0.0, 1.0, size=(4, 8)))
        params = ssi_align(pred, gt)
        residual = params.apply(pred).values - gt.values
        expected = params.s * np.sign(residual) / residual.size
        np.testing.assert_allclose(loss_gradient(pred, gt, omega=0.0), expected, rtol=0, atol=1e-15)

    def test_gradient_zero_on_invalid_pixels(self, rng):
        values = rng.uniform(1.0, 3.0, size=(4, 8))
        values[0, 0] = 0.0
        pred = DepthMap(values=rng.uniform(0.0, 1.0, size=(4, 8)))
        assert loss_gradient(pred, DepthMap(values=values))[0, 0] == 0.0

    def test_gradient_vanishes_without_valid_pixels(self, rng):
        pred = DepthMap(values=rng.normal(size=(4, 8)))
        gradient = loss_gradient(pred, DepthMap(values=np.zeros((4, 8))))
        np.testing.assert_array_equal(gradient, np.zeros((4, 8)))

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            gt = rng.uniform(1.0, 3.0, size=(4, 8))
            gt.flat[rng.choice(32, size=2, replace=False)] = 0.0
            pred = 0.5 * gt + 0.2 + rng.normal(scale=0.3, size=gt.shape)
            report = gradient_check(DepthMap(values=pred), DepthMap(values=gt))
            assert report.checked_components == 32
            assert report.max_rel_error <= 1e-4


class TestMetrics:
    def _scalar_metrics(self, pred, gt):
        pairs = [(p, g) for p, g in zip(pred.ravel(), gt.ravel()) if g > 0]
        n = len(pairs)
        logs = [(p, g) for p, g in pairs if p > 0]
        return {
            "abs_rel": sum(abs(p - g) / g for p, g in pairs) / n,
            "sq_rel": sum((p - g) ** 2 / g for p, g in pairs) / n,
            "rms_lin": math.sqrt(sum((p - g) ** 2 for p, g in pairs) / n),
            "rms_log": math.sqrt(sum((math.log(p) - math.log(g)) ** 2 for p, g in logs) / len(logs)),
            "mae": sum(abs(p - g) for p, g in pairs) / n,
            "delta1": sum(max(p / g, g / p) < 1.25 for p, g in logs) / n,
            "delta2": sum(max(p / g, g / p) < 1.25**2 for p, g in logs) / n,
            "delta3": sum(max(p / g, g / p) < 1.25**3 for p, g in logs) / n,
        }

    def test_perfect_prediction(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 10.0, size=(4, 8)))
        report = evaluate(gt, gt)
        assert (report.abs_rel, report.sq_rel, report.rms_lin, report.rms_log, report.mae) == (0, 0, 0, 0, 0)
        assert (report.delta1, report.delta2, report.delta3) == (1, 1, 1)

    def test_uniform_overestimate(self, rng):
        gt = rng.uniform(1.0, 10.0, size=(4, 8))
        report = evaluate(DepthMap(values=1.3 * gt), DepthMap(values=gt))
        assert (report.delta1, report.delta2, report.delta3) == (0, 1, 1)
        assert report.abs_rel == pytest.approx(0.3)

    def test_matches_scalar_loops(self, rng):
        gt = rng.uniform(1.0, 10.0, size=(8, 16))
        gt[0, :4] = 0.0
        pred = gt * rng.uniform(0.6, 1.6, size=gt.shape)
        report = evaluate(DepthMap(values=pred), DepthMap(values=gt))
        for name, expected in self._scalar_metrics(pred, gt).items():
            assert getattr(report, name) == pytest.approx(expected, rel=1e-12, abs=1e-12), name
        assert report.valid_count == 124

    def test_align_first(self, rng):
        gt = rng.uniform(1.0, 10.0, size=(4, 8))
        report = evaluate(DepthMap(values=0.1 * gt + 3.0), DepthMap(values=gt), align_first=True)
        assert report.abs_rel < 1e-10
        assert report.delta1 == 1

    def test_aligned_metrics_ignore_affine_maps(self, rng):
        gt = DepthMap(values=rng.uniform(1.0, 10.0, size=(4, 8)))
        pred = rng.uniform(0.5, 2.0, size=(4, 8))
        base = evaluate(DepthMap(values=pred), gt, align_first=True).model_dump()
        moved = evaluate(DepthMap(values=3.0 * pred + 0.7), gt, align_first=True).model_dump()
        for name, value in base.items():
            assert moved[name] == pytest.approx(value, rel=1e-9, abs=1e-12), name

    @pytest.mark.parametrize("align_first", [False, True])
    def test_invalid_pixels_do_not_change_metrics(self, rng, align_first):
        values = rng.uniform(1.0, 3.0, size=(4, 8))
        values[1, 3] = 0.0
        values[2, 6] = -1.0
        gt = DepthMap(values=values)
        pred = rng.uniform(1.0, 3.0, size=(4, 8))
        other = pred.copy()
        other[1, 3], other[2, 6] = 100.0, -5.0
        assert evaluate(DepthMap(values=other), gt, align_first) == evaluate(DepthMap(values=pred), gt, align_first)

    def test_non_positive_predictions_count_as_misses(self):
        gt = DepthMap(values=np.ones((2, 2)))
        pred = DepthMap(values=[[1.0, 1.0], [1.0, -1.0]])
        report = evaluate(pred, gt)
        assert report.valid_count == 4
        assert report.log_valid_count == 3
        assert report.delta1 == 0.75
        assert report.rms_log == 0.0

    def test_no_valid_pixels(self):
        with pytest.raises(DegenerateInputError):
            evaluate(DepthMap(values=np.ones((2, 2))), DepthMap(values=np.zeros((2, 2))))
