import numpy as np
import pytest

from tvroad.forecast import (
    BOUNDARY_OFFSET,
    LABEL_OFFSET,
    WINDOW,
    HistorySet,
    _GoalMatcher,
    boundary_forecast,
    build_history,
    causal_denoise_window,
    compare_pipelines,
    fit_boundary,
    mape,
    predict,
    rmae,
)
from tvroad.noise import SWEEP_SOLVER
from tvroad.series import VelocitySeries
from tvroad.solver import denoise_values, sweep_config
from tvroad.synth import two_regime_corpus

RAMP = np.arange(288.0)


def family_history(level, labels, n=8):
    windows = np.full((n, WINDOW), float(level))
    return HistorySet(windows, np.asarray(labels, dtype=float), tuple((None, i) for i in range(n)))


class TestBuildHistory:
    def test_ramp_windows_and_labels(self):
        hs = build_history([RAMP])
        assert len(hs) == 282
        np.testing.assert_array_equal(hs.windows[0], [0.0, 1.0, 2.0, 3.0])
        assert hs.labels[0] == 6.0
        np.testing.assert_array_equal(hs.windows[-1], [281.0, 282.0, 283.0, 284.0])
        assert hs.labels[-1] == 287.0
        assert hs.provenance[0] == (None, 1)
        assert hs.provenance[-1] == (None, 282)

    def test_boundary_offset_keeps_window_set(self):
        near = build_history([RAMP], label_offset=BOUNDARY_OFFSET)
        far = build_history([RAMP])
        np.testing.assert_array_equal(near.windows, far.windows)
        assert near.labels[0] == 4.0

    def test_days_concatenate(self):
        assert len(build_history([RAMP] * 7)) == 7 * 282

    def test_series_day_recorded(self):
        hs = build_history([VelocitySeries("r", 3, RAMP, h=1.0)])
        assert hs.provenance[0] == (3, 1)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            build_history([RAMP[:100]])
        with pytest.raises(ValueError):
            build_history([RAMP], label_offset=3)
        with pytest.raises(ValueError):
            build_history([RAMP], label_offset=7)

    def test_history_set_validation(self):
        with pytest.raises(ValueError):
            HistorySet(np.zeros((5, 3)), np.zeros(5), tuple([None] * 5))
        with pytest.raises(ValueError):
            HistorySet(np.zeros((5, 4)), np.zeros(4), tuple([None] * 5))
        with pytest.raises(ValueError):
            HistorySet(np.zeros((5, 4)), np.zeros(5), (None,))


class TestBoundaryModel:
    def test_recovers_exact_linear_rule(self):
        rng = np.random.default_rng(0)
        windows = rng.normal(30.0, 5.0, (50, WINDOW))
        true_coef = np.array([2.0, 0.5, 0.0, -0.25, 1.0])
        labels = np.hstack([np.ones((50, 1)), windows]) @ true_coef
        model = fit_boundary(HistorySet(windows, labels, tuple([None] * 50)))
        assert not model.used_fallback
        np.testing.assert_allclose(model.coef, true_coef, atol=1e-8)
        assert model.predict_next([1.0, 2.0, 3.0, 4.0]) == pytest.approx(5.75)

    def test_constant_day_falls_back_to_persistence(self):
        model = fit_boundary(build_history([np.full(288, 20.0)], label_offset=BOUNDARY_OFFSET))
        assert model.used_fallback
        assert model.predict_next([1.0, 2.0, 3.0, 4.0]) == 4.0

    def test_fit_never_worse_than_persistence_in_sample(self):
        rng = np.random.default_rng(1)
        day = np.clip(30.0 + np.cumsum(rng.normal(0.0, 1.5, 288)), 0.0, None)
        hs = build_history([day], label_offset=BOUNDARY_OFFSET)
        model = fit_boundary(hs)
        fitted = np.array([model.predict_next(w) for w in hs.windows])
        persistence = hs.windows[:, -1]
        assert np.sum((fitted - hs.labels) ** 2) <= np.sum((persistence - hs.labels) ** 2)

    def test_requires_enough_pairs(self):
        with pytest.raises(ValueError):
            fit_boundary(family_history(10.0, np.zeros(5), n=5))

    def test_forecast_helper_matches_model(self):
        rng = np.random.default_rng(2)
        day = rng.normal(25.0, 4.0, 288)
        hs = build_history([day], label_offset=BOUNDARY_OFFSET)
        goal = [20.0, 21.0, 22.0, 23.0]
        assert boundary_forecast(hs, goal) == fit_boundary(hs).predict_next(goal)


class TestCausalWindow:
    def test_matches_manual_assembly(self):
        rng = np.random.default_rng(3)
        prefix = rng.normal(30.0, 3.0, 40)
        series = np.concatenate([prefix, [25.3]])
        expected = denoise_values(series, sweep_config(SWEEP_SOLVER, 3.0), h=1.0).denoised[-5:-1]
        out = causal_denoise_window(prefix, 25.3, 3.0, SWEEP_SOLVER)
        np.testing.assert_array_equal(out, expected)
        assert out.shape == (WINDOW,)

    def test_needs_full_window(self):
        with pytest.raises(ValueError):
            causal_denoise_window([1.0, 2.0, 3.0], 4.0, 1.0, SWEEP_SOLVER)


class TestMetrics:
    def test_rmae(self):
        assert rmae([10.0, 10.0], [9.0, 11.0]) == pytest.approx(0.1)

    def test_rmae_rejects_bad_input(self):
        with pytest.raises(ValueError):
            rmae([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            rmae([0.0, 0.0], [1.0, 1.0])

    def test_mape_excludes_stopped_traffic(self):
        value, count = mape([0.5, 2.0, 4.0], [1.0, 1.0, 2.0])
        assert (value, count) == (0.5, 2)

    def test_mape_threshold_is_strict(self):
        value, count = mape([1.0, 2.0], [0.0, 1.0])
        assert (value, count) == (0.5, 1)

    def test_mape_needs_moving_traffic(self):
        with pytest.raises(ValueError):
            mape([0.5, 1.0], [1.0, 1.0])


class TestPredict:
    def test_follows_matching_family(self):
        rng = np.random.default_rng(4)
        slow = rng.normal(10.0, 0.3, (20, WINDOW))
        fast = rng.normal(40.0, 0.3, (20, WINDOW))
        hs = HistorySet(
            np.vstack([slow, fast]),
            np.array([10.0] * 20 + [40.0] * 20),
            tuple([None] * 40),
        )
        assert predict(hs, [40.0, 40.1, 39.9, 40.0], d_c=2.0) == pytest.approx(40.0)
        assert predict(hs, [10.0, 10.1, 9.9, 10.0], d_c=2.0) == pytest.approx(10.0)

    def test_isolated_goal_becomes_its_own_center(self):
        # the goal ends up a center with no other member, so the answer
        # falls back to the kernel average over every window; equal
        # distances make that the plain label mean
        hs = family_history(10.0, np.arange(8.0))
        assert predict(hs, [11.5] * 4, d_c=2.0) == pytest.approx(3.5)

    def test_forced_single_cluster_averages_everything(self):
        hs = family_history(10.0, np.arange(8.0))
        assert predict(hs, [10.0] * 4, d_c=2.0, k=1) == pytest.approx(3.5)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            predict(HistorySet(np.zeros((0, 4)), np.zeros(0), ()), [1.0] * 4, d_c=1.0)


class TestGoalMatcher:
    def test_matches_reference_predict(self):
        rng = np.random.default_rng(5)
        days = [np.clip(rng.normal(30.0, 6.0, 288), 0.0, None) for _ in range(2)]
        hs = build_history(days)
        base = np.linalg.norm(hs.windows[:, None, :] - hs.windows[None, :, :], axis=-1)
        iu = np.triu_indices(len(hs), 1)
        d_c = float(np.percentile(base[iu], 2.0))
        matcher = _GoalMatcher(hs.windows, hs.labels, d_c, None)
        for _ in range(15):
            goal = rng.normal(30.0, 6.0, WINDOW)
            value, fell_back = matcher.predict(goal)
            assert value == predict(hs, goal, d_c)
            assert isinstance(fell_back, bool)


class TestComparePipelines:
    def test_raw_only_run(self):
        road = two_regime_corpus(n_roads=1, n_days=2, seed=3)[0]
        history, target = road[0][1], road[1][1]
        cp = compare_pipelines([history], target, sigma=2.5, include_denoised=False)
        assert cp.denoised is None
        assert cp.sigma == 2.5 and cp.d_c > 0
        assert not cp.boundary_fallback
        r = cp.raw
        assert r.predictions.shape == (282,)
        np.testing.assert_array_equal(r.slices, np.arange(7, 289))
        assert 0.0 < r.rmae < 1.0
        assert r.mape > 0.0 and 0 < r.mape_retained_count <= 282
        assert r.fallback_count >= 0
        truth = target.values[LABEL_OFFSET:]
        assert r.rmae == rmae(truth, r.predictions)

    def test_denoised_goal_only_sees_the_past(self):
        road = two_regime_corpus(n_roads=1, n_days=2, seed=3)[0]
        history, target = road[0][1], road[1][1]
        altered = target.values.copy()
        altered[100:] += 7.0
        target_b = VelocitySeries(target.road_id, target.day, altered, h=target.h)
        kw = dict(sigma=2.5, include_raw=False)
        a = compare_pipelines([history], target, **kw).denoised.predictions
        b = compare_pipelines([history], target_b, **kw).denoised.predictions
        # goals through start 96 read slices 1..100 only
        np.testing.assert_array_equal(a[:97], b[:97])
        assert not np.array_equal(a, b)

    def test_input_validation(self):
        road = two_regime_corpus(n_roads=1, n_days=2, seed=3)[0]
        target = road[1][1]
        with pytest.raises(ValueError):
            compare_pipelines([], target, sigma=1.0)
        short = VelocitySeries("r", 1, np.ones(100), h=1.0)
        with pytest.raises(ValueError):
            compare_pipelines([road[0][1]], short, sigma=1.0)
