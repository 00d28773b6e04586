import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from staticekf.filters import (EkfConfig, FilterState, Truncation, averaged_estimate, ekf_step,
                               run_trajectory)
from staticekf.models import GAUSSIAN_MODEL, LOGISTIC_MODEL


def ridge_solution(X, y, theta1, p1):
    d = len(theta1)
    A = np.eye(d) / p1 + X.T @ X
    return np.linalg.solve(A, np.eye(d) @ theta1 / p1 + X.T @ y)


class TestSingleStep:
    def test_gaussian_scalar(self):
        cfg = EkfConfig.zeros(GAUSSIAN_MODEL, 1)
        s = ekf_step(cfg.initial_state(), [1.0], 1.0, cfg)
        np.testing.assert_allclose(s.P, [[0.5]])
        np.testing.assert_allclose(s.theta, [0.5])
        assert s.t == 2

    def test_logistic_scalar(self):
        cfg = EkfConfig.zeros(LOGISTIC_MODEL, 1)
        s = ekf_step(cfg.initial_state(), [1.0], 1.0, cfg)
        np.testing.assert_allclose(s.P, [[0.8]], rtol=1e-15)
        np.testing.assert_allclose(s.theta, [0.4], rtol=1e-15)

    def test_zero_regressor_keeps_state(self):
        cfg = EkfConfig(LOGISTIC_MODEL, np.array([0.3, -1.0]), p1_scale=2.0)
        s0 = FilterState(theta=np.array([0.3, -1.0]), P=np.array([[2.0, 0.1], [0.1, 1.0]]), t=7)
        s = ekf_step(s0, np.zeros(2), -1.0, cfg)
        np.testing.assert_array_equal(s.theta, s0.theta)
        np.testing.assert_array_equal(s.P, s0.P)
        assert s.t == 8

    def test_validation(self):
        cfg = EkfConfig.zeros(LOGISTIC_MODEL, 2)
        with pytest.raises(ValueError):
            ekf_step(cfg.initial_state(), np.ones(3), 1.0, cfg)
        with pytest.raises(ValueError):
            ekf_step(cfg.initial_state(), np.ones(2), 0.5, cfg)
        with pytest.raises(ValueError):
            EkfConfig.zeros(GAUSSIAN_MODEL, 2, truncation=Truncation())
        with pytest.raises(ValueError):
            Truncation(beta=0.5)


class TestTrajectory:
    def test_empty_stream(self):
        cfg = EkfConfig.zeros(LOGISTIC_MODEL, 3)
        rec = run_trajectory(cfg, [])
        assert len(rec) == 0
        np.testing.assert_array_equal(rec.thetas(), np.zeros((1, 3)))
        np.testing.assert_array_equal(rec.final.P, np.eye(3))

    def test_ten_step_gaussian_is_ridge(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((10, 3))
        y = rng.standard_normal(10)
        cfg = EkfConfig(GAUSSIAN_MODEL, np.array([0.5, 0.0, -1.0]), p1_scale=2.0)
        rec = run_trajectory(cfg, zip(X, y))
        oracle = ridge_solution(X, y, cfg.theta1, 2.0)
        np.testing.assert_allclose(rec.final.theta, oracle, rtol=1e-10)

    def test_record_fields(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((20, 2))
        y = np.where(rng.random(20) < 0.5, -1.0, 1.0)
        rec = run_trajectory(EkfConfig.zeros(LOGISTIC_MODEL, 2), zip(X, y), store_P=True)
        np.testing.assert_array_equal(rec.steps, np.arange(1, 21))
        assert rec.matrices().shape == (21, 2, 2)
        np.testing.assert_allclose(rec.lambda_max_P, np.linalg.eigvalsh(rec.matrices()[1:])[:, -1], rtol=1e-12)
        sparse = run_trajectory(EkfConfig.zeros(LOGISTIC_MODEL, 2), zip(X, y), record_every=5)
        np.testing.assert_array_equal(sparse.steps, [1, 6, 11, 16])
        assert not sparse.complete

    def test_truncation_flags_follow_floor(self):
        # regressors small enough that |theta.x| <= 1 along the run
        rng = np.random.default_rng(7)
        n = 60
        X = rng.uniform(-1, 1, (n, 2)) * 0.2
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        cfg = EkfConfig.zeros(LOGISTIC_MODEL, 2, truncation=Truncation(beta=0.49, c=1.0))
        rec = run_trajectory(cfg, zip(X, y))
        u = (rec.theta * rec.x).sum(axis=1)
        assert np.all(np.abs(u) <= 1)
        floor = np.array([cfg.truncation.floor(t) for t in rec.steps])
        np.testing.assert_array_equal(rec.truncated, floor > rec.curv_scalar)
        # curvature at |u| <= 1 is at least sigma(1) sigma(-1) ~ 0.1966, which the floor
        # undercuts from t = 28 on
        assert not rec.truncated[rec.steps >= 28].any()
        assert rec.truncated[rec.steps <= 16].all()
        np.testing.assert_allclose(rec.alpha, np.maximum(floor, rec.curv_scalar), rtol=1e-14)

    def test_tiny_floor_never_binds(self):
        rng = np.random.default_rng(8)
        X = np.hstack([np.ones((500, 1)), rng.random((500, 3))])
        y = np.where(rng.random(500) < 0.5, -1.0, 1.0)
        plain = run_trajectory(EkfConfig.zeros(LOGISTIC_MODEL, 4), zip(X, y))
        tiny = run_trajectory(EkfConfig.zeros(LOGISTIC_MODEL, 4, truncation=Truncation(c=1e-10)), zip(X, y))
        assert not tiny.truncated.any()
        np.testing.assert_array_equal(plain.final.theta, tiny.final.theta)


class TestAveraging:
    def test_examples(self):
        cfg = EkfConfig.zeros(GAUSSIAN_MODEL, 1)
        s = cfg.initial_state()
        np.testing.assert_array_equal(averaged_estimate(s), [0.0])
        s1 = ekf_step(s, [1.0], 2.0, cfg)   # theta_2 = 1
        np.testing.assert_allclose(s1.theta, [1.0])
        np.testing.assert_allclose(averaged_estimate(s1), [0.5])

    def test_constant_sequence(self):
        cfg = EkfConfig(GAUSSIAN_MODEL, np.array([2.0]))
        s = cfg.initial_state()
        for _ in range(5):
            s = ekf_step(s, [0.0], 1.0, cfg)
        np.testing.assert_allclose(averaged_estimate(s), [2.0])


@st.composite
def streams(draw):
    d = draw(st.integers(1, 5))
    n = draw(st.integers(0, 30))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * draw(st.floats(0.01, 10))
    if n and draw(st.booleans()):
        # crafted, non-i.i.d.: repeated and collinear regressors, alternating labels
        X = np.repeat(X[:1], n, axis=0) * np.linspace(1, 3, n)[:, None]
    y = rng.standard_normal(n) * 5
    theta1 = rng.standard_normal(d)
    p1 = draw(st.floats(0.05, 20))
    return X, y, theta1, p1


class TestRidgeProperty:
    @settings(max_examples=50, deadline=None)
    @given(streams())
    def test_every_prefix(self, case):
        X, y, theta1, p1 = case
        cfg = EkfConfig(GAUSSIAN_MODEL, theta1, p1_scale=p1)
        rec = run_trajectory(cfg, zip(X, y))
        th = rec.thetas()
        for t in range(len(X) + 1):
            oracle = ridge_solution(X[:t], y[:t], theta1, p1)
            np.testing.assert_allclose(th[t], oracle, rtol=1e-8, atol=1e-8 * np.linalg.norm(oracle) + 1e-12)
