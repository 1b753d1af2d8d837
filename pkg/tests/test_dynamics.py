import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vorhc.dynamics import (
    DEFAULT_STATE_COVARIANCE, AgentState, ControlInput, NeighborEstimate, NoiseModel, extrapolate, kf_predict,
    kf_predict_arrays, kf_update, kf_update_arrays, predict_neighbor_horizon, step_dynamics,
)
from vorhc.errors import SingularInnovationError

finite = st.floats(-10, 10, allow_nan=False)


def state(p, v):
    return AgentState(np.array(p, float), np.array(v, float))


def test_constant_velocity_drift():
    nxt = step_dynamics(state([0, 0], [1, 0]), ControlInput([0, 0]), 0.05, 1.0)
    np.testing.assert_allclose(nxt.position, [0.05, 0.0])
    np.testing.assert_allclose(nxt.velocity, [1.0, 0.0])


def test_unit_force_single_step():
    nxt = step_dynamics(state([0, 0], [0, 0]), ControlInput([1, 0]), 0.05, 1.0)
    np.testing.assert_allclose(nxt.position, [0.0, 0.0])
    np.testing.assert_allclose(nxt.velocity, [0.05, 0.0])


def test_zero_is_a_fixed_point():
    nxt = step_dynamics(state([0, 0], [0, 0]), ControlInput([0, 0]), 0.05, 1.0)
    assert np.all(nxt.as_vector() == 0)


def test_noise_enters_velocity_only():
    nxt = step_dynamics(state([1, 2], [0, 0]), ControlInput([0, 0]), 0.1, 2.0, noise=[0.3, -0.4])
    np.testing.assert_allclose(nxt.position, [1, 2])
    np.testing.assert_allclose(nxt.velocity, [0.3, -0.4])


@given(*[finite] * 10, st.floats(0.001, 1), st.floats(0.1, 10))
def test_dynamics_are_linear(p1, p2, v1, v2, u1, u2, q1, q2, w1, w2, dt, m):
    x = np.array([p1, p2, v1, v2])
    y = np.array([q1, q2, w1, w2])
    u, w = np.array([u1, u2]), np.array([w1, w2])

    def f(xx, uu):
        return step_dynamics(AgentState.from_vector(xx), ControlInput(uu), dt, m).as_vector()

    np.testing.assert_allclose(f(x + y, u + w), f(x, u) + f(y, w) - f(np.zeros(4), np.zeros(2)),
                               atol=1e-9 * (1 + np.abs(x).max() + np.abs(y).max() + np.abs(u).max()))


def test_state_and_input_validation():
    with pytest.raises(ValueError):
        AgentState(np.array([np.inf, 0.0]), np.zeros(2))
    with pytest.raises(ValueError):
        ControlInput(np.array([np.nan, 0.0]))


def test_noise_model():
    w = NoiseModel(scale=4.0)
    np.testing.assert_allclose(w.covariance, 4 * DEFAULT_STATE_COVARIANCE)
    np.testing.assert_allclose(w.velocity_covariance, np.diag([0.2, 0.2]))
    assert not NoiseModel(scale=0.0).enabled
    with pytest.raises(ValueError):
        NoiseModel(scale=-1.0)
    with pytest.raises(ValueError):
        NoiseModel(state_covariance=np.ones((4, 4)))


def test_predict_examples():
    est = NeighborEstimate.from_arrays([0, 0, 1, 2], np.zeros((4, 4)))
    out = kf_predict(est, 0.1, np.zeros((4, 4)))
    np.testing.assert_allclose(out.mean.position, [0.1, 0.2])
    assert np.all(out.covariance == 0)
    eye = NeighborEstimate.from_arrays([1, 2, 3, 4], np.eye(4))
    same = kf_predict(eye, 0.0, np.zeros((4, 4)))
    np.testing.assert_array_equal(same.covariance, np.eye(4))
    np.testing.assert_array_equal(same.mean.as_vector(), [1, 2, 3, 4])
    fresh = kf_predict(NeighborEstimate.from_arrays(np.zeros(4), np.zeros((4, 4))), 0.05, DEFAULT_STATE_COVARIANCE)
    np.testing.assert_array_equal(fresh.covariance, DEFAULT_STATE_COVARIANCE)


def test_update_examples():
    prior = NeighborEstimate.from_arrays([0, 0, 0, 0], np.eye(4))
    z = state([1, 2], [3, 4])
    exact = kf_update(prior, z, np.zeros((4, 4)))
    np.testing.assert_allclose(exact.mean.as_vector(), z.as_vector(), atol=1e-15)
    np.testing.assert_allclose(exact.covariance, 0, atol=1e-15)
    vague = kf_update(prior, z, 1e12 * np.eye(4))
    np.testing.assert_allclose(vague.mean.as_vector(), 0, atol=1e-6)
    np.testing.assert_allclose(vague.covariance, np.eye(4), atol=1e-6)
    half = kf_update(prior, z, np.eye(4))
    np.testing.assert_allclose(half.covariance, 0.5 * np.eye(4), atol=1e-15)
    np.testing.assert_allclose(half.mean.as_vector(), 0.5 * z.as_vector(), atol=1e-15)


def test_update_singular_innovation():
    prior = NeighborEstimate.from_arrays(np.zeros(4), np.zeros((4, 4)))
    with pytest.raises(SingularInnovationError):
        kf_update(prior, state([0, 0], [0, 0]), np.zeros((4, 4)))


@st.composite
def spd(draw, n=4):
    a = np.array(draw(st.lists(st.floats(-1, 1), min_size=n * n, max_size=n * n))).reshape(n, n)
    return a @ a.T + draw(st.floats(1e-3, 1.0)) * np.eye(n)


@given(spd(), spd(), st.lists(finite, min_size=4, max_size=4))
def test_update_never_grows_trace_and_stays_psd(p, r, z):
    m, c = kf_update_arrays(np.zeros(4), p, np.array(z), r)
    assert np.trace(c) <= np.trace(p) + 1e-12
    assert np.linalg.eigvalsh(c).min() >= -1e-12
    np.testing.assert_allclose(c, c.T)


@given(spd(), spd(), spd(), st.floats(0.0, 0.5))
def test_batched_filter_matches_single(p1, p2, r, dt):
    means = np.array([[1, 2, 3, 4], [-1, 0, 0.5, 0.2]], float)
    covs = np.stack([p1, p2])
    bm, bc = kf_update_arrays(*kf_predict_arrays(means, covs, dt, r), means[::-1], r)
    for k in range(2):
        sm, sc = kf_update_arrays(*kf_predict_arrays(means[k], covs[k], dt, r), means[::-1][k], r)
        np.testing.assert_allclose(bm[k], sm, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(bc[k], sc, rtol=1e-12, atol=1e-12)


def test_horizon_examples():
    est = NeighborEstimate.from_arrays([0, 0, 1, 0], np.eye(4))
    pos, vel = predict_neighbor_horizon(est, 3, 0.05)
    np.testing.assert_array_equal(vel, [[1, 0]] * 3)
    still = NeighborEstimate.from_arrays([2, 3, 0, 0], np.eye(4))
    pos0, vel0 = predict_neighbor_horizon(still, 4, 0.05)
    assert np.all(vel0 == 0) and np.all(pos0 == [2, 3])
    with pytest.raises(ValueError):
        predict_neighbor_horizon(est, 0, 0.05)


@settings(max_examples=50)
@given(st.lists(finite, min_size=4, max_size=4), st.integers(1, 30), st.floats(0.001, 0.2))
def test_horizon_matches_chained_predicts_exactly(x, n, dt):
    est = NeighborEstimate.from_arrays(x, np.zeros((4, 4)))
    pos, vel = predict_neighbor_horizon(est, n, dt)
    cur = est
    for k in range(n):
        cur = kf_predict(cur, dt, np.zeros((4, 4)))
        assert np.array_equal(cur.mean.position, pos[k])
        assert np.array_equal(cur.mean.velocity, vel[k])


def test_extrapolate_batches():
    p = np.array([[0.0, 0.0], [1.0, 1.0]])
    v = np.array([[1.0, 0.0], [0.0, -1.0]])
    pos, vel = extrapolate(p, v, 5, 0.1)
    assert pos.shape == (2, 5, 2)
    np.testing.assert_allclose(pos[1, -1], [1.0, 0.5])


def test_filter_consistency_nees():
    """Mean NEES of a constant-velocity target tracked under the default noise lies in the chi-square band."""
    rng = np.random.default_rng(2024)
    runs, steps, dt = 1000, 60, 0.05
    w = DEFAULT_STATE_COVARIANCE
    q = np.zeros((4, 4))
    q[2:, 2:] = w[2:, 2:]
    sd_meas = np.sqrt(np.diag(w))
    truth = np.zeros((runs, 4))
    truth[:, 2] = 1.0
    mean = truth + rng.standard_normal((runs, 4)) * sd_meas
    cov = np.broadcast_to(w, (runs, 4, 4)).copy()
    for _ in range(steps):
        truth[:, :2] += truth[:, 2:] * dt
        truth[:, 2:] += rng.standard_normal((runs, 2)) * sd_meas[2:]
        mean, cov = kf_predict_arrays(mean, cov, dt, q)
        mean, cov = kf_update_arrays(mean, cov, truth + rng.standard_normal((runs, 4)) * sd_meas, w)
    err = mean - truth
    nees = np.einsum("ri,ri->r", err, np.linalg.solve(cov, err[..., None])[..., 0])
    assert 3.0 <= nees.mean() <= 5.2
