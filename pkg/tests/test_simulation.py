import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vorhc.dynamics import NoiseModel
from vorhc.errors import ConfigError
from vorhc.metrics import compute_metrics, pairwise_distances
from vorhc.planner import PlannerConfig
from vorhc.scenarios import (
    AgentSpec, ScenarioConfig, ScenarioId, axis_reflection, make_scenario, progress_reference, reference_horizon,
)
from vorhc.simulation import TrajectoryLog, agent_rng, simulate

QUIET = NoiseModel(scale=0.0)


def test_scenario_examples():
    o6 = make_scenario(ScenarioId.OriginSwap6)
    np.testing.assert_allclose(o6.agents[0].start, [-2, 2], atol=1e-12)
    np.testing.assert_allclose(o6.agents[0].goal, [2, -2], atol=1e-12)
    a6 = make_scenario("AxisSwap6")
    np.testing.assert_allclose(a6.agents[0].goal, [-2, -2], atol=1e-12)
    assert a6.agents[0].color == "green"
    assert len(make_scenario("OriginSwap12").agents) == 12
    with pytest.raises(ConfigError):
        make_scenario("AxisSwap6", n_agents=12)


@pytest.mark.parametrize("sid", ["AxisSwap6", "AxisSwap12", "OriginSwap6", "OriginSwap12"])
def test_goals_are_distinct_and_reflected(sid):
    sc = make_scenario(sid)
    goals = np.array([a.goal for a in sc.agents])
    assert len({tuple(np.round(g, 9)) for g in goals}) == len(goals)
    for a in sc.agents:
        if sid.startswith("Origin"):
            np.testing.assert_array_equal(a.goal, -a.start)
        else:
            np.testing.assert_array_equal(a.goal, axis_reflection(a.start))


def test_scenario_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(agents=[AgentSpec([0, 0], [1, 1]), AgentSpec([0.1, 0], [2, 2])])
    with pytest.raises(ConfigError):
        ScenarioConfig(agents=[AgentSpec([0, 0], [1, 1])], t_run=0.033)
    with pytest.raises(ConfigError):
        ScenarioConfig(agents=[AgentSpec([0, 0], [1, 1])], schedule="random")
    with pytest.raises(ConfigError):
        ScenarioConfig(agents=[])


def test_reference_shapes():
    ref = reference_horizon([0, 0], [1, 0], 1.0, 0.0, 30, 0.05)
    np.testing.assert_allclose(ref[4], [0.2, 0, 1, 0])
    np.testing.assert_allclose(ref[-1], [1, 0, 0, 0])
    late = reference_horizon([0, 0], [1, 0], 1.0, 0.5, 3, 0.05)
    np.testing.assert_allclose(late[0, :2], [0.5, 0])
    behind = progress_reference([0, 0], [1, 0], [0.1, 0.3], 1.0, 3, 0.05)
    np.testing.assert_allclose(behind[0, :2], [0.1, 0])
    np.testing.assert_allclose(progress_reference([0, 0], [1, 0], [-1, 0], 1.0, 1, 0.05)[0, :2], [0, 0])


def test_agent_streams_are_independent_of_agent_count():
    a = agent_rng(5, 2).standard_normal(4)
    b = agent_rng(5, 2).standard_normal(4)
    c = agent_rng(5, 3).standard_normal(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_zero_run_time_logs_only_the_initial_state():
    sc = make_scenario("AxisSwap6", t_run=0.0)
    log = simulate(sc)
    assert log.n_steps == 0 and log.positions.shape == (1, 6, 2)
    np.testing.assert_array_equal(log.positions[0], [a.start for a in sc.agents])


def test_single_agent_reaches_its_goal():
    sc = ScenarioConfig(agents=[AgentSpec([0, 0], [2, 1])], noise=QUIET, t_run=5.0)
    log = simulate(sc)
    assert np.linalg.norm(log.positions[-1, 0] - [2, 1]) <= 0.05
    m = compute_metrics(log)
    assert m.min_pairwise_distance == math.inf and m.success


def test_single_agent_with_noise_runs():
    sc = ScenarioConfig(agents=[AgentSpec([0, 0], [1, 0])], t_run=0.5, seed=3)
    log = simulate(sc)
    assert np.all(np.isfinite(log.positions))


def test_seeded_runs_repeat_exactly():
    sc = make_scenario("OriginSwap6", t_run=1.0, seed=11)
    a, b = simulate(sc), simulate(sc)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.inputs, b.inputs)
    c = simulate(replace(sc, seed=12))
    assert not np.array_equal(a.positions, c.positions)


def rotate_half_turn(p):
    return -p


def test_antipodal_pair_is_half_turn_symmetric():
    agents = [AgentSpec([-1.5, 0.02], [1.5, -0.02]), AgentSpec([1.5, -0.02], [-1.5, 0.02])]
    sc = ScenarioConfig(agents=agents, noise=QUIET, t_run=4.0, schedule="synchronous")
    log = simulate(sc)
    np.testing.assert_allclose(log.positions[:, 1], rotate_half_turn(log.positions[:, 0]), atol=1e-6)
    assert compute_metrics(log).collision_free


def test_noise_free_pair_passes_each_other():
    agents = [AgentSpec([-1.5, 0.0], [1.5, 0.0]), AgentSpec([1.5, 0.0], [-1.5, 0.0])]
    log = simulate(ScenarioConfig(agents=agents, noise=QUIET, t_run=6.0))
    m = compute_metrics(log)
    assert m.min_clearance > 0 and m.success


def fake_log(positions, goals=None, radii=None):
    positions = np.asarray(positions, float)
    s, n = positions.shape[:2]
    return TrajectoryLog(
        times=0.05 * np.arange(s), positions=positions, velocities=np.zeros_like(positions),
        inputs=np.zeros((max(s - 1, 0), n, 2)), statuses=[["Optimal"] * n for _ in range(max(s - 1, 0))],
        solve_times=np.full((max(s - 1, 0), n), 1e-3), slack=np.zeros((max(s - 1, 0), n)),
        radii=np.full(n, 0.1) if radii is None else np.asarray(radii, float),
        goals=positions[-1] if goals is None else np.asarray(goals, float),
    )


def test_metrics_static_pair():
    m = compute_metrics(fake_log([[[0, 0], [1, 0]]] * 3))
    assert m.min_pairwise_distance == pytest.approx(1.0)
    assert m.min_clearance == pytest.approx(0.8)
    assert m.success and m.collision_free


def test_metrics_crossing_log():
    # a moves along x at y = 0, b along x at y = 0.3 in the opposite direction; closest approach 0.3
    t = np.linspace(0, 2, 41)
    a = np.column_stack([-1 + t, np.zeros_like(t)])
    b = np.column_stack([1 - t, np.full_like(t, 0.3)])
    m = compute_metrics(fake_log(np.stack([a, b], axis=1)))
    assert m.min_pairwise_distance == pytest.approx(0.3, abs=1e-12)


def test_metrics_flags_goal_miss_and_collision():
    miss = compute_metrics(fake_log([[[0, 0], [1, 0]]], goals=[[0, 0.5], [1, 0]]))
    assert not miss.success and miss.collision_free
    assert miss.goal_errors == pytest.approx([0.5, 0.0])
    crash = compute_metrics(fake_log([[[0, 0], [0.15, 0]]]))
    assert not crash.success and not crash.collision_free


def test_metrics_of_empty_log_are_sentinels():
    m = compute_metrics(fake_log(np.zeros((0, 2, 2)), goals=np.zeros((2, 2))))
    assert m.min_pairwise_distance == math.inf and not m.success and m.n_steps == 0


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=6, unique=True))
def test_pairwise_distances_match_loops(points):
    p = np.array(points)[None]
    d = pairwise_distances(p)[0]
    k = 0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            assert d[k] == pytest.approx(math.dist(points[i], points[j]))
            k += 1


def test_custom_planner_settings_reach_the_loop():
    sc = ScenarioConfig(agents=[AgentSpec([0, 0], [1, 0])], noise=QUIET, t_run=0.5,
                        planner=PlannerConfig(horizon=10, dt=0.1))
    log = simulate(sc)
    assert log.n_steps == 5
    np.testing.assert_allclose(log.times[-1], 0.5)


@pytest.mark.parametrize("sid", ["AxisSwap6", "AxisSwap12", "OriginSwap6", "OriginSwap12"])
def test_goal_map_is_an_involution(sid):
    sc = make_scenario(sid)
    reflect = axis_reflection if sid.startswith("Axis") else (lambda p: -p)
    for a in sc.agents:
        np.testing.assert_array_equal(reflect(a.goal), a.start)
