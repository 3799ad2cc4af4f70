import math

import numpy as np
import pytest

from gridiql import qlearn_core
from gridiql.errors import GridDomainError
from gridiql.geometry import Metric
from gridiql.grid_env import Action, GridMap, is_valid_path, legal_actions
from gridiql.paco_init import AntTour, PacoParams, seed_qtable
from gridiql.qlearn_core import (
    GreedyPath,
    LearnParams,
    QTable,
    Variant,
    epsilon_greedy,
    greedy_path,
    q_update,
    run_episode,
    seed_streams,
    train,
    variant_reward,
)
from gridiql.reward_uch import RewardConfig, uch_coefficient


@pytest.fixture
def empty3():
    return GridMap.empty(3, 3)


def test_learn_params_defaults_and_validation(empty3):
    params = LearnParams()
    assert (params.alpha, params.gamma, params.epsilon) == (0.3, 0.95, 0.1)
    assert params.episodes == 2000
    assert params.step_cap(empty3) == 36
    with pytest.raises(GridDomainError) as excinfo:
        LearnParams(alpha=1.5)
    assert excinfo.value.name == "alpha"
    with pytest.raises(GridDomainError):
        LearnParams(gamma=1.0)


def test_epsilon_schedule():
    assert LearnParams(epsilon=0.1).epsilon_at(500) == 0.1
    decaying = LearnParams(epsilon=0.5, epsilon_decay=0.9, epsilon_min=0.1)
    assert decaying.epsilon_at(0) == 0.5
    assert decaying.epsilon_at(1) == pytest.approx(0.45)
    assert decaying.epsilon_at(100) == 0.1


def test_q_update_hand_evaluated(empty3):
    q = QTable.constant(empty3, 0.0)
    q_update(q, 1, Action.E, -1.0, 4, LearnParams(alpha=0.3, gamma=0.95))
    assert q.get(1, Action.E) == pytest.approx(-0.3, rel=1e-12)

    q.set(5, Action.N, 2.0)
    q_update(q, 2, Action.SE, -1.0, 5, LearnParams(alpha=0.3, gamma=0.95))
    assert q.get(2, Action.SE) == pytest.approx(0.3 * (-1.0 + 0.95 * 2.0), rel=1e-12)


def test_q_update_rejects_non_finite_reward(empty3):
    with pytest.raises(GridDomainError):
        q_update(QTable.constant(empty3), 1, Action.E, math.nan, 4, LearnParams())


def test_qtable_shape_is_checked(empty3):
    with pytest.raises(GridDomainError):
        QTable(3, 3, np.zeros((8, 8)))
    with pytest.raises(GridDomainError):
        QTable(1, 1, [[math.inf] * 8])


def test_epsilon_greedy_exploits(rng):
    row = np.array([0.0, 5.0, -1.0, 0, 0, 0, 0, 0])
    legal = (Action.N, Action.NE, Action.E)
    assert all(epsilon_greedy(row, legal, 0.0, rng) is Action.NE for _ in range(50))


def test_epsilon_greedy_breaks_ties_at_random(rng):
    row = np.array([1.0, 1.0, -1.0, 0, 0, 0, 0, 0])
    picks = {epsilon_greedy(row, (Action.N, Action.NE, Action.E), 0.0, rng) for _ in range(200)}
    assert picks == {Action.N, Action.NE}


def test_epsilon_greedy_explores_every_legal_action(rng):
    row = np.array([9.0, 0, 0, 0, 0, 0, 0, 0])
    legal = (Action.N, Action.E, Action.S)
    picks = {epsilon_greedy(row, legal, 1.0, rng) for _ in range(300)}
    assert picks == set(legal)


def test_epsilon_greedy_needs_a_legal_action(rng):
    with pytest.raises(GridDomainError):
        epsilon_greedy(np.zeros(8), (), 0.1, rng)


def test_run_episode_single_step(rng):
    grid = GridMap.empty(2, 1)
    q = QTable.constant(grid)
    record, q = run_episode(grid, q, RewardConfig(metric=Metric.EUCLIDEAN), LearnParams(), 0, rng)
    assert (record.steps, record.reached_goal, record.total_return) == (1, True, -1.0)
    assert q.get(1, Action.E) == pytest.approx(-0.3)


def test_run_episode_rejects_mismatched_qtable(rng, empty3):
    with pytest.raises(GridDomainError):
        run_episode(empty3, QTable.constant(GridMap.empty(2, 2)), RewardConfig(), LearnParams(), 0, rng)


def test_greedy_path_follows_the_table(empty3):
    q = QTable.constant(empty3)
    q.set(1, Action.NE, 1.0)
    q.set(5, Action.NE, 1.0)
    path = greedy_path(empty3, q, RewardConfig(metric=Metric.EUCLIDEAN), 0, 36)
    assert path.cells == (1, 5, 9)
    assert path.reached_goal
    assert path.total_return == pytest.approx(-2 * math.sqrt(2))


def test_greedy_path_detects_loops(empty3):
    q = QTable.constant(empty3)
    q.set(1, Action.N, 1.0)
    q.set(2, Action.S, 1.0)
    path = greedy_path(empty3, q, RewardConfig(), 0, 36)
    assert path.cells == (1, 2, 1)
    assert not path.reached_goal


def test_snapshot_id_identifies_the_cells():
    a = GreedyPath((1, 5, 9), True, -2.0)
    b = GreedyPath((1, 5, 9), True, -3.0)
    c = GreedyPath((1, 2, 9), True, -2.0)
    assert a.snapshot_id == b.snapshot_id != c.snapshot_id
    assert len(a.snapshot_id) == 12


def test_variant_reward():
    cfg = RewardConfig(metric=Metric.MANHATTAN, mu0=0.016)
    assert variant_reward(Variant.A_BASELINE, cfg) == RewardConfig(metric=Metric.EUCLIDEAN, mu0=0.016)
    shaped = variant_reward(Variant.D_IQL, cfg)
    assert (shaped.metric, shaped.uch_enabled) == (Metric.MANHATTAN, True)


def test_variant_flags():
    assert [(v.uses_paco, v.uses_uch) for v in Variant] == [
        (False, False),
        (True, False),
        (False, True),
        (True, True),
    ]


def test_seed_streams_are_keyed():
    paco_a, ep_a = seed_streams(5, Variant.A_BASELINE, Metric.EUCLIDEAN)
    paco_d, ep_d = seed_streams(5, Variant.D_IQL, Metric.EUCLIDEAN)
    assert paco_a.random() == paco_d.random()
    assert ep_a.random() != ep_d.random()
    _, ep_again = seed_streams(5, Variant.D_IQL, Metric.EUCLIDEAN)
    _, ep_d = seed_streams(5, Variant.D_IQL, Metric.EUCLIDEAN)
    assert ep_again.random() == ep_d.random()


def test_train_is_deterministic(empty3):
    params = LearnParams(episodes=20)
    first, q1 = train(empty3, Variant.A_BASELINE, RewardConfig(), params, seed=11)
    second, q2 = train(empty3, Variant.A_BASELINE, RewardConfig(), params, seed=11)
    assert first.records == second.records
    assert q1 == q2
    assert len(first) == 20
    assert first.paco is None


def test_train_records_greedy_evaluation(empty3):
    trace, _ = train(empty3, Variant.C_UCH_REWARD_ONLY, RewardConfig(), LearnParams(episodes=10), seed=0)
    assert [r.episode for r in trace.records] == list(range(10))
    for record in trace.records:
        assert record.greedy_return is not None and record.greedy_path_id is not None
        assert record.greedy_return <= 0
    expected = [r.greedy_return if r.greedy_reached else math.nan for r in trace.records]
    assert np.array_equal(trace.returns("greedy"), expected, equal_nan=True)
    assert trace.steps_total == sum(r.steps for r in trace.records)
    with pytest.raises(GridDomainError):
        trace.returns("median")


def test_paco_variants_share_a_route_under_one_metric():
    grid = GridMap.from_obstacle_coords(4, 4, [(2, 2), (3, 3)], (1, 1), (4, 4))
    reward = RewardConfig(metric=Metric.EUCLIDEAN)
    paco = PacoParams(m=5, max_iters=5)
    b, _ = train(grid, Variant.B_PACO_INIT_ONLY, reward, LearnParams(episodes=1), paco, seed=2)
    d, _ = train(grid, Variant.D_IQL, reward, LearnParams(episodes=1), paco, seed=2)
    assert b.paco.best_tour == d.paco.best_tour
    assert is_valid_path(grid, b.paco.best_tour.visited)


def test_paco_seeding_starts_from_v_init():
    grid = GridMap.empty(2, 2)
    paco = PacoParams(m=3, max_iters=2)
    learn = LearnParams(episodes=1)
    trace, q = train(grid, Variant.B_PACO_INIT_ONLY, RewardConfig(), learn, paco, seed=0, v_init=7.5598)
    route = trace.paco.best_tour.visited
    assert route[0] == grid.start and route[-1] == grid.goal
    assert q.values.max() <= 7.5598


def test_zero_table_greedy_path_uses_lowest_index_ties(empty3):
    path = greedy_path(empty3, QTable.constant(empty3), RewardConfig(metric=Metric.CHEBYSHEV), 0, 36)
    assert path.cells == (1, 2, 3, 6, 9)
    assert path.total_return == -4.0


def test_q_update_bootstraps_from_legal_actions_only(empty3):
    params = LearnParams(alpha=0.3, gamma=0.95)
    q = QTable.constant(empty3, 0.0)
    # cell 1 is a corner: N, NE and E are legal, the other five entries stay 0
    for action in legal_actions(empty3, 1):
        q.set(1, action, -1.0)
    q_update(q, 4, Action.W, -1.0, 1, params, legal_actions(empty3, 1))
    assert q.get(4, Action.W) == pytest.approx(0.3 * (-1.0 + 0.95 * -1.0), rel=1e-12)

    unrestricted = QTable.constant(empty3, 0.0)
    for action in legal_actions(empty3, 1):
        unrestricted.set(1, action, -1.0)
    q_update(unrestricted, 4, Action.W, -1.0, 1, params)
    assert unrestricted.get(4, Action.W) == pytest.approx(-0.3, rel=1e-12)


def test_run_episode_bootstraps_over_the_legal_actions_of_the_next_cell(monkeypatch, wall3):
    seen = []

    def recording_update(q, s, a, r, s_next, params, legal_next=None):
        seen.append((s_next, legal_next))
        return original(q, s, a, r, s_next, params, legal_next)

    original = qlearn_core.q_update
    monkeypatch.setattr(qlearn_core, "q_update", recording_update)
    rng = np.random.default_rng(5)
    q = QTable.constant(wall3)
    for t in range(20):
        run_episode(wall3, q, RewardConfig(metric=Metric.EUCLIDEAN), LearnParams(epsilon=0.3), t, rng)
    assert seen
    for s_next, legal_next in seen:
        assert tuple(legal_next) == tuple(legal_actions(wall3, s_next))
    # illegal entries are never picked, so they keep their initial value
    for c in wall3.free_cells():
        illegal = set(Action) - set(legal_actions(wall3, c))
        assert all(q.get(c, action) == 0.0 for action in illegal)


def test_run_episode_changes_only_visited_pairs(monkeypatch, empty5):
    visited = set()

    def recording_update(q, s, a, r, s_next, params, legal_next=None):
        visited.add((s, int(a)))
        return original(q, s, a, r, s_next, params, legal_next)

    original = qlearn_core.q_update
    monkeypatch.setattr(qlearn_core, "q_update", recording_update)
    rng = np.random.default_rng(8)
    q = QTable.constant(empty5, 0.0)
    for t in range(5):
        before = q.values.copy()
        run_episode(empty5, q, RewardConfig(metric=Metric.EUCLIDEAN), LearnParams(), t, rng)
        rows, actions = np.nonzero(q.values != before)
        assert {(int(r) + 1, int(a)) for r, a in zip(rows, actions)} <= visited


def test_q_values_stay_bounded_every_episode(wall3):
    params = LearnParams(alpha=0.3, gamma=0.95, epsilon=0.2)
    reward = RewardConfig(metric=Metric.EUCLIDEAN)
    v_init = 7.5
    route = AntTour((1, 2, 3, 6, 9, 8, 7), True, 6.0)
    q = seed_qtable(route, v_init, wall3)
    # largest step cost on the map is a diagonal
    lower = -math.sqrt(2) / (1 - params.gamma)
    upper = max(v_init, 0.0)
    rng = np.random.default_rng(21)
    for t in range(200):
        run_episode(wall3, q, reward, params, t, rng)
        assert q.values.min() >= lower - 1e-9
        assert q.values.max() <= upper + 1e-9


def test_epsilon_greedy_is_uniform_when_always_exploring():
    rng = np.random.default_rng(99)
    legal = (Action.N, Action.E, Action.S, Action.W)
    row = np.array([5.0, 0, -1.0, 0, 2.0, 0, 3.0, 0])
    draws = 10_000
    picks = [epsilon_greedy(row, legal, 1.0, rng) for _ in range(draws)]
    counts = np.array([picks.count(action) for action in legal])
    expected = draws / len(legal)
    chi_square = float(((counts - expected) ** 2 / expected).sum())
    # 3 degrees of freedom, p = 0.001
    assert chi_square < 16.27


def test_epsilon_greedy_splits_ties_evenly():
    rng = np.random.default_rng(42)
    row = np.array([2.0, 0, 2.0, 0, 0, 0, 0, 0])
    picks = [epsilon_greedy(row, (Action.N, Action.E, Action.S), 0.0, rng) for _ in range(10_000)]
    assert picks.count(Action.S) == 0
    assert 4700 <= picks.count(Action.N) <= 5300


def test_uch_variants_seed_the_route_on_the_reward_scale():
    grid = GridMap.empty(2, 2)
    paco = PacoParams(m=3, max_iters=2)
    reward = RewardConfig(metric=Metric.CHEBYSHEV, mu0=0.016)
    learn = LearnParams(episodes=1)
    _, q_b = train(grid, Variant.B_PACO_INIT_ONLY, reward, learn, paco, seed=0, v_init=9.3397)
    _, q_d = train(grid, Variant.D_IQL, reward, learn, paco, seed=0, v_init=9.3397)
    assert q_b.values.max() > 1.0
    assert q_d.values.max() <= 9.3397 * uch_coefficient(0, 0.016) + 1e-12
