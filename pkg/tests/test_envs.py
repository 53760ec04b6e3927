import itertools

import numpy as np
import pytest

from psmeta.envs import (
    DISTRACTOR_REWARD,
    EnvError,
    GridWorld,
    InvasionGame,
    NShipGame,
    PhaseSchedule,
    load_map,
    nship_expected_reward,
    shipped_map,
)


def test_invasion_rewards_and_inversion():
    rng = np.random.default_rng(0)
    env = InvasionGame()
    percept = env.reset(rng)
    for _ in range(50):
        right = "right" if percept == "⇒" else "left"
        step = env.step(right, rng)
        assert step.reward == 1.0 and step.trial_ended
        percept = step.next_percept
    env.set_phase(1)
    wrong = "right" if percept == "⇒" else "left"
    assert env.step(wrong, rng).reward == 0.0
    with pytest.raises(EnvError):
        env.step("up", rng)


def test_invasion_symbols_are_balanced():
    rng = np.random.default_rng(1)
    env = InvasionGame()
    n = 20_000
    right = sum(env.reset(rng) == "⇒" for _ in range(n))
    assert abs(right / n - 0.5) < 5 * (0.25 / n) ** 0.5


def test_invasion_performance():
    env = InvasionGame()
    perfect = {"⇐": {"left": 1.0, "right": 0.0}, "⇒": {"left": 0.0, "right": 1.0}}
    assert env.performance(perfect.__getitem__) == 1.0
    env.set_phase(1)
    assert env.performance(perfect.__getitem__) == 0.0
    assert env.performance(lambda s: {"left": 0.5, "right": 0.5}) == 0.5


def _play_strategy(n, strategy):
    game = NShipGame(n)
    ship = game.reset()
    total = 0.0
    while True:
        step = game.step("block" if strategy[ship - 1] else "pass")
        total += step.reward
        if step.trial_ended:
            return total
        ship = step.next_percept


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_nship_expected_reward_matches_enumeration(n):
    for strategy in itertools.product((0, 1), repeat=n):
        assert _play_strategy(n, strategy) == nship_expected_reward([float(s) for s in strategy])


def test_nship_expected_reward_mixed_policy():
    # exact expectation over all block/pass outcomes
    p = [0.3, 0.6, 0.9]
    expect = 0.0
    for outcome in itertools.product((0, 1), repeat=3):
        prob = np.prod([pi if o else 1 - pi for pi, o in zip(p, outcome)])
        expect += prob * _play_strategy(3, outcome)
    assert nship_expected_reward(p) == pytest.approx(expect)


def test_nship_optimal_and_greedy():
    for n in (2, 3, 4):
        assert nship_expected_reward([0.0] * (n - 1) + [1.0]) == 5 * (n - 1)
        assert nship_expected_reward([1.0] * n) == n - 1
    assert NShipGame(1).lambda_max == 1.0
    with pytest.raises(EnvError):
        NShipGame(0)


def test_shipped_map_distances():
    for name in "abc":
        gmap = shipped_map(name)
        assert gmap.shape == (6, 9)
        assert gmap.shortest_path(gmap.goal) == 14
    c = shipped_map("c")
    assert c.shortest_path(c.distractor) == 12
    assert shipped_map("a").distractor is None


def test_map_b_blocks_the_map_a_route():
    a, b = shipped_map("a"), shipped_map("b")
    assert (a.walls != b.walls).any()
    assert b.walls[3, 7] and not a.walls[3, 7]


def test_wall_collision_keeps_position():
    gmap = shipped_map("a")
    assert gmap.move(gmap.start, 0) == gmap.start  # left edge of the grid
    assert gmap.move((2, 1), 1) == (2, 1)  # wall to the right
    assert gmap.move((2, 1), 2) == (1, 1)


def test_grid_world_trial_cycle():
    world = GridWorld([shipped_map("c")])
    percept = world.reset()
    assert percept == "2,0" and world.n_states == 54
    world.pos = (3, 8)
    step = world.step("down")
    assert step.reward == DISTRACTOR_REWARD and step.trial_ended and step.next_percept == "2,0"
    world.pos = (1, 8)
    step = world.step("up")
    assert step.reward == 1.0 and step.trial_ended
    step = world.step("left")
    assert step.reward == 0.0 and step.next_percept == "2,0"


def test_grid_world_phase_switch_resets_start():
    world = GridWorld([shipped_map("a"), shipped_map("b")])
    world.pos = (5, 5)
    assert world.set_phase(1) == "2,0"
    assert world.map is world.maps[1]


@pytest.mark.parametrize(
    "text",
    ["", "S.G\n..", "S..\n...", "S.X\n..G", "SG.\n.G.", "S#G\n###", "S.g\n.gG"],
)
def test_bad_maps_are_rejected(text):
    with pytest.raises(EnvError):
        load_map(text)


def test_phase_schedule_counts_units():
    s = PhaseSchedule([2, 3], "interactions")
    flips = [s.tick(False) for _ in range(5)]
    assert flips == [False, True, False, False, False]
    assert s.phase == 1
    t = PhaseSchedule([2, 1], "trials")
    assert not t.tick(False) and not t.tick(True) and t.tick(True)
    with pytest.raises(EnvError):
        PhaseSchedule([0])
