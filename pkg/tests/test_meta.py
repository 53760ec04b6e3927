import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psmeta.meta import (
    ETA_VALUES,
    EtaController,
    GammaController,
    MetaConfig,
    MetaNetwork,
    WindowAccumulator,
    eta_window_length,
    gamma_window_length,
    internal_reward,
    rule_i,
    rule_ii,
    tilde_delta,
    window_delta,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
signed = st.floats(-1.0, 1.0, allow_nan=False)


def test_eta_actions():
    assert ETA_VALUES == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def test_window_lengths():
    cfg = MetaConfig()
    # invasion game: two percepts, two actions
    assert eta_window_length(2, 2, cfg) == 1200
    assert gamma_window_length(2, 2, cfg) == 6000
    # four-ship game and the 6x9 grid
    assert eta_window_length(4, 2, cfg) == 2400
    assert eta_window_length(54, 4, cfg) == 64800
    assert eta_window_length(2, 2, MetaConfig(n_eta=3)) == 120


@pytest.mark.parametrize("kwargs", [{"n_eta": 0}, {"c_gamma": -1}, {"gamma_meta": 2}, {"rule_bias": (0.5, 1)}])
def test_meta_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        MetaConfig(**kwargs)


def test_window_accumulator_rotation():
    w = WindowAccumulator(3)
    assert w.accumulate(1.0) is None
    assert w.accumulate(0.0) is None
    first = w.accumulate(2.0)
    assert first.now == 3.0 and first.prev is None
    for r in (1.0, 1.0):
        assert w.accumulate(r) is None
    second = w.accumulate(1.0)
    assert second.now == 3.0 and second.prev == 3.0
    w.reset()
    assert w.ticks == 0 and w.previous_sum is None


def test_window_delta_values():
    assert window_delta(10.0, 5.0) == 0.5
    assert window_delta(5.0, 10.0) == -0.5
    assert window_delta(0.0, 0.0) == 0.0
    assert window_delta(0.0, 4.0) == -1.0


@given(st.floats(0.0, 1e9), st.floats(0.0, 1e9), st.floats(1e-3, 1e3))
def test_window_delta_scale_invariant(a, b, k):
    assert window_delta(k * a, k * b) == pytest.approx(window_delta(a, b), abs=1e-12)


@given(st.floats(-1.0, 1.0))
def test_internal_reward_is_sign(d):
    assert internal_reward(d) == (0 if d == 0 else (1 if d > 0 else -1))


def test_tilde_delta():
    assert tilde_delta(0.0, 0.2) == pytest.approx(0.2 / 1.2)
    assert tilde_delta(1.0, 0.2) == 1.0
    assert tilde_delta(-0.2, 0.2) == 0.0


@given(unit, signed)
def test_rules_stay_in_unit_interval(gamma, td):
    for fn in (rule_i, rule_ii):
        assert 0.0 <= fn(gamma, td) <= 1.0


@given(unit)
def test_rules_fixed_at_zero_change(gamma):
    assert rule_i(gamma, 0.0) == gamma
    assert rule_ii(gamma, 0.0) == gamma


def test_rule_directions():
    # a drop in performance raises gamma under rule I and lowers it under rule II
    assert rule_i(0.2, -0.5) == pytest.approx(0.6)
    assert rule_ii(0.2, -0.5) == pytest.approx(0.1)
    # a rise does the opposite
    assert rule_i(0.2, 0.5) == pytest.approx(0.1)
    assert rule_ii(0.2, 0.5) == pytest.approx(0.6)
    assert rule_i(0.7, -1.0) == 1.0 and rule_ii(0.7, 1.0) == 1.0


def test_meta_network_update_touches_traced_edge_only():
    m = MetaNetwork(("I", "II"), gamma_meta=0.0)
    rng = np.random.default_rng(0)
    choice = m.select(rng)
    m.update(1)
    hs = dict(zip(("I", "II"), m.h_values))
    assert hs[choice] == 2.0
    assert sum(m.h_values) == 3.0
    m.update(-1)
    m.update(-1)
    assert min(m.h_values) == 1.0  # clamped


def test_meta_network_damping():
    m = MetaNetwork(ETA_VALUES, gamma_meta=0.5, initial_h=[3.0] * 10)
    m.select(np.random.default_rng(0))
    m.update(0)
    assert m.h_values == [2.0] * 10


def test_meta_network_update_without_selection_is_ignored():
    m = MetaNetwork(("I", "II"))
    m.update(1)
    assert m.h_values == [1.0, 1.0]


def test_rule_bias_preset():
    g = GammaController(10, MetaConfig(rule_bias=(1e5, 1.0)))
    assert g.p_rule_i() == pytest.approx(1e5 / (1e5 + 1))


def test_gamma_window_step():
    g = GammaController(10, MetaConfig(rule_bias=(1e5, 1.0)))
    g.current_gamma = 0.1
    rule, lam, gamma = g.window_step(5.0, 10.0, np.random.default_rng(4))
    assert lam == -1
    td = tilde_delta(-0.5, 0.2)
    expect = rule_i(0.1, td) if rule == "I" else rule_ii(0.1, td)
    assert gamma == expect == g.current_gamma


def test_eta_controller_selects_from_actions():
    e = EtaController(10, MetaConfig())
    rng = np.random.default_rng(2)
    seen = {e.select_eta(rng) for _ in range(300)}
    assert seen == set(ETA_VALUES)
