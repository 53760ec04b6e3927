from collections import deque

import numpy as np
import pytest

from psmeta.config import EnsembleConfig, parse_config
from psmeta.engine import run_agent
from psmeta.envs import shipped_map
from psmeta.experiments import (
    PresetError,
    TimeSeries,
    greedy_route,
    learning_time,
    preset,
    preset_configs,
    run_ensemble,
    run_to_csv,
)


def series(metric, phase, step=1):
    n = len(metric)
    return TimeSeries("interactions", np.arange(1, n + 1, dtype=float) * step,
                      {"success": np.asarray(metric, float), "phase": np.asarray(phase, float)})


def test_learning_time_trivial_cases():
    assert learning_time(series([1.0] * 5, [0] * 5), 0.8) == [0]
    assert learning_time(series([0.1] * 5, [0] * 5), 0.8) == [5]
    assert learning_time(series([0.1] * 5, [0] * 5, step=10), 0.8) == [50]


def test_learning_time_per_phase():
    s = series([0.5, 0.9, 0.9, 0.2, 0.3, 0.85, 0.1, 0.1], [0, 0, 0, 1, 1, 1, 2, 2])
    assert learning_time(s, 0.8) == [1, 2, 2]


def test_mean_is_fixed_order_sum():
    cfg = EnsembleConfig(env="invasion", variant="full", n_agents=4, phase_len=(500,), n_phases=2,
                         stride=10, n_eta=1, n_gamma=1)
    ts = run_ensemble(cfg)
    total = np.zeros_like(run_agent(cfg, 0).records)
    for i in range(4):
        total += run_agent(cfg, i).records
    assert np.array_equal(ts["gamma"], (total / 4)[:, 1])
    assert list(ts.columns)[0] == "success"
    assert ts.axis == "interactions" and ts.axis_values[-1] == 1000


@pytest.mark.parametrize("env", ["invasion", "nship", "grid"])
def test_parallel_equals_serial(env):
    cfg = EnsembleConfig(env=env, variant="full", n_agents=5, phase_len=(40,), n_phases=2, stride=4,
                         n_eta=1, n_gamma=1)
    serial = run_ensemble(cfg, workers=1)
    parallel = run_ensemble(cfg, workers=3)
    for name in serial.columns:
        assert np.array_equal(serial[name], parallel[name], equal_nan=True)


def test_grid_metric_is_steps_per_reward():
    cfg = EnsembleConfig(env="grid", variant="fixed", gamma=0.0, eta=0.5, n_phases=1, phase_len=(10,), stride=10)
    res = run_agent(cfg, 0)
    assert res.records[0, 0] == res.interactions / 10


def test_preset_catalogue():
    assert preset("fig3").n_agents == 100 and preset("fig3").phase_len == (500,)
    fig10 = preset_configs("fig10")
    assert set(fig10) == {"full", "gamma_only"}
    assert fig10["full"].phase_len == (1_000_000, 1_000_000, 5_000_000) and fig10["full"].n_agents == 10_000
    assert preset_configs("fig10:desk")["full"].phase_len == (100_000, 100_000, 500_000)
    fig9 = preset("fig9")
    assert fig9.phase_len == (350_000, 700_000, 1_050_000, 1_400_000) and fig9.rule_bias == (1e5, 1.0)
    assert preset("fig9:desk").n_agents == 20
    fig7 = preset_configs("fig7")
    assert set(fig7) == {"full", "gamma_only", "fixed"} and fig7["full"].n_phases == 21
    assert preset("fig7:desk").n_phases == 6
    assert set(preset_configs("fig1")) == {"gamma0", "gamma0.001", "gamma0.01", "gamma0.1"}
    assert len(preset_configs("fig4")) == 30
    assert preset("fig2").threshold == 0.8 and preset("fig2").n_agents == 1
    assert preset("fig8").variant == "full"
    assert preset("fig3").name == "fig3_fixed"


@pytest.mark.parametrize("name", ["nosuch", "fig3:huge", "fig5"])
def test_unknown_presets(name):
    with pytest.raises(PresetError):
        preset_configs(name)
    with pytest.raises(PresetError):
        preset("fig3", "nolabel")


def shortest_moves(gmap, target):
    """(cell, action) pairs along one BFS shortest path that avoids other terminals."""
    parent = {gmap.start: None}
    queue = deque([gmap.start])
    while queue:
        pos = queue.popleft()
        if pos == target:
            break
        if pos in (gmap.goal, gmap.distractor):
            continue
        for a in range(4):
            nxt = gmap.move(pos, a)
            if nxt not in parent:
                parent[nxt] = (pos, a)
                queue.append(nxt)
    moves = []
    pos = target
    while parent[pos] is not None:
        pos, a = parent[pos]
        moves.append((pos, a))
    return moves[::-1]


def test_greedy_route_reads_argmax_path():
    gmap = shipped_map("c")
    h = np.ones((54, 4))
    # right along row 2 is blocked by the wall at (2, 2): the walk loops
    h[:, 1] = 2.0
    assert greedy_route(h, gmap)[0] == "loop"
    for target, name, length in ((gmap.distractor, "distractor", 12), (gmap.goal, "goal", 14)):
        h = np.ones((54, 4))
        for (r, c), a in shortest_moves(gmap, target):
            h[r * 9 + c, a] = 5.0
        assert greedy_route(h, gmap) == (name, length)


def test_csv_output(tmp_path):
    cfg = EnsembleConfig(name="demo", env="invasion", variant="full", n_agents=2, phase_len=(300,),
                         n_phases=2, stride=50, n_eta=1, n_gamma=1)
    run_to_csv(cfg, tmp_path)
    lines = (tmp_path / "demo.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["axis_value", "success", "gamma"]
    assert len(lines) == 1 + 12
    assert lines[1].startswith("50,")
    for field in lines[1].split(","):
        assert len(field.replace("-", "").replace(".", "").lstrip("0")) <= 10 or "e" in field
    meta = (tmp_path / "demo.meta.txt").read_text()
    assert parse_config(meta) == cfg
    assert (tmp_path / "demo.events.csv").read_text().startswith("t,network,action")
    first = (tmp_path / "demo.csv").read_bytes()
    run_to_csv(cfg, tmp_path)
    assert (tmp_path / "demo.csv").read_bytes() == first
