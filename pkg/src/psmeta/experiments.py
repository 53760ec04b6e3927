"""Ensemble runner, aggregation, presets and CSV output."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from . import __version__
from .config import METRIC_NAMES, RECORD_COLUMNS, EnsembleConfig, format_config
from .engine import AgentPlan, AgentResult, run_agent
from .envs import GridMap
from .meta import ETA_VALUES

BIAS_RULE_I = (1e5, 1.0)
FIG1_GAMMAS = (0.0, 0.001, 0.01, 0.1)
FIG4_SHIPS = (2, 3, 4)


class PresetError(KeyError):
    pass


@dataclass
class TimeSeries:
    """Across-agent means sampled every ``stride`` steps of the axis."""

    axis: str
    axis_values: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    n_agents: int = 0

    def __post_init__(self) -> None:
        for name, col in self.columns.items():
            if len(col) != len(self.axis_values):
                raise ValueError(f"column {name!r} does not match the axis length")

    def __len__(self) -> int:
        return len(self.axis_values)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def metric(self) -> np.ndarray:
        """The environment's performance column (success, reward or steps per reward)."""
        return next(iter(self.columns.values()))

    def eta_histogram(self) -> np.ndarray:
        """(len, 10) array of mean eta-action probabilities."""
        return np.column_stack([self.columns[f"p_eta_{v:g}"] for v in ETA_VALUES])

    def phase_segments(self) -> list[tuple[int, int]]:
        """Index ranges ``[start, stop)`` of consecutive records sharing a phase."""
        phase = self.columns["phase"]
        cuts = [0] + [i for i in range(1, len(phase)) if phase[i] != phase[i - 1]] + [len(phase)]
        return [(a, b) for a, b in zip(cuts[:-1], cuts[1:])]

    def to_csv(self, path) -> None:
        names = ["axis_value", *self.columns]
        data = np.column_stack([self.axis_values, *self.columns.values()])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for row in data:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v: float) -> str:
    return "%.10g" % v


def column_names(cfg: EnsembleConfig) -> list[str]:
    return [METRIC_NAMES[cfg.env], *RECORD_COLUMNS[1:]]


def auto_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_agents(cfg: EnsembleConfig, workers: int = 1, capture_events: bool = False) -> Iterator[AgentResult]:
    """Yield each agent's result in index order.

    The compiled loops release the GIL, so a thread pool gives real
    parallelism; results are still yielded in agent order, which keeps any
    downstream fold independent of scheduling.
    """
    cfg.validate()
    workers = auto_workers() if workers == 0 else workers
    plan = AgentPlan.build(cfg)

    if workers <= 1:
        for i in range(cfg.n_agents):
            yield run_agent(cfg, i, capture_events, plan)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda i: run_agent(cfg, i, capture_events, plan), range(cfg.n_agents))


def run_ensemble(
    cfg: EnsembleConfig,
    workers: int = 1,
    on_agent: Optional[Callable[[int, AgentResult], None]] = None,
) -> TimeSeries:
    """Run all agents and average their records in fixed agent order."""
    total = np.zeros((cfg.n_records, len(RECORD_COLUMNS)))
    workers = auto_workers() if workers == 0 else workers
    if workers <= 1 and on_agent is None:
        # serial fast path: one reused record buffer, same summation order
        cfg.validate()
        plan = AgentPlan.build(cfg)
        buf = np.empty_like(total)
        for i in range(cfg.n_agents):
            run_agent(cfg, i, False, plan, buf)
            total += buf
    else:
        for i, res in enumerate(run_agents(cfg, workers, capture_events=on_agent is not None)):
            total += res.records
            if on_agent is not None:
                on_agent(i, res)
    mean = total / cfg.n_agents
    axis = np.arange(1, cfg.n_records + 1, dtype=float) * cfg.stride
    cols = dict(zip(column_names(cfg), mean.T.copy()))
    return TimeSeries(cfg.axis, axis, cols, cfg.n_agents)


def learning_time(series: TimeSeries, target: float, column: Optional[str] = None) -> list[int]:
    """Axis steps from each phase start until ``column`` first reaches ``target``.

    Phases are the runs of equal values in the ``phase`` column. A phase in
    which the target is never reached reports its own length (censored).
    """
    values = series.metric if column is None else series[column]
    step = series.axis_values[0] if len(series) else 1
    out = []
    for a, b in series.phase_segments():
        hits = np.nonzero(values[a:b] >= target)[0]
        k = hits[0] if len(hits) else b - a
        out.append(int(round(k * step)))
    return out


# -- greedy route read-out -------------------------------------------------------


def greedy_route(h: np.ndarray, gmap: GridMap) -> tuple[str, int]:
    """Follow the most probable action from the start cell.

    Returns ``("goal" | "distractor" | "loop", steps)``; ties go to the
    first action in the fixed action order.
    """
    rows, cols = gmap.shape
    pos = gmap.start
    seen = set()
    steps = 0
    while pos not in seen:
        seen.add(pos)
        a = int(np.argmax(h[pos[0] * cols + pos[1]]))
        pos = gmap.move(pos, a)
        steps += 1
        if pos == gmap.goal:
            return "goal", steps
        if pos == gmap.distractor:
            return "distractor", steps
    return "loop", steps


# -- presets -------------------------------------------------------------------


def _fig1(desk: bool):
    n = 10_000 if desk else 1_000_000
    base = EnsembleConfig(env="invasion", variant="fixed", n_agents=n, eta=1.0,
                          phase_len=(250, 4000), n_phases=2, stride=1)
    return {f"gamma{g:g}": base.replace(gamma=g) for g in FIG1_GAMMAS}


def _fig2(desk: bool):
    phases, cap = (6, 200_000) if desk else (8, 2_000_000)
    return {"fixed": EnsembleConfig(env="invasion", variant="fixed", n_agents=1, gamma=0.0, eta=1.0,
                                    threshold=0.8, n_phases=phases, max_steps=cap, stride=1)}


def _fig3(desk: bool):
    return {"fixed": EnsembleConfig(env="invasion", variant="fixed", n_agents=100, gamma=0.0, eta=1.0,
                                    phase_len=(500,), n_phases=10, stride=1)}


def _fig4(desk: bool):
    agents, games = (200, 100_000) if desk else (1000, 1_000_000)
    out = {}
    for n in FIG4_SHIPS:
        for eta in ETA_VALUES:
            out[f"n{n}_eta{eta:g}"] = EnsembleConfig(
                env="nship", variant="fixed", n_agents=agents, gamma=1e-4, eta=eta,
                n_start=n, phase_len=(games,), n_phases=1, stride=games // 100)
    return out


def _fig7(desk: bool, variants=("full", "gamma_only", "fixed")):
    agents, phases = (20, 6) if desk else (100, 21)
    base = EnsembleConfig(env="invasion", n_agents=agents, phase_len=(120_000,), n_phases=phases,
                          stride=1000)
    return {v: base.replace(variant=v) for v in variants}


def _fig9(desk: bool):
    scale, agents = (10, 20) if desk else (1, 100)
    lens = tuple(350_000 * n // scale for n in range(1, 5))
    base = EnsembleConfig(env="nship", n_agents=agents, n_start=1, n_end=4, n_phases=4, phase_len=lens,
                          rule_bias=BIAS_RULE_I, stride=1000 // scale)
    return {v: base.replace(variant=v) for v in ("full", "gamma_only")}


def _fig10(desk: bool):
    scale, agents = (10, 100) if desk else (1, 10_000)
    lens = (1_000_000 // scale, 1_000_000 // scale, 5_000_000 // scale)
    base = EnsembleConfig(env="grid", n_agents=agents, n_phases=3, phase_len=lens,
                          rule_bias=BIAS_RULE_I, stride=10_000 // scale)
    return {v: base.replace(variant=v) for v in ("full", "gamma_only")}


PRESETS = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig7": _fig7,
    "fig8": lambda desk: _fig7(desk, ("full",)),
    "fig9": _fig9,
    "fig10": _fig10,
}


def preset_configs(name: str) -> dict[str, EnsembleConfig]:
    """All ensembles of a figure preset keyed by CSV label.

    ``name`` may carry a ``:desk`` suffix for the scaled-down variant.
    """
    base, _, suffix = name.partition(":")
    if base not in PRESETS or suffix not in ("", "desk"):
        raise PresetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)} (optionally ':desk')")
    configs = PRESETS[base](suffix == "desk")
    return {label: c.replace(name=f"{base}_{label}", preset=name) for label, c in configs.items()}


def preset(name: str, label: Optional[str] = None) -> EnsembleConfig:
    """One ensemble of a preset; the first (meta-learning, where present) by default."""
    configs = preset_configs(name)
    if label is None:
        return next(iter(configs.values()))
    try:
        return configs[label]
    except KeyError:
        raise PresetError(f"preset {name!r} has no ensemble {label!r}; choose from {list(configs)}") from None


# -- output --------------------------------------------------------------------


def write_meta(path, cfg: EnsembleConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"# psmeta {__version__}\n")
        fh.write(format_config(cfg))


def write_events(path, events: np.ndarray) -> None:
    """Meta-network activations of one agent as CSV."""
    with open(path, "w") as fh:
        fh.write("t,network,action,internal_reward,gamma,eta\n")
        for t, xi, a, lam, g, e in events:
            net = "eta" if xi == 0.0 else "gamma"
            act = _fmt(ETA_VALUES[int(a)]) if net == "eta" else ("I", "II")[int(a)]
            fh.write(f"{int(t)},{net},{act},{int(lam)},{_fmt(g)},{_fmt(e)}\n")


def run_to_csv(cfg: EnsembleConfig, out_dir, workers: int = 1) -> TimeSeries:
    """Run one ensemble and write ``<name>.csv``, its metadata and agent 0's meta events."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events = {}

    def keep_first(i, res):
        if i == 0:
            events["e"] = res.events

    series = run_ensemble(cfg, workers, keep_first if cfg.variant != "fixed" else None)
    series.to_csv(out / f"{cfg.name}.csv")
    write_meta(out / f"{cfg.name}.meta.txt", cfg)
    if "e" in events:
        write_events(out / f"{cfg.name}.events.csv", events["e"])
    return series
