"""Interaction loop over the pure-Python agent and environment objects.

This is the slow, literal route: it drives :class:`~psmeta.agent.Agent`
against the environment classes one call at a time. The compiled loops in
:mod:`psmeta.engine` must reproduce it exactly; tests compare the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .agent import Agent
from .config import RECORD_COLUMNS, EnsembleConfig
from .engine import AgentResult
from .envs import (
    SYMBOLS,
    GridWorld,
    InvasionGame,
    NShipGame,
    PhaseSchedule,
    cell_label,
    resolve_map,
)
from .meta import ETA_VALUES, RULES


@dataclass
class TrajectoryRow:
    interaction: int
    trial: int
    reward: float
    gamma: float
    eta: float
    analytic_metric: float


def build_env(cfg: EnsembleConfig):
    """Environment for the first phase plus the per-phase parameters."""
    if cfg.env == "invasion":
        return InvasionGame(), list(range(cfg.n_phases))
    if cfg.env == "nship":
        ships = cfg.ships()
        return NShipGame(ships[0]), ships
    env = GridWorld([resolve_map(m) for m in cfg.maps()])
    return env, list(range(cfg.n_phases))


def _percept_rows(cfg: EnsembleConfig, env) -> list:
    if cfg.env == "invasion":
        return list(SYMBOLS)
    if cfg.env == "nship":
        return list(range(1, max(cfg.ships()) + 1))
    rows, cols = env.map.shape
    return [cell_label((r, c)) for r in range(rows) for c in range(cols)]


def base_matrix(agent: Agent, percepts) -> np.ndarray:
    """Dense (percept, action) h-matrix; unvisited percepts read as h0 rows."""
    h = np.ones((len(percepts), len(agent.actions)))
    for i, p in enumerate(percepts):
        cid = agent.base.percept_index.get(p)
        if cid is not None:
            h[i] = [e.h for e in agent.base.out_edges[cid]]
    return h


def run_reference(
    cfg: EnsembleConfig,
    index: int,
    trajectory: Optional[list] = None,
) -> AgentResult:
    """Run agent ``index`` through the object API.

    When ``trajectory`` is a list, one :class:`TrajectoryRow` per interaction
    is appended to it.
    """
    rng = np.random.default_rng(cfg.seed + index)
    env, params = build_env(cfg)
    agent = Agent(env.actions, env.n_states, cfg.variant, rng, cfg.meta_config(), cfg.gamma, cfg.eta)
    percept = env.reset(rng)
    schedule = None if cfg.threshold is not None else PhaseSchedule(cfg.durations(), cfg.unit)
    records = np.full((cfg.n_records, len(RECORD_COLUMNS)), np.nan)
    phase = 0
    axis = 0
    trials = 0
    pending = False
    bin_steps = 0.0
    bin_reward = 0.0
    trial_steps = 0
    while axis < cfg.total:
        action = agent.act(percept, rng)
        step = env.step(action, rng)
        agent.learn(step.reward, rng)
        percept = step.next_percept
        bin_steps += 1.0
        bin_reward += step.reward
        trial_steps += 1
        if step.trial_ended:
            trials += 1
        if trajectory is not None:
            if cfg.env == "grid":
                metric = trial_steps / step.reward if step.trial_ended else float("nan")
            else:
                metric = agent.analytic_success(env)
            trajectory.append(
                TrajectoryRow(agent.interaction_count, trials, step.reward, agent.gamma, agent.eta, metric)
            )
        if step.trial_ended:
            trial_steps = 0
        if cfg.axis == "interactions" or step.trial_ended:
            axis += 1
            if axis % cfg.stride == 0:
                if cfg.env == "grid":
                    metric = bin_steps / bin_reward
                    bin_steps = bin_reward = 0.0
                else:
                    metric = agent.analytic_success(env)
                _record(records[axis // cfg.stride - 1], agent, metric, phase)
        if schedule is None:
            if phase < cfg.n_phases - 1 and agent.analytic_success(env) >= cfg.threshold:
                phase += 1
                env.set_phase(phase)
            continue
        if schedule.tick(step.trial_ended):
            pending = True
        if pending and step.trial_ended:
            pending = False
            phase = schedule.phase
            new = env.set_phase(params[phase])
            if new is not None:
                percept = new
            agent.on_phase_change(env.n_states, cfg.reset_windows)
    events = np.array(
        [
            (
                e.t,
                0.0 if e.xi == "eta" else 1.0,
                ETA_VALUES.index(e.chosen_action) if e.xi == "eta" else RULES.index(e.chosen_action),
                e.lambda_internal,
                e.current_gamma,
                e.current_eta,
            )
            for e in agent.events
        ]
    ).reshape(-1, 6)
    return AgentResult(
        records,
        base_matrix(agent, _percept_rows(cfg, env)),
        np.array(agent.eta_ctl.meta.h_values),
        np.array(agent.gamma_ctl.meta.h_values),
        agent.gamma,
        agent.eta,
        events,
        agent.interaction_count,
    )


def write_trajectory(path, rows) -> None:
    """Per-interaction rows as CSV (grid metric is steps per reward on trial ends, else nan)."""
    with open(path, "w") as fh:
        fh.write("interaction,trial,reward,gamma,eta,analytic_metric\n")
        for r in rows:
            fh.write(f"{r.interaction},{r.trial},{r.reward:.10g},{r.gamma:.10g},{r.eta:.10g},{r.analytic_metric:.10g}\n")


def _record(row: np.ndarray, agent: Agent, metric: float, phase: int) -> None:
    row[0] = metric
    row[1] = agent.gamma
    row[2] = agent.eta
    row[3] = agent.gamma_ctl.p_rule_i()
    row[4] = phase
    row[5:] = agent.eta_ctl.meta.probabilities()
