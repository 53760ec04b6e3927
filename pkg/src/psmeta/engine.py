"""Compiled single-agent simulation loops used by the ensemble runner.

Each loop runs one agent for a whole schedule inside numba, drawing from the
agent's own numpy ``Generator`` in exactly the order of the pure-Python
objects in :mod:`psmeta.agent` and :mod:`psmeta.envs`, with the same float
operations, so both routes produce bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .config import RECORD_COLUMNS, EnsembleConfig
from .envs import DISTRACTOR_REWARD, GOAL_REWARD, GRID_MOVES, resolve_map
from .meta import ETA_VALUES, eta_window_length, internal_reward, rule_i, rule_ii, tilde_delta, window_delta

FULL, GAMMA_ONLY, FIXED = 0, 1, 2
VARIANT_CODES = {"full": FULL, "gamma_only": GAMMA_ONLY, "fixed": FIXED}

# slots of the per-agent meta state vector
(
    GAMMA,
    ETA,
    ETA_SUM,
    ETA_PREV,
    ETA_HAS_PREV,
    ETA_TICKS,
    ETA_TAU,
    ETA_TRACE,
    GAM_SUM,
    GAM_PREV,
    GAM_HAS_PREV,
    GAM_TICKS,
    GAM_TAU,
    GAM_TRACE,
    T,
    N_EVENTS,
    CACHED,
    LAST_ROW,
) = range(18)
N_STATE = 18

ETA_ARRAY = np.array(ETA_VALUES)
N_COLS = len(RECORD_COLUMNS)
EVENT_CAPACITY = 200_000
G_FLOOR = 1e-30
GRID_DR = np.array([m[0] for m in GRID_MOVES], dtype=np.int64)
GRID_DC = np.array([m[1] for m in GRID_MOVES], dtype=np.int64)
GOAL_R = GOAL_REWARD
DISTRACTOR_R = DISTRACTOR_REWARD

# The loops never allocate, so they run without numba's reference counting:
# with it, every helper call on an array costs an atomic incref/decref pair.
_jit = numba.njit(cache=True, nogil=True, _nrt=False)
_delta = _jit(window_delta)
_sgn = _jit(internal_reward)
_tilde = _jit(tilde_delta)
_rule_i = _jit(rule_i)
_rule_ii = _jit(rule_ii)


@_jit
def _walk(row, u):
    return _walk_at(row, 0, row.shape[0], u)


@_jit
def _walk_at(h, off, n, u):
    """Sample from ``h[off:off + n]`` with one uniform draw ``u``."""
    total = 0.0
    for i in range(n):
        total += h[off + i]
    r = u * total
    acc = 0.0
    for i in range(n):
        acc += h[off + i]
        if r < acc:
            return i
    return n - 1


@_jit
def _prob(row, i):
    return _prob_at(row, 0, row.shape[0], i)


@_jit
def _prob_at(h, off, n, i):
    total = 0.0
    for j in range(n):
        total += h[off + j]
    return h[off + i] / total


@_jit
def _base_learn(h, g, lam, gamma, eta):
    # h and g are flat (percept-major) views of the base network. Glow below
    # G_FLOOR is zeroed: g * lam is then under half an ulp of any h >= 1 so h
    # is unchanged, and the loop avoids denormal arithmetic.
    n = h.shape[0]
    if lam != 0.0 or gamma != 0.0:
        for i in range(n):
            v = h[i] - gamma * (h[i] - 1.0) + g[i] * lam
            h[i] = max(v, 1.0)
    f = 1.0 - eta
    for i in range(n):
        v = g[i] * f
        g[i] = v if v >= G_FLOOR else 0.0


@_jit
def _meta_update(hv, trace, lam, gm):
    for i in range(hv.shape[0]):
        v = hv[i] - gm * (hv[i] - 1.0)
        if i == trace:
            v = v + lam
        hv[i] = v if v > 1.0 else 1.0


@_jit
def _log(ms, events, xi, action, lam):
    k = int(ms[N_EVENTS])
    if k < events.shape[0]:
        events[k, 0] = ms[T]
        events[k, 1] = xi
        events[k, 2] = action
        events[k, 3] = lam
        events[k, 4] = ms[GAMMA]
        events[k, 5] = ms[ETA]
    ms[N_EVENTS] = k + 1


@_jit
def _meta_boundary(ms, eta_h, gamma_h, variant, gm, c_gamma, rng, events):
    # Called only once a window is full: passing the Generator into a call
    # costs far more than the per-step accumulation done inline by the loops.
    ms[CACHED] = 0.0
    if ms[ETA_TICKS] >= ms[ETA_TAU]:
        now = ms[ETA_SUM]
        prev = ms[ETA_PREV]
        has_prev = ms[ETA_HAS_PREV] > 0.0
        ms[ETA_PREV] = now
        ms[ETA_HAS_PREV] = 1.0
        ms[ETA_SUM] = 0.0
        ms[ETA_TICKS] = 0.0
        li = 0
        if variant == FULL and has_prev:
            li = _sgn(_delta(now, prev))
            if ms[ETA_TRACE] >= 0.0:
                _meta_update(eta_h, int(ms[ETA_TRACE]), li, gm)
        a = _walk(eta_h, rng.random())
        ms[ETA_TRACE] = a
        ms[ETA] = ETA_ARRAY[a]
        _log(ms, events, 0.0, a, li)
    if ms[GAM_TICKS] >= ms[GAM_TAU]:
        now = ms[GAM_SUM]
        prev = ms[GAM_PREV]
        has_prev = ms[GAM_HAS_PREV] > 0.0
        ms[GAM_PREV] = now
        ms[GAM_HAS_PREV] = 1.0
        ms[GAM_SUM] = 0.0
        ms[GAM_TICKS] = 0.0
        if has_prev:
            d = _delta(now, prev)
            li = _sgn(d)
            if ms[GAM_TRACE] >= 0.0:
                _meta_update(gamma_h, int(ms[GAM_TRACE]), li, gm)
            r = _walk(gamma_h, rng.random())
            ms[GAM_TRACE] = r
            td = _tilde(d, c_gamma)
            if r == 0:
                ms[GAMMA] = _rule_i(ms[GAMMA], td)
            else:
                ms[GAMMA] = _rule_ii(ms[GAMMA], td)
            _log(ms, events, 1.0, r, li)


@_jit
def _new_windows(ms, tau_eta, n_gamma, reset):
    ms[ETA_TAU] = tau_eta
    ms[GAM_TAU] = tau_eta * n_gamma
    if reset:
        ms[ETA_SUM] = 0.0
        ms[ETA_PREV] = 0.0
        ms[ETA_HAS_PREV] = 0.0
        ms[ETA_TICKS] = 0.0
        ms[ETA_TRACE] = -1.0
        ms[GAM_SUM] = 0.0
        ms[GAM_PREV] = 0.0
        ms[GAM_HAS_PREV] = 0.0
        ms[GAM_TICKS] = 0.0
        ms[GAM_TRACE] = -1.0


@_jit
def _fill_meta(records, ms, stop):
    # meta columns are written only when they change; copy them forward
    a = int(ms[LAST_ROW])
    if a < 0:
        return
    for r in range(a + 1, stop):
        for j in range(1, 4):
            records[r, j] = records[a, j]
        for j in range(5, records.shape[1]):
            records[r, j] = records[a, j]


@_jit
def _record(records, k, metric, phase, ms, eta_h, gamma_h):
    records[k, 0] = metric
    records[k, 4] = phase
    if ms[CACHED] > 0.0:
        return
    _fill_meta(records, ms, k)
    records[k, 1] = ms[GAMMA]
    records[k, 2] = ms[ETA]
    records[k, 3] = _prob(gamma_h, 0)
    total = 0.0
    for i in range(eta_h.shape[0]):
        total += eta_h[i]
    for i in range(eta_h.shape[0]):
        records[k, 5 + i] = eta_h[i] / total
    ms[CACHED] = 1.0
    ms[LAST_ROW] = k


@_jit
def _invasion_success(h, inverted):
    total = 0.0
    for s in range(2):
        c = 1 - s if inverted else s
        total += _prob_at(h, 2 * s, 2, c)
    return 0.5 * total


@_jit
def _nship_reward(h, n):
    if n == 1:
        return _prob_at(h, 0, 2, 0)
    s = 0.0
    clear = 1.0
    for i in range(n - 1):
        p = _prob_at(h, 2 * i, 2, 0)
        s += p
        clear *= 1.0 - p
    return s + clear * _prob_at(h, 2 * (n - 1), 2, 0) * (5.0 * (n - 1))


@_jit
def _run_invasion(rng, h, g, ms, eta_h, gamma_h, records, events, variant, gm, c_gamma,
                  bounds, threshold, total, stride):
    n_phases = bounds.shape[0]
    symbol = 0 if rng.random() < 0.5 else 1
    phase = 0
    inverted = False
    axis = 0
    until = stride
    k = 0
    while axis < total:
        s = symbol
        a = _walk_at(h, 2 * s, 2, rng.random())
        g[2 * s + a] = 1.0
        correct = 1 - s if inverted else s
        lam = 1.0 if a == correct else 0.0
        symbol = 0 if rng.random() < 0.5 else 1
        _base_learn(h, g, lam, ms[GAMMA], ms[ETA])
        ms[T] += 1.0
        if variant != FIXED:
            ms[ETA_SUM] += lam
            ms[ETA_TICKS] += 1.0
            ms[GAM_SUM] += lam
            ms[GAM_TICKS] += 1.0
            if ms[ETA_TICKS] >= ms[ETA_TAU] or ms[GAM_TICKS] >= ms[GAM_TAU]:
                _meta_boundary(ms, eta_h, gamma_h, variant, gm, c_gamma, rng, events)
        axis += 1
        if axis == until:
            until += stride
            _record(records, k, _invasion_success(h, inverted), phase, ms, eta_h, gamma_h)
            k += 1
        if phase < n_phases - 1:
            if threshold > 0.0:
                switch = _invasion_success(h, inverted) >= threshold
            else:
                switch = axis == bounds[phase]
            if switch:
                phase += 1
                inverted = phase % 2 == 1
    _fill_meta(records, ms, k)


@_jit
def _run_nship(rng, h, g, ms, eta_h, gamma_h, records, events, variant, gm, c_gamma,
               bounds, ships, unit_trials, total, stride, n_eta, n_gamma, reset):
    n_phases = bounds.shape[0]
    n = ships[0]
    phase = 0
    ship = 0
    blocked = False
    axis = 0
    until = stride
    k = 0
    elapsed = 0
    pending = False
    while axis < total:
        a = _walk_at(h, 2 * ship, 2, rng.random())
        g[2 * ship + a] = 1.0
        block = a == 0
        ended = False
        if ship < n - 1:
            lam = 1.0 if block else 0.0
            blocked = blocked or block
            ship += 1
        else:
            lmax = 1.0 if n == 1 else 5.0 * (n - 1)
            lam = lmax if block and not blocked else 0.0
            ended = True
            ship = 0
            blocked = False
        _base_learn(h, g, lam, ms[GAMMA], ms[ETA])
        ms[T] += 1.0
        if variant != FIXED:
            ms[ETA_SUM] += lam
            ms[ETA_TICKS] += 1.0
            ms[GAM_SUM] += lam
            ms[GAM_TICKS] += 1.0
            if ms[ETA_TICKS] >= ms[ETA_TAU] or ms[GAM_TICKS] >= ms[GAM_TAU]:
                _meta_boundary(ms, eta_h, gamma_h, variant, gm, c_gamma, rng, events)
        if ended:
            axis += 1
            if axis == until:
                until += stride
                _record(records, k, _nship_reward(h, n), phase, ms, eta_h, gamma_h)
                k += 1
        if ended or not unit_trials:
            elapsed += 1
            if phase < n_phases - 1 and elapsed == bounds[phase]:
                pending = True
        if pending and ended:
            pending = False
            phase += 1
            if ships[phase] != n:
                n = ships[phase]
                _new_windows(ms, n_eta * n * 2 * 10, n_gamma, reset)
            ship = 0
            blocked = False
    _fill_meta(records, ms, k)


@_jit
def _run_grid(rng, h, g, ms, eta_h, gamma_h, records, events, variant, gm, c_gamma,
              bounds, walls, starts, goals, distractors, unit_trials, total, stride):
    n_phases = bounds.shape[0]
    rows = walls.shape[1]
    cols = walls.shape[2]
    phase = 0
    r = starts[0, 0]
    c = starts[0, 1]
    axis = 0
    until = stride
    k = 0
    elapsed = 0
    pending = False
    bin_steps = 0.0
    bin_reward = 0.0
    while axis < total:
        s = r * cols + c
        a = _walk_at(h, 4 * s, 4, rng.random())
        g[4 * s + a] = 1.0
        nr = r + GRID_DR[a]
        nc = c + GRID_DC[a]
        if 0 <= nr < rows and 0 <= nc < cols and not walls[phase, nr, nc]:
            r = nr
            c = nc
        lam = 0.0
        ended = False
        if r == goals[phase, 0] and c == goals[phase, 1]:
            lam = GOAL_R
            ended = True
        elif r == distractors[phase, 0] and c == distractors[phase, 1]:
            lam = DISTRACTOR_R
            ended = True
        if ended:
            r = starts[phase, 0]
            c = starts[phase, 1]
        _base_learn(h, g, lam, ms[GAMMA], ms[ETA])
        ms[T] += 1.0
        if variant != FIXED:
            ms[ETA_SUM] += lam
            ms[ETA_TICKS] += 1.0
            ms[GAM_SUM] += lam
            ms[GAM_TICKS] += 1.0
            if ms[ETA_TICKS] >= ms[ETA_TAU] or ms[GAM_TICKS] >= ms[GAM_TAU]:
                _meta_boundary(ms, eta_h, gamma_h, variant, gm, c_gamma, rng, events)
        bin_steps += 1.0
        bin_reward += lam
        if ended:
            axis += 1
            if axis == until:
                until += stride
                _record(records, k, bin_steps / bin_reward, phase, ms, eta_h, gamma_h)
                k += 1
                bin_steps = 0.0
                bin_reward = 0.0
        if ended or not unit_trials:
            elapsed += 1
            if phase < n_phases - 1 and elapsed == bounds[phase]:
                pending = True
        if pending and ended:
            pending = False
            phase += 1
            r = starts[phase, 0]
            c = starts[phase, 1]
    _fill_meta(records, ms, k)


@dataclass
class AgentResult:
    """Everything recorded for one agent of an ensemble."""

    records: np.ndarray
    h: np.ndarray
    eta_h: np.ndarray
    gamma_h: np.ndarray
    gamma: float
    eta: float
    events: np.ndarray
    interactions: int


def env_shape(cfg: EnsembleConfig) -> tuple[int, int]:
    """(declared states, actions) of the first phase and the largest state count."""
    if cfg.env == "invasion":
        return 2, 2
    if cfg.env == "nship":
        return cfg.n_start, 2
    rows, cols = resolve_map(cfg.map_a).shape
    return rows * cols, 4


def grid_arrays(cfg: EnsembleConfig):
    maps = [resolve_map(m) for m in cfg.maps()]
    if len({m.shape for m in maps}) != 1:
        raise ValueError("all phase maps must share one shape")
    walls = np.stack([m.walls for m in maps])
    starts = np.array([m.start for m in maps], dtype=np.int64)
    goals = np.array([m.goal for m in maps], dtype=np.int64)
    distractors = np.array([m.distractor or (-1, -1) for m in maps], dtype=np.int64)
    return walls, starts, goals, distractors


@dataclass
class AgentPlan:
    """Per-ensemble constants of :func:`run_agent`, derived once from a config."""

    variant: int
    n_records: int
    total: int
    tau: float
    bounds: np.ndarray
    unit_trials: bool
    threshold: float
    ships: np.ndarray
    grid: tuple | None

    @classmethod
    def build(cls, cfg: EnsembleConfig) -> "AgentPlan":
        n_states, n_actions = env_shape(cfg)
        bounds = np.cumsum(cfg.durations()).astype(np.int64)
        if cfg.env == "invasion" and cfg.threshold is not None:
            bounds = np.zeros(cfg.n_phases, dtype=np.int64)
        return cls(
            variant=VARIANT_CODES[cfg.variant],
            n_records=cfg.n_records,
            total=cfg.total,
            tau=float(eta_window_length(n_states, n_actions, cfg.meta_config())),
            bounds=bounds,
            unit_trials=cfg.unit == "trials",
            threshold=-1.0 if cfg.threshold is None else cfg.threshold,
            ships=np.array(cfg.ships(), dtype=np.int64),
            grid=grid_arrays(cfg) if cfg.env == "grid" else None,
        )


def init_agent(cfg: EnsembleConfig, rng, plan: AgentPlan | None = None):
    """Fresh meta state; draws the initial eta then gamma like :class:`Agent`."""
    ms = np.zeros(N_STATE)
    eta_h = np.ones(len(ETA_VALUES))
    gamma_h = np.array(cfg.rule_bias, dtype=float) if cfg.rule_bias else np.ones(2)
    ms[ETA_TRACE] = -1.0
    ms[GAM_TRACE] = -1.0
    ms[LAST_ROW] = -1.0
    if cfg.eta is None:
        a = _walk(eta_h, rng.random())
        ms[ETA] = ETA_ARRAY[a]
        ms[ETA_TRACE] = a
    else:
        ms[ETA] = cfg.eta
    ms[GAMMA] = rng.random() if cfg.gamma is None else cfg.gamma
    if plan is None:
        n_states, n_actions = env_shape(cfg)
        tau = eta_window_length(n_states, n_actions, cfg.meta_config())
    else:
        tau = plan.tau
    ms[ETA_TAU] = tau
    ms[GAM_TAU] = tau * cfg.n_gamma
    return ms, eta_h, gamma_h


def run_agent(
    cfg: EnsembleConfig,
    index: int,
    capture_events: bool = False,
    plan: AgentPlan | None = None,
    out: np.ndarray | None = None,
) -> AgentResult:
    """Run agent ``index`` of the ensemble (seed ``cfg.seed + index``).

    ``plan`` skips re-deriving the schedule for every agent; ``out`` is an
    optional ``(n_records, N_COLS)`` buffer reused for the records.
    """
    plan = AgentPlan.build(cfg) if plan is None else plan
    rng = np.random.default_rng(cfg.seed + index)
    ms, eta_h, gamma_h = init_agent(cfg, rng, plan)
    if out is None:
        records = np.full((plan.n_records, N_COLS), np.nan)
    else:
        records = out
        records.fill(np.nan)
    events = np.zeros((EVENT_CAPACITY if capture_events else 0, 6))
    common = (ms, eta_h, gamma_h, records, events, plan.variant, cfg.gamma_meta, cfg.c_gamma, plan.bounds)
    if cfg.env == "invasion":
        h = np.ones(4)
        g = np.zeros(4)
        _run_invasion(rng, h, g, *common, plan.threshold, plan.total, cfg.stride)
        h = h.reshape(2, 2)
    elif cfg.env == "nship":
        n_max = int(plan.ships.max())
        h = np.ones(n_max * 2)
        g = np.zeros(n_max * 2)
        _run_nship(rng, h, g, *common, plan.ships, plan.unit_trials, plan.total, cfg.stride,
                   cfg.n_eta, cfg.n_gamma, cfg.reset_windows)
        h = h.reshape(n_max, 2)
    else:
        walls, starts, goals, distractors = plan.grid
        n_cells = walls.shape[1] * walls.shape[2]
        h = np.ones(n_cells * 4)
        g = np.zeros(n_cells * 4)
        _run_grid(rng, h, g, *common, walls, starts, goals, distractors, plan.unit_trials,
                  plan.total, cfg.stride)
        h = h.reshape(n_cells, 4)
    n_ev = min(int(ms[N_EVENTS]), events.shape[0])
    return AgentResult(records, h, eta_h, gamma_h, float(ms[GAMMA]), float(ms[ETA]),
                       events[:n_ev].copy(), int(ms[T]))
