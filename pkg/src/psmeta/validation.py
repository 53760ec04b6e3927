"""Acceptance checks with their tolerances and runtime budgets.

Each ``criterion_<k>`` function runs one check end to end and returns a
:class:`CheckResult`; :func:`run_all` runs a selection in order.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .agent import Agent
from .clipnet import ClipNetwork
from .config import EnsembleConfig
from .envs import NShipGame, nship_expected_reward, shipped_map
from .experiments import greedy_route, learning_time, preset_configs, run_agents, run_ensemble
from .meta import ETA_VALUES, rule_i, rule_ii, tilde_delta, window_delta

ETA_THRESHOLD = 1.0 - math.sqrt(1.0 / 3.0)


@dataclass
class CheckResult:
    number: int
    title: str
    ok: bool
    detail: str
    seconds: float
    limit: float
    info: str = ""

    @property
    def passed(self) -> bool:
        return self.ok and self.seconds < self.limit

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        timing = f"{self.seconds:.1f}s/{self.limit:.0f}s"
        if self.ok and not self.passed:
            timing += " over budget"
        return f"[{status}] criterion {self.number}: {self.title} -- {self.detail} ({timing})"


def _timed(number: int, title: str, limit: float):
    def wrap(fn: Callable[[int], tuple[bool, str] | tuple[bool, str, str]]):
        def run(workers: int = 1) -> CheckResult:
            t0 = time.perf_counter()
            ok, detail, *info = fn(workers)
            return CheckResult(number, title, bool(ok), detail, time.perf_counter() - t0, limit,
                               info[0] if info else "")
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def _phase_mean(series, k: int) -> float:
    a, b = series.phase_segments()[k]
    return float(np.mean(series.metric[a:b]))


def _phase_end(series, column: Optional[str] = None) -> list[float]:
    col = series.metric if column is None else series[column]
    return [float(col[b - 1]) for _, b in series.phase_segments()]


@_timed(1, "random baseline under fixed inversions", 10)
def criterion_1(workers: int = 1):
    """gamma=0, eta=1, 500-step phases: the last phase pair averages to 0.5."""
    cfg = preset_configs("fig3")["fixed"]
    ts = run_ensemble(cfg, workers)
    pair = 0.5 * (_phase_mean(ts, 8) + _phase_mean(ts, 9))
    return abs(pair - 0.5) <= 0.03, f"phase 9-10 mean success {pair:.4f} (target 0.5 +/- 0.03)"


@_timed(2, "gamma trade-off ordering", 30)
def criterion_2(workers: int = 1):
    """Larger gamma: lower pre-inversion asymptote and faster recovery to 0.75."""
    configs = preset_configs("fig1:desk")
    asym, recov = [], []
    for g in (0.0, 0.001, 0.01):
        ts = run_ensemble(configs[f"gamma{g:g}"], workers)
        asym.append(_phase_end(ts)[0])
        recov.append(learning_time(ts, 0.75)[1])
    ok = all(a > b for a, b in zip(asym, asym[1:])) and all(a > b for a, b in zip(recov, recov[1:]))
    detail = "asymptotes " + ", ".join(f"{a:.4f}" for a in asym) + "; recovery " + ", ".join(map(str, recov))
    return ok, detail


@_timed(3, "exponential relearning under a success threshold", 5)
def criterion_3(workers: int = 1):
    """Learning time per phase grows by more than 1.5x from phase to phase."""
    ts = run_ensemble(preset_configs("fig2:desk")["fixed"], workers)
    times = learning_time(ts, 0.8)
    ratios = [b / a if a else math.inf for a, b in zip(times, times[1:])]
    ok = len(times) == 6 and all(r > 1.5 for r in ratios)
    return ok, f"learning times {times}; ratios " + ", ".join(f"{r:.2f}" for r in ratios)


@_timed(4, "optimal eta shifts down with more ships", 600)
def criterion_4(workers: int = 1):
    """Reward at the last game for each eta; the argmax falls as n grows."""
    configs = preset_configs("fig4:desk")
    best = {}
    rows = []
    for n in (2, 3, 4):
        rewards = [run_ensemble(configs[f"n{n}_eta{e:g}"], workers).metric[-1] for e in ETA_VALUES]
        best[n] = ETA_VALUES[int(np.argmax(rewards))]
        rows.append(f"n={n}: argmax eta {best[n]:g}")
    return best[2] > best[3] > best[4], "; ".join(rows)


def route_counts(eta: float, trials: int = 50_000, n_agents: int = 100, workers: int = 1) -> dict:
    """Greedy-route outcomes after ``trials`` trials on map (c) with gamma=0."""
    cfg = EnsembleConfig(name=f"map_c_eta{eta:g}", env="grid", variant="fixed", gamma=0.0, eta=eta,
                         n_agents=n_agents, n_phases=1, map_a="shipped:c", phase_len=(trials,),
                         stride=trials)
    gmap = shipped_map("c")
    counts: dict = {}
    for res in run_agents(cfg, workers):
        key = greedy_route(res.h, gmap)
        counts[key] = counts.get(key, 0) + 1
    return counts


@_timed(5, "grid-world eta threshold on map (c)", 300)
def criterion_5(workers: int = 1):
    """eta below 1 - sqrt(1/3) finds the 14-step goal path; above it the 12-step distractor."""
    low = route_counts(0.3, workers=workers)
    high = route_counts(0.6, workers=workers)
    n_opt = low.get(("goal", 14), 0)
    n_greedy = high.get(("distractor", 12), 0)
    detail = f"eta=0.3: {n_opt}/100 on the 14-step goal path; eta=0.6: {n_greedy}/100 on the 12-step distractor path"
    return n_opt >= 90 and n_greedy >= 90, detail


@_timed(6, "meta-learning in the inverting invasion game", 900)
def criterion_6(workers: int = 1):
    """Full > gamma-only > fixed in the final phase; P(rule I) rises."""
    configs = preset_configs("fig7:desk")
    runs = {v: run_ensemble(c, workers) for v, c in configs.items()}
    last = {v: _phase_mean(ts, -1) for v, ts in runs.items()}
    pr = runs["full"]["p_rule1"]
    segs = runs["full"].phase_segments()
    per_phase = [float(np.mean(pr[a:b])) for a, b in segs]
    slope = np.polyfit(np.arange(len(pr)), pr, 1)[0]
    ok = (
        last["full"] >= 0.9
        and last["fixed"] <= 0.7
        and last["fixed"] < last["gamma_only"] < last["full"]
        and per_phase[-1] > per_phase[0]
        and slope > 0
    )
    detail = (
        "final-phase success full {full:.4f}, gamma_only {gamma_only:.4f}, fixed {fixed:.4f}; ".format(**last)
        + "P(rule I) per phase " + ", ".join(f"{p:.3f}" for p in per_phase)
    )
    return ok, detail


@_timed(7, "meta-learning in the growing n-ship game", 1200)
def criterion_7(workers: int = 1):
    """Full meta within 10% of 5(n-1) at each phase end for n=2..4; gamma-only below it for n=3,4."""
    configs = preset_configs("fig9:desk")
    full = _phase_end(run_ensemble(configs["full"], workers))
    gonly = _phase_end(run_ensemble(configs["gamma_only"], workers))
    ok = True
    parts = []
    for n in (2, 3, 4):
        opt = 5.0 * (n - 1)
        f, g = full[n - 1], gonly[n - 1]
        ok &= abs(f - opt) <= 0.1 * opt
        if n >= 3:
            ok &= g < f
        parts.append(f"n={n}: full {f:.3f} gamma_only {g:.3f} (optimum {opt:g})")
    return ok, "; ".join(parts)


def nship_full_length(n_agents: int = 20, workers: int = 1) -> list[float]:
    """End-of-phase full-meta rewards with the undivided phase lengths (reference only)."""
    cfg = preset_configs("fig9")["full"].replace(n_agents=n_agents)
    return _phase_end(run_ensemble(cfg, workers))


@_timed(8, "meta-learning across three grid-worlds", 3600)
def criterion_8(workers: int = 1):
    """Phase-3 steps per reward: full <= 20, gamma-only >= 30; eta 0.1/0.2 dominate."""
    configs = preset_configs("fig10:desk")
    full = run_ensemble(configs["full"], workers)
    gonly = run_ensemble(configs["gamma_only"], workers)

    def tail(ts):
        a, b = ts.phase_segments()[-1]
        return float(np.mean(ts.metric[b - max(1, (b - a) // 10): b]))

    f, g = tail(full), tail(gonly)
    hist = full.eta_histogram()[-1]
    low = float(hist[0] + hist[1])
    ok = f <= 20.0 and g >= 30.0 and low > 0.6
    detail = f"phase-3 steps/reward full {f:.2f}, gamma_only {g:.2f}; P(eta in {{0.1, 0.2}}) {low:.3f}"
    return ok, detail


# -- criterion 9: unit and property checks -------------------------------------


def _check_normalization(rng) -> bool:
    for _ in range(200):
        net = ClipNetwork.two_layer(["p"], list(range(int(rng.integers(1, 12)))))
        for e in net.edges:
            e.h = 1.0 + float(rng.exponential(10.0))
        probs = net.transition_probabilities(net.percept_index["p"])
        if abs(sum(probs.values()) - 1.0) > 1e-12 or min(probs.values()) <= 0.0:
            return False
    return True


def _check_fuzz(rng) -> bool:
    net = ClipNetwork.two_layer([], ["a", "b", "c"])
    for _ in range(3000):
        op = rng.integers(0, 4)
        if op == 0 and len(net.percept_index) < 6:
            net.register_percept(f"p{len(net.percept_index)}")
        elif op == 1 and net.percept_index:
            p = list(net.percept_index)[int(rng.integers(len(net.percept_index)))]
            net.refresh_glow(net.random_walk(p, rng))
        elif op == 2:
            net.update_h(float(rng.choice([0.0, 1.0, 5.0, rng.random() * 20])), float(rng.random()))
        else:
            net.damp_glow(float(rng.random()))
        if any(e.h < 1.0 or not 0.0 <= e.g <= 1.0 for e in net.edges):
            return False
    return True


def _check_eta_one(rng) -> bool:
    """With eta=1 the glow update is the plain traversed-edge rule, bit for bit."""
    gamma = 0.05
    agent = Agent(("l", "r"), 2, "fixed", rng, gamma=gamma, eta=1.0)
    plain = {}
    for _ in range(2000):
        s = "x" if rng.random() < 0.5 else "y"
        a = agent.act(s, rng)
        lam = 1.0 if (a == "l") == (s == "x") else 0.0
        agent.learn(lam, rng)
        for p in ("x", "y"):
            for b in ("l", "r"):
                if p not in agent.base.percept_index:
                    continue
                h = plain.get((p, b), 1.0)
                h = h - gamma * (h - 1.0) + (lam if (p, b) == (s, a) else 0.0)
                plain[(p, b)] = h if h > 1.0 else 1.0
    for (p, b), h in plain.items():
        cid = agent.base.percept_index[p]
        edge = next(e for e in agent.base.out_edges[cid] if agent.base.clips[e.dst].label == b)
        if edge.h != h:
            return False
    return True


def _check_fixed_point() -> bool:
    for lam, gamma in ((1.0, 0.1), (5.0, 0.02), (0.5, 0.3)):
        net = ClipNetwork.two_layer(["p"], ["a"])
        edge = next(net.edges)
        for _ in range(20000):
            edge.g = 1.0
            net.update_h(lam, gamma)
        if abs(edge.h - (1.0 + lam / gamma)) > 1e-6:
            return False
    return True


def _check_rules(rng) -> bool:
    for _ in range(5000):
        g = float(rng.random())
        td = tilde_delta(float(rng.uniform(-1.0, 1.0)), 0.2)
        for fn in (rule_i, rule_ii):
            if not 0.0 <= fn(g, td) <= 1.0 or fn(g, 0.0) != g:
                return False
        extreme = float(rng.uniform(-1.0, 1.0))
        if not (0.0 <= rule_i(g, extreme) <= 1.0 and 0.0 <= rule_ii(g, extreme) <= 1.0):
            return False
    return True


def _check_scale_invariance(rng) -> bool:
    for _ in range(2000):
        a, b = rng.exponential(100.0, 2)
        k = float(rng.uniform(1e-3, 1e3))
        if abs(window_delta(k * a, k * b) - window_delta(a, b)) > 1e-12:
            return False
    return window_delta(0.0, 0.0) == 0.0


def _check_nship_enumeration() -> bool:
    for n in range(1, 5):
        for strategy in itertools.product((0, 1), repeat=n):
            game = NShipGame(n)
            ship = game.reset()
            total = 0.0
            while True:
                step = game.step("block" if strategy[ship - 1] else "pass")
                total += step.reward
                if step.trial_ended:
                    break
                ship = step.next_percept
            if total != nship_expected_reward([float(s) for s in strategy]):
                return False
    return True


def _check_parallel() -> bool:
    cfgs = [
        EnsembleConfig(env="invasion", variant="full", n_agents=6, phase_len=(3000,), n_phases=2, stride=7),
        EnsembleConfig(env="nship", variant="gamma_only", n_agents=5, n_start=1, n_phases=3,
                       phase_len=(400,), stride=3),
        EnsembleConfig(env="grid", variant="full", n_agents=4, phase_len=(30, 30), n_phases=2, stride=5),
    ]
    for cfg in cfgs:
        serial = run_ensemble(cfg, workers=1)
        parallel = run_ensemble(cfg, workers=4)
        for name in serial.columns:
            if not np.array_equal(serial[name], parallel[name], equal_nan=True):
                return False
    return True


@_timed(9, "unit and property suites", 60)
def criterion_9(workers: int = 1):
    """Normalization, invariants under fuzzing, reductions and determinism."""
    rng = np.random.default_rng(12345)
    checks = {
        "normalization": _check_normalization(rng),
        "h>=1, g in [0,1] under fuzzing": _check_fuzz(rng),
        "eta=1 equals plain rule": _check_eta_one(rng),
        "fixed point 1+lambda/gamma": _check_fixed_point(),
        "rules I/II range and fixed points": _check_rules(rng),
        "delta scale invariance": _check_scale_invariance(rng),
        "n-ship strategy enumeration": _check_nship_enumeration(),
        "parallel/serial equality": _check_parallel(),
    }
    failed = [k for k, v in checks.items() if not v]
    return not failed, "all sub-checks passed" if not failed else "failed: " + ", ".join(failed)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}


def run_all(only: Optional[Sequence[int]] = None, workers: int = 1, echo: Callable[[str], None] = print):
    """Run the selected checks in order, echoing one line per check."""
    results = []
    for k in only or sorted(CRITERIA):
        res = CRITERIA[k](workers)
        echo(res.line())
        results.append(res)
    return results
