"""Meta-level networks that tune the damping and glow parameters.

Each meta network is a two-layer clip network with one percept. The glow
network picks an eta value directly; the damping network picks one of two
reflexive update rules that move gamma by the latest performance change.
Both are activated on fixed interaction windows and rewarded with the sign
of the normalized change in summed environment reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .clipnet import ClipNetwork, WalkTrace

ETA_VALUES = tuple(k / 10 for k in range(1, 11))
RULES = ("I", "II")
META_PERCEPT = "meta"


@dataclass
class MetaConfig:
    """Free parameters shared by all meta-level networks.

    ``rule_bias`` presets the damping network's initial h-values as
    ``(h_rule_I, h_rule_II)``; ``gamma_meta`` is the damping applied inside
    the meta networks themselves.
    """

    n_eta: int = 30
    n_gamma: int = 5
    c_gamma: float = 0.2
    gamma_meta: float = 0.0
    rule_bias: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.n_eta < 1 or self.n_gamma < 1:
            raise ValueError("n_eta and n_gamma must be positive")
        if self.c_gamma < 0:
            raise ValueError("c_gamma must be non-negative")
        if not 0.0 <= self.gamma_meta <= 1.0:
            raise ValueError("gamma_meta must lie in [0, 1]")
        if self.rule_bias is not None:
            if len(self.rule_bias) != 2 or min(self.rule_bias) < 1.0:
                raise ValueError("rule_bias needs two h-values >= 1")
            self.rule_bias = (float(self.rule_bias[0]), float(self.rule_bias[1]))


def eta_window_length(n_states: int, n_actions: int, cfg: MetaConfig) -> int:
    """Interactions per glow window: N_eta * S * A * S_eta * A_eta."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    return cfg.n_eta * n_states * n_actions * 1 * len(ETA_VALUES)


def gamma_window_length(n_states: int, n_actions: int, cfg: MetaConfig) -> int:
    return cfg.n_gamma * eta_window_length(n_states, n_actions, cfg)


class WindowClosed(NamedTuple):
    now: float
    prev: Optional[float]


class WindowAccumulator:
    """Running reward sum over consecutive windows of ``tau`` interactions."""

    def __init__(self, tau: int) -> None:
        if tau < 1:
            raise ValueError("tau must be positive")
        self.tau = tau
        self.reset()

    def reset(self) -> None:
        self.current_sum = 0.0
        self.previous_sum: Optional[float] = None
        self.ticks = 0

    def accumulate(self, reward: float) -> Optional[WindowClosed]:
        self.current_sum += reward
        self.ticks += 1
        if self.ticks < self.tau:
            return None
        event = WindowClosed(self.current_sum, self.previous_sum)
        self.previous_sum = self.current_sum
        self.current_sum = 0.0
        self.ticks = 0
        return event


def window_delta(now: float, prev: float) -> float:
    """Normalized performance change between two windows; 0 when both are 0."""
    top = max(now, prev)
    if top == 0.0:
        return 0.0
    return (now - prev) / top


def internal_reward(delta: float) -> int:
    return (delta > 0) - (delta < 0)


def tilde_delta(delta: float, c_gamma: float) -> float:
    return (delta + c_gamma) / (1.0 + c_gamma)


def rule_i(gamma: float, td: float) -> float:
    """Natural rule: forget more when performance drops, less when it rises."""
    a = abs(td)
    return (1.0 - a) * gamma + (a - td) / 2.0


def rule_ii(gamma: float, td: float) -> float:
    """Opposite rule: forget more when performance rises."""
    a = abs(td)
    return (1.0 - a) * gamma + (a + td) / 2.0


class MetaNetwork:
    """Two-layer meta network with a single percept clip."""

    def __init__(self, actions, gamma_meta: float = 0.0, initial_h=None) -> None:
        self.net = ClipNetwork.two_layer([META_PERCEPT], actions)
        self.percept = self.net.percept_index[META_PERCEPT]
        self.gamma_meta = gamma_meta
        self.last_trace: Optional[WalkTrace] = None
        if initial_h is not None:
            for e, h in zip(self.net.out_edges[self.percept], initial_h, strict=True):
                e.h = float(h)

    @property
    def h_values(self) -> list[float]:
        return [e.h for e in self.net.out_edges[self.percept]]

    def probabilities(self) -> list[float]:
        return list(self.net.transition_probabilities(self.percept).values())

    def select(self, rng):
        self.last_trace = self.net.random_walk(META_PERCEPT, rng)
        return self.net.clips[self.last_trace.action].label

    def update(self, reward: int) -> None:
        """Damp every edge, add ``reward`` to the last selected one, clamp at 1."""
        if self.last_trace is None:
            return
        traced = self.last_trace.edges[-1]
        gm = self.gamma_meta
        for e in self.net.edges:
            h = e.h - gm * (e.h - 1.0)
            if e is traced:
                h = h + reward
            e.h = h if h > 1.0 else 1.0


class EtaController:
    """Glow network: ten actions setting eta to 0.1, 0.2, ..., 1.0."""

    def __init__(self, tau: int, cfg: MetaConfig) -> None:
        self.meta = MetaNetwork(ETA_VALUES, cfg.gamma_meta)
        self.window = WindowAccumulator(tau)
        self.current_eta = 1.0

    def select_eta(self, rng) -> float:
        self.current_eta = self.meta.select(rng)
        return self.current_eta


class GammaController:
    """Damping network choosing between reflexive rules I and II."""

    def __init__(self, tau: int, cfg: MetaConfig) -> None:
        self.meta = MetaNetwork(RULES, cfg.gamma_meta, cfg.rule_bias)
        self.window = WindowAccumulator(tau)
        self.c_gamma = cfg.c_gamma
        self.current_gamma = 0.0

    def p_rule_i(self) -> float:
        return self.meta.probabilities()[0]

    def window_step(self, now: float, prev: float, rng) -> tuple[str, int, float]:
        """Reward the previously chosen rule, pick a new one and apply it.

        Returns ``(rule, internal_reward, new_gamma)``.
        """
        delta = window_delta(now, prev)
        lam = internal_reward(delta)
        self.meta.update(lam)
        rule = self.meta.select(rng)
        fn = rule_i if rule == "I" else rule_ii
        self.current_gamma = fn(self.current_gamma, tilde_delta(delta, self.c_gamma))
        return rule, lam, self.current_gamma
