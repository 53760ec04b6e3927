"""The meta-learning PS agent and its two reference variants."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

from .clipnet import ClipNetwork
from .meta import (
    EtaController,
    GammaController,
    MetaConfig,
    eta_window_length,
    internal_reward,
    window_delta,
)


class AgentVariant(str, enum.Enum):
    FULL_META = "full"
    GAMMA_ONLY = "gamma_only"  # learned gamma rules, eta drawn at random
    FIXED = "fixed"  # gamma and eta drawn once at birth


class SequenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetaEvent:
    t: int
    xi: str
    chosen_action: object
    lambda_internal: int
    current_gamma: float
    current_eta: float


class Agent:
    """A two-layer PS agent whose gamma and eta are set by meta networks.

    Args:
        actions: action labels of the environment, in a fixed order.
        n_states: declared percept count, used for the window lengths.
        variant: which meta-learning machinery is active.
        rng: numpy ``Generator``; consumed for the initial eta (unless given)
            and then the initial gamma (unless given).
        cfg: meta-level free parameters.
        gamma, eta: initial values; for ``FIXED`` agents these stay in force.
    """

    def __init__(
        self,
        actions: Sequence[Hashable],
        n_states: int,
        variant: AgentVariant,
        rng,
        cfg: Optional[MetaConfig] = None,
        gamma: Optional[float] = None,
        eta: Optional[float] = None,
    ) -> None:
        self.variant = AgentVariant(variant)
        self.cfg = cfg or MetaConfig()
        self.actions = tuple(actions)
        self.base = ClipNetwork.two_layer([], self.actions)
        tau_eta = eta_window_length(n_states, len(self.actions), self.cfg)
        self.eta_ctl = EtaController(tau_eta, self.cfg)
        self.gamma_ctl = GammaController(self.cfg.n_gamma * tau_eta, self.cfg)
        self.n_states = n_states
        self.interaction_count = 0
        self.events: list[MetaEvent] = []
        self._pending = None
        if eta is None:
            self.eta_ctl.select_eta(rng)
        else:
            self.eta_ctl.current_eta = float(eta)
        self.gamma_ctl.current_gamma = rng.random() if gamma is None else float(gamma)

    @property
    def gamma(self) -> float:
        return self.gamma_ctl.current_gamma

    @property
    def eta(self) -> float:
        return self.eta_ctl.current_eta

    def policy(self, percept: Hashable) -> dict[Hashable, float]:
        if percept not in self.base.percept_index:
            return {a: 1.0 / len(self.actions) for a in self.actions}
        return self.base.policy(percept)

    def analytic_success(self, env) -> float:
        """Performance read off the base network (success or expected reward)."""
        return env.performance(self.policy)

    def act(self, percept: Hashable, rng) -> Hashable:
        if percept not in self.base.percept_index:
            self.base.register_percept(percept)
        trace = self.base.random_walk(percept, rng)
        self.base.refresh_glow(trace)
        self._pending = trace
        return self.base.clips[trace.action].label

    def learn(self, reward: float, rng) -> None:
        if self._pending is None:
            raise SequenceError("learn() called without a preceding act()")
        self._pending = None
        self.base.update_h(reward, self.gamma)
        self.base.damp_glow(self.eta)
        self.interaction_count += 1
        if self.variant is AgentVariant.FIXED:
            return
        closed = self.eta_ctl.window.accumulate(reward)
        if closed is not None:
            self._eta_step(closed.now, closed.prev, rng)
        closed = self.gamma_ctl.window.accumulate(reward)
        if closed is not None and closed.prev is not None:
            rule, lam, _ = self.gamma_ctl.window_step(closed.now, closed.prev, rng)
            self._log("gamma", rule, lam)

    def _eta_step(self, now: float, prev: Optional[float], rng) -> None:
        lam = 0
        if self.variant is AgentVariant.FULL_META and prev is not None:
            lam = internal_reward(window_delta(now, prev))
            self.eta_ctl.meta.update(lam)
        self.eta_ctl.select_eta(rng)
        self._log("eta", self.eta, lam)

    def _log(self, xi: str, action, lam: int) -> None:
        self.events.append(MetaEvent(self.interaction_count, xi, action, lam, self.gamma, self.eta))

    def on_phase_change(self, n_states: int, reset_windows: bool = False) -> None:
        """Recompute window lengths for a new state count; optionally restart windows."""
        if n_states == self.n_states:
            return
        tau_eta = eta_window_length(n_states, len(self.actions), self.cfg)
        self.n_states = n_states
        self.eta_ctl.window.tau = tau_eta
        self.gamma_ctl.window.tau = self.cfg.n_gamma * tau_eta
        if reset_windows:
            self.eta_ctl.window.reset()
            self.gamma_ctl.window.reset()
            self.eta_ctl.meta.last_trace = None
            self.gamma_ctl.meta.last_trace = None
