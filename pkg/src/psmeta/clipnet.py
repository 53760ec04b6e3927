"""Clip networks: the weighted directed memory graph of a PS agent.

A network holds percept clips and action clips joined by directed edges.
Each edge carries an ``h`` weight (>= 1) and a glow value ``g`` in [0, 1].
Deliberation is a random walk from a percept clip that stops at the first
action clip; learning rescales every edge with the damping/glow rules.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence

H0 = 1.0


class NetworkError(ValueError):
    """Raised for structurally malformed networks."""


class ClipKind(enum.Enum):
    PERCEPT = "percept"
    ACTION = "action"


@dataclass(frozen=True)
class Clip:
    id: int
    kind: ClipKind
    label: Hashable


@dataclass(slots=True)
class Edge:
    src: int
    dst: int
    h: float = H0
    g: float = 0.0


@dataclass
class WalkTrace:
    edges: list[Edge] = field(default_factory=list)
    action: int = -1


class ClipNetwork:
    """A directed, weighted clip graph.

    Clips are addressed by integer ids; percepts and actions are also indexed
    by their labels. Outgoing edges keep insertion order, which fixes the
    order in which a walk scans candidate successors.
    """

    def __init__(self) -> None:
        self.clips: list[Clip] = []
        self.out_edges: list[list[Edge]] = []
        self.percept_index: dict[Hashable, int] = {}
        self.action_index: dict[Hashable, int] = {}

    @classmethod
    def two_layer(cls, percepts: Iterable[Hashable], actions: Sequence[Hashable]) -> "ClipNetwork":
        """Fully connected percept -> action network with fresh edges."""
        net = cls()
        for a in actions:
            net.add_clip(a, ClipKind.ACTION)
        for p in percepts:
            net.register_percept(p)
        return net

    def add_clip(self, label: Hashable, kind: ClipKind) -> int:
        index = self.percept_index if kind is ClipKind.PERCEPT else self.action_index
        if label in index:
            raise NetworkError(f"duplicate {kind.value} clip {label!r}")
        cid = len(self.clips)
        self.clips.append(Clip(cid, kind, label))
        self.out_edges.append([])
        index[label] = cid
        return cid

    def add_edge(self, src: int, dst: int, h: float = H0, g: float = 0.0) -> Edge:
        if not (0 <= src < len(self.clips) and 0 <= dst < len(self.clips)):
            raise NetworkError(f"edge {src}->{dst} refers to a missing clip")
        if self.clips[src].kind is ClipKind.ACTION:
            raise NetworkError("action clips are absorbing")
        edge = Edge(src, dst, h, g)
        self.out_edges[src].append(edge)
        return edge

    def register_percept(self, label: Hashable) -> int:
        """Add a percept clip with h0 edges to every action clip."""
        cid = self.add_clip(label, ClipKind.PERCEPT)
        for aid in self.action_index.values():
            self.add_edge(cid, aid)
        return cid

    @property
    def edges(self) -> Iterator[Edge]:
        for out in self.out_edges:
            yield from out

    @property
    def actions(self) -> list[Hashable]:
        return list(self.action_index)

    def validate(self) -> None:
        """Check that every clip reachable from a percept can reach an action."""
        reachable: set[int] = set()
        stack = list(self.percept_index.values())
        while stack:
            c = stack.pop()
            if c in reachable:
                continue
            reachable.add(c)
            stack.extend(e.dst for e in self.out_edges[c])
        # reverse search from the action clips
        incoming: dict[int, list[int]] = {}
        for e in self.edges:
            incoming.setdefault(e.dst, []).append(e.src)
        absorbing: set[int] = set()
        stack = list(self.action_index.values())
        while stack:
            c = stack.pop()
            if c in absorbing:
                continue
            absorbing.add(c)
            stack.extend(incoming.get(c, ()))
        stuck = reachable - absorbing
        if stuck:
            labels = sorted(str(self.clips[c].label) for c in stuck)
            raise NetworkError(f"clips cannot reach an action clip: {labels}")

    # -- deliberation --------------------------------------------------

    def transition_probabilities(self, clip: int) -> dict[int, float]:
        out = self.out_edges[clip]
        if not out:
            raise NetworkError(f"clip {self.clips[clip].label!r} has no outgoing edges")
        total = 0.0
        for e in out:
            total += e.h
        return {e.dst: e.h / total for e in out}

    def _hop(self, clip: int, u: float) -> Edge:
        out = self.out_edges[clip]
        if not out:
            raise NetworkError(f"clip {self.clips[clip].label!r} has no outgoing edges")
        total = 0.0
        for e in out:
            total += e.h
        r = u * total
        acc = 0.0
        for e in out:
            acc += e.h
            if r < acc:
                return e
        return out[-1]

    def random_walk(self, percept: Hashable, rng) -> WalkTrace:
        """Walk from ``percept`` until an action clip is hit.

        Each hop consumes exactly one ``rng.random()`` draw.
        """
        clip = self.percept_index[percept]
        trace = WalkTrace()
        while self.clips[clip].kind is not ClipKind.ACTION:
            edge = self._hop(clip, rng.random())
            trace.edges.append(edge)
            clip = edge.dst
        trace.action = clip
        return trace

    def policy(self, percept: Hashable) -> dict[Hashable, float]:
        """Action probabilities of a two-layer network for one percept."""
        probs = self.transition_probabilities(self.percept_index[percept])
        return {self.clips[c].label: p for c, p in probs.items()}

    # -- learning ------------------------------------------------------

    @staticmethod
    def refresh_glow(trace: WalkTrace) -> None:
        for e in trace.edges:
            e.g = 1.0

    def update_h(self, reward: float, gamma: float) -> None:
        for e in self.edges:
            h = e.h - gamma * (e.h - 1.0) + e.g * reward
            e.h = h if h > 1.0 else 1.0

    def damp_glow(self, eta: float) -> None:
        for e in self.edges:
            e.g = e.g * (1.0 - eta)

    # -- snapshots -----------------------------------------------------

    def snapshot(self) -> str:
        """One edge per line: ``from_label to_label h g`` (17 significant digits)."""
        lines = []
        for e in self.edges:
            src = _token(self.clips[e.src].label)
            dst = _token(self.clips[e.dst].label)
            lines.append(f"{src} {dst} {e.h:.17g} {e.g:.17g}")
        return "\n".join(lines) + ("\n" if lines else "")


def _token(label: Hashable) -> str:
    s = str(label)
    if not s or any(ch.isspace() for ch in s):
        raise NetworkError(f"label {label!r} is not a whitespace-free token")
    return s


def parse_snapshot(text: str) -> list[tuple[str, str, float, float]]:
    """Parse :meth:`ClipNetwork.snapshot` output back into edge tuples."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise NetworkError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        rows.append((parts[0], parts[1], float(parts[2]), float(parts[3])))
    return rows
