"""Task environments: the invasion game, the n-ship game and grid-worlds.

Environments only apply reward rules and emit percepts. Phase changes are
driven from outside through :meth:`set_phase`, so that a harness can record
the state of the phase that was in force during the last interaction before
switching to the next one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Hashable, Mapping, Optional, Sequence

import numpy as np

Policy = Callable[[Hashable], Mapping[Hashable, float]]


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvStep:
    reward: float
    trial_ended: bool
    next_percept: Hashable


# -- invasion game -------------------------------------------------------

SYMBOLS = ("⇐", "⇒")
MOVES = ("left", "right")


class InvasionGame:
    """Two-symbol blocking task; the attacker may invert its rule."""

    actions = MOVES
    n_states = 2

    def __init__(self, inverted: bool = False) -> None:
        self.inverted = inverted
        self.symbol = 0

    def reset(self, rng) -> str:
        self.symbol = 0 if rng.random() < 0.5 else 1
        return SYMBOLS[self.symbol]

    def correct_action(self, symbol: int) -> str:
        return MOVES[1 - symbol if self.inverted else symbol]

    def step(self, action: str, rng) -> EnvStep:
        if action not in MOVES:
            raise EnvError(f"invalid invasion-game action {action!r}")
        reward = 1.0 if action == self.correct_action(self.symbol) else 0.0
        return EnvStep(reward, True, self.reset(rng))

    def set_phase(self, phase: int) -> Optional[str]:
        self.inverted = phase % 2 == 1
        return None

    def performance(self, policy: Policy) -> float:
        """Success probability averaged over the two equiprobable symbols."""
        total = 0.0
        for s in (0, 1):
            total += policy(SYMBOLS[s])[self.correct_action(s)]
        return 0.5 * total


# -- n-ship game ---------------------------------------------------------

SHIP_ACTIONS = ("block", "pass")


def nship_expected_reward(p_block: Sequence[float]) -> float:
    """Expected per-game reward for per-ship blocking probabilities.

    Blocking any of the first n-1 ships pays 1 at once; blocking only the last
    ship pays 5(n-1). A single-ship game pays 1 for blocking.
    """
    n = len(p_block)
    if n == 0:
        raise EnvError("need at least one ship")
    if n == 1:
        return float(p_block[0])
    s = 0.0
    clear = 1.0
    for i in range(n - 1):
        s += p_block[i]
        clear *= 1.0 - p_block[i]
    return s + clear * p_block[n - 1] * (5.0 * (n - 1))


class NShipGame:
    """Ships 1..n arrive in turn; percept is the ship index."""

    actions = SHIP_ACTIONS

    def __init__(self, n: int) -> None:
        if n < 1:
            raise EnvError("n must be >= 1")
        self.n = n
        self.ship = 1
        self.blocked_early = False

    @property
    def n_states(self) -> int:
        return self.n

    @property
    def lambda_max(self) -> float:
        return 1.0 if self.n == 1 else 5.0 * (self.n - 1)

    def reset(self, rng=None) -> int:
        self.ship = 1
        self.blocked_early = False
        return 1

    def step(self, action: str, rng=None) -> EnvStep:
        if action not in SHIP_ACTIONS:
            raise EnvError(f"invalid n-ship action {action!r}")
        block = action == "block"
        if self.ship < self.n:
            self.blocked_early = self.blocked_early or block
            self.ship += 1
            return EnvStep(1.0 if block else 0.0, False, self.ship)
        reward = self.lambda_max if block and not self.blocked_early else 0.0
        return EnvStep(reward, True, self.reset())

    def set_phase(self, n: int) -> int:
        self.n = n
        return self.reset()

    def performance(self, policy: Policy) -> float:
        return nship_expected_reward([policy(i)["block"] for i in range(1, self.n + 1)])


# -- grid-world ----------------------------------------------------------

GRID_ACTIONS = ("left", "right", "up", "down")
GRID_MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))
GOAL_REWARD = 1.0
DISTRACTOR_REWARD = 1.0 / 3.0


@dataclass
class GridMap:
    walls: np.ndarray  # bool, shape (rows, cols)
    start: tuple[int, int]
    goal: tuple[int, int]
    distractor: Optional[tuple[int, int]] = None
    name: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def move(self, pos: tuple[int, int], action: int) -> tuple[int, int]:
        dr, dc = GRID_MOVES[action]
        r, c = pos[0] + dr, pos[1] + dc
        rows, cols = self.walls.shape
        if 0 <= r < rows and 0 <= c < cols and not self.walls[r, c]:
            return (r, c)
        return pos

    def shortest_path(self, target: tuple[int, int]) -> Optional[int]:
        """BFS distance from start to ``target``; terminal cells are not crossed."""
        terminals = {self.goal, self.distractor} - {None}
        dist = {self.start: 0}
        queue = deque([self.start])
        while queue:
            pos = queue.popleft()
            if pos == target:
                return dist[pos]
            if pos in terminals:
                continue
            for a in range(4):
                nxt = self.move(pos, a)
                if nxt not in dist:
                    dist[nxt] = dist[pos] + 1
                    queue.append(nxt)
        return None

    def render(self) -> str:
        rows, cols = self.walls.shape
        out = []
        for r in range(rows):
            line = []
            for c in range(cols):
                cell = (r, c)
                if self.walls[r, c]:
                    line.append("#")
                elif cell == self.start:
                    line.append("S")
                elif cell == self.goal:
                    line.append("G")
                elif cell == self.distractor:
                    line.append("g")
                else:
                    line.append(".")
            out.append("".join(line))
        return "\n".join(out) + "\n"


def load_map(text: str, name: str = "") -> GridMap:
    """Parse a character grid (``#`` wall, ``.`` free, ``S``, ``G``, ``g``)."""
    rows = [line.rstrip("\r") for line in text.splitlines() if line.strip()]
    if not rows:
        raise EnvError("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise EnvError("map is not rectangular")
    walls = np.zeros((len(rows), width), dtype=bool)
    marks: dict[str, list[tuple[int, int]]] = {"S": [], "G": [], "g": []}
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = True
            elif ch in marks:
                marks[ch].append((r, c))
            elif ch != ".":
                raise EnvError(f"unknown map character {ch!r} at row {r}, column {c}")
    for ch in "SG":
        if len(marks[ch]) != 1:
            raise EnvError(f"map needs exactly one {ch!r}")
    if len(marks["g"]) > 1:
        raise EnvError("map has more than one distractor")
    gmap = GridMap(walls, marks["S"][0], marks["G"][0], marks["g"][0] if marks["g"] else None, name)
    if gmap.shortest_path(gmap.goal) is None:
        raise EnvError("goal is unreachable from start")
    return gmap


SHIPPED_PATHS = {"a": 14, "b": 14, "c": 14}
SHIPPED_DISTRACTOR = {"c": 12}


def shipped_map(name: str) -> GridMap:
    """Load one of the bundled maps ``a``, ``b`` or ``c`` and check its distances."""
    if name not in SHIPPED_PATHS:
        raise EnvError(f"no shipped map {name!r}")
    text = resources.files("psmeta").joinpath("maps").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    gmap = load_map(text, name)
    assert gmap.shortest_path(gmap.goal) == SHIPPED_PATHS[name]
    if name in SHIPPED_DISTRACTOR:
        assert gmap.shortest_path(gmap.distractor) == SHIPPED_DISTRACTOR[name]
    return gmap


def resolve_map(spec: str) -> GridMap:
    """``shipped:<name>`` or a path to a map file."""
    if spec.startswith("shipped:"):
        return shipped_map(spec.split(":", 1)[1])
    with open(spec, encoding="utf-8") as fh:
        return load_map(fh.read(), spec)


def cell_label(pos: tuple[int, int]) -> str:
    return f"{pos[0]},{pos[1]}"


class GridWorld:
    """Maze navigation; reaching the goal or the distractor ends a trial."""

    actions = GRID_ACTIONS

    def __init__(self, maps: Sequence[GridMap]) -> None:
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise EnvError("all phase maps must share one shape")
        self.maps = list(maps)
        self.map = self.maps[0]
        self.pos = self.map.start

    @property
    def n_states(self) -> int:
        rows, cols = self.map.shape
        return rows * cols

    def reset(self, rng=None) -> str:
        self.pos = self.map.start
        return cell_label(self.pos)

    def step(self, action: str, rng=None) -> EnvStep:
        try:
            a = GRID_ACTIONS.index(action)
        except ValueError:
            raise EnvError(f"invalid grid action {action!r}") from None
        self.pos = self.map.move(self.pos, a)
        if self.pos == self.map.goal:
            return EnvStep(GOAL_REWARD, True, self.reset())
        if self.pos == self.map.distractor:
            return EnvStep(DISTRACTOR_REWARD, True, self.reset())
        return EnvStep(0.0, False, cell_label(self.pos))

    def set_phase(self, phase: int) -> str:
        self.map = self.maps[phase]
        return self.reset()

    def performance(self, policy: Policy) -> float:
        return float("nan")


# -- phase schedules -----------------------------------------------------


class PhaseSchedule:
    """Consecutive phases of fixed duration counted in interactions or trials."""

    def __init__(self, durations: Sequence[int], unit: str = "interactions") -> None:
        if not durations or any(d < 1 for d in durations):
            raise EnvError("phase durations must be positive")
        if unit not in ("interactions", "trials"):
            raise EnvError(f"unknown phase unit {unit!r}")
        self.durations = list(durations)
        self.unit = unit
        self.boundaries = list(np.cumsum(self.durations))
        self.phase = 0
        self.elapsed = 0

    @property
    def total(self) -> int:
        return int(self.boundaries[-1])

    def tick(self, trial_ended: bool) -> bool:
        """Count one interaction; True when a new phase begins after it."""
        if self.unit == "trials" and not trial_ended:
            return False
        self.elapsed += 1
        if self.phase < len(self.durations) - 1 and self.elapsed == self.boundaries[self.phase]:
            self.phase += 1
            return True
        return False
