"""Ensemble configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .meta import ETA_VALUES, MetaConfig

ENVS = ("invasion", "nship", "grid")
VARIANTS = ("full", "gamma_only", "fixed")
METRIC_NAMES = {"invasion": "success", "nship": "reward", "grid": "steps_per_reward"}
RECORD_COLUMNS = ("metric", "gamma", "eta", "p_rule1", "phase") + tuple(
    f"p_eta_{v:g}" for v in ETA_VALUES
)


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass
class EnsembleConfig:
    """One ensemble: an environment schedule, an agent variant, and seeds.

    Agent ``i`` of the ensemble is seeded with ``seed + i``. ``gamma`` and
    ``eta`` give the initial meta-parameter values (random when ``None``);
    for the ``fixed`` variant they stay in force for the whole run.
    """

    name: str = "custom"
    env: str = "invasion"
    variant: str = "full"
    n_agents: int = 1
    seed: int = 0
    stride: int = 1
    phase_len: tuple[int, ...] = (1000,)
    n_phases: int = 1
    phase_unit: Optional[str] = None
    threshold: Optional[float] = None
    max_steps: Optional[int] = None
    n_start: int = 1
    n_end: Optional[int] = None
    map_a: Optional[str] = "shipped:a"
    map_b: Optional[str] = "shipped:b"
    map_c: Optional[str] = "shipped:c"
    gamma: Optional[float] = None
    eta: Optional[float] = None
    n_eta: int = 30
    n_gamma: int = 5
    c_gamma: float = 0.2
    gamma_meta: float = 0.0
    rule_bias: Optional[tuple[float, float]] = None
    reset_windows: bool = False
    preset: Optional[str] = field(default=None)

    def __post_init__(self) -> None:
        self.phase_len = tuple(int(x) for x in self.phase_len)
        if self.rule_bias is not None:
            self.rule_bias = tuple(float(x) for x in self.rule_bias)
        self.validate()

    # -- derived quantities ---------------------------------------------

    @property
    def unit(self) -> str:
        if self.phase_unit is not None:
            return self.phase_unit
        return "interactions" if self.env == "invasion" else "trials"

    @property
    def axis(self) -> str:
        return "interactions" if self.env == "invasion" else "trials"

    def durations(self) -> list[int]:
        if len(self.phase_len) == 1:
            return list(self.phase_len) * self.n_phases
        return list(self.phase_len)

    @property
    def total(self) -> int:
        """Run length along the recording axis."""
        if self.threshold is not None:
            return int(self.max_steps)
        if self.unit != self.axis:
            return int(self.max_steps)
        return sum(self.durations())

    @property
    def n_records(self) -> int:
        return self.total // self.stride

    def maps(self) -> list[str]:
        return [m for m in (self.map_a, self.map_b, self.map_c)][: self.n_phases]

    def ships(self) -> list[int]:
        return [self.n_start + k for k in range(self.n_phases)]

    def meta_config(self) -> MetaConfig:
        return MetaConfig(self.n_eta, self.n_gamma, self.c_gamma, self.gamma_meta, self.rule_bias)

    def replace(self, **changes) -> "EnsembleConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        def bad(key, msg):
            raise ConfigError(msg, key)

        if self.env not in ENVS:
            bad("env", f"unknown environment {self.env!r}; expected one of {ENVS}")
        if self.variant not in VARIANTS:
            bad("variant", f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.n_agents < 1:
            bad("n_agents", "must be >= 1")
        if self.stride < 1:
            bad("stride", "must be >= 1")
        if self.n_phases < 1:
            bad("n_phases", "must be >= 1")
        if not self.phase_len or min(self.phase_len) < 1:
            bad("phase_len", "durations must be positive")
        if len(self.phase_len) not in (1, self.n_phases):
            bad("phase_len", "give one duration or one per phase")
        if self.phase_unit not in (None, "interactions", "trials"):
            bad("phase_unit", "must be 'interactions' or 'trials'")
        if self.threshold is not None:
            if self.env != "invasion":
                bad("threshold", "success thresholds apply to the invasion game only")
            if not 0.0 < self.threshold <= 1.0:
                bad("threshold", "must lie in (0, 1]")
        if (self.threshold is not None or self.unit != self.axis) and not self.max_steps:
            bad("max_steps", "required when phase boundaries are not fixed on the axis")
        if self.max_steps is not None and self.max_steps < 1:
            bad("max_steps", "must be positive")
        if self.env == "nship":
            if self.n_start < 1:
                bad("n_start", "must be >= 1")
            if self.n_end is not None and self.n_end != self.n_start + self.n_phases - 1:
                bad("n_end", "must equal n_start + n_phases - 1")
        if self.env == "grid":
            if self.n_phases > 3:
                bad("n_phases", "grid schedules use at most three maps")
            for key, m in zip(("map_a", "map_b", "map_c"), self.maps()):
                if not m:
                    bad(key, "map missing for a scheduled phase")
        for key in ("gamma", "eta", "gamma_meta"):
            v = getattr(self, key)
            if v is not None and not 0.0 <= v <= 1.0:
                bad(key, "must lie in [0, 1]")
        try:
            self.meta_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.total < self.stride:
            bad("stride", "longer than the run")


# -- text format --------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(EnsembleConfig)}
_INT = {"n_agents", "seed", "stride", "n_phases", "max_steps", "n_start", "n_end", "n_eta", "n_gamma"}
_FLOAT = {"threshold", "gamma", "eta", "c_gamma", "gamma_meta"}
_STR = {"name", "env", "variant", "phase_unit", "map_a", "map_b", "map_c", "preset"}


def _format_value(key: str, value) -> str:
    if value is None:
        return "none"
    if key == "reset_windows":
        return "true" if value else "false"
    if key in ("phase_len", "rule_bias"):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: EnsembleConfig) -> str:
    lines = [f"{name} = {_format_value(name, getattr(cfg, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def _parse_value(key: str, raw: str):
    if raw.lower() == "none":
        return None
    if key in _INT:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if key in _FLOAT:
        return float(raw)
    if key == "reset_windows":
        if raw.lower() not in ("true", "false"):
            raise ValueError("expected true or false")
        return raw.lower() == "true"
    if key == "phase_len":
        return tuple(int(float(x)) if "e" in x.lower() else int(x) for x in raw.split(","))
    if key == "rule_bias":
        vals = tuple(float(x) for x in raw.split(","))
        if len(vals) != 2:
            raise ValueError("expected two comma-separated h-values")
        return vals
    return raw


def parse_config(text: str) -> EnsembleConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value {raw!r}: {exc}", key, lineno) from None
        lines[key] = lineno
    try:
        return EnsembleConfig(**values)
    except ConfigError as exc:
        if exc.key in lines:
            raise ConfigError(str(exc).split(": ", 1)[-1], exc.key, lines[exc.key]) from None
        raise
