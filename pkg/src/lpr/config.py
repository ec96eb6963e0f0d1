"""Training configuration and its flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored.  Keys are the field names of
:class:`TrainConfig`; booleans accept true/false, lists are comma
separated.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .tasks import TASKS


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class TrainConfig:
    task: str = "reach_target"
    mode: str = "lpr"  # "lpr" or "baseline" (shortest collision-free planner path)
    use_policy: bool = True
    seeds: list = field(default_factory=lambda: [0])
    num_demos: int = 10
    total_env_steps: int = 2000
    gradient_steps_per_env_step: int = 1
    M: int = 20
    B: int = 20
    T: int = 32
    collision_free_fraction: float = 0.5
    midpoint_std: float = 0.2
    gamma: float = 0.99
    tau: float = 0.005
    eps_start: float = 0.2
    eps_end: float = 0.02
    eps_decay_steps: int = 1000
    lr_policy: float = 1e-3
    lr_ranker: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 100_000
    augment_stride: int = 4
    goal_noise: float = 0.0
    eval_every: int = 500
    eval_episodes: int = 50
    eval_seed: int = 0
    log_wall_time: bool = False
    save_checkpoints: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError("task", f"unknown task {self.task!r}; valid tasks: {', '.join(sorted(TASKS))}")
        if self.mode not in ("lpr", "baseline"):
            raise ConfigError("mode", "must be 'lpr' or 'baseline'")
        positive = ("gradient_steps_per_env_step", "M", "B", "batch_size", "replay_capacity",
                    "augment_stride", "eval_every")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be positive")
        for key in ("num_demos", "total_env_steps", "eval_episodes", "eps_decay_steps"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be non-negative")
        if self.T < 2:
            raise ConfigError("T", "must be at least 2")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma", "must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau", "must lie in [0, 1]")
        for key in ("eps_start", "eps_end", "collision_free_fraction"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(key, "must lie in [0, 1]")
        if self.midpoint_std <= 0:
            raise ConfigError("midpoint_std", "must be positive")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")

    def epsilon(self, step: int) -> float:
        if self.eps_decay_steps == 0 or step >= self.eps_decay_steps:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * step / self.eps_decay_steps

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, list):
                v = ",".join(str(x) for x in v)
            else:
                v = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_DEFAULTS = TrainConfig()


def _convert(key: str, raw: str):
    kind = type(getattr(_DEFAULTS, key))
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is list:
            return [int(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> TrainConfig:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", "expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        values[key] = _convert(key, raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    with open(path) as f:
        return parse_config(f.read())
