"""Experiment configuration: flat ``key = value`` text files."""

import dataclasses
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path


class Algorithm(enum.Enum):
    PG = "pg"
    PGOC = "pgoc"
    DIAL = "dial"
    SG = "sg"
    SGOC = "sgoc"
    FROZEN = "frozen"  # control: sender keeps its random initial scheme

    @property
    def constrained(self):
        return self in (Algorithm.PGOC, Algorithm.SGOC)


class LagrangeMode(enum.Enum):
    LAGRANGIAN = "lagrangian"
    DGD = "dgd"


ENVS = ("recletter", "goals3", "goals5")

# Per-environment defaults; anything here can be overridden by the file or flags.
ENV_DEFAULTS = {
    "recletter": dict(gamma=0.0, lr_sender=0.05, lr_receiver=0.05, lr_critic=0.1,
                      batch_size=32, total_episodes=60_000, eval_interval=1_000,
                      hidden=0, entropy_coef=0.0),
    "goals3": dict(gamma=0.99, lr_sender=3e-3, lr_receiver=3e-3, lr_critic=3e-3,
                   batch_size=32, total_episodes=20_000, eval_interval=640,
                   hidden=64, entropy_coef=0.01),
    "goals5": dict(gamma=0.99, lr_sender=3e-3, lr_receiver=3e-3, lr_critic=3e-3,
                   batch_size=32, total_episodes=100_000, eval_interval=3_200,
                   hidden=64, entropy_coef=0.01),
}


@dataclass
class ExperimentConfig:
    env: str = "recletter"
    algorithm: Algorithm = Algorithm.SGOC
    obs_mode: str = "pos"
    stream_length: int = 1
    gamma: float = None
    lr_sender: float = None
    lr_receiver: float = None
    lr_critic: float = None
    lr_multiplier: float = None
    lam: float = 3.0
    epsilon: float = 0.1
    lagrange_mode: LagrangeMode = LagrangeMode.LAGRANGIAN
    temperature: float = 1.0
    hard_signals: bool = True
    batch_size: int = None
    total_episodes: int = None
    eval_interval: int = None
    constraint_samples: int = 4
    hidden: int = None
    entropy_coef: float = None
    advantage_baseline: bool = True
    target_sync: int = 50
    critic_targets: str = "mc"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = None
    record_wallclock: bool = False

    def __post_init__(self):
        self.env = self.env.lower()
        if isinstance(self.algorithm, str):
            self.algorithm = Algorithm(self.algorithm.lower())
        if isinstance(self.lagrange_mode, str):
            self.lagrange_mode = LagrangeMode(self.lagrange_mode.lower())
        defaults = ENV_DEFAULTS.get(self.env, {})
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.lr_multiplier is None:
            self.lr_multiplier = self.lr_sender

    @property
    def hidden_size(self):
        return self.hidden or None

    def errors(self):
        """All violations, so a bad config is reported in one go."""
        problems = []
        if self.env not in ENVS:
            problems.append(f"env must be one of {ENVS}, got {self.env!r}")
        for name in ("lr_sender", "lr_receiver", "lr_critic", "lr_multiplier", "temperature"):
            value = getattr(self, name)
            if value is None or not value > 0:
                problems.append(f"{name} must be > 0, got {value}")
        if self.lam is None or self.lam < 0:
            problems.append(f"lambda must be >= 0, got {self.lam}")
        if self.epsilon is None or self.epsilon < 0:
            problems.append(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma is None or not 0 <= self.gamma <= 1:
            problems.append(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.seeds:
            problems.append("seeds must be non-empty")
        for name in ("batch_size", "eval_interval", "stream_length", "target_sync"):
            value = getattr(self, name)
            if value is None or value < 1:
                problems.append(f"{name} must be >= 1, got {value}")
        if self.total_episodes is None or self.total_episodes < 0:
            problems.append(f"total_episodes must be >= 0, got {self.total_episodes}")
        if self.constraint_samples < 1:
            problems.append(f"constraint_samples must be >= 1, got {self.constraint_samples}")
        if self.entropy_coef is None or self.entropy_coef < 0:
            problems.append(f"entropy_coef must be >= 0, got {self.entropy_coef}")
        if self.critic_targets not in ("mc", "td"):
            problems.append(f"critic_targets must be 'mc' or 'td', got {self.critic_targets!r}")
        if self.obs_mode not in ("no", "pos", "full"):
            problems.append(f"obs_mode must be no, pos or full, got {self.obs_mode!r}")
        return problems

    def validate(self):
        problems = self.errors()
        if problems:
            raise ConfigError(problems)
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif f.name == "seeds":
                value = ",".join(str(s) for s in value)
            key = "lambda" if f.name == "lam" else f.name
            lines.append(f"{key} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


_ALIASES = {"lambda": "lam", "algo": "algorithm", "out": "output_dir"}
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def parse_seeds(text):
    """'0..14' (inclusive), '3' or '1,4,9'."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _coerce(name, raw):
    raw = raw.strip()
    if name == "seeds":
        return parse_seeds(raw)
    if raw == "" or raw.lower() == "none":
        return None
    if name in ("algorithm", "lagrange_mode", "env", "obs_mode", "output_dir", "critic_targets"):
        return raw
    if name in ("hard_signals", "advantage_baseline", "record_wallclock"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if name in ("stream_length", "batch_size", "total_episodes", "eval_interval",
                "constraint_samples", "hidden", "target_sync"):
        return int(float(raw))
    return float(raw)


def parse_config_text(text, overrides=None):
    values = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value")
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        name = _ALIASES.get(key, key).replace("-", "_")
        if name not in _FIELDS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[name] = _coerce(name, raw)
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_ALIASES.get(key, key)] = value
    if problems:
        raise ConfigError(problems)
    values = {k: v for k, v in values.items() if v is not None or k == "output_dir"}
    try:
        cfg = ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    if cfg.output_dir is None:
        cfg.output_dir = os.environ.get("MSGLAB_OUT", "msglab_out")
    return cfg


def load_config(path, overrides=None):
    return parse_config_text(Path(path).read_text(encoding="utf-8"), overrides)
