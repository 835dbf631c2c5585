"""Run configuration: defaults, INI-style parsing, the desk/paper-scale
profiles, range validation, and the content hash embedded in every output.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass
class RunSection:
    profile: str = "desk"
    seed: int = 0
    workers: int = 0  # 0 -> os.cpu_count()


@dataclass
class EnvSection:
    num_envs: int = 64
    episode_steps: int = 2500
    lowpass_beta: float = 0.8
    fall_height: float = 0.55
    init_noise: float = 0.01


@dataclass
class TrainSection:
    batch: int = 4096
    minibatch: int = 512
    epochs: int = 4
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 3e-4
    lr_phase2: float = 1e-3
    entropy_coef: float = 1e-3
    grad_clip: float = 1.0
    iters_phase1: int = 1000
    iters_phase2: int = 2000
    iters_phase3: int = 800
    iters_robust: int = 1000
    checkpoint_every: int = 50
    decay_floor: float = 0.3
    holdout_fraction: float = 0.1


@dataclass
class AgentsSection:
    hidden: int = 128
    latent_dim: int = 8
    e_dim: int = 14
    history_len: int = 70


@dataclass
class EvalSection:
    episodes: int = 10
    timeout_seconds: float = 20.0
    speed_step: float = 0.1
    height_step: float = 0.05
    transient_seconds: float = 2.0
    feasible_seconds: float = 10.0
    friction_start: float = 0.3
    friction_step: float = 0.05
    friction_floor: float = 0.05
    friction_trials: int = 5
    thorough_seeds: int = 3


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvSection = field(default_factory=EnvSection)
    train: TrainSection = field(default_factory=TrainSection)
    agents: AgentsSection = field(default_factory=AgentsSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def workers(self) -> int:
        return self.run.workers if self.run.workers > 0 else (os.cpu_count() or 1)

    def to_text(self) -> str:
        # run.workers is an execution knob that cannot change any result
        # (enforced by the determinism tests), so it stays out of the
        # canonical text and the hash
        out = []
        for sect_f in fields(self):
            sect = getattr(self, sect_f.name)
            for f in fields(sect):
                if (sect_f.name, f.name) == ("run", "workers"):
                    continue
                out.append(f"{sect_f.name}.{f.name}={getattr(sect, f.name)!r}")
        return "\n".join(sorted(out)) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


PAPER_SCALE = {
    "agents.hidden": 512,
    "train.batch": 65536,
    "train.minibatch": 8192,
    "train.iters_phase2": 2000,
    "train.iters_phase3": 2000,
    "env.num_envs": 512,
    "env.episode_steps": 2500,
}

_RANGES = {
    "train.gamma": (0.0, 1.0, "exclusive_low"),
    "train.lam": (0.0, 1.0, "exclusive_low"),
    "train.clip": (0.0, 10.0, "inclusive"),
    "train.lr": (0.0, 1.0, "exclusive_low"),
    "train.lr_phase2": (0.0, 1.0, "exclusive_low"),
    "env.lowpass_beta": (0.0, 1.0, "inclusive"),
    "env.fall_height": (0.0, 1.0, "inclusive"),
    "train.decay_floor": (0.0, 1.0, "exclusive_low"),
    "train.holdout_fraction": (0.0, 0.5, "exclusive_low"),
}


def _validate(cfg: RunConfig):
    for key, (lo, hi, kind) in _RANGES.items():
        sect, name = key.split(".")
        v = getattr(getattr(cfg, sect), name)
        ok = (lo < v <= hi) if kind == "exclusive_low" else (lo <= v <= hi)
        if not ok:
            raise ConfigError(f"{key}={v} out of range ({lo}, {hi}]")
    t = cfg.train
    if t.batch % t.minibatch != 0:
        raise ConfigError(f"train.minibatch={t.minibatch} must divide "
                          f"train.batch={t.batch}")
    if t.batch % cfg.env.num_envs != 0:
        raise ConfigError(f"env.num_envs={cfg.env.num_envs} must divide "
                          f"train.batch={t.batch}")
    if cfg.run.profile not in ("desk", "paper-scale"):
        raise ConfigError(f"unknown profile {cfg.run.profile!r}")
    for sect_f in fields(cfg):
        sect = getattr(cfg, sect_f.name)
        for f in fields(sect):
            v = getattr(sect, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                if isinstance(v, float) and not (v == v):
                    raise ConfigError(f"{sect_f.name}.{f.name} is NaN")


def _coerce(cfg: RunConfig, key: str, raw: str):
    if "." not in key:
        raise ConfigError(f"override {key!r} must be section.key")
    sect_name, name = key.split(".", 1)
    if not hasattr(cfg, sect_name):
        raise ConfigError(f"unknown config section {sect_name!r}")
    sect = getattr(cfg, sect_name)
    if not hasattr(sect, name):
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(sect, name)
    try:
        if isinstance(current, bool):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    setattr(sect, name, value)


def _apply_profile(cfg: RunConfig, profile: str):
    cfg.run.profile = profile
    if profile == "paper-scale":
        for key, value in PAPER_SCALE.items():
            sect, name = key.split(".")
            setattr(getattr(cfg, sect), name, value)


def parse_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then profile presets, then file keys, then CLI overrides.

    The file is INI-style; keys before any [section] header belong to [run].
    Unknown sections, keys, or out-of-range values raise ConfigError.
    """
    overrides = overrides or []
    file_items: list[tuple[str, str]] = []
    if path is not None:
        try:
            text = open(path).read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if not text.lstrip().startswith("["):
            text = "[run]\n" + text
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for sect in parser.sections():
            for key, raw in parser.items(sect):
                file_items.append((f"{sect}.{key}", raw))

    pairs = []
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must be key=value")
        k, v = ov.split("=", 1)
        pairs.append((k.strip(), v))

    cfg = RunConfig()
    profile = cfg.run.profile
    for k, v in file_items + pairs:
        if k == "run.profile":
            profile = v.strip()
    _apply_profile(cfg, profile)
    for k, v in file_items:
        _coerce(cfg, k, v)
    for k, v in pairs:
        _coerce(cfg, k, v)
    _validate(cfg)
    return cfg
