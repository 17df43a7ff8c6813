"""Run configuration: a flat key = value text file.

Example:

    variant = shelm
    store = stores/toy.semb
    out_dir = runs/shelm_tmaze
    seeds = 1, 2, 3
    env.kind = tmaze_memory
    env.corridor_length = 7
    env.n_concepts = 2
    env.episode_limit = 8
    env.seed = 0
    ppo.total_steps = 150000
    eval.every = 4096

Lines starting with # are comments. Unknown keys are rejected so typos
surface immediately. Every omitted key takes the documented default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .agent import VARIANTS, PpoConfig
from .encoder import EncoderConfig, KIND_TRANSFORMER
from .envs import ENV_KINDS
from .errors import ArgumentError


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "tmaze_memory"
    corridor_length: int = 7
    n_concepts: int = 2
    episode_limit: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ArgumentError(f"unknown env kind {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    variant: str
    store_path: Path
    out_dir: Path
    seeds: tuple[int, ...]
    prompt_path: Path | None = None
    encoder_checkpoint: Path | None = None  # SENC file with external weights
    env: EnvConfig = EnvConfig()
    ppo: PpoConfig = PpoConfig()
    encoder: EncoderConfig = EncoderConfig()
    eval_every: int = 4096
    eval_episodes: int = 16
    beta: float = 100.0
    prompt_offset_scale: float = 0.1
    calibration_size: int = 4096
    policy_hidden: int = 64

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ArgumentError(f"unknown variant {self.variant!r}")
        if not self.seeds:
            raise ArgumentError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ArgumentError("seeds must be distinct")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ArgumentError("eval.every and eval.episodes must be >= 1")


def _parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ArgumentError(f"config line {line_no} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ArgumentError(f"duplicate config key {key!r} (line {line_no})")
        pairs[key] = value.strip()
    return pairs


def _take(pairs: dict[str, str], prefix: str, cls, **overrides):
    kwargs = dict(overrides)
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in pairs:
            continue
        raw = pairs.pop(key)
        if f.name == "kind":
            kwargs[f.name] = raw
        elif f.type in (float, "float"):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = int(raw)
    return cls(**kwargs)


def parse_run_config(text: str, base_dir: Path | None = None) -> RunConfig:
    pairs = _parse_pairs(text)
    base = base_dir or Path.cwd()

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    try:
        variant = pairs.pop("variant")
        store_path = resolve(pairs.pop("store"))
        out_dir = resolve(pairs.pop("out_dir"))
        seeds = tuple(int(s) for s in pairs.pop("seeds").split(",") if s.strip())
    except KeyError as e:
        raise ArgumentError(f"missing required config key {e.args[0]!r}") from None
    prompt_path = resolve(pairs.pop("prompts")) if "prompts" in pairs else None
    encoder_checkpoint = (resolve(pairs.pop("encoder.checkpoint"))
                          if "encoder.checkpoint" in pairs else None)

    env = _take(pairs, "env", EnvConfig)
    ppo = _take(pairs, "ppo", PpoConfig)
    encoder = _take(pairs, "encoder", EncoderConfig, kind=KIND_TRANSFORMER)
    extras = {}
    simple = {
        "eval.every": ("eval_every", int),
        "eval.episodes": ("eval_episodes", int),
        "fh.beta": ("beta", float),
        "retrieval.prompt_offset_scale": ("prompt_offset_scale", float),
        "bn.calibration_size": ("calibration_size", int),
        "policy.hidden": ("policy_hidden", int),
    }
    for key, (name, cast) in simple.items():
        if key in pairs:
            extras[name] = cast(pairs.pop(key))
    if pairs:
        raise ArgumentError(f"unknown config keys: {sorted(pairs)}")

    return RunConfig(
        variant=variant, store_path=store_path, out_dir=out_dir, seeds=seeds,
        prompt_path=prompt_path, encoder_checkpoint=encoder_checkpoint,
        env=env, ppo=ppo, encoder=encoder, **extras,
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArgumentError(f"cannot read config {path}: {e}") from e
    cfg = parse_run_config(text, base_dir=path.parent)
    if not cfg.store_path.exists():
        raise ArgumentError(f"store file does not exist: {cfg.store_path}")
    if cfg.prompt_path is not None and not cfg.prompt_path.exists():
        raise ArgumentError(f"prompt file does not exist: {cfg.prompt_path}")
    if cfg.encoder_checkpoint is not None and not cfg.encoder_checkpoint.exists():
        raise ArgumentError(f"encoder checkpoint does not exist: {cfg.encoder_checkpoint}")
    return cfg
