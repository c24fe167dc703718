"""Run configuration: TOML in, resolved TOML echoed back out.

Unknown keys are rejected so typos cannot silently fall back to defaults;
every command writes the fully resolved document next to its outputs, and
re-running from that echo reproduces the run bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError

ENV_SEED = "FLUXLAB_SEED"


@dataclass(frozen=True)
class DatasetSection:
    equation: str = "cubic"
    n_coeffs: int = 20
    n_ics: int = 10
    n_t: int = 100
    n_x: int = 100
    dt: float = 0.005


@dataclass(frozen=True)
class EncoderSection:
    patch_size: int = 4
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    conv_width: int = 4
    coord_channel: bool = False


@dataclass(frozen=True)
class FluxNOSection:
    stencil_half_width: int = 2
    width: int = 16
    layers: int = 2
    modes: int = 8
    coord_channel: bool = False


@dataclass(frozen=True)
class TrainSection:
    steps: int = 2000
    batch_size: int = 32
    context_len: int = 20
    peak_lr: float = 1e-3
    floor_lr: float = 1e-5
    warmup_frac: float = 0.05
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    checkpoint_every: int = 500


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    fluxno: FluxNOSection = field(default_factory=FluxNOSection)
    train: TrainSection = field(default_factory=TrainSection)


_SECTIONS = {
    "dataset": DatasetSection,
    "encoder": EncoderSection,
    "fluxno": FluxNOSection,
    "train": TrainSection,
}


def _build_section(cls, doc, where):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")
    return cls(**doc)


def config_from_dict(doc) -> RunConfig:
    doc = dict(doc)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.pop(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        kwargs[name] = _build_section(cls, section, name)
    seed = doc.pop("seed", 0)
    if doc:
        raise ConfigError(f"unknown top-level key(s) {sorted(doc)}")
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(seed=seed, **kwargs)


def load_config(path) -> RunConfig:
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    cfg = config_from_dict(doc)
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            cfg = RunConfig(seed=int(env_seed), dataset=cfg.dataset,
                            encoder=cfg.encoder, fluxno=cfg.fluxno, train=cfg.train)
        except ValueError as e:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {env_seed!r}") from e
    return cfg


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise ConfigError(f"cannot serialize {type(v).__name__} to TOML")


def dump_config(cfg: RunConfig) -> str:
    """Resolved config as TOML text (the echo format)."""
    lines = [f"seed = {cfg.seed}", ""]
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for key, value in asdict(getattr(cfg, name)).items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def echo_config(cfg: RunConfig, out_dir, name="config_resolved.toml"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
