"""Run configuration: defaults, presets, file/flag merging and validation."""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

from .attention import PE_CONVENTIONS, PE_MODES
from .corpus import DEFAULT_SOURCE_CAP, ORDERS
from .errors import ConfigError

VARIANTS = ("L2A", "L2L", "A2A", "A2L")
VOTE_COUNTING = ("set", "occurrence")


@dataclass
class TrainConfig:
    d_model: int = 512
    heads: int = 8
    d_ff: int | None = None
    enc_layers: int = 2
    dec_layers: int = 4
    variant: str = "L2A"
    pe: str = "local"
    pe_convention: str = "symmetric"
    scale_embeddings: bool = True
    dropout: float = 0.0
    order: str = "asc"
    random_order_fixed: bool = True
    lr: float = 1e-3
    warmup: int = 4000
    batch_size: int = 32
    max_epochs: int = 20
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    src_vocab_cap: int = DEFAULT_SOURCE_CAP
    seed: int = 0
    deterministic: bool = True

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model


@dataclass
class DecodeConfig:
    beam: int = 48
    n_best: int | None = None
    vote: float | None = None
    max_len: int = 32
    length_norm: bool = False
    vote_counting: str = "set"

    @property
    def nbest_size(self) -> int:
        return self.n_best if self.n_best is not None else self.beam

    @property
    def threshold(self) -> float:
        return self.vote if self.vote is not None else self.beam / 4


PRESETS = {
    "desk": {
        "d_model": 64,
        "heads": 4,
        "d_ff": 256,
        "warmup": 100,
        "lr": 2e-3,
        "batch_size": 16,
        "max_epochs": 30,
        "max_len": 32,
    },
    "paper": {
        "d_model": 512,
        "heads": 8,
        "d_ff": 2048,
        "warmup": 4000,
        "lr": 1e-3,
    },
}

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_DECODE_KEYS = {f.name for f in fields(DecodeConfig)}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    preset: str | None = None
    paths: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "decode": asdict(self.decode), "preset": self.preset, "paths": dict(self.paths)}

    def flat(self) -> dict:
        return {**asdict(self.train), **asdict(self.decode)}


def _flatten(raw: Mapping) -> dict:
    out = {}
    for key, value in raw.items():
        if key in ("train", "decode") and isinstance(value, Mapping):
            out.update(value)
        else:
            out[key] = value
    return out


def resolve(values: Mapping, preset: str | None = None, paths: Mapping | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from flat field values."""
    train_kw, decode_kw = {}, {}
    for key, value in values.items():
        if key in _TRAIN_KEYS:
            train_kw[key] = value
        elif key in _DECODE_KEYS:
            decode_kw[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    cfg = RunConfig(TrainConfig(**train_kw), DecodeConfig(**decode_kw), preset, dict(paths or {}))
    validate(cfg)
    if cfg.train.d_ff is None:
        cfg.train.d_ff = cfg.train.ffn_width
    if cfg.decode.n_best is None:
        cfg.decode.n_best = cfg.decode.beam
    if cfg.decode.vote is None:
        cfg.decode.vote = cfg.decode.beam / 4
    return cfg


def load_config(path=None, overrides: Mapping | None = None) -> RunConfig:
    """Merge defaults <- preset <- config file <- flag overrides.

    ``overrides`` entries whose value is ``None`` are ignored, so unparsed
    command-line flags never shadow file values. ``preset`` and ``paths`` may
    appear in either source.
    """
    file_values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            file_values = _flatten(json.load(fh))
    flag_values = {k: v for k, v in _flatten(overrides or {}).items() if v is not None}
    preset = flag_values.pop("preset", None) or file_values.pop("preset", None)
    file_values.pop("preset", None)
    paths = {**file_values.pop("paths", {}), **flag_values.pop("paths", {})}
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update(file_values)
    values.update(flag_values)
    return resolve(values, preset, paths)


def _choice(name: str, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"{name}={value!r} is not one of {list(allowed)}")


def validate(cfg: RunConfig) -> None:
    t, d = cfg.train, cfg.decode
    for name in ("d_model", "heads", "enc_layers", "dec_layers", "batch_size", "max_epochs"):
        if getattr(t, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(t, name)}")
    if t.d_model % t.heads:
        raise ConfigError(f"heads={t.heads} does not divide d_model={t.d_model}")
    if t.variant.startswith("L") and t.d_model % 2:
        raise ConfigError(f"variant={t.variant} needs an even d_model (biLSTM halves), got d_model={t.d_model}")
    if t.d_ff is not None and t.d_ff < 1:
        raise ConfigError(f"d_ff must be >= 1, got {t.d_ff}")
    _choice("variant", t.variant, VARIANTS)
    _choice("pe", t.pe, PE_MODES)
    _choice("pe_convention", t.pe_convention, PE_CONVENTIONS)
    _choice("order", t.order, ORDERS)
    _choice("vote_counting", d.vote_counting, VOTE_COUNTING)
    if not 0.0 <= t.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {t.dropout}")
    if t.lr < 0 or t.warmup < 0 or t.clip_norm <= 0:
        raise ConfigError("lr and warmup must be >= 0 and clip_norm > 0")
    if t.src_vocab_cap < 5:
        raise ConfigError(f"src_vocab_cap must be >= 5, got {t.src_vocab_cap}")
    if d.beam < 1 or d.max_len < 1:
        raise ConfigError(f"beam and max_len must be >= 1, got beam={d.beam}, max_len={d.max_len}")
    if d.n_best is not None and not 1 <= d.n_best <= d.beam:
        raise ConfigError(f"n_best={d.n_best} must lie in [1, beam={d.beam}]")


ABLATION_AXES = {"pe": PE_MODES, "variant": VARIANTS, "order": ORDERS}


def ablation_matrix(base: RunConfig, axes: Sequence[str] | Mapping[str, Sequence]) -> list:
    """Cartesian product of the requested axes applied to ``base``.

    ``axes`` is either a list of axis names (all values) or a mapping from axis
    name to the values to sweep. No axes yields ``[base]``.
    """
    if not isinstance(axes, Mapping):
        axes = {name: None for name in axes}
    names, grids = [], []
    for name, values in axes.items():
        if name not in ABLATION_AXES:
            raise ConfigError(f"unknown ablation axis {name!r}; expected one of {sorted(ABLATION_AXES)}")
        names.append(name)
        grids.append(tuple(values) if values is not None else ABLATION_AXES[name])
    configs = []
    for combo in itertools.product(*grids):
        cfg = RunConfig(replace(base.train, **dict(zip(names, combo))), replace(base.decode), base.preset, dict(base.paths))
        validate(cfg)
        configs.append(cfg)
    return configs
