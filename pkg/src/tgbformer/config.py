"""Pipeline configuration: JSON loading, defaults and validation.

Every key is optional; missing keys take the defaults below. Unknown keys
are rejected so typos do not silently fall back to defaults::

    {
      "N": 25, "c": 24, "h": 8, "w": 8, "D": null, "seed": 0,
      "sttm":  {"heads": 6, "d_ff": null, "layers": 1},
      "stgm":  {"l_dgc": 2, "thresholds": [0.1, 0.3, 1.0], "lambda": 0.3,
                "rho": 0.5, "edge_hidden": 16, "temporal_graph": "per-location"},
      "synth": {"velocity": [0.0, 1.0], "start": null, "amplitude": 3.0,
                "sigma": 1.0, "noise": 0.1}
    }

``D: null`` means D = c (tokens are a pure reshape); ``d_ff: null`` means 4*D.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .stgm import FULL, PER_LOCATION, validate_thresholds


@dataclass(frozen=True)
class SttmConfig:
    heads: int = 6
    d_ff: int | None = None
    layers: int = 1


@dataclass(frozen=True)
class StgmConfig:
    l_dgc: int = 2
    thresholds: tuple[float, ...] = (0.1, 0.3, 1.0)
    lam: float = 0.3
    rho: float = 0.5
    edge_hidden: int = 16
    temporal_graph: str = PER_LOCATION


@dataclass(frozen=True)
class SynthConfig:
    velocity: tuple[float, float] = (0.0, 1.0)
    start: tuple[float, float] | None = None
    amplitude: float = 3.0
    sigma: float = 1.0
    noise: float = 0.1


@dataclass(frozen=True)
class PipelineConfig:
    N: int = 25
    c: int = 24
    h: int = 8
    w: int = 8
    D: int | None = None
    seed: int = 0
    sttm: SttmConfig = field(default_factory=SttmConfig)
    stgm: StgmConfig = field(default_factory=StgmConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        validate(self)

    @property
    def dim(self) -> int:
        return self.c if self.D is None else self.D

    @property
    def tokens(self) -> int:
        return self.h * self.w

    @property
    def d_ff(self) -> int:
        return 4 * self.dim if self.sttm.d_ff is None else self.sttm.d_ff

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["stgm"]["lambda"] = out["stgm"].pop("lam")
        for section in ("stgm", "synth"):
            for key, value in out[section].items():
                if isinstance(value, tuple):
                    out[section][key] = list(value)
        return out


_JSON_NAMES = {"stgm": {"lambda": "lam"}}


def _int(value, name: str, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}", field=name)
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}", field=name)


def _number(value, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", field=name)


def validate(cfg: PipelineConfig) -> None:
    for name in ("N", "c", "h", "w"):
        _int(getattr(cfg, name), name, 1)
    if cfg.D is not None:
        _int(cfg.D, "D", 1)
    _int(cfg.seed, "seed", 0)
    if cfg.seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits", field="seed")
    _int(cfg.sttm.heads, "sttm.heads", 1)
    _int(cfg.sttm.layers, "sttm.layers", 1)
    dim = cfg.dim
    if dim % 4:
        raise ConfigError(f"D must be divisible by 4, got {dim}", field="D")
    if dim % cfg.sttm.heads:
        raise ConfigError(f"D={dim} is not divisible by sttm.heads={cfg.sttm.heads}", field="sttm.heads")
    if cfg.sttm.d_ff is not None:
        _int(cfg.sttm.d_ff, "sttm.d_ff", dim)
    _int(cfg.stgm.l_dgc, "stgm.l_dgc", 0)
    _int(cfg.stgm.edge_hidden, "stgm.edge_hidden", 1)
    for t in cfg.stgm.thresholds:
        _number(t, "stgm.thresholds")
    try:
        validate_thresholds(cfg.stgm.thresholds)
    except ConfigError as exc:
        raise ConfigError(str(exc), field="stgm.thresholds") from None
    _number(cfg.stgm.lam, "stgm.lambda")
    _number(cfg.stgm.rho, "stgm.rho")
    if cfg.stgm.temporal_graph not in (PER_LOCATION, FULL):
        raise ConfigError(f"stgm.temporal_graph must be {PER_LOCATION!r} or {FULL!r}",
                          field="stgm.temporal_graph")
    for name in ("amplitude", "sigma", "noise"):
        _number(getattr(cfg.synth, name), f"synth.{name}")
    if cfg.synth.sigma <= 0:
        raise ConfigError("synth.sigma must be positive", field="synth.sigma")
    for name in ("velocity", "start"):
        value = getattr(cfg.synth, name)
        if value is None and name == "start":
            continue
        if len(value) != 2:
            raise ConfigError(f"synth.{name} must be [dy, dx]", field=f"synth.{name}")
        for v in value:
            _number(v, f"synth.{name}")


def _section(cls, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object", field=name)
    names = _JSON_NAMES.get(name, {})
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        attr = names.get(key, key)
        if attr not in known or attr in names.values() and key not in names:
            raise ConfigError(f"unknown field {name}.{key}", field=f"{name}.{key}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[attr] = value
    return cls(**kwargs)


def config_from_dict(raw: Any) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    sections = {"sttm": SttmConfig, "stgm": StgmConfig, "synth": SynthConfig}
    top = {f.name for f in dataclasses.fields(PipelineConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key in sections:
            kwargs[key] = _section(sections[key], value, key)
        elif key in top:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown field {key}", field=key)
    return PipelineConfig(**kwargs)


def parse_config(text: str) -> PipelineConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw)


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    """Read a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))
