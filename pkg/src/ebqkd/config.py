"""Run configuration: one JSON document, strictly validated.

Top-level keys (all optional except where noted)::

    config_version   int, must be 1
    source           {pair_rate_hz, polarization_error_prob, jitter_sigma_ps}
    link_a, link_b   {loss_db, background_cps_per_detector}
    session          {duration_s, bias_z, seed, clock_offset_ps}
    window_ps        int, full coincidence gate width
    sync             {coarse_half_range_ps, coarse_bin_ps, fine_bin_ps,
                      histogram_bin_ps, histogram_half_range_ps}
    finite_key       {f_x, f_z, eps_per_basis}

Unknown keys are rejected. ``loss_db`` accepts ``"inf"`` for a blocked link.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .finite_key import DEFAULT_EPS_PER_BASIS
from .photonics import LinkParams, SessionConfig, SourceParams
from .sync import DEFAULT_COARSE_BIN_PS, DEFAULT_COARSE_HALF_RANGE_PS, DEFAULT_FINE_BIN_PS, DEFAULT_WINDOW_PS

CONFIG_VERSION = 1


@dataclass(frozen=True)
class SyncParams:
    coarse_half_range_ps: int = DEFAULT_COARSE_HALF_RANGE_PS
    coarse_bin_ps: int = DEFAULT_COARSE_BIN_PS
    fine_bin_ps: int = DEFAULT_FINE_BIN_PS
    histogram_bin_ps: int = 100
    histogram_half_range_ps: int = 10_000

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"sync.{f.name} must be positive")
        if (2 * self.coarse_half_range_ps) % self.coarse_bin_ps:
            raise ConfigError("sync.coarse_bin_ps must divide 2 * coarse_half_range_ps")
        if (2 * self.histogram_half_range_ps) % self.histogram_bin_ps:
            raise ConfigError("sync.histogram_bin_ps must divide 2 * histogram_half_range_ps")


@dataclass(frozen=True)
class FiniteKeyParams:
    f_x: float = 1.1
    f_z: float = 1.12
    eps_per_basis: float = DEFAULT_EPS_PER_BASIS

    def __post_init__(self):
        if self.f_x < 1 or self.f_z < 1:
            raise ConfigError("finite_key.f_x and f_z must be >= 1")
        if not 0 < self.eps_per_basis < 1:
            raise ConfigError("finite_key.eps_per_basis outside (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    source: SourceParams = field(default_factory=SourceParams)
    link_a: LinkParams = field(default_factory=lambda: LinkParams(29.0))
    link_b: LinkParams = field(default_factory=lambda: LinkParams(21.0))
    session: SessionConfig = field(default_factory=lambda: SessionConfig(60.0, 0.8))
    window_ps: int = DEFAULT_WINDOW_PS
    sync: SyncParams = field(default_factory=SyncParams)
    finite_key: FiniteKeyParams = field(default_factory=FiniteKeyParams)
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {self.config_version}")
        if self.window_ps <= 0:
            raise ConfigError("window_ps must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for link in ("link_a", "link_b"):
            if math.isinf(d[link]["loss_db"]):
                d[link]["loss_db"] = "inf"
        return d

    def override(self, **changes) -> "RunConfig":
        """Return a copy with dotted keys replaced, e.g. ``{"session.seed": 3}``."""
        d = self.to_dict()
        for key, value in changes.items():
            if value is None:
                continue
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return config_from_dict(d)


_SECTIONS = {
    "source": SourceParams,
    "link_a": LinkParams,
    "link_b": LinkParams,
    "session": SessionConfig,
    "sync": SyncParams,
    "finite_key": FiniteKeyParams,
}


def _coerce(cls, name, value):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    if value == "inf" and name == "loss_db":
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{cls.__name__}.{name} must be a number, got {value!r}")
    if ftype == "int":
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{cls.__name__}.{name} must be an integer")
        return int(value)
    return float(value)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**{k: _coerce(cls, k, v) for k, v in data.items()})
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = set(_SECTIONS) | {"window_ps", "config_version"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    defaults = RunConfig()
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            merged = {**dataclasses.asdict(getattr(defaults, name)), **data[name]} if isinstance(
                data[name], dict) else data[name]
            kwargs[name] = _build(cls, merged, name)
    for name in ("window_ps", "config_version"):
        if name in data:
            v = data[name]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer")
            kwargs[name] = v
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(data)
