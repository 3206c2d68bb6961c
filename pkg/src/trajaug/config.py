"""Run configuration: defaults, file loading and CLI overrides."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .eligibility import FILTER_ORDER, FilterConfig
from .errors import ConfigError
from .interaction import TtcConfig
from .kinematics import ComfortThresholds
from .sampler import UNIFORM, SamplingConfig

log = logging.getLogger(__name__)

_SECTIONS = {
    "filters": FilterConfig,
    "sampling": SamplingConfig,
    "comfort": ComfortThresholds,
    "ttc": TtcConfig,
}


@dataclass(frozen=True)
class IOConfig:
    input: str | None = None
    output: str | None = None
    replay_plan: str | None = None


@dataclass(frozen=True)
class RunConfig:
    filters: FilterConfig = field(default_factory=FilterConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    comfort: ComfortThresholds = field(default_factory=ComfortThresholds)
    ttc: TtcConfig = field(default_factory=TtcConfig)
    io: IOConfig = field(default_factory=IOConfig)
    workers: int = 1
    strict: bool = True
    keep_original_ego: bool = True
    histogram_bins: int = 50

    def __post_init__(self):
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be an integer >= 1, got {self.workers!r}")
        if self.histogram_bins < 2:
            raise ConfigError("histogram_bins must be >= 2")
        if self.sampling.mode == "per_ego" and self.sampling.n_s != 1:
            log.warning("per_ego mode ignores n_s=%s", self.sampling.n_s)

    def echo(self) -> dict:
        """Result-affecting settings, as echoed into summary.json.

        Paths and the worker count are left out: they never change results,
        and leaving them out keeps reports byte-identical across runs.
        """
        out = {name: _section_dict(getattr(self, name)) for name in _SECTIONS}
        out["keep_original_ego"] = self.keep_original_ego
        out["strict"] = self.strict
        out["histogram_bins"] = self.histogram_bins
        out["replay"] = self.io.replay_plan is not None
        return out


def _section_dict(obj) -> dict:
    d = dataclasses.asdict(obj)
    if "active" in d:
        d["active"] = [f for f in FILTER_ORDER if f in d["active"]]
    return d


def _build(cls, values: Mapping[str, Any], where: str):
    if not isinstance(values, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_filters(value) -> frozenset:
    if value is None:
        return frozenset()
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip() and v.strip() != "none"]
    return frozenset(value)


def parse_tau(value):
    if isinstance(value, str):
        if value.strip().lower() in (UNIFORM, "inf"):
            return UNIFORM
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"tau must be a number or 'uniform', got {value!r}") from None
    return value


def _section(d: dict, name: str) -> dict:
    raw = d.pop(name, None) or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config section '{name}' must be a mapping, got {type(raw).__name__}")
    return dict(raw)


def config_from_dict(d: Mapping[str, Any]) -> RunConfig:
    if not isinstance(d or {}, Mapping):
        raise ConfigError("config root must be a mapping")
    d = dict(d or {})
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        section = _section(d, name)
        if name == "filters" and "active" in section:
            section["active"] = parse_filters(section["active"])
        if name == "sampling" and "tau" in section:
            section["tau"] = parse_tau(section["tau"])
        kwargs[name] = _build(cls, section, name)
    kwargs["io"] = _build(IOConfig, _section(d, "io"), "io")
    top = {f.name for f in dataclasses.fields(RunConfig)} - set(_SECTIONS) - {"io"}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs.update(d)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Read a YAML (or JSON) config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    return config_from_dict(data)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply flat overrides such as ``tau=0.1`` or ``radius=30``; ``None`` means unset."""
    sampling = {}
    filters = {}
    io = {}
    top = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("tau", "n_s", "mode", "seed"):
            sampling[key] = parse_tau(value) if key == "tau" else value
        elif key == "filters":
            filters["active"] = parse_filters(value)
        elif key == "radius":
            filters["radius_r"] = value
        elif key in ("input", "output", "replay_plan"):
            io[key] = str(value)
        else:
            top[key] = value
    try:
        return dataclasses.replace(
            cfg,
            sampling=dataclasses.replace(cfg.sampling, **sampling),
            filters=dataclasses.replace(cfg.filters, **filters),
            io=dataclasses.replace(cfg.io, **io),
            **top,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
