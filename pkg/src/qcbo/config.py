"""Run configuration: YAML file plus dotted-key overrides."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .analysis import SWEEP_T1, SWEEP_T2
from .search import SearchConfig


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n: int = 6000
    d: int = 8
    informative: int = 4
    margin: float = 1.2
    noise: float = 1.0
    task: str = "linear"
    seed: int = 1


@dataclass
class DataConfig:
    csv: str | None = None
    label_column: str = "label"
    synthetic: SyntheticSpec | None = None
    test_size: int = 2000
    val_size: int = 1000
    split_seed: int = 0


@dataclass
class SweepConfig:
    T1: list[float] = field(default_factory=lambda: list(SWEEP_T1))
    T2: list[float] = field(default_factory=lambda: list(SWEEP_T2))
    channels: list[str] = field(default_factory=lambda: ["thermal"])
    subset_size: int = 1000
    epochs: int = 5
    batch_size: int = 128
    gammas: list[float] = field(default_factory=lambda: [0.8, 0.9])
    point: list[float] = field(default_factory=lambda: [100.0, 120.0])


@dataclass
class RunConfig:
    qubits: int = 5
    data: DataConfig = field(default_factory=DataConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: str | None = None

    def validate(self) -> None:
        if self.qubits < 1:
            raise ConfigError("qubits: must be positive")
        d = self.data
        if d.csv is None and d.synthetic is None:
            raise ConfigError("data.csv: a CSV path is required unless a synthetic task is configured")
        if d.csv is not None and not Path(d.csv).exists():
            raise ConfigError(f"data.csv: file not found: {d.csv}")
        if d.synthetic is not None and d.synthetic.d < self.qubits:
            raise ConfigError(f"data.synthetic.d: {d.synthetic.d} features cannot feed {self.qubits} qubits")
        try:
            self.search.validate()
        except ValueError as e:
            raise ConfigError(f"search: {e}") from e

    def to_dict(self) -> dict:
        d = asdict(self)
        d["search"] = self.search.to_dict()
        return d


def _build(cls, raw: Any, path: str):
    """Instantiate a (possibly nested) dataclass from plain data, rejecting unknown keys."""
    if cls is SearchConfig:
        try:
            return SearchConfig.from_dict(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for k, v in raw.items():
        sub = _NESTED.get((cls, k))
        kwargs[k] = _build(sub, v, f"{path}.{k}" if path else k) if sub and v is not None else v
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "search"): SearchConfig,
    (RunConfig, "sweep"): SweepConfig,
    (DataConfig, "synthetic"): SyntheticSpec,
}


def set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if cur.get(p) is None:
            cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> tuple[RunConfig, dict]:
    """Defaults, then the YAML file, then dotted overrides. Returns the config and the applied overrides."""
    raw = RunConfig().to_dict()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {p}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        _merge(raw, loaded)
    applied = {}
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        set_dotted(raw, k, v)
        applied[k] = v
    cfg = _build(RunConfig, raw, "")
    return cfg, applied


def config_from_dict(d: dict) -> RunConfig:
    """Rebuild a config echoed into a manifest."""
    raw = RunConfig().to_dict()
    _merge(raw, d)
    return _build(RunConfig, raw, "")


def _merge(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = copy.deepcopy(v)


def parse_value(text: str):
    """YAML scalar parsing for ``--set key=value``."""
    return yaml.safe_load(text)
