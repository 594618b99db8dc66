"""One INI file drives a full pipeline run.

Each section maps onto a frozen dataclass; keys are type-checked against the
dataclass fields and every unknown or malformed entry is reported in a single
error. The resolved configuration (defaults included) hashes to a stable
identifier that every stage records in its outputs for provenance.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from vpkl.mining import AlignmentParams
from vpkl.model import ModelConfig, TrainConfig
from vpkl.synth import SynthConfig


class ConfigError(ValueError):
    """Malformed run configuration; the message lists every offending key."""


@dataclass(frozen=True)
class QuantizeConfig:
    codebook_size: int = 100
    kmeans_iterations: int = 100

    def __post_init__(self):
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")
        if self.kmeans_iterations < 1:
            raise ValueError("kmeans_iterations must be >= 1")


@dataclass(frozen=True)
class MiningConfig:
    support_k: int = 10
    n_pairs: int = 16

    def __post_init__(self):
        if self.support_k < 1 or self.n_pairs < 1:
            raise ValueError("support_k and n_pairs must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    curve_trials: int = 2

    def __post_init__(self):
        if self.curve_trials < 0:
            raise ValueError("curve_trials must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = SynthConfig()
    quantize: QuantizeConfig = QuantizeConfig()
    align: AlignmentParams = AlignmentParams()
    mining: MiningConfig = MiningConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, synth=replace(self.synth, seed=seed))


_SECTIONS = {
    "synth": SynthConfig,
    "quantize": QuantizeConfig,
    "align": AlignmentParams,
    "mining": MiningConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(raw: str, hint) -> object:
    origin = typing.get_origin(hint)
    if origin is tuple:
        args = typing.get_args(hint)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        elem = args[0]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(p, elem) for p in parts)
        if len(parts) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values")
        return tuple(_convert(p, a) for p, a in zip(parts, args))
    if hint is bool:
        low = raw.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    if hint is str:
        return raw
    raise ValueError(f"unsupported config field type {hint}")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse an INI run config; None means all defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    problems: list[str] = []
    sections: dict[str, object] = {}
    for section in parser.sections():
        cls = _SECTIONS.get(section)
        if cls is None:
            problems.append(f"[{section}]: unknown section")
            continue
        hints = typing.get_type_hints(cls)
        known = {f.name: hints[f.name] for f in fields(cls)}
        values = {}
        section_ok = True
        for key, raw in parser.items(section):
            if key not in known:
                problems.append(f"[{section}] {key}: unknown key")
                section_ok = False
                continue
            try:
                values[key] = _convert(raw, known[key])
            except ValueError as exc:
                problems.append(f"[{section}] {key} = {raw!r}: {exc}")
                section_ok = False
        if section_ok:
            try:
                sections[section] = cls(**values)
            except (ValueError, TypeError) as exc:
                problems.append(f"[{section}]: {exc}")
    if problems:
        raise ConfigError(
            "invalid config:\n" + "\n".join(f"  - {p}" for p in problems)
        )
    return RunConfig(**sections)


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def config_hash(cfg: RunConfig) -> str:
    """Stable hash of the fully resolved configuration (defaults included)."""
    doc = {
        name: {f.name: _jsonable(getattr(getattr(cfg, name), f.name))
               for f in fields(type(getattr(cfg, name)))}
        for name in _SECTIONS
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
