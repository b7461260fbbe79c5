"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ABLATIONS, ModelConfig
from .training import TrainConfig, TrainingError


class ConfigError(ValueError):
    pass


PATH_KEYS = ("train_file", "dev_file", "test_file", "general_embeddings", "domain_embeddings_file", "checkpoint")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_file: str | None = None
    dev_file: str | None = None
    test_file: str | None = None
    general_embeddings: str | None = None
    domain_embeddings_file: str | None = None
    checkpoint: str | None = None
    out_dir: str = "runs"
    seeds: tuple = (1,)

    def validate(self, need=()) -> None:
        for key in need:
            if getattr(self, key) is None:
                raise ConfigError(f"missing required key {key!r}")
        for key in PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{key}: no such file {value}")
        combo = {"encoder": self.model.encoder, "message_passing": self.model.message_passing,
                 "opinion_passing": self.model.opinion_passing}
        if combo not in ABLATIONS.values() and not (
                self.model.message_passing == "representations" and self.model.opinion_passing):
            raise ConfigError(f"flag combination {combo} is not in the ablation grid")

    def to_text(self) -> str:
        lines = []
        for key, value in self.items():
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def items(self):
        for f in fields(ModelConfig):
            yield f.name, getattr(self.model, f.name)
        for f in fields(TrainConfig):
            if f.name != "seed":
                yield f.name, getattr(self.train, f.name)
        for f in fields(RunConfig):
            if f.name not in ("model", "train"):
                yield f.name, getattr(self, f.name)

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None, source: str = "<config>") -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update(overrides or {})
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        return cls.from_text(text, overrides, source=str(path))

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        model_types = typing.get_type_hints(ModelConfig)
        train_types = typing.get_type_hints(TrainConfig)
        run_types = typing.get_type_hints(RunConfig)
        model_kw, train_kw, run_kw = {}, {}, {}
        values = dict(values)
        row = values.pop("ablation_row", None)
        if row is not None:
            row = int(row)
            if row not in ABLATIONS:
                raise ConfigError(f"ablation_row: no row {row} (choose 0-5)")
            for k, v in ABLATIONS[row].items():
                values.setdefault(k, v)
        for key, raw in values.items():
            if key in model_types:
                model_kw[key] = _coerce(key, raw, model_types[key])
            elif key in train_types and key != "seed":
                train_kw[key] = _coerce(key, raw, train_types[key])
            elif key in run_types and key not in ("model", "train"):
                run_kw[key] = _coerce(key, raw, run_types[key])
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            model = ModelConfig(**model_kw)
            seeds = run_kw.get("seeds", (1,))
            if not seeds:
                raise ConfigError("seeds: at least one seed is required")
            train = TrainConfig(seed=seeds[0], **train_kw)
        except (ValueError, TrainingError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(model=model, train=train, **run_kw)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(key: str, raw, hint):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    text = raw.strip()
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional and text.lower() in ("none", "null", ""):
        return None
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    try:
        if base is bool:
            if text.lower() in ("true", "on", "yes", "1"):
                return True
            if text.lower() in ("false", "off", "no", "0"):
                return False
            raise ValueError(text)
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is tuple:
            return tuple(int(p) for p in text.split(",") if p.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
