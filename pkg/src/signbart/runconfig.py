"""Strict JSON run configuration shared by the CLI commands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from signbart.errors import SchemaError
from signbart.model import ModelConfig
from signbart.skeleton import NormalizationMode, parse_parts
from signbart.trainer import TrainConfig

# model keys that may be left null and filled in from the training data
INFERRED_MODEL_KEYS = ("num_keypoints", "num_classes")


@dataclass
class DataConfig:
    train: str | None = None
    val: str | None = None
    val_fraction: float = 0.2
    mode: str | None = None
    parts: str | None = None

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise SchemaError(f"data.val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.mode is not None:
            try:
                self.mode = NormalizationMode.parse(self.mode).value
            except ValueError as exc:
                raise SchemaError(f"data.mode: {exc}") from None
        if self.parts is not None:
            try:
                self.parts = ",".join(parse_parts(self.parts))
            except ValueError as exc:
                raise SchemaError(f"data.parts: {exc}") from None


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output_dir: str | None = None

    def model_config(self, **inferred) -> ModelConfig:
        values = {**ModelConfig().to_dict(), **{k: v for k, v in self.model.items() if v is not None}}
        for key in INFERRED_MODEL_KEYS:
            if self.model.get(key) is None and key in inferred:
                values[key] = inferred[key]
        return ModelConfig.from_dict(values)

    def to_dict(self) -> dict:
        return {
            "model": dict(self.model),
            "train": self.train.to_dict(),
            "data": {f.name: getattr(self.data, f.name) for f in fields(DataConfig)},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise SchemaError("config must be a JSON object")
        unknown = set(raw) - {"model", "train", "data", "output_dir"}
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(sorted(unknown))}")
        model = dict(raw.get("model") or {})
        known_model = set(ModelConfig().to_dict())
        bad = set(model) - known_model
        if bad:
            raise SchemaError(f"unknown model config keys: {', '.join(sorted(bad))}")
        # validate eagerly with placeholders for the inferable keys
        ModelConfig.from_dict({**ModelConfig().to_dict(),
                               **{k: v for k, v in model.items() if v is not None}})
        for key in known_model:
            model.setdefault(key, None if key in INFERRED_MODEL_KEYS else ModelConfig().to_dict()[key])
        data = raw.get("data") or {}
        bad = set(data) - {f.name for f in fields(DataConfig)}
        if bad:
            raise SchemaError(f"unknown data config keys: {', '.join(sorted(bad))}")
        try:
            train = TrainConfig.from_dict(raw.get("train") or {})
            data_cfg = DataConfig(**data)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None
        return cls(model=model, train=train, data=data_cfg, output_dir=raw.get("output_dir"))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(raw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
