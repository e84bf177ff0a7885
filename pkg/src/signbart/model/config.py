from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

from signbart.errors import SchemaError


@dataclass
class ModelConfig:
    d_model: int = 128
    ff_dim: int = 256
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 16
    num_keypoints: int = 48
    num_classes: int = 64
    dropout: float = 0.1
    max_len: int = 256
    # False gives the identity "no projection" baseline; requires d_model == num_keypoints
    projection: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d_model", "ff_dim", "heads", "num_keypoints", "num_classes", "max_len"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise SchemaError(f"model.{name} must be a positive integer, got {v!r}")
        for name in ("encoder_layers", "decoder_layers"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise SchemaError(f"model.{name} must be >= 1, got {v!r}")
        if self.d_model % self.heads:
            raise SchemaError(f"model.heads={self.heads} does not divide model.d_model={self.d_model}")
        if not 0.0 <= float(self.dropout) < 1.0:
            raise SchemaError(f"model.dropout must lie in [0, 1), got {self.dropout}")
        if not self.projection and self.d_model != self.num_keypoints:
            raise SchemaError("model.projection=false needs d_model == num_keypoints")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def _linear(shapes, prefix, n_in, n_out):
    shapes[f"{prefix}.weight"] = (n_in, n_out)
    shapes[f"{prefix}.bias"] = (n_out,)


def _norm(shapes, prefix, d):
    shapes[f"{prefix}.gain"] = (d,)
    shapes[f"{prefix}.bias"] = (d,)


def _attention(shapes, prefix, d):
    for proj in ("q", "k", "v", "o"):
        _linear(shapes, f"{prefix}.{proj}", d, d)


def _feed_forward(shapes, prefix, d, ff):
    _linear(shapes, f"{prefix}.in", d, ff)
    _linear(shapes, f"{prefix}.out", ff, d)


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Every named parameter tensor and its shape, in canonical order."""
    d, ff = config.d_model, config.ff_dim
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    if config.projection:
        _linear(shapes, "x_projection", config.num_keypoints, d)
        _linear(shapes, "y_projection", config.num_keypoints, d)
    for i in range(config.encoder_layers):
        p = f"encoder.{i}"
        _attention(shapes, f"{p}.self_attn", d)
        _norm(shapes, f"{p}.self_attn_norm", d)
        _feed_forward(shapes, f"{p}.ff", d, ff)
        _norm(shapes, f"{p}.ff_norm", d)
    for i in range(config.decoder_layers):
        p = f"decoder.{i}"
        _attention(shapes, f"{p}.self_attn", d)
        _norm(shapes, f"{p}.self_attn_norm", d)
        _attention(shapes, f"{p}.cross_attn", d)
        _norm(shapes, f"{p}.cross_attn_norm", d)
        _feed_forward(shapes, f"{p}.ff", d, ff)
        _norm(shapes, f"{p}.ff_norm", d)
    _linear(shapes, "classifier", d, config.num_classes)
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Closed-form parameter count."""
    d, ff, k, c = config.d_model, config.ff_dim, config.num_keypoints, config.num_classes
    attention = 4 * (d * d + d)
    norm = 2 * d
    feed_forward = 2 * d * ff + ff + d
    projections = 2 * (k * d + d) if config.projection else 0
    encoder = attention + feed_forward + 2 * norm
    decoder = 2 * attention + feed_forward + 3 * norm
    return (projections + config.encoder_layers * encoder + config.decoder_layers * decoder
            + d * c + c)
