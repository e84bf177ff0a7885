"""The SignBart network.

x coordinates are projected and encoded by a bidirectional encoder; y
coordinates are projected and encoded by a causal decoder that queries the
encoded x stream through cross-attention. A masked mean over valid frames
feeds a linear classifier.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from signbart.errors import ContractError, DimensionError
from signbart.model.config import ModelConfig, parameter_shapes
from signbart.numerics import (
    Tensor,
    dropout,
    gelu,
    layer_norm,
    matmul,
    softmax_last_dim,
    transpose,
)
from signbart.skeleton import Batch

NEG_INF = -1e9

Params = Mapping[str, Tensor]


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Xavier-uniform weights, zero biases, unit norm gains."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".weight"):
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, size=shape)
        elif name.endswith(".gain"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


def linear(x: Tensor, params: Params, prefix: str) -> Tensor:
    return matmul(x, params[f"{prefix}.weight"]) + params[f"{prefix}.bias"]


def project_coordinates(coords, weight: Tensor, bias: Tensor) -> Tensor:
    """B x T x K coordinates -> B x T x d_model embeddings."""
    coords = coords if isinstance(coords, Tensor) else Tensor(coords)
    if coords.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"coordinates have {coords.shape[-1]} keypoints but the projection expects {weight.shape[0]}")
    return matmul(coords, weight) + bias


def positional_encoding(t: int, d_model: int, max_len: int | None = None) -> np.ndarray:
    """Fixed sinusoidal table: sin on even columns, cos on odd columns."""
    if max_len is not None and t > max_len:
        raise DimensionError(f"sequence length {t} exceeds max_len {max_len}")
    pos = np.arange(t, dtype=np.float64)[:, None]
    even = np.arange(0, d_model, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, even / d_model)
    pe = np.zeros((t, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return pe


def causal_mask(t: int) -> np.ndarray:
    """T x T additive mask: 0 where the key index is <= the query index."""
    allowed = np.tril(np.ones((t, t), dtype=bool))
    return np.where(allowed, 0.0, NEG_INF)


def padding_mask(frame_mask: np.ndarray) -> np.ndarray:
    """B x T x T additive mask blocking padded key positions for every query."""
    frame_mask = np.asarray(frame_mask, dtype=bool)
    if not frame_mask.any(axis=1).all():
        raise ContractError("every sequence in the batch needs at least one valid frame")
    t = frame_mask.shape[1]
    keys = np.where(frame_mask, 0.0, NEG_INF)[:, None, :]
    return np.broadcast_to(keys, (frame_mask.shape[0], t, t)).copy()


def combine_masks(*masks: np.ndarray) -> np.ndarray:
    out = masks[0]
    for m in masks[1:]:
        out = np.minimum(out, m)
    return out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, d = x.shape
    return transpose(x.reshape(b, t, heads, d // heads), (0, 2, 1, 3))


def multi_head_attention(q_input: Tensor, kv_input: Tensor, mask: np.ndarray, params: Params,
                         prefix: str, heads: int, dropout_rate: float = 0.0,
                         rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Scaled dot-product attention over ``heads`` heads, then W_O and dropout.

    ``mask`` is additive with shape T_q x T_k or B x T_q x T_k.
    """
    b, tq, d = q_input.shape
    tk = kv_input.shape[1]
    if kv_input.shape[0] != b or kv_input.shape[2] != d:
        raise DimensionError(f"query input {q_input.shape} and key/value input {kv_input.shape} disagree")
    if d % heads:
        raise DimensionError(f"{heads} heads do not divide width {d}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape[-2:] != (tq, tk):
        raise DimensionError(f"mask shape {mask.shape} does not cover {tq} x {tk}")
    if mask.ndim == 3:
        mask = mask[:, None]
    q = _split_heads(linear(q_input, params, f"{prefix}.q"), heads)
    k = _split_heads(linear(kv_input, params, f"{prefix}.k"), heads)
    v = _split_heads(linear(kv_input, params, f"{prefix}.v"), heads)
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d // heads)) + mask
    weights = softmax_last_dim(scores)
    heads_out = transpose(matmul(weights, v), (0, 2, 1, 3)).reshape(b, tq, d)
    return dropout(linear(heads_out, params, f"{prefix}.o"), dropout_rate, training, rng)


def _feed_forward(x: Tensor, params: Params, prefix: str, rate: float, rng, training) -> Tensor:
    hidden = gelu(linear(x, params, f"{prefix}.in"))
    return dropout(linear(hidden, params, f"{prefix}.out"), rate, training, rng)


def _add_norm(residual: Tensor, update: Tensor, params: Params, prefix: str) -> Tensor:
    return layer_norm(residual + update, params[f"{prefix}.gain"], params[f"{prefix}.bias"])


def encoder_forward(x_emb: Tensor, pad_mask: np.ndarray, params: Params, config: ModelConfig,
                    rng=None, training: bool = False) -> Tensor:
    h = x_emb
    for i in range(config.encoder_layers):
        p = f"encoder.{i}"
        attn = multi_head_attention(h, h, pad_mask, params, f"{p}.self_attn", config.heads,
                                    config.dropout, rng, training)
        h = _add_norm(h, attn, params, f"{p}.self_attn_norm")
        h = _add_norm(h, _feed_forward(h, params, f"{p}.ff", config.dropout, rng, training),
                      params, f"{p}.ff_norm")
    return h


def decoder_forward(y_emb: Tensor, encoder_out: Tensor, pad_mask: np.ndarray, params: Params,
                    config: ModelConfig, rng=None, training: bool = False) -> Tensor:
    t = y_emb.shape[1]
    self_mask = combine_masks(causal_mask(t)[None], pad_mask)
    h = y_emb
    for i in range(config.decoder_layers):
        p = f"decoder.{i}"
        attn = multi_head_attention(h, h, self_mask, params, f"{p}.self_attn", config.heads,
                                    config.dropout, rng, training)
        h = _add_norm(h, attn, params, f"{p}.self_attn_norm")
        cross = multi_head_attention(h, encoder_out, pad_mask, params, f"{p}.cross_attn",
                                     config.heads, config.dropout, rng, training)
        h = _add_norm(h, cross, params, f"{p}.cross_attn_norm")
        h = _add_norm(h, _feed_forward(h, params, f"{p}.ff", config.dropout, rng, training),
                      params, f"{p}.ff_norm")
    return h


def pool_logits(decoder_out: Tensor, frame_mask: np.ndarray, params: Params) -> Tensor:
    """Masked mean over valid frames followed by the linear classifier."""
    frame_mask = np.asarray(frame_mask, dtype=np.float64)
    counts = frame_mask.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ContractError("cannot pool a sequence with zero valid frames")
    pooled = (decoder_out * frame_mask[:, :, None]).sum(axis=1) / counts
    return linear(pooled, params, "classifier")


def classify(decoder_out: Tensor, frame_mask: np.ndarray, params: Params) -> Tensor:
    return softmax_last_dim(pool_logits(decoder_out, frame_mask, params))


def embed(coords: np.ndarray, params: Params, config: ModelConfig, which: str, rng=None,
          training: bool = False) -> Tensor:
    t = coords.shape[1]
    pe = positional_encoding(t, config.d_model, config.max_len)
    if not config.projection:
        if coords.shape[-1] != config.d_model:
            raise DimensionError(
                f"coordinates have {coords.shape[-1]} keypoints, identity embedding needs {config.d_model}")
        return dropout(Tensor(coords) + pe, config.dropout, training, rng)
    h = project_coordinates(coords, params[f"{which}_projection.weight"], params[f"{which}_projection.bias"])
    # learned embeddings are scaled by sqrt(d_model) as in the original transformer,
    # otherwise the positional table drowns the coordinate signal at init
    return dropout(h * math.sqrt(config.d_model) + pe, config.dropout, training, rng)


def _check_batch(batch: Batch, config: ModelConfig) -> None:
    k = batch.x_coords.shape[-1]
    if k != config.num_keypoints:
        raise DimensionError(f"batch has {k} keypoints but the model expects {config.num_keypoints}")


def forward_logits(batch: Batch, params: Params, config: ModelConfig, rng=None,
                   training: bool = False) -> Tensor:
    _check_batch(batch, config)
    pad = padding_mask(batch.frame_mask)
    x_emb = embed(batch.x_coords, params, config, "x", rng, training)
    encoded = encoder_forward(x_emb, pad, params, config, rng, training)
    y_emb = embed(batch.y_coords, params, config, "y", rng, training)
    decoded = decoder_forward(y_emb, encoded, pad, params, config, rng, training)
    return pool_logits(decoded, batch.frame_mask, params)


def forward(batch: Batch, params: Params, config: ModelConfig, rng=None,
            training: bool = False) -> Tensor:
    """Class probabilities, B x num_classes."""
    return softmax_last_dim(forward_logits(batch, params, config, rng, training))


def decoder_states(batch: Batch, params: Params, config: ModelConfig) -> Tensor:
    """Eval-mode decoder output, B x T x d_model (used by diagnostics and tests)."""
    _check_batch(batch, config)
    pad = padding_mask(batch.frame_mask)
    encoded = encoder_forward(embed(batch.x_coords, params, config, "x"), pad, params, config)
    return decoder_forward(embed(batch.y_coords, params, config, "y"), encoded, pad, params, config)


class SignBart:
    """Config plus named parameters, with convenience forward methods."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        expected = parameter_shapes(config)
        if list(self.params) != list(expected):
            missing = set(expected) - set(self.params)
            extra = set(self.params) - set(expected)
            raise ContractError(f"parameter names do not match config (missing {sorted(missing)[:3]}, "
                                f"unexpected {sorted(extra)[:3]})")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    def logits(self, batch: Batch, rng=None, training: bool = False) -> Tensor:
        return forward_logits(batch, self.params, self.config, rng, training)

    def predict_proba(self, batch: Batch) -> np.ndarray:
        return forward(batch, self.params, self.config).data

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
