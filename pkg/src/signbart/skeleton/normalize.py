"""Frame normalization, per-part bounding boxes and component selection."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from signbart.errors import ParameterError, StateError
from signbart.skeleton.layout import (
    FRAME_NORMALIZED,
    RAW,
    NormalizationMode,
    SkeletonSequence,
    parse_parts,
    part_state,
)

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.05
DEGENERATE_EXTENT = 1e-6


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


def frame_normalize(seq: SkeletonSequence, counter: Counter | None = None) -> SkeletonSequence:
    """Divide x by frame width and y by frame height.

    Coordinates outside the frame are clamped to it; the number of clamped
    values is added to ``counter["clamped"]`` when a counter is given.
    """
    if seq.state != RAW:
        raise StateError(f"frame_normalize needs state {RAW!r}, got {seq.state!r}")
    missing = seq.missing()
    xy = seq.frames
    size = np.array([seq.width, seq.height], dtype=np.float64)
    clamped = np.clip(xy, 0.0, size)
    n_clamped = int(np.count_nonzero(clamped != xy))
    if n_clamped:
        log.warning("clamped %d out-of-frame coordinates in %s", n_clamped, seq.id or "<sequence>")
        if counter is not None:
            counter["clamped"] += n_clamped
    out = clamped / size
    out[missing] = 0.0
    return seq.with_frames(out, state=FRAME_NORMALIZED, width=None, height=None)


def _tight_extent(values: np.ndarray) -> tuple[float, float]:
    """Lower corner and extent of one axis, with degenerate axes widened."""
    lo, hi = float(values.min()), float(values.max())
    extent = hi - lo
    if extent == 0.0:
        lo -= DEGENERATE_EXTENT / 2
        extent = DEGENERATE_EXTENT
    return lo, extent


def part_bounding_box(points, margin_frac: float = DEFAULT_MARGIN) -> BoundingBox | None:
    """Tight box around ``points`` widened by ``margin_frac`` of its extent per side.

    Returns None for an empty point set (the part is absent).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return None
    if margin_frac < 0:
        raise ParameterError(f"margin must be non-negative, got {margin_frac}")
    x_lo, w = _tight_extent(pts[:, 0])
    y_lo, h = _tight_extent(pts[:, 1])
    return BoundingBox(x_lo - margin_frac * w, y_lo - margin_frac * h,
                       x_lo + w + margin_frac * w, y_lo + h + margin_frac * h)


def _rescale(values: np.ndarray, margin_frac: float) -> np.ndarray:
    # Same map as (v - box_min) / (box_max - box_min), written relative to the
    # tight minimum so that exact shifts and power-of-two scalings of the input
    # leave the result bit-identical.
    lo, extent = _tight_extent(values)
    return (values - lo + margin_frac * extent) / ((1.0 + 2.0 * margin_frac) * extent)


def normalize_parts(seq: SkeletonSequence, mode: NormalizationMode | str,
                    margin_frac: float = DEFAULT_MARGIN) -> SkeletonSequence:
    """Min-max normalize each part group inside its margin-widened box.

    One box per group is computed over all frames of the sequence. Missing
    keypoints are ignored for the box and stay (0, 0). Groups whose parts are
    not in the sequence's layout are skipped.
    """
    if isinstance(mode, str):
        mode = NormalizationMode.parse(mode)
    if seq.state != FRAME_NORMALIZED:
        raise StateError(f"normalize_parts needs state {FRAME_NORMALIZED!r}, got {seq.state!r}")
    out = seq.frames.copy()
    missing = seq.missing()
    for group in mode.groups():
        present_parts = [p for p in group if p in seq.layout.parts]
        if not present_parts:
            continue
        idx = seq.layout.indices(present_parts)
        block = out[:, idx, :]
        valid = ~missing[:, idx]
        if not valid.any():
            continue
        pts = block[valid]
        normed = np.stack([_rescale(pts[:, 0], margin_frac), _rescale(pts[:, 1], margin_frac)], axis=-1)
        block[valid] = normed
        out[:, idx, :] = block
    return seq.with_frames(out, state=part_state(mode))


def select_components(seq: SkeletonSequence, parts) -> SkeletonSequence:
    """Keep only the chosen parts, in body -> left -> right order."""
    chosen = parse_parts(parts)
    idx = seq.layout.indices(chosen)
    return seq.with_frames(seq.frames[:, idx, :].copy(), layout=seq.layout.select(chosen))


def preprocess(seq: SkeletonSequence, mode: NormalizationMode | str, parts=None) -> SkeletonSequence:
    """Frame-normalize if raw, normalize parts, then optionally select components."""
    if seq.state == RAW:
        seq = frame_normalize(seq)
    elif seq.state != FRAME_NORMALIZED:
        raise StateError(f"input is already {seq.state!r}; refusing to normalize twice")
    seq = normalize_parts(seq, mode)
    if parts is not None:
        seq = select_components(seq, parts)
    return seq
