from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from signbart.errors import ContractError, ParameterError
from signbart.skeleton.layout import SkeletonSequence


@dataclass
class Batch:
    x_coords: np.ndarray    # B x T x K
    y_coords: np.ndarray    # B x T x K
    frame_mask: np.ndarray  # B x T, True for real frames
    labels: np.ndarray      # B, -1 where unlabeled
    lengths: np.ndarray     # B
    truncated: np.ndarray   # B, True where frames were dropped

    def __len__(self) -> int:
        return len(self.labels)


def pad_batch(seqs: Sequence[SkeletonSequence], max_len: int | None = None,
              require_labels: bool = True) -> Batch:
    """Right-pad (or truncate to the first ``max_len`` frames) and split x / y."""
    if not seqs:
        raise ParameterError("cannot batch an empty list of sequences")
    if max_len is not None and max_len < 1:
        raise ParameterError(f"max_len must be positive, got {max_len}")
    k = seqs[0].num_keypoints
    state = seqs[0].state
    for s in seqs:
        if s.num_keypoints != k:
            raise ContractError(f"mixed keypoint counts in batch: {k} and {s.num_keypoints}")
        if s.state != state:
            raise ContractError(f"mixed states in batch: {state!r} and {s.state!r}")
        if require_labels and s.label is None:
            raise ContractError(f"sequence {s.id or '<unnamed>'} has no label")
    full = np.array([s.num_frames for s in seqs])
    lengths = full if max_len is None else np.minimum(full, max_len)
    t_max = int(lengths.max())
    b = len(seqs)
    xs = np.zeros((b, t_max, k))
    ys = np.zeros((b, t_max, k))
    mask = np.zeros((b, t_max), dtype=bool)
    for i, s in enumerate(seqs):
        n = lengths[i]
        xs[i, :n] = s.frames[:n, :, 0]
        ys[i, :n] = s.frames[:n, :, 1]
        mask[i, :n] = True
    labels = np.array([-1 if s.label is None else s.label for s in seqs], dtype=np.int64)
    return Batch(xs, ys, mask, labels, lengths.astype(np.int64), full > lengths)
