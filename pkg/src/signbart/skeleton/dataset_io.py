"""JSON Lines dataset files, one sequence per line.

Record keys: id, label, gloss, width, height, state, frames, and optionally
parts (the retained layout spans, present once components were selected).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from signbart.errors import SchemaError, SignBartError
from signbart.skeleton.layout import FULL_LAYOUT, KeypointLayout, SkeletonSequence, parse_state

_REQUIRED = ("id", "label", "gloss", "width", "height", "state", "frames")
_ALLOWED = set(_REQUIRED) | {"parts"}


def sequence_to_record(seq: SkeletonSequence) -> dict:
    rec = {
        "id": seq.id,
        "label": seq.label,
        "gloss": seq.gloss,
        "width": seq.width,
        "height": seq.height,
        "state": seq.state,
        "frames": seq.frames.tolist(),
    }
    if seq.layout != FULL_LAYOUT:
        rec["parts"] = list(seq.layout.parts)
    return rec


def record_to_sequence(rec: dict) -> SkeletonSequence:
    if not isinstance(rec, dict):
        raise SchemaError("record must be a JSON object")
    unknown = set(rec) - _ALLOWED
    if unknown:
        raise SchemaError(f"unknown keys: {', '.join(sorted(unknown))}")
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise SchemaError(f"missing keys: {', '.join(missing)}")
    label = rec["label"]
    if label is not None and (not isinstance(label, int) or isinstance(label, bool) or label < 0):
        raise SchemaError(f"label must be a non-negative integer, got {label!r}")
    frames = rec["frames"]
    if not isinstance(frames, list) or not frames:
        raise SchemaError("frames must be a non-empty list (T >= 1)")
    layout = FULL_LAYOUT
    if rec.get("parts") is not None:
        parts = rec["parts"]
        if not isinstance(parts, list) or not set(parts) <= set(FULL_LAYOUT.parts) or not parts:
            raise SchemaError(f"invalid parts {parts!r}")
        layout = FULL_LAYOUT.select(set(parts))
    expected = layout.size
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != expected:
            got = len(frame) if isinstance(frame, list) else type(frame).__name__
            raise SchemaError(f"frame {t}: expected {expected} keypoints, got {got}")
        for point in frame:
            if not isinstance(point, list) or len(point) != 2:
                raise SchemaError(f"frame {t}: every keypoint must be an [x, y] pair")
    return SkeletonSequence(
        frames=frames,
        state=parse_state(str(rec["state"])),
        width=rec["width"],
        height=rec["height"],
        label=label,
        gloss=rec["gloss"],
        id=str(rec["id"]),
        layout=layout,
    )


def write_dataset(seqs: Iterable[SkeletonSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(json.dumps(sequence_to_record(seq), separators=(",", ":")))
            fh.write("\n")


def read_dataset(path) -> list[SkeletonSequence]:
    seqs: list[SkeletonSequence] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                seq = record_to_sequence(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{Path(path).name}:{lineno}: malformed JSON ({exc.msg})") from None
            except SignBartError as exc:
                raise type(exc)(f"{Path(path).name}:{lineno}: {exc}") from None
            if seqs and seq.state != seqs[0].state:
                raise SchemaError(
                    f"{Path(path).name}:{lineno}: mixed states {seqs[0].state!r} and {seq.state!r}")
            if seqs and seq.layout != seqs[0].layout:
                raise SchemaError(f"{Path(path).name}:{lineno}: mixed keypoint layouts in one file")
            seqs.append(seq)
    return seqs
