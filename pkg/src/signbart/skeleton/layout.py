"""Keypoint layout and the skeleton sequence container."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from signbart.errors import ContractError, ParameterError, SchemaError

BODY = "body"
LEFT_HAND = "left_hand"
RIGHT_HAND = "right_hand"
POSE_REST = "pose_rest"

PARTS = (BODY, LEFT_HAND, RIGHT_HAND)

# Mediapipe pose indices stored in the body slots (nose, shoulders, elbows, left hip).
# Which six the original work used is not known; this is a suggestion only.
BODY_POSE_INDICES = (0, 11, 12, 13, 14, 23)
# The remaining 27 pose landmarks, ascending, fill the tail of a full record.
POSE_REST_INDICES = tuple(i for i in range(33) if i not in BODY_POSE_INDICES)

_PART_ALIASES = {
    "body": BODY, "left": LEFT_HAND, "left_hand": LEFT_HAND, "right": RIGHT_HAND,
    "right_hand": RIGHT_HAND,
}


class NormalizationMode(str, enum.Enum):
    NONE = "none"
    ONE_BOX = "one-box"
    TWO_BOX = "two-box"
    THREE_BOX = "three-box"

    @classmethod
    def parse(cls, text: str) -> "NormalizationMode":
        try:
            return cls(text.replace("_", "-"))
        except ValueError:
            raise ParameterError(
                f"unknown normalization mode {text!r}; expected one of "
                f"{', '.join(m.value for m in cls)}") from None

    def groups(self) -> tuple[tuple[str, ...], ...]:
        return {
            NormalizationMode.NONE: (),
            NormalizationMode.ONE_BOX: ((BODY, LEFT_HAND, RIGHT_HAND),),
            NormalizationMode.TWO_BOX: ((BODY,), (LEFT_HAND, RIGHT_HAND)),
            NormalizationMode.THREE_BOX: ((BODY,), (LEFT_HAND,), (RIGHT_HAND,)),
        }[self]


RAW = "raw-pixels"
FRAME_NORMALIZED = "frame-normalized"
PART_PREFIX = "part-normalized:"


def part_state(mode: NormalizationMode) -> str:
    return PART_PREFIX + mode.value


def parse_state(state: str) -> str:
    if state in (RAW, FRAME_NORMALIZED):
        return state
    if state.startswith(PART_PREFIX):
        NormalizationMode.parse(state[len(PART_PREFIX):])
        return state
    raise SchemaError(f"unknown state {state!r}")


@dataclass(frozen=True)
class KeypointLayout:
    """Ordered, disjoint spans over the keypoint axis."""

    spans: tuple[tuple[str, int], ...]  # (part name, length), in storage order

    def __post_init__(self):
        names = [n for n, _ in self.spans]
        if len(set(names)) != len(names):
            raise ParameterError(f"duplicate part in layout: {names}")

    @property
    def size(self) -> int:
        return sum(n for _, n in self.spans)

    @property
    def parts(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.spans)

    def span(self, part: str) -> slice:
        start = 0
        for name, length in self.spans:
            if name == part:
                return slice(start, start + length)
            start += length
        raise ContractError(f"layout has no part {part!r} (parts: {', '.join(self.parts)})")

    def indices(self, parts) -> np.ndarray:
        return np.concatenate([np.arange(self.size)[self.span(p)] for p in parts])

    def select(self, parts) -> "KeypointLayout":
        return KeypointLayout(tuple((n, l) for n, l in self.spans if n in parts))

    @classmethod
    def from_parts(cls, parts) -> "KeypointLayout":
        return FULL_LAYOUT.select(set(parts))


FULL_LAYOUT = KeypointLayout(((BODY, 6), (LEFT_HAND, 21), (RIGHT_HAND, 21), (POSE_REST, 27)))
NUM_KEYPOINTS = FULL_LAYOUT.size


def parse_parts(parts) -> tuple[str, ...]:
    """Canonicalize a part subset to body -> left -> right order."""
    if isinstance(parts, str):
        parts = [p for p in parts.split(",") if p.strip()]
    chosen = set()
    for p in parts:
        key = p.strip().lower()
        if key not in _PART_ALIASES:
            raise ParameterError(f"unknown part {p!r}; expected body, left, right")
        chosen.add(_PART_ALIASES[key])
    if not chosen:
        raise ParameterError("part subset must not be empty")
    return tuple(p for p in PARTS if p in chosen)


@dataclass
class SkeletonSequence:
    """T x K x 2 keypoint coordinates (x then y) for one sign.

    Missing keypoints are stored as exactly (0, 0).
    """

    frames: np.ndarray
    state: str = RAW
    width: int | None = None
    height: int | None = None
    label: int | None = None
    gloss: str | None = None
    id: str = ""
    layout: KeypointLayout = field(default=FULL_LAYOUT)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        f = self.frames
        if f.ndim != 3 or f.shape[0] < 1 or f.shape[2] != 2:
            raise SchemaError(f"frames must have shape (T>=1, K, 2), got {f.shape}")
        if f.shape[1] != self.layout.size:
            raise SchemaError(
                f"expected {self.layout.size} keypoints per frame for parts "
                f"{','.join(self.layout.parts)}, got {f.shape[1]}")
        if not np.all(np.isfinite(f)):
            raise SchemaError("frames contain non-finite values")
        parse_state(self.state)
        if self.state == RAW:
            if not self.width or not self.height or self.width <= 0 or self.height <= 0:
                raise SchemaError("raw-pixels sequences need positive width and height")
        elif f.min() < 0.0 or f.max() > 1.0:
            raise SchemaError(f"{self.state} coordinates must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_keypoints(self) -> int:
        return self.frames.shape[1]

    def missing(self) -> np.ndarray:
        """T x K boolean mask of missing keypoints."""
        return (self.frames[..., 0] == 0.0) & (self.frames[..., 1] == 0.0)

    def with_frames(self, frames: np.ndarray, **changes) -> "SkeletonSequence":
        return replace(self, frames=frames, **changes)
