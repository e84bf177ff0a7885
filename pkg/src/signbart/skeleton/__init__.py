from signbart.skeleton.batching import Batch, pad_batch
from signbart.skeleton.dataset_io import read_dataset, write_dataset
from signbart.skeleton.layout import (
    BODY,
    FRAME_NORMALIZED,
    FULL_LAYOUT,
    LEFT_HAND,
    NUM_KEYPOINTS,
    PARTS,
    RAW,
    RIGHT_HAND,
    KeypointLayout,
    NormalizationMode,
    SkeletonSequence,
    parse_parts,
    part_state,
)
from signbart.skeleton.normalize import (
    BoundingBox,
    frame_normalize,
    normalize_parts,
    part_bounding_box,
    preprocess,
    select_components,
)
from signbart.skeleton.synthetic import generate_synthetic

__all__ = [
    "BODY", "Batch", "BoundingBox", "FRAME_NORMALIZED", "FULL_LAYOUT", "KeypointLayout",
    "LEFT_HAND", "NUM_KEYPOINTS", "NormalizationMode", "PARTS", "RAW", "RIGHT_HAND",
    "SkeletonSequence", "frame_normalize", "generate_synthetic", "normalize_parts",
    "pad_batch", "parse_parts", "part_bounding_box", "part_state", "preprocess",
    "read_dataset", "select_components", "write_dataset",
]
