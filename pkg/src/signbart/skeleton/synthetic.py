"""Synthetic signing data: one parametric sign per class.

A class fixes a handshape, a location relative to the body, a movement
(trajectory family, cycles, amplitude, phase), a wrist orientation and
whether the second hand moves too. These are separable by construction.
Samples vary signer position and scale, tempo and length, add Gaussian
jitter and drop 5% of keypoints.
"""

from __future__ import annotations

import numpy as np

from signbart.errors import ParameterError
from signbart.skeleton.layout import (
    BODY_POSE_INDICES,
    FULL_LAYOUT,
    LEFT_HAND,
    NUM_KEYPOINTS,
    POSE_REST_INDICES,
    RAW,
    RIGHT_HAND,
    SkeletonSequence,
)

WIDTH, HEIGHT = 640, 480
MIN_FRAMES, MAX_FRAMES = 16, 48
JITTER = 0.01
MISSING_RATE = 0.05

# (base angle in degrees from "up", distance of first joint from the wrist)
_FINGERS = ((-60.0, 14.0), (-20.0, 34.0), (-5.0, 36.0), (10.0, 34.0), (25.0, 30.0))
_SEGMENTS = (12.0, 9.0, 7.0)

# Finger curl per handshape (thumb, index, middle, ring, pinky).
_HANDSHAPES = np.array([
    [0.1, 0.0, 0.0, 0.0, 0.0],   # flat
    [0.9, 1.0, 1.0, 1.0, 1.0],   # fist
    [0.8, 0.0, 1.0, 1.0, 1.0],   # index point
    [0.8, 0.0, 0.0, 1.0, 1.0],   # V
    [0.0, 1.0, 1.0, 1.0, 0.0],   # thumb and pinky out
    [0.4, 0.5, 0.5, 0.5, 0.5],   # curved C
])

# Dominant-hand rest location, in shoulder half-widths from the shoulder midpoint.
_LOCATIONS = np.array([[-0.3, -1.1], [-0.2, -0.5], [-0.5, 0.7], [-1.4, 1.0], [-1.0, 1.7]])

# Offsets (in shoulder half-widths) of the 33 pose landmarks from the shoulder
# midpoint; wrist-attached landmarks (15-22) are overwritten from the hands.
_POSE_OFFSETS = np.array([
    [0.0, -1.3], [0.12, -1.42], [0.2, -1.42], [0.28, -1.42], [-0.12, -1.42], [-0.2, -1.42],
    [-0.28, -1.42], [0.42, -1.35], [-0.42, -1.35], [0.1, -1.1], [-0.1, -1.1], [1.0, 0.0],
    [-1.0, 0.0], [1.3, 0.9], [-1.3, 0.9], [1.3, 1.6], [-1.3, 1.6], [1.35, 1.75], [-1.35, 1.75],
    [1.3, 1.78], [-1.3, 1.78], [1.2, 1.7], [-1.2, 1.7], [0.6, 2.2], [-0.6, 2.2], [0.6, 3.0],
    [-0.6, 3.0], [0.6, 3.8], [-0.6, 3.8], [0.6, 3.9], [-0.6, 3.9], [0.7, 4.0], [-0.7, 4.0],
])


def _trajectory(family: int, cycles: int, phase: float, u: np.ndarray) -> np.ndarray:
    w = 2.0 * np.pi * cycles * u + phase
    if family == 0:
        return np.stack([np.cos(w), np.sin(w)], -1)
    if family == 1:
        return np.stack([np.sin(w), 0.15 * np.sin(2 * w)], -1)
    if family == 2:
        return np.stack([0.15 * np.sin(2 * w), np.sin(w)], -1)
    return np.stack([np.sin(w), 0.5 * np.sin(2 * w)], -1)


def _hand(center: np.ndarray, angle: np.ndarray, curl: np.ndarray, size: float,
          mirror: float) -> np.ndarray:
    """21 hand landmarks per frame in Mediapipe order (T x 21 x 2)."""
    t = len(center)
    pts = np.zeros((t, 21, 2))
    pts[:, 0] = center
    for f, (base_deg, base_len) in enumerate(_FINGERS):
        direction = angle + mirror * np.deg2rad(base_deg)
        pos = center + size * base_len * np.stack([np.sin(direction), -np.cos(direction)], -1)
        pts[:, 1 + 4 * f] = pos
        for j, seg in enumerate(_SEGMENTS):
            direction = direction + mirror * curl[f] * np.deg2rad(70.0)
            pos = pos + size * seg * np.stack([np.sin(direction), -np.cos(direction)], -1)
            pts[:, 2 + 4 * f + j] = pos
    return pts


def _class_params(rng: np.random.Generator, c: int) -> dict:
    return {
        "family": c % 4,
        "cycles": 1 + (c // 4) % 3,
        "phase": rng.uniform(0, 2 * np.pi),
        "amplitude": rng.uniform(35.0, 70.0),
        "curl": _HANDSHAPES[c % len(_HANDSHAPES)],
        "location": _LOCATIONS[(c + c // len(_LOCATIONS)) % len(_LOCATIONS)],
        "tilt": rng.uniform(-0.6, 0.6),
        "spin": rng.uniform(-1.0, 1.0),
        "two_handed": bool((c // 4) % 2),
        "left_family": (c + 1 + c // 4) % 4,
    }


def _sample(rng: np.random.Generator, cls: dict) -> np.ndarray:
    t = int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1))
    scale = rng.uniform(0.85, 1.15)
    shoulders = np.array([WIDTH / 2 + rng.uniform(-40, 40), 190 + rng.uniform(-25, 25)])
    half = 70.0 * scale
    u = np.linspace(0.0, 1.0, t)
    u = u + 0.04 * rng.uniform(-1, 1) * np.sin(np.pi * u)
    phase = cls["phase"] + rng.uniform(-0.2, 0.2)
    amp = cls["amplitude"] * scale * rng.uniform(0.9, 1.1)

    right_center = shoulders + half * cls["location"] + amp * _trajectory(
        cls["family"], cls["cycles"], phase, u)
    if cls["two_handed"]:
        mirrored = _trajectory(cls["left_family"], cls["cycles"], phase, u) * np.array([-1.0, 1.0])
        left_center = shoulders + half * cls["location"] * np.array([-1.0, 1.0]) + amp * mirrored
    else:
        left_center = shoulders + np.array([1.1 * half, 2.2 * half]) + 4.0 * np.stack(
            [np.sin(2 * np.pi * u), np.cos(2 * np.pi * u)], -1)

    angle = cls["tilt"] + cls["spin"] * np.sin(2 * np.pi * u)
    right = _hand(right_center, angle, cls["curl"], scale, 1.0)
    left = _hand(left_center, -angle, cls["curl"][::-1], scale, -1.0)

    pose = shoulders + half * _POSE_OFFSETS[None, :, :] + np.zeros((t, 1, 1))
    pose[:, 13] = 0.5 * (pose[:, 11] + left_center)
    pose[:, 14] = 0.5 * (pose[:, 12] + right_center)
    for idx, src in ((15, left), (17, left), (19, left), (21, left)):
        pose[:, idx] = src[:, {15: 0, 17: 17, 19: 5, 21: 1}[idx]]
    for idx, src in ((16, right), (18, right), (20, right), (22, right)):
        pose[:, idx] = src[:, {16: 0, 18: 17, 20: 5, 22: 1}[idx]]

    frames = np.zeros((t, NUM_KEYPOINTS, 2))
    frames[:, FULL_LAYOUT.span("body")] = pose[:, list(BODY_POSE_INDICES)]
    frames[:, FULL_LAYOUT.span(LEFT_HAND)] = left
    frames[:, FULL_LAYOUT.span(RIGHT_HAND)] = right
    frames[:, FULL_LAYOUT.span("pose_rest")] = pose[:, list(POSE_REST_INDICES)]

    frames += rng.normal(0.0, JITTER, size=frames.shape) * np.array([WIDTH, HEIGHT])
    frames = np.clip(frames, [1.0, 1.0], [WIDTH - 1.0, HEIGHT - 1.0])
    frames[rng.random((t, NUM_KEYPOINTS)) < MISSING_RATE] = 0.0
    return frames


def generate_synthetic(classes: int, samples_per_class: int, seed: int) -> list[SkeletonSequence]:
    if classes < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")
    if samples_per_class < 1:
        raise ParameterError(f"need at least 1 sample per class, got {samples_per_class}")
    rng = np.random.default_rng(seed)
    params = [_class_params(rng, c) for c in range(classes)]
    out = []
    for c, cls in enumerate(params):
        for i in range(samples_per_class):
            out.append(SkeletonSequence(
                frames=_sample(rng, cls), state=RAW, width=WIDTH, height=HEIGHT,
                label=c, gloss=f"sign_{c:03d}", id=f"synth-c{c:03d}-s{i:03d}"))
    return out
