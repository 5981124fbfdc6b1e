"""Synthetic three-class skeleton dataset with body-part-localized motion.

* ``wave``: both arms swing sinusoidally, legs static.
* ``kick``: the right leg swings forward and back, arms static.
* ``jump``: every joint bobs vertically with a joint-dependent amplitude,
  so the root-relative motion is itself sinusoidal (knees and ankles fold,
  arms lift).

Each clip draws its own length, phase, amplitude (+-20%), frequency (+-10%)
and a constant global offset; i.i.d. Gaussian jitter is added to every
coordinate of every frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .motion import BodyPartition, ClipDescriptor, DatasetManifest, save_manifest, write_clip
from .rng import stream

SKELETON = [
    "pelvis", "spine", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle",
]
PARTITION = BodyPartition(upper=tuple(range(10)), lower=tuple(range(10, 16)))
CLASSES = ("wave", "kick", "jump")

REST_POSE = np.array([
    [0.0, 1.00, 0.0], [0.0, 1.25, 0.0], [0.0, 1.50, 0.0], [0.0, 1.65, 0.0],
    [0.20, 1.45, 0.0], [0.45, 1.45, 0.0], [0.70, 1.45, 0.0],
    [-0.20, 1.45, 0.0], [-0.45, 1.45, 0.0], [-0.70, 1.45, 0.0],
    [0.10, 0.95, 0.0], [0.10, 0.50, 0.0], [0.10, 0.08, 0.0],
    [-0.10, 0.95, 0.0], [-0.10, 0.50, 0.0], [-0.10, 0.08, 0.0],
])

BASE_AMPLITUDE = {"wave": 0.25, "kick": 0.30, "jump": 0.20}
BASE_FREQUENCY = 0.04  # cycles per frame

# (joint, axis, gain on sin, gain on cos) per class; offsets = A * (gs sin + gc cos)
_MOTION = {
    "wave": [(5, 1, 0.5, 0.0), (6, 1, 1.0, 0.0), (6, 0, 0.0, 0.3),
             (8, 1, 0.5, 0.0), (9, 1, 1.0, 0.0), (9, 0, 0.0, -0.3)],
    "kick": [(14, 2, 0.5, 0.0), (15, 2, 1.0, 0.0), (15, 1, 0.0, 0.3)],
}
_JUMP_GAIN = np.array([1.0, 1.0, 1.0, 1.0, 1.3, 1.3, 1.3, 1.3, 1.3, 1.3,
                       1.0, 0.6, 0.2, 1.0, 0.6, 0.2])


@dataclass(frozen=True)
class SynthParams:
    label: str
    frames: int
    amplitude: float
    frequency: float
    phase: float
    offset: tuple[float, float, float]


def clean_motion(p: SynthParams) -> np.ndarray:
    """Noise-free H x J x 3 clip for the given draw (float64)."""
    t = np.arange(p.frames, dtype=np.float64)
    theta = 2.0 * np.pi * p.frequency * t + p.phase
    s, c = np.sin(theta), np.cos(theta)
    data = np.broadcast_to(REST_POSE + np.asarray(p.offset), (p.frames, len(SKELETON), 3)).copy()
    if p.label == "jump":
        data[:, :, 1] += p.amplitude * s[:, None] * _JUMP_GAIN[None, :]
    else:
        for joint, axis, gs, gc in _MOTION[p.label]:
            data[:, joint, axis] += p.amplitude * (gs * s + gc * c)
    return data


def draw_params(rng: np.random.Generator, label: str, frames_range=(40, 60)) -> SynthParams:
    lo, hi = frames_range
    return SynthParams(
        label=label,
        frames=int(rng.integers(lo, hi + 1)),
        amplitude=BASE_AMPLITUDE[label] * rng.uniform(0.8, 1.2),
        frequency=BASE_FREQUENCY * rng.uniform(0.9, 1.1),
        phase=rng.uniform(0.0, 2.0 * np.pi),
        offset=(rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1)),
    )


def generate_clip(rng: np.random.Generator, label: str, frames_range=(40, 60),
                  jitter_sigma: float = 0.01) -> tuple[np.ndarray, SynthParams]:
    p = draw_params(rng, label, frames_range)
    data = clean_motion(p)
    if jitter_sigma > 0:
        data += rng.normal(0.0, jitter_sigma, size=data.shape)
    return data, p


def synth_dataset(out_dir, seed: int, clips_per_class: int, frames_range=(40, 60),
                  jitter_sigma: float = 0.01, classes=CLASSES) -> DatasetManifest:
    """Write clip files plus ``manifest.json`` under ``out_dir`` and return the manifest."""
    if clips_per_class < 1:
        raise ValueError("synth_dataset: clips_per_class must be >= 1")
    lo, hi = frames_range
    if not 2 <= lo <= hi:
        raise ValueError(f"synth_dataset: invalid frame range {frames_range}")
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    rng = stream(seed, "synth")
    clips = []
    for label in classes:
        for i in range(clips_per_class):
            data, p = generate_clip(rng, label, frames_range, jitter_sigma)
            cid = f"{label}_{i:04d}"
            path = out / "clips" / f"{cid}.haad"
            write_clip(path, data)
            clips.append(ClipDescriptor(cid, label, path, p.frames, len(SKELETON), 3))
    manifest = DatasetManifest(list(SKELETON), PARTITION, clips, out / "manifest.json")
    manifest.validate()
    save_manifest(manifest, manifest.path)
    return manifest
