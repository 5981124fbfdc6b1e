"""Motion clips, dataset manifests, body partitions and the binary clip codec.

Clip file layout (little-endian)::

    0-3    b"HAAD"
    4-7    u32 format version (1)
    8-19   u32 H, u32 J, u32 Cn
    20-    H*J*Cn float32, frame-major, joint-major, channel-minor
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLIP_MAGIC = b"HAAD"
CLIP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class DataError(ValueError):
    """Malformed manifest, clip file or clip contents."""


@dataclass
class MotionClip:
    id: str
    label: str
    data: np.ndarray  # (H, J, Cn)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DataError(f"clip {self.id}: data must be H x J x Cn, got shape {self.data.shape}")
        H, J, Cn = self.data.shape
        if H < 2 or J < 2 or Cn not in (3, 6):
            raise DataError(f"clip {self.id}: invalid dimensions H={H}, J={J}, Cn={Cn}")
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"clip {self.id}: non-finite sample")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BodyPartition:
    upper: tuple[int, ...]
    lower: tuple[int, ...]

    def validate(self, n_joints: int) -> None:
        up, low = set(self.upper), set(self.lower)
        if not up or not low:
            raise DataError("partition: upper and lower must both be non-empty")
        if len(up) != len(self.upper) or len(low) != len(self.lower):
            raise DataError("partition: duplicate joint index")
        if up & low:
            raise DataError(f"partition overlap: joints {sorted(up & low)} are in both upper and lower")
        bad = [j for j in up | low if not 0 <= j < n_joints]
        if bad:
            raise DataError(f"partition: joint indices {sorted(bad)} out of range for J={n_joints}")
        if len(up | low) != n_joints:
            missing = sorted(set(range(n_joints)) - up - low)
            raise DataError(f"partition: joints {missing} are in neither upper nor lower")


@dataclass(frozen=True)
class ClipDescriptor:
    id: str
    label: str
    path: Path
    frames: int
    joints: int
    channels: int

    def to_json(self, root: Path) -> dict:
        try:
            rel = os.path.relpath(self.path, root)
        except ValueError:
            rel = str(self.path)
        return {"id": self.id, "label": self.label, "path": Path(rel).as_posix(),
                "frames": self.frames, "joints": self.joints, "channels": self.channels}


@dataclass
class DatasetManifest:
    skeleton: list[str]
    partition: BodyPartition
    clips: list[ClipDescriptor] = field(default_factory=list)
    path: Path | None = None

    @property
    def joints(self) -> int:
        return len(self.skeleton)

    @property
    def channels(self) -> int | None:
        return self.clips[0].channels if self.clips else None

    def labels(self) -> list[str]:
        return sorted({c.label for c in self.clips})

    def with_clips(self, clips) -> "DatasetManifest":
        return DatasetManifest(list(self.skeleton), self.partition, list(clips), self.path)

    def validate(self) -> None:
        J = len(self.skeleton)
        if J < 2:
            raise DataError("manifest: skeleton needs at least 2 joints")
        self.partition.validate(J)
        ids = set()
        for c in self.clips:
            if not c.label:
                raise DataError(f"manifest: clip {c.id!r} has an empty label")
            if c.id in ids:
                raise DataError(f"manifest: duplicate clip id {c.id!r}")
            ids.add(c.id)
            if c.joints != J:
                raise DataError(f"manifest: clip {c.id!r} has J={c.joints}, skeleton has {J}")
            if c.channels not in (3, 6):
                raise DataError(f"manifest: clip {c.id!r} has unsupported channel count {c.channels}")
            if c.frames < 2:
                raise DataError(f"manifest: clip {c.id!r} has fewer than 2 frames")
        if len({c.channels for c in self.clips}) > 1:
            raise DataError("manifest: clips have inconsistent channel counts")


_CLIP_KEYS = ("id", "label", "path", "frames", "joints", "channels")


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a JSON manifest.  Clip files are not opened."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise DataError(f"manifest {path}: top level must be an object")
    for key in ("skeleton", "partition", "clips"):
        if key not in raw:
            raise DataError(f"manifest {path}: missing field {key!r}")
    skeleton = raw["skeleton"]
    if not isinstance(skeleton, list) or not all(isinstance(s, str) for s in skeleton):
        raise DataError("manifest: 'skeleton' must be a list of joint names")
    part = raw["partition"]
    try:
        partition = BodyPartition(tuple(int(i) for i in part["upper"]),
                                  tuple(int(i) for i in part["lower"]))
    except (KeyError, TypeError, ValueError):
        raise DataError("manifest: 'partition' must have integer lists 'upper' and 'lower'") from None
    root = path.parent
    clips = []
    for i, c in enumerate(raw["clips"]):
        if not isinstance(c, dict) or any(k not in c for k in _CLIP_KEYS):
            raise DataError(f"manifest: clip #{i} must have fields {', '.join(_CLIP_KEYS)}")
        try:
            clips.append(ClipDescriptor(str(c["id"]), str(c["label"]), root / c["path"],
                                        int(c["frames"]), int(c["joints"]), int(c["channels"])))
        except (TypeError, ValueError):
            raise DataError(f"manifest: clip #{i} has a malformed field") from None
    manifest = DatasetManifest(list(skeleton), partition, clips, path)
    manifest.validate()
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    root = path.parent
    doc = {
        "skeleton": list(manifest.skeleton),
        "partition": {"upper": list(manifest.partition.upper), "lower": list(manifest.partition.lower)},
        "clips": [c.to_json(root) for c in manifest.clips],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def encode_clip(data: np.ndarray) -> bytes:
    data = np.asarray(data)
    H, J, Cn = data.shape
    return _HEADER.pack(CLIP_MAGIC, CLIP_VERSION, H, J, Cn) + np.ascontiguousarray(data, dtype="<f4").tobytes()


def decode_clip(buf: bytes, name: str = "clip") -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise DataError(f"{name}: truncated clip header")
    magic, version, H, J, Cn = _HEADER.unpack_from(buf)
    if magic != CLIP_MAGIC:
        raise DataError(f"{name}: bad magic {magic!r}")
    if version != CLIP_VERSION:
        raise DataError(f"{name}: unsupported clip version {version}")
    n = H * J * Cn
    payload = len(buf) - _HEADER.size
    if payload < 4 * n:
        raise DataError(f"{name}: truncated clip ({payload // 4} of {n} values)")
    if payload > 4 * n:
        raise DataError(f"{name}: {payload - 4 * n} trailing bytes after payload")
    return np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size).reshape(H, J, Cn).copy()


def write_clip(path, data: np.ndarray) -> None:
    Path(path).write_bytes(encode_clip(data))


def read_clip(desc: ClipDescriptor) -> MotionClip:
    try:
        buf = Path(desc.path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"clip {desc.id}: file not found: {desc.path}") from None
    data = decode_clip(buf, f"clip {desc.id}")
    if data.shape != (desc.frames, desc.joints, desc.channels):
        raise DataError(f"clip {desc.id}: header dimensions {data.shape} do not match manifest "
                        f"({desc.frames}, {desc.joints}, {desc.channels})")
    if not np.all(np.isfinite(data)):
        raise DataError(f"clip {desc.id}: non-finite sample")
    return MotionClip(desc.id, desc.label, data)


def preprocess(clip: MotionClip) -> np.ndarray:
    """Root-center coordinate clips and flatten to a P x H trajectory matrix.

    Row p holds joint p // Cn, channel p % Cn; column h is frame h.
    Rotation (Cn=6) clips are flattened without centering.
    """
    X = clip.data.astype(np.float64)
    if clip.channels == 3:
        X = X - X[:, :1, :]
    H = X.shape[0]
    return np.ascontiguousarray(X.reshape(H, -1).T)


def part_rows(joints, channels: int) -> np.ndarray:
    return np.array([j * channels + c for j in sorted(joints) for c in range(channels)], dtype=np.intp)


def split_parts(traj: np.ndarray, partition: BodyPartition, channels: int):
    """Row subsets (upper, lower) of a P x H trajectory, in skeleton joint order."""
    J = traj.shape[0] // channels
    for j in partition.upper + partition.lower:
        if not 0 <= j < J:
            raise DataError(f"split_parts: joint index {j} out of range for J={J}")
    return traj[part_rows(partition.upper, channels)], traj[part_rows(partition.lower, channels)]
