"""One-class training: encoder + flow fitted by mean NLL with Adam.

Model file layout (little-endian)::

    b"HAADMDL1" | u32 header length | UTF-8 JSON header
    | float64 parameters in header order | float64 feature bank, row-major
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .encoder import Encoder, EncoderConfig
from .flow import FlowNetwork, FlowOutput, nll
from .motion import BodyPartition, DatasetManifest, MotionClip, preprocess, read_clip
from .rng import stream

log = logging.getLogger(__name__)

MODEL_MAGIC = b"HAADMDL1"
MODEL_VERSION = 1


class TrainError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


@dataclass
class TrainConfig:
    normal_label: str = ""
    epochs: int = 50
    batch_size: int = 32
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    flow_layers: int = 10
    flow_init_slope: float = 1.0
    holdout_fraction: float = 0.2
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in [0, 1)")
        if self.flow_layers < 2:
            raise ValueError("flow_layers must be >= 2")
        if self.flow_init_slope <= 0:
            raise ValueError("flow_init_slope must be positive")

    @property
    def M(self) -> int:
        return self.encoder.M

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"]["streams"] = list(self.encoder.streams)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        return cls(**d)


def lr_at(epoch: float, config: TrainConfig) -> float:
    """Geometric interpolation from lr_start (epoch 0) to lr_end (epoch == epochs)."""
    if not 0 <= epoch <= config.epochs:
        raise ValueError(f"lr_at: epoch {epoch} outside [0, {config.epochs}]")
    if epoch == config.epochs:
        return config.lr_end
    return config.lr_start * (config.lr_end / config.lr_start) ** (epoch / config.epochs)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """In-place bias-corrected Adam update; ``params``/``grads`` are parallel lists of arrays."""
    if len(params) != len(grads):
        raise ValueError("adam_step: params and grads differ in length")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"adam_step: parameter {i} shape {p.shape} != gradient shape {g.shape}")
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p)
            state.v[i] = np.zeros_like(p)
        v = state.v[i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class HaadModel:
    """Encoder followed by the flow, sharing one ParameterSet."""

    def __init__(self, config: TrainConfig, n_joints: int, channels: int,
                 partition: BodyPartition, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else stream(config.seed, "init")
        self.config = config
        self.n_joints = n_joints
        self.channels = channels
        self.partition = partition
        self.params = ParameterSet()
        self.encoder = Encoder(config.encoder, self.params, n_joints, channels, partition, rng)
        self.flow = FlowNetwork(self.params, config.encoder.fuse_dim, config.flow_layers, rng,
                                init_slope=config.flow_init_slope)

    def forward(self, trajs: list[np.ndarray]) -> FlowOutput:
        feats = self.encoder(trajs)
        return self.flow(feats.F_all)

    def mean_nll(self, trajs: list[np.ndarray]) -> ad.Node:
        return ad.scale(ad.sum_all(nll(self.forward(trajs))), 1.0 / len(trajs))

    def evaluate(self, trajs: list[np.ndarray], batch_size: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Per-clip (NLL, V) without recording gradients.

        The default of one clip per pass makes results independent of batch
        composition, bit for bit.
        """
        nlls, Vs = [], []
        with ad.no_grad():
            for s in range(0, len(trajs), batch_size):
                out = self.forward(trajs[s:s + batch_size])
                nlls.append(nll(out).value[:, 0])
                Vs.append(out.V.value)
        if not nlls:
            return np.zeros(0), np.zeros((0, self.flow.d))
        return np.concatenate(nlls), np.concatenate(Vs)


@dataclass
class TrainedModel:
    model: HaadModel
    bank: np.ndarray
    skeleton: list[str]
    final_train_nll: float
    history: list[dict] = field(default_factory=list)

    @property
    def config(self) -> TrainConfig:
        return self.model.config

    @property
    def normal_label(self) -> str:
        return self.config.normal_label


def load_normal_clips(manifest: DatasetManifest, config: TrainConfig) -> list[MotionClip]:
    descs = [c for c in manifest.clips if c.label == config.normal_label]
    if not descs:
        raise TrainError(f"label not found: {config.normal_label!r} (available: {manifest.labels()})")
    if len(descs) < 2:
        raise TrainError(f"insufficient normal samples: {len(descs)} clip(s) labelled {config.normal_label!r}")
    short = [d.id for d in descs if d.frames < config.M]
    if short:
        raise TrainError(f"clips shorter than M={config.M} frames: {short}")
    return [read_clip(d) for d in descs]


def split_indices(n: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (fit, holdout) index split; at least one clip is always fitted."""
    perm = stream(config.seed, "split").permutation(n)
    n_hold = min(int(math.floor(config.holdout_fraction * n)), n - 1)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train(manifest: DatasetManifest, config: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None) -> TrainedModel:
    clips = load_normal_clips(manifest, config)
    trajs = [preprocess(c) for c in clips]
    fit_idx, hold_idx = split_indices(len(trajs), config)
    fit = [trajs[i] for i in fit_idx]
    hold = [trajs[i] for i in hold_idx]

    channels = clips[0].channels
    model = HaadModel(config, manifest.joints, channels, manifest.partition)
    params = list(model.params)
    state = AdamState()
    shuffle = stream(config.seed, "shuffle")
    history = []
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        order = shuffle.permutation(len(fit))
        total = 0.0
        for step, s in enumerate(range(0, len(fit), config.batch_size)):
            batch = [fit[i] for i in order[s:s + config.batch_size]]
            model.params.zero_grad()
            loss = model.mean_nll(batch)
            value = float(loss.value[0, 0])
            if not math.isfinite(value):
                raise TrainError(f"non-finite loss at epoch {epoch + 1}, step {step + 1}")
            ad.backward(loss)
            adam_step([p.value for p in params], [p.grad for p in params], state, lr,
                      config.beta1, config.beta2, config.eps)
            total += value * len(batch)
        rec = {"epoch": epoch + 1, "lr": lr, "train_nll": total / len(fit),
               "holdout_nll": float(model.evaluate(hold)[0].mean()) if hold else None}
        history.append(rec)
        log.debug("epoch %d train_nll %.6f", rec["epoch"], rec["train_nll"])
        if on_epoch is not None:
            on_epoch(rec)
    _, bank = model.evaluate(fit)
    return TrainedModel(model, bank, list(manifest.skeleton), history[-1]["train_nll"], history)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _header(tm: TrainedModel) -> dict:
    m = tm.model
    return {
        "version": MODEL_VERSION,
        "config": tm.config.to_dict(),
        "skeleton": tm.skeleton,
        "channels": m.channels,
        "partition": {"upper": list(m.partition.upper), "lower": list(m.partition.lower)},
        "params": [{"name": p.name, "shape": list(p.shape)} for p in m.params],
        "bank": {"rows": int(tm.bank.shape[0]), "cols": int(tm.bank.shape[1])},
        "final_train_nll": tm.final_train_nll,
        "history": tm.history,
    }


def model_bytes(tm: TrainedModel) -> bytes:
    header = json.dumps(_header(tm), sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MODEL_MAGIC, struct.pack("<I", len(header)), header]
    chunks += [np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in tm.model.params]
    chunks.append(np.ascontiguousarray(tm.bank, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_model(tm: TrainedModel, path) -> None:
    Path(path).write_bytes(model_bytes(tm))


def load_model(path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    buf = path.read_bytes()
    if buf[:8] != MODEL_MAGIC:
        raise ModelFileError(f"{path}: bad magic")
    if len(buf) < 12:
        raise ModelFileError(f"{path}: truncated model")
    (hlen,) = struct.unpack_from("<I", buf, 8)
    if len(buf) < 12 + hlen:
        raise ModelFileError(f"{path}: truncated model")
    try:
        header = json.loads(buf[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelFileError(f"{path}: corrupt header") from None
    if header.get("version") != MODEL_VERSION:
        raise ModelFileError(f"{path}: version mismatch ({header.get('version')} != {MODEL_VERSION})")
    config = TrainConfig.from_dict(header["config"])
    partition = BodyPartition(tuple(header["partition"]["upper"]), tuple(header["partition"]["lower"]))
    model = HaadModel(config, len(header["skeleton"]), header["channels"], partition,
                      rng=np.random.default_rng(0))
    expected = [{"name": p.name, "shape": list(p.shape)} for p in model.params]
    if header["params"] != expected:
        raise ModelFileError(f"{path}: parameter count mismatch: header lists {len(header['params'])} "
                             f"parameters, config implies {len(expected)}")
    rows, cols = header["bank"]["rows"], header["bank"]["cols"]
    need = 8 * (model.params.size() + rows * cols)
    offset = 12 + hlen
    if len(buf) - offset < need:
        raise ModelFileError(f"{path}: truncated model")
    if len(buf) - offset > need:
        raise ModelFileError(f"{path}: {len(buf) - offset - need} trailing bytes")
    for p in model.params:
        n = int(np.prod(p.shape))
        p.value = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(p.shape).astype(np.float64)
        offset += 8 * n
    bank = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).astype(np.float64)
    return TrainedModel(model, bank, header["skeleton"], header["final_train_nll"], header["history"])
