"""Multi-level graph-convolutional encoder over DCT coefficients.

Three GCN streams (full body, upper body, lower body) each map a P_s x M
coefficient matrix through L layers of ``act(A @ F @ W)`` with a learnable
dense adjacency A.  Stream outputs are flattened and fused:

    F_loc = tanh([F_up, F_low] W_loc + b_loc)
    F_glb = tanh(F_full W_glb + b_glb)
    F_all = [F_glb, F_loc] W_all + b_all

Batches are laid out column-blocked: a stream input for B clips is a
P_s x (B*D) matrix whose b-th D-column block belongs to clip b.  A row-major
reshape to (P_s*B) x D lets one matmul apply W to every clip at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterSet
from .dct import dct_forward, make_basis
from .motion import BodyPartition, part_rows

STREAMS = ("full", "up", "low")


@dataclass
class EncoderConfig:
    M: int = 10
    L: int = 4
    hidden: int = 128
    d_out: int = 16
    fuse_dim: int = 128
    streams: tuple[str, ...] = STREAMS

    def __post_init__(self):
        self.streams = tuple(self.streams)
        if self.L < 2 or self.hidden < 1 or self.d_out < 1 or self.fuse_dim < 1 or self.M < 1:
            raise ValueError(f"invalid encoder config: {self}")
        if "full" not in self.streams or any(s not in STREAMS for s in self.streams):
            raise ValueError(f"encoder streams must include 'full' and be drawn from {STREAMS}, "
                             f"got {self.streams}")
        # canonical order
        self.streams = tuple(s for s in STREAMS if s in self.streams)


@dataclass
class GcnLayer:
    A: Node
    W: Node
    activation: str = "tanh"

    def __post_init__(self):
        if self.A.shape[0] != self.A.shape[1]:
            raise ad.ShapeError(f"GcnLayer: adjacency must be square, got {self.A.shape}")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"GcnLayer: unknown activation {self.activation!r}")


@dataclass
class MultiLevelFeatures:
    F_all: Node
    F_glb: Node
    F_loc: Node | None = None
    F_up: Node | None = None
    F_low: Node | None = None
    raw: dict = field(default_factory=dict)


def gcn_layer_forward(F_in: Node, layer: GcnLayer, batch: int = 1) -> Node:
    """act(A F W) for each of ``batch`` column blocks of ``F_in``."""
    P = layer.A.shape[0]
    D, D_hat = layer.W.shape
    if F_in.shape != (P, batch * D):
        raise ad.ShapeError(f"gcn_layer_forward: input {F_in.shape} does not match "
                            f"A {layer.A.shape}, W {layer.W.shape}, batch {batch}")
    Z = ad.reshape(layer.A @ F_in, (P * batch, D))
    Y = ad.reshape(Z @ layer.W, (P, batch * D_hat))
    return ad.tanh(Y) if layer.activation == "tanh" else Y


def stream_forward(coeffs: Node, layers: list[GcnLayer], batch: int = 1) -> Node:
    """Apply ``layers`` in sequence (the encoder uses tanh on all but the last)."""
    if not layers:
        raise ValueError("stream_forward: no layers")
    P = coeffs.shape[0]
    width = coeffs.shape[1] // batch
    for i, layer in enumerate(layers):
        if layer.A.shape[0] != P or layer.W.shape[0] != width:
            raise ad.ShapeError(f"stream_forward: layer {i + 1} expects {layer.A.shape[0]} nodes x "
                                f"{layer.W.shape[0]} features, got {P} x {width}")
        width = layer.W.shape[1]
    F = coeffs
    for layer in layers:
        F = gcn_layer_forward(F, layer, batch)
    return F


def flatten_blocks(F: Node, batch: int) -> Node:
    """P x (B*D) stream output -> B x (D*P), feature-major within each clip.

    For a single clip this is the column-major flatten of its P x D output.
    """
    P = F.shape[0]
    D = F.shape[1] // batch
    return ad.reshape(ad.transpose(F), (batch, D * P))


def _affine(x: Node, W: Node, b: Node) -> Node:
    ones = ad.constant(np.ones((x.shape[0], 1)))
    return x @ W + ones @ b


def fuse(F_glb_raw: Node, F_up_raw: Node | None, F_low_raw: Node | None, fusion: dict,
         batch: int = 1) -> MultiLevelFeatures:
    """Fuse stream outputs into the final feature; ``fusion`` maps net name -> (W, b)."""
    glb = flatten_blocks(F_glb_raw, batch)
    F_glb = ad.tanh(_affine(glb, *fusion["glb"]))
    F_up = flatten_blocks(F_up_raw, batch) if F_up_raw is not None else None
    F_low = flatten_blocks(F_low_raw, batch) if F_low_raw is not None else None
    parts = [f for f in (F_up, F_low) if f is not None]
    F_loc = None
    if parts:
        loc_in = parts[0] if len(parts) == 1 else ad.concat_cols(parts)
        F_loc = ad.tanh(_affine(loc_in, *fusion["loc"]))
        all_in = ad.concat_cols([F_glb, F_loc])
    else:
        all_in = F_glb
    F_all = _affine(all_in, *fusion["all"])
    return MultiLevelFeatures(F_all=F_all, F_glb=F_glb, F_loc=F_loc, F_up=F_up, F_low=F_low)


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Encoder:
    """Owns the GCN streams and fusion networks inside a shared ParameterSet."""

    def __init__(self, config: EncoderConfig, params: ParameterSet, n_joints: int, channels: int,
                 partition: BodyPartition, rng: np.random.Generator, prefix: str = "encoder"):
        self.config = config
        self.channels = channels
        self.partition = partition
        self.rows = {
            "full": np.arange(n_joints * channels),
            "up": part_rows(partition.upper, channels),
            "low": part_rows(partition.lower, channels),
        }
        cfg = config
        self.layers: dict[str, list[GcnLayer]] = {}
        for s in cfg.streams:
            P = len(self.rows[s])
            widths = [cfg.M] + [cfg.hidden] * (cfg.L - 1) + [cfg.d_out]
            layers = []
            for l in range(cfg.L):
                name = f"{prefix}.gcn_{s}.layer{l + 1}"
                A = params.add(f"{name}.A", _uniform(rng, 1.0 / np.sqrt(P), (P, P)))
                W = params.add(f"{name}.W", _uniform(rng, 1.0 / np.sqrt(widths[l]), (widths[l], widths[l + 1])))
                layers.append(GcnLayer(A, W, "identity" if l == cfg.L - 1 else "tanh"))
            self.layers[s] = layers

        def net(name, fan_in, fan_out):
            W = params.add(f"{prefix}.fuse_{name}.W", _uniform(rng, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)))
            b = params.add(f"{prefix}.fuse_{name}.b", np.zeros((1, fan_out)))
            return W, b

        D = cfg.d_out
        self.fusion = {"glb": net("glb", len(self.rows["full"]) * D, cfg.fuse_dim)}
        loc_in = sum(len(self.rows[s]) * D for s in ("up", "low") if s in cfg.streams)
        if loc_in:
            self.fusion["loc"] = net("loc", loc_in, cfg.fuse_dim)
            self.fusion["all"] = net("all", 2 * cfg.fuse_dim, cfg.fuse_dim)
        else:
            self.fusion["all"] = net("all", cfg.fuse_dim, cfg.fuse_dim)

    @property
    def out_dim(self) -> int:
        return self.config.fuse_dim

    def coefficients(self, trajs: list[np.ndarray]) -> dict[str, np.ndarray]:
        """Per-stream column-blocked DCT coefficients, one basis per clip length."""
        M = self.config.M
        blocks = []
        for X in trajs:
            if X.shape[1] < M:
                raise ValueError(f"clip has {X.shape[1]} frames, fewer than M={M} coefficients")
            blocks.append(dct_forward(X, make_basis(X.shape[1], M)))
        C = np.concatenate(blocks, axis=1)
        return {s: C[self.rows[s]] for s in self.config.streams}

    def forward_coeffs(self, coeffs: dict[str, np.ndarray], batch: int) -> MultiLevelFeatures:
        raw = {s: stream_forward(ad.constant(coeffs[s]), self.layers[s], batch) for s in self.config.streams}
        feats = fuse(raw["full"], raw.get("up"), raw.get("low"), self.fusion, batch)
        feats.raw = raw
        return feats

    def __call__(self, trajs: list[np.ndarray]) -> MultiLevelFeatures:
        return self.forward_coeffs(self.coefficients(trajs), len(trajs))
