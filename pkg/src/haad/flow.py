"""Invertible MLP flow: QR-parameterized affine layers with monotonic PReLU.

Each affine layer computes ``y = x W^T + b`` with ``W = Q R``: Q is a product
of d Householder reflections and R is upper triangular with diagonal
``exp(r_diag_log)``, so log|det W| = sum(r_diag_log) and W is always
invertible.  Activations are PReLU with slope ``exp(slope_log) > 0``.
Rows of the input are independent samples.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from . import kernels
from .autodiff import Node, ParameterSet

LOG_2PI = float(np.log(2.0 * np.pi))


class FlowError(FloatingPointError):
    """Non-finite value inside the flow."""


@lru_cache(maxsize=32)
def _r_constants(d: int) -> tuple[Node, Node, Node]:
    """(strict upper mask, identity, ones column) used to assemble R."""
    return (ad.constant(np.triu(np.ones((d, d)), k=1)), ad.constant(np.eye(d)),
            ad.constant(np.ones((d, 1))))


@dataclass
class InvertibleAffine:
    householder_vs: Node  # d x d, one reflection vector per row
    r_diag_log: Node  # 1 x d
    r_upper: Node  # d x d, only the strict upper triangle is used
    bias: Node  # 1 x d

    @property
    def d(self) -> int:
        return self.bias.shape[1]

    def weight(self) -> Node:
        mask, eye, ones = _r_constants(self.d)
        diag = eye * (ones @ ad.exp(self.r_diag_log))
        R = self.r_upper * mask + diag
        return ad.householder_product(self.householder_vs) @ R

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(Q, R, b) as plain arrays."""
        Q = kernels.householder_product(self.householder_vs.value)
        R = np.triu(self.r_upper.value, k=1) + np.diag(np.exp(self.r_diag_log.value[0]))
        return Q, R, self.bias.value[0]


@dataclass
class MonotonicPrelu:
    slope_log: Node  # 1 x 1

    @property
    def slope(self) -> float:
        return float(np.exp(self.slope_log.value[0, 0]))


@dataclass
class FlowOutput:
    u: Node  # B x d latent
    logdet: Node  # B x 1
    V: Node  # B x d, output of the penultimate affine layer after its activation


class FlowNetwork:
    def __init__(self, params: ParameterSet, d: int, n_layers: int = 10,
                 rng: np.random.Generator | None = None, prefix: str = "flow",
                 init_slope: float = 1.0):
        if n_layers < 2:
            raise ValueError("FlowNetwork: need at least 2 affine layers")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.affines: list[InvertibleAffine] = []
        self.activations: list[MonotonicPrelu] = []
        for i in range(1, n_layers + 1):
            name = f"{prefix}.affine{i:02d}"
            vs = rng.normal(size=(d, d))
            vs /= np.linalg.norm(vs, axis=1, keepdims=True)
            self.affines.append(InvertibleAffine(
                params.add(f"{name}.householder", vs),
                params.add(f"{name}.r_diag_log", np.zeros((1, d))),
                params.add(f"{name}.r_upper", np.zeros((d, d))),
                params.add(f"{name}.bias", np.zeros((1, d))),
            ))
            if i < n_layers:
                self.activations.append(MonotonicPrelu(
                    params.add(f"{prefix}.act{i:02d}.slope_log", np.full((1, 1), np.log(init_slope)))))

    @property
    def n_layers(self) -> int:
        return len(self.affines)

    def set_identity(self) -> None:
        """Configure every layer as the identity map (requires even d)."""
        if self.d % 2:
            raise ValueError("identity configuration pairs reflections and needs an even dimension")
        for layer in self.affines:
            vs = np.repeat(np.eye(self.d)[: self.d // 2], 2, axis=0)
            layer.householder_vs.value = vs
            layer.r_diag_log.value = np.zeros((1, self.d))
            layer.r_upper.value = np.zeros((self.d, self.d))
            layer.bias.value = np.zeros((1, self.d))
        for act in self.activations:
            act.slope_log.value = np.zeros((1, 1))

    def forward(self, F: Node) -> FlowOutput:
        if F.shape[1] != self.d:
            raise ad.ShapeError(f"flow_forward: input width {F.shape[1]} != flow dimension {self.d}")
        B = F.shape[0]
        ones = ad.constant(np.ones((B, 1)))
        x = F
        V = None
        n_neg = []  # per activation: count of negative pre-activations in each row
        for i, layer in enumerate(self.affines):
            W = layer.weight()
            x = x @ ad.transpose(W) + ones @ layer.bias
            self._check(x, f"affine{i + 1:02d}")
            if i < len(self.activations):
                act = self.activations[i]
                n_neg.append((x.value < 0).sum(axis=1))
                x = ad.prelu(x, ad.exp(act.slope_log))
                self._check(x, f"act{i + 1:02d}")
                V = x
        # logdet = sum of every r_diag_log + sum over activations of n_neg * slope_log
        r_total = ad.sum_rows(ad.concat_cols([layer.r_diag_log for layer in self.affines]))
        logdet = ones @ r_total
        if self.activations:
            counts = ad.constant(np.column_stack(n_neg).astype(np.float64))
            slopes = ad.transpose(ad.concat_cols([act.slope_log for act in self.activations]))
            logdet = logdet + counts @ slopes
        return FlowOutput(u=x, logdet=logdet, V=V)

    __call__ = forward

    @staticmethod
    def _check(x: Node, where: str) -> None:
        if not np.isfinite(x.value).all():
            raise FlowError(f"flow: non-finite value after {where}")

    def inverse(self, u) -> np.ndarray:
        """Map latents (B x d or d) back to inputs."""
        y = np.atleast_2d(np.asarray(u, dtype=np.float64))
        for i in range(len(self.affines) - 1, -1, -1):
            Q, R, b = self.affines[i].arrays()
            z = (y - b) @ Q
            y = solve_triangular(R, z.T, lower=False).T
            if i > 0:
                a = self.activations[i - 1].slope
                y = np.where(y >= 0, y, y / a)
        return y


def nll(out: FlowOutput) -> Node:
    """Per-row negative log-likelihood under a standard normal base (B x 1)."""
    d = out.u.shape[1]
    sq = ad.sum_rows(out.u * out.u)
    return ad.scale(sq, 0.5) - out.logdet + 0.5 * d * LOG_2PI
