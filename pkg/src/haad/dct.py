"""Truncated orthonormal DCT-II bases for joint trajectories."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class DctBasis:
    """H x M matrix whose columns are the first M orthonormal cosine bases."""

    H: int
    M: int
    T: np.ndarray


@lru_cache(maxsize=256)
def _basis_matrix(H: int, M: int) -> np.ndarray:
    h = np.arange(H)[:, None]
    m = np.arange(M)[None, :]
    T = np.sqrt(2.0 / H) * np.cos(np.pi * (2 * h + 1) * m / (2 * H))
    T[:, 0] *= 1.0 / np.sqrt(2.0)
    T.setflags(write=False)
    return T


def make_basis(H: int, M: int) -> DctBasis:
    """Orthonormal DCT-II basis, columns ordered by ascending frequency.

    T[h, m] = sqrt(2/H) * k_m * cos(pi (2h+1) m / (2H)), k_0 = 1/sqrt(2), else 1.
    """
    H, M = int(H), int(M)
    if M < 1 or M > H:
        raise ValueError(f"make_basis: need 1 <= M <= H, got H={H}, M={M}")
    return DctBasis(H, M, _basis_matrix(H, M))


def dct_forward(X: np.ndarray, basis: DctBasis) -> np.ndarray:
    """P x H trajectories -> P x M coefficients (C = X T).

    Summation runs frame by frame in a fixed order, so each coefficient is
    bit-identical whatever M is (a BLAS matmul picks kernels by shape).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != basis.H:
        raise ValueError(f"dct_forward: trajectory has {X.shape[-1]} frames, basis expects {basis.H}")
    T = basis.T
    C = np.zeros((X.shape[0], basis.M))
    for h in range(basis.H):
        C += X[:, h:h + 1] * T[h]
    return C


def dct_inverse(C: np.ndarray, basis: DctBasis) -> np.ndarray:
    """P x M coefficients -> P x H trajectories (Y = C T^T)."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[1] != basis.M:
        raise ValueError(f"dct_inverse: got {C.shape[-1]} coefficients, basis has {basis.M}")
    return C @ basis.T.T
