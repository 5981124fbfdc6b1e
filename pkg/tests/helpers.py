"""Shared fixtures for the unit and acceptance tests."""
import numpy as np

from haad import autodiff as ad


def uniform(rng, shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def primitive_cases(rng):
    """(name, loss builder, leaves) with inputs uniform in [-1, 1]."""
    A = ad.variable(uniform(rng, (3, 4)))
    B = ad.variable(uniform(rng, (4, 2)))
    C = ad.variable(uniform(rng, (3, 4)))
    P = ad.variable(uniform(rng, (3, 4), 0.1, 1.0))
    s = ad.variable(uniform(rng, (1, 1)))
    V = ad.variable(uniform(rng, (4, 4)))
    W = ad.constant(uniform(rng, (3, 4)))  # random projection so every output entry matters
    Wm = ad.constant(uniform(rng, (3, 2)))
    Wc = ad.constant(uniform(rng, (3, 8)))
    Wr = ad.constant(uniform(rng, (6, 2)))
    Wt = ad.constant(uniform(rng, (4, 3)))
    Wv = ad.constant(uniform(rng, (4, 4)))
    w_col = ad.constant(uniform(rng, (3, 1)))

    def proj(x, w):
        return ad.sum_all(x * w)

    return [
        ("matmul", lambda: proj(A @ B, Wm), [A, B]),
        ("add", lambda: proj(A + C, W), [A, C]),
        ("sub", lambda: proj(A - C, W), [A, C]),
        ("mul", lambda: proj(A * C, W), [A, C]),
        ("scale", lambda: proj(ad.scale(A, -1.7), W), [A]),
        ("scalar_mul", lambda: proj(A * s, W), [A, s]),
        ("concat_cols", lambda: proj(ad.concat_cols([A, C]), Wc), [A, C]),
        ("reshape", lambda: proj(ad.reshape(A, (6, 2)), Wr), [A]),
        ("flatten", lambda: ad.sum_all(ad.flatten(A) * ad.reshape(W, (1, 12))), [A]),
        ("transpose", lambda: proj(ad.transpose(A), Wt), [A]),
        ("tanh", lambda: proj(ad.tanh(A), W), [A]),
        ("exp", lambda: proj(ad.exp(A), W), [A]),
        ("log", lambda: proj(ad.log(P), W), [P]),
        ("prelu", lambda: proj(ad.prelu(A, ad.exp(s)), W), [A, s]),
        ("sum_all", lambda: ad.sum_all(A * W), [A]),
        ("sum_rows", lambda: ad.sum_all(ad.sum_rows(A) * w_col), [A]),
        ("sum_cols", lambda: ad.sum_all(ad.sum_cols(A) * ad.slice_rows(W, 0, 1)), [A]),
        ("slice_rows", lambda: proj(ad.slice_rows(A, 1, 3), ad.slice_rows(W, 0, 2)), [A]),
        ("householder_product", lambda: proj(ad.householder_product(V), Wv), [V]),
    ]
