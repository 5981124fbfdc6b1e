"""Pure numpy implementations of the hot kernels.

These mirror ``haad._kernels`` (Cython) one to one and are used whenever the
compiled extension is unavailable or ``HAAD_PURE_PYTHON=1`` is set.
"""
import numpy as np


def householder_product(V):
    """Return Q = H(v_0) H(v_1) ... H(v_{k-1}) for the rows v_i of ``V``.

    H(v) = I - 2 v v^T / (v^T v).  ``V`` has shape (k, d); Q is (d, d).
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    k, d = V.shape
    Q = np.eye(d)
    for i in range(k):
        v = V[i]
        n = v @ v
        if n == 0.0:
            raise ValueError(f"householder_product: reflection vector {i} is zero")
        w = Q @ v
        Q -= np.outer(w * (2.0 / n), v)
    return Q


def householder_product_grad(V, Q, G):
    """Gradient of <G, Q(V)> with respect to ``V``.

    Walks the reflections backwards, peeling each one off ``Q`` (every H is an
    involution) so no intermediate products need to be stored.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    Qi = np.array(Q, dtype=np.float64, copy=True)
    Gi = np.array(G, dtype=np.float64, copy=True)
    k, d = V.shape
    dV = np.zeros_like(V)
    for i in range(k - 1, -1, -1):
        v = V[i]
        n = v @ v
        s = 2.0 / n
        # Q_{i-1} = Q_i H_i
        Qi -= np.outer((Qi @ v) * s, v)
        w = Qi @ v
        a = Gi @ v
        dV[i] = -s * (Gi.T @ w + Qi.T @ a) + (2.0 * s / n) * (a @ w) * v
        Gi -= np.outer(a * s, v)
    return dV


def knn_mean_distance(bank, query, k):
    """Mean of the ``k`` smallest Euclidean distances from ``query`` to rows of ``bank``.

    Ties are broken by lower row index.  Returns (score, indices).
    """
    bank = np.ascontiguousarray(bank, dtype=np.float64)
    if k < 1 or k > bank.shape[0]:
        raise ValueError(f"knn: K={k} out of range [1, {bank.shape[0]}]")
    query = np.asarray(query, dtype=np.float64).ravel()
    diff = bank - query
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.argsort(dist, kind="stable")[:k]
    return float(dist[order].sum() / k), order.astype(np.int64)
