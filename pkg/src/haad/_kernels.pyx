# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Householder products (forward/adjoint) and exact KNN."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef void _reflect_right(double[:, ::1] Q, const double[::1] v, double s,
                         double[::1] w) noexcept nogil:
    # Q <- Q - s (Q v) v^T
    cdef Py_ssize_t d = Q.shape[0], r, c
    cdef double acc
    for r in range(d):
        acc = 0.0
        for c in range(d):
            acc += Q[r, c] * v[c]
        w[r] = acc * s
    for r in range(d):
        acc = w[r]
        for c in range(d):
            Q[r, c] -= acc * v[c]


def householder_product(V):
    cdef double[:, ::1] Vm = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t k = Vm.shape[0], d = Vm.shape[1], i, c
    Q_arr = np.eye(d)
    cdef double[:, ::1] Q = Q_arr
    cdef double[::1] w = np.empty(d)
    cdef double n
    for i in range(k):
        n = 0.0
        for c in range(d):
            n += Vm[i, c] * Vm[i, c]
        if n == 0.0:
            raise ValueError(f"householder_product: reflection vector {i} is zero")
        with nogil:
            _reflect_right(Q, Vm[i], 2.0 / n, w)
    return Q_arr


def householder_product_grad(V, Q, G):
    cdef double[:, ::1] Vm = np.ascontiguousarray(V, dtype=np.float64)
    Qi_arr = np.array(Q, dtype=np.float64, order="C", copy=True)
    Gi_arr = np.array(G, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] Qi = Qi_arr
    cdef double[:, ::1] Gi = Gi_arr
    cdef Py_ssize_t k = Vm.shape[0], d = Vm.shape[1], i, r, c
    dV_arr = np.zeros((k, d))
    cdef double[:, ::1] dV = dV_arr
    cdef double[::1] w = np.empty(d)
    cdef double[::1] a = np.empty(d)
    cdef double[::1] tmp = np.empty(d)
    cdef double n, s, aw, acc_w, acc_a
    with nogil:
        for i in range(k - 1, -1, -1):
            n = 0.0
            for c in range(d):
                n += Vm[i, c] * Vm[i, c]
            s = 2.0 / n
            _reflect_right(Qi, Vm[i], s, tmp)
            # w = Q_{i-1} v ; a = G_i v
            aw = 0.0
            for r in range(d):
                acc_w = 0.0
                acc_a = 0.0
                for c in range(d):
                    acc_w += Qi[r, c] * Vm[i, c]
                    acc_a += Gi[r, c] * Vm[i, c]
                w[r] = acc_w
                a[r] = acc_a
                aw += acc_a * acc_w
            # dv = -s (G^T w + Q^T a) + (2 s / n) (a.w) v
            for c in range(d):
                dV[i, c] = (2.0 * s / n) * aw * Vm[i, c]
            for r in range(d):
                acc_w = w[r]
                acc_a = a[r]
                for c in range(d):
                    dV[i, c] -= s * (Gi[r, c] * acc_w + Qi[r, c] * acc_a)
            # G_{i-1} = G_i H_i
            for r in range(d):
                acc_a = a[r] * s
                for c in range(d):
                    Gi[r, c] -= acc_a * Vm[i, c]
    return dV_arr


def knn_mean_distance(bank, query, Py_ssize_t k):
    cdef double[:, ::1] B = np.ascontiguousarray(bank, dtype=np.float64)
    cdef double[::1] q = np.ascontiguousarray(np.ravel(query), dtype=np.float64)
    cdef Py_ssize_t n = B.shape[0], d = B.shape[1], i, j, pos
    if k < 1 or k > n:
        raise ValueError(f"knn: K={k} out of range [1, {n}]")
    best_d_arr = np.full(k, np.inf)
    best_i_arr = np.full(k, -1, dtype=np.int64)
    cdef double[::1] best_d = best_d_arr
    cdef long long[::1] best_i = best_i_arr
    cdef double acc, diff, total
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = B[i, j] - q[j]
                acc += diff * diff
            acc = sqrt(acc)
            if acc >= best_d[k - 1]:
                continue
            # strict comparison keeps the earlier (lower) index ahead on ties
            pos = k - 1
            while pos > 0 and best_d[pos - 1] > acc:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = acc
            best_i[pos] = i
        total = 0.0
        for i in range(k):
            total += best_d[i]
    return total / k, best_i_arr
