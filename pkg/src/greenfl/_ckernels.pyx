# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled softmax next-token kernels; same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def local_sgd(double[::1] params, const long[::1] prev, const long[::1] nxt,
              const long[::1] order, int vocab, double lr, int batch_size, int epochs):
    cdef Py_ssize_t n = prev.shape[0]
    cdef Py_ssize_t V = vocab
    cdef Py_ssize_t boff = V * V
    cdef double[:, ::1] g = np.empty((batch_size, V), dtype=np.float64)
    cdef double[::1] gsum = np.empty(V, dtype=np.float64)
    cdef Py_ssize_t ep, start, stop, k, j, i, a, row
    cdef double m, s, scale
    for ep in range(epochs):
        start = 0
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            # gradients at the batch-start parameters
            for k in range(stop - start):
                i = order[ep * n + start + k]
                row = prev[i] * V
                m = params[row] + params[boff]
                for j in range(1, V):
                    if params[row + j] + params[boff + j] > m:
                        m = params[row + j] + params[boff + j]
                s = 0.0
                for j in range(V):
                    g[k, j] = exp(params[row + j] + params[boff + j] - m)
                    s += g[k, j]
                for j in range(V):
                    g[k, j] = g[k, j] / s
                g[k, nxt[i]] -= 1.0
            scale = -lr / (stop - start)
            for j in range(V):
                gsum[j] = 0.0
            for k in range(stop - start):
                i = order[ep * n + start + k]
                row = prev[i] * V
                for j in range(V):
                    params[row + j] += scale * g[k, j]
                    gsum[j] += g[k, j]
            for j in range(V):
                params[boff + j] += scale * gsum[j]
            start = stop
    return np.asarray(params)


def token_log_probs(const double[::1] params, const long[::1] prev, const long[::1] nxt, int vocab):
    cdef Py_ssize_t n = prev.shape[0]
    cdef Py_ssize_t V = vocab
    cdef Py_ssize_t boff = V * V
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, row
    cdef double m, s, z
    for i in range(n):
        row = prev[i] * V
        m = params[row] + params[boff]
        for j in range(1, V):
            z = params[row + j] + params[boff + j]
            if z > m:
                m = z
        s = 0.0
        for j in range(V):
            s += exp(params[row + j] + params[boff + j] - m)
        out[i] = params[row + nxt[i]] + params[boff + nxt[i]] - m - log(s)
    return out
