"""Hot loops over raw history buffers.

A history buffer is a ``(L, d)`` float array whose row ``k`` holds the value at
lag ``k`` (``phi(-k)``), plus a scalar tail bound.  Every kernel here is plain
numpy so that it runs unchanged when numba is disabled.
"""

import math

import numpy as np

from ._jit import njit

SHAPE_NONE = -1
SHAPE_HALF_TANH = 0
SHAPE_CLIP = 1
SHAPE_HALF_SIN = 2


@njit(cache=True)
def shape_value(code, s):
    if code == SHAPE_HALF_TANH:
        return 0.5 * math.tanh(2.0 * s)
    if code == SHAPE_CLIP:
        return min(0.5, max(-0.5, s))
    if code == SHAPE_HALF_SIN:
        return 0.5 * math.sin(2.0 * s)
    return 0.0


@njit(cache=True)
def vec_norm(x):
    """Euclidean norm, rescaled so tiny or huge entries neither underflow nor overflow."""
    m = 0.0
    for i in range(x.shape[0]):
        a = abs(x[i])
        if a > m:
            m = a
    if m == 0.0 or not math.isfinite(m):
        return m
    acc = 0.0
    for i in range(x.shape[0]):
        t = x[i] / m
        acc += t * t
    return m * math.sqrt(acc)


@njit(cache=True)
def weighted_sup(entries, tail, beta):
    L = entries.shape[0]
    best = tail
    for k in range(L):
        r = vec_norm(entries[k]) * math.exp(-beta * k)
        if r > best:
            best = r
    return best


@njit(cache=True)
def batch_weighted_sup(batch, tails, beta):
    out = np.empty(batch.shape[0])
    for i in range(batch.shape[0]):
        out[i] = weighted_sup(batch[i], tails[i], beta)
    return out


@njit(cache=True)
def shift_append(entries, tail, v, beta):
    L = entries.shape[0]
    out = np.empty_like(entries)
    out[0] = v
    out[1:] = entries[: L - 1]
    dropped = vec_norm(entries[L - 1]) * math.exp(-beta * L)
    return out, max(tail * math.exp(-beta), dropped)


@njit(cache=True)
def tap_read(taps, entries):
    """sum_j taps[j] @ entries[j]"""
    v = np.zeros(entries.shape[1])
    for j in range(taps.shape[0]):
        v += np.dot(taps[j], entries[j])
    return v


@njit(cache=True)
def evolve(entries, tail, taps, forcing, amps, lags, weights, direction, shape_code, beta):
    """Step ``x(k+1) = A_k x_k + forcing_k + amps_k * shape(<w, x_k(-lags)>) * direction``.

    ``taps`` has shape ``(S, J+1, d, d)``, one tap block per step.  Returns the
    final buffer, its tail bound and the ``S`` newly produced heads.  The buffer
    is kept in one array of length ``S + L`` so each entry is written once; the
    tail bound is identical to ``S`` successive calls of ``shift_append``.
    """
    L, d = entries.shape
    S = taps.shape[0]
    J = taps.shape[1]
    W = np.zeros((S + L, d))
    W[S:] = entries
    heads = np.zeros((S, d))
    for s in range(S):
        base = S - s
        v = forcing[s].copy()
        for j in range(J):
            v += np.dot(taps[s, j], W[base + j])
        if shape_code >= 0 and amps[s] != 0.0:
            r = 0.0
            for k in range(lags.shape[0]):
                r += np.dot(weights[k], W[base + lags[k]])
            v += amps[s] * shape_value(shape_code, r) * direction
        W[base - 1] = v
        heads[s] = v
    out_tail = tail * math.exp(-beta * S)
    for i in range(S):
        w = vec_norm(W[L + i]) * math.exp(-beta * (L + i))
        if w > out_tail:
            out_tail = w
    return W[:L].copy(), out_tail, heads


@njit(cache=True)
def fill_geometric(out, v, inv_b, beta):
    """Write ``out[k] = diag(inv_b)^k v`` for all rows; return the exact tail bound.

    The tail ``sup_{k >= L} |B^{-k} v| e^{-beta k}`` is attained at ``k = L``
    because every unstable coordinate shrinks backward.
    """
    L = out.shape[0]
    cur = v.copy()
    for k in range(L):
        out[k] = cur
        cur = cur * inv_b
    return vec_norm(cur) * math.exp(-beta * L)
