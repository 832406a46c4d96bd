"""Forward-backward kernels for the CTC and RNN-T loss lattices.

Each kernel works on one utterance in log space and returns the negative
log-likelihood together with its gradient w.r.t. the log-prob inputs.
``*_nb`` variants are plain loops compiled by numba; ``*_np`` variants are
vectorized numpy used when numba is disabled (``FMADAPT_DISABLE_NUMBA=1``)
and as an independent cross-check in tests.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

NEG_INF = -np.inf


@njit
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


# --------------------------------------------------------------------- CTC

@njit
def ctc_kernel_nb(logp, labels, blank):
    T = logp.shape[0]
    K = logp.shape[1]
    U = labels.shape[0]
    S = 2 * U + 1
    ext = np.empty(S, dtype=np.int64)
    for s in range(S):
        ext[s] = blank if s % 2 == 0 else labels[s // 2]
    alpha = np.full((T, S), -np.inf)
    beta = np.full((T, S), -np.inf)
    grad = np.zeros((T, K))
    if T == 0:
        return (0.0 if U == 0 else np.inf), grad
    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _lae(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _lae(a, alpha[t - 1, s - 2])
            if a != -np.inf:
                alpha[t, s] = a + logp[t, ext[s]]
    logz = alpha[T - 1, S - 1]
    if S > 1:
        logz = _lae(logz, alpha[T - 1, S - 2])
    if logz == -np.inf:
        return np.inf, grad
    beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[t + 1, s]
            if s + 1 < S:
                b = _lae(b, beta[t + 1, s + 1])
            if s + 2 < S and ext[s] != blank and ext[s] != ext[s + 2]:
                b = _lae(b, beta[t + 1, s + 2])
            if b != -np.inf:
                beta[t, s] = b + logp[t, ext[s]]
    for t in range(T):
        for s in range(S):
            v = alpha[t, s] + beta[t, s]
            if v != -np.inf:
                grad[t, ext[s]] -= math.exp(v - logp[t, ext[s]] - logz)
    return -logz, grad


def _lae_np(*xs):
    stacked = np.stack(xs)
    m = np.max(stacked, axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(stacked - safe).sum(axis=0)) + safe
    return np.where(np.isfinite(m), out, -np.inf)


def ctc_kernel_np(logp, labels, blank):
    T, K = logp.shape
    U = len(labels)
    S = 2 * U + 1
    ext = np.full(S, blank, dtype=np.int64)
    ext[1::2] = labels
    grad = np.zeros((T, K))
    if T == 0:
        return (0.0 if U == 0 else np.inf), grad
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    skip_b = np.zeros(S, dtype=bool)
    skip_b[:-2] = skip[2:]
    ninf = np.full(S, -np.inf)
    alpha = np.full((T, S), -np.inf)
    alpha[0, :min(2, S)] = logp[0, ext[:min(2, S)]]
    for t in range(1, T):
        prev = alpha[t - 1]
        s1 = np.concatenate(([-np.inf], prev[:-1]))
        s2 = np.where(skip, np.concatenate(([-np.inf, -np.inf], prev[:-2]))[:S], ninf)
        alpha[t] = _lae_np(prev, s1, s2) + logp[t, ext]
    logz = _lae_np(alpha[T - 1, S - 1], alpha[T - 1, S - 2]) if S > 1 else alpha[T - 1, 0]
    logz = float(logz)
    if logz == -np.inf:
        return np.inf, grad
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        s1 = np.concatenate((nxt[1:], [-np.inf]))
        s2 = np.where(skip_b, np.concatenate((nxt[2:], [-np.inf, -np.inf]))[:S], ninf)
        beta[t] = _lae_np(nxt, s1, s2) + logp[t, ext]
    with np.errstate(invalid="ignore"):
        occ = np.exp(alpha + beta - logp[:, ext] - logz)
    occ = np.where(np.isfinite(alpha) & np.isfinite(beta), occ, 0.0)
    for s in range(S):
        grad[:, ext[s]] -= occ[:, s]
    return -logz, grad


# --------------------------------------------------------------------- RNN-T

@njit
def rnnt_kernel_nb(blank_lp, emit_lp):
    """blank_lp: (T, U+1); emit_lp: (T, U) log-prob of emitting label u+1 at (t, u)."""
    T = blank_lp.shape[0]
    U1 = blank_lp.shape[1]
    U = U1 - 1
    alpha = np.full((T, U1), -np.inf)
    beta = np.full((T, U1), -np.inf)
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = -np.inf
            if t > 0:
                a = alpha[t - 1, u] + blank_lp[t - 1, u]
            if u > 0:
                a = _lae(a, alpha[t, u - 1] + emit_lp[t, u - 1])
            alpha[t, u] = a
    beta[T - 1, U] = blank_lp[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            b = -np.inf
            if t < T - 1:
                b = beta[t + 1, u] + blank_lp[t, u]
            if u < U:
                b = _lae(b, beta[t, u + 1] + emit_lp[t, u])
            beta[t, u] = b
    logz = beta[0, 0]
    g_blank = np.zeros((T, U1))
    g_emit = np.zeros((T, U))
    for t in range(T):
        for u in range(U1):
            if t < T - 1:
                g_blank[t, u] = -math.exp(alpha[t, u] + blank_lp[t, u] + beta[t + 1, u] - logz)
            elif u == U:
                g_blank[t, u] = -math.exp(alpha[t, u] + blank_lp[t, u] - logz)
            if u < U:
                g_emit[t, u] = -math.exp(alpha[t, u] + emit_lp[t, u] + beta[t, u + 1] - logz)
    return -logz, g_blank, g_emit


def rnnt_kernel_np(blank_lp, emit_lp):
    T, U1 = blank_lp.shape
    U = U1 - 1
    alpha = np.full((T, U1), -np.inf)
    alpha[0, 0] = 0.0
    # anti-diagonals n = t + u only depend on diagonal n - 1
    for n in range(1, T + U):
        t = np.arange(max(0, n - U), min(T - 1, n) + 1)
        u = n - t
        from_t = np.where(t > 0, alpha[np.maximum(t - 1, 0), u] + blank_lp[np.maximum(t - 1, 0), u], -np.inf)
        from_u = np.where(u > 0, alpha[t, np.maximum(u - 1, 0)] + emit_lp[t, np.maximum(u - 1, 0)] if U else -np.inf, -np.inf)
        alpha[t, u] = _lae_np(from_t, from_u)
    beta = np.full((T, U1), -np.inf)
    beta[T - 1, U] = blank_lp[T - 1, U]
    for n in range(T + U - 2, -1, -1):
        t = np.arange(max(0, n - U), min(T - 1, n) + 1)
        u = n - t
        nt = np.minimum(t + 1, T - 1)
        nu = np.minimum(u + 1, U)
        from_t = np.where(t < T - 1, beta[nt, u] + blank_lp[t, u], -np.inf)
        from_u = np.where(u < U, beta[t, nu] + (emit_lp[t, np.minimum(u, U - 1)] if U else 0.0), -np.inf)
        beta[t, u] = _lae_np(from_t, from_u)
    logz = beta[0, 0]
    beta_next_t = np.full((T, U1), -np.inf)
    beta_next_t[:-1] = beta[1:]
    beta_next_t[T - 1, U] = 0.0
    g_blank = -np.exp(alpha + blank_lp + beta_next_t - logz)
    g_emit = -np.exp(alpha[:, :U] + emit_lp + beta[:, 1:] - logz) if U else np.zeros((T, 0))
    return -logz, g_blank, g_emit


def ctc_kernel(logp, labels, blank=0):
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if USE_NUMBA:
        return ctc_kernel_nb(logp, labels, blank)
    return ctc_kernel_np(logp, labels, blank)


def rnnt_kernel(blank_lp, emit_lp):
    blank_lp = np.ascontiguousarray(blank_lp, dtype=np.float64)
    emit_lp = np.ascontiguousarray(emit_lp, dtype=np.float64)
    if USE_NUMBA:
        return rnnt_kernel_nb(blank_lp, emit_lp)
    return rnnt_kernel_np(blank_lp, emit_lp)
