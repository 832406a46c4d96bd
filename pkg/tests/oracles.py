"""Brute-force reference computations shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def ctc_collapse(path, blank=0):
    out, prev = [], None
    for k in path:
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return out


def ctc_bruteforce(logp, labels, blank=0):
    """-log sum over every frame path that collapses to ``labels``."""
    T, K = logp.shape
    total = 0.0
    for path in itertools.product(range(K), repeat=T):
        if ctc_collapse(path, blank) == list(labels):
            total += math.exp(sum(logp[t, k] for t, k in enumerate(path)))
    return math.inf if total == 0.0 else -math.log(total)


def rnnt_paths(T, U):
    """Every move sequence through the lattice: 'b' advances t, 'e' advances u; ends with blank at (T-1, U)."""
    for emits in itertools.combinations(range(T - 1 + U), U):
        moves = ["b"] * (T - 1 + U)
        for i in emits:
            moves[i] = "e"
        yield moves + ["b"]


def rnnt_bruteforce(lp, labels, blank=0):
    """lp: (T, U+1, K) joint log-probs indexed by (frame, labels emitted so far)."""
    T = lp.shape[0]
    U = len(labels)
    total = 0.0
    for moves in rnnt_paths(T, U):
        t = u = 0
        s = 0.0
        for m in moves:
            if m == "b":
                s += lp[t, u, blank]
                t += 1
            else:
                s += lp[t, u, labels[u]]
                u += 1
        total += math.exp(s)
    return -math.log(total)


def rnnt_prefix_prob(lp_fn, T, prefix, blank=0):
    """Probability that the emitted sequence starts with ``prefix``.

    ``lp_fn(t, history)`` returns joint log-probs.  Sums over all ways to
    reach the emission of the last prefix label.
    """
    U = len(prefix)
    total = 0.0
    # choose the frame of each emission (non-decreasing), summing over paths
    for frames in itertools.combinations_with_replacement(range(T), U):
        s = 0.0
        t = 0
        for u, f in enumerate(frames):
            while t < f:
                s += lp_fn(t, tuple(prefix[:u]))[blank]
                t += 1
            s += lp_fn(t, tuple(prefix[:u]))[prefix[u]]
        total += math.exp(s)
    return total


def levenshtein(a, b):
    d = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
    d[:, 0] = np.arange(len(a) + 1)
    d[0, :] = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i, j] = min(d[i - 1, j] + 1, d[i, j - 1] + 1, d[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
    return int(d[-1, -1])
