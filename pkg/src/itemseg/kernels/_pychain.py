"""Pure-numpy linear-chain kernels: log-space forward-backward and Viterbi.

``scores`` is the (n, L) per-position state score matrix and ``trans`` the
(L, L) transition score matrix indexed [prev, next].
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def forward_backward(scores: np.ndarray, trans: np.ndarray):
    """Return (log_partition, marginals (n, L), pairwise (n-1, L, L))."""
    n, L = scores.shape
    if n < 1:
        raise ValueError("empty sequence")
    alpha = np.empty((n, L))
    alpha[0] = scores[0]
    for t in range(1, n):
        alpha[t] = scores[t] + logsumexp(alpha[t - 1][:, None] + trans, axis=0)
    log_z = logsumexp(alpha[-1])

    beta = np.empty((n, L))
    beta[-1] = 0.0
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(trans + scores[t + 1] + beta[t + 1], axis=1)

    marginals = np.exp(alpha + beta - log_z)
    marginals /= marginals.sum(axis=1, keepdims=True)

    pairwise = np.empty((n - 1, L, L))
    for t in range(n - 1):
        log_p = (
            alpha[t][:, None] + trans + scores[t + 1] + beta[t + 1] - log_z
        )
        pairwise[t] = np.exp(log_p)
    return log_z, marginals, pairwise


def viterbi(scores: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Argmax path; ties broken toward the lower label index, left to right."""
    n, L = scores.shape
    if n < 1:
        raise ValueError("empty sequence")
    delta = scores[0].copy()
    back = np.empty((n, L), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = scores[t] + cand[back[t], np.arange(L)]
    path = np.empty(n, dtype=np.intp)
    path[-1] = int(np.argmax(delta))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path
