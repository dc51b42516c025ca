"""NumPy reference implementation of the hot loops.

The compiled module ``_kernels`` exposes the same functions; ``kernels``
picks one at import time.
"""

import numpy as np

_METRIC = np.array([1.0, -1.0, -1.0, -1.0])
_CHUNK = 1 << 21


def closed_chains(points, weights, nodes):
    """Closed chains ``A(xi) = P(xi) P(-xi)`` at every node.

    Parameters
    ----------
    points : (N, 4) float array
    weights : (N, d, d) complex array
    nodes : (G, 4) float array

    Returns
    -------
    (G, d, d) complex array
    """
    points = np.ascontiguousarray(points, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=complex)
    nodes = np.ascontiguousarray(nodes, dtype=float)
    G, N, d = len(nodes), len(points), weights.shape[-1]
    out = np.zeros((G, d, d), dtype=complex)
    if N == 0 or G == 0:
        return out
    W = weights.reshape(N, d * d)
    K = (points * _METRIC).T
    step = max(1, _CHUNK // N)
    for lo in range(0, G, step):
        E = np.exp(1j * (nodes[lo:lo + step] @ K))
        P = (E @ W).reshape(-1, d, d)
        Pm = (E.conj() @ W).reshape(-1, d, d)
        out[lo:lo + step] = P @ Pm
    return out


def pairwise_sum(values):
    """Sum along a fixed binary tree that depends only on ``len(values)``.

    The input is zero-padded to the next power of two and adjacent pairs are
    added level by level.
    """
    x = np.asarray(values, dtype=float).ravel()
    if len(x) == 0:
        return 0.0
    size = 1 << (len(x) - 1).bit_length()
    buf = np.zeros(size)
    buf[:len(x)] = x
    while len(buf) > 1:
        buf = buf[0::2] + buf[1::2]
    return float(buf[0])


def lagrangian_grid(points, weights, nodes):
    """Unclamped Lagrangian and ``|A|^2`` at each node.

    Returns ``(L, t, info)`` where ``info[g] != 0`` marks a node whose
    eigenvalue computation failed.
    """
    A = closed_chains(points, weights, nodes)
    G, d = len(A), A.shape[-1] if A.ndim == 3 else 0
    info = np.zeros(G, dtype=np.intc)
    try:
        lam = np.linalg.eigvals(A) if G else np.zeros((0, d), dtype=complex)
    except np.linalg.LinAlgError:
        lam = np.zeros((G, d), dtype=complex)
        for g in range(G):
            try:
                lam[g] = np.linalg.eigvals(A[g])
            except np.linalg.LinAlgError:
                info[g] = 1
    mod = np.abs(lam)
    s1 = mod.sum(axis=-1)
    s2 = (mod * mod).sum(axis=-1)
    L = s2 - s1 * s1 / d if d else np.zeros(G)
    L[info != 0] = 0.0
    s1[info != 0] = 0.0
    return L, s1 * s1, info
