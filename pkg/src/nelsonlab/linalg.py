"""Entrywise-accurate matrix exponentials for Z-matrices.

The dense eigendecomposition reproduces ``exp(-tX)`` to ``~1e-16 * max|exp(-tX)|``
in absolute terms, which is useless for the tiny entries far from the diagonal.
When ``X`` has nonpositive off-diagonal entries, ``exp(-tX) = exp(-t s) exp(t (s - X))``
with ``s - X`` entrywise nonnegative, and a Taylor series plus repeated squaring
of nonnegative matrices involves no cancellation: every entry comes out with a
small *relative* error.
"""

from __future__ import annotations

import numpy as np


def is_z_matrix(X: np.ndarray, tol: float = 0.0) -> bool:
    off = X - np.diag(np.diag(X))
    return bool(np.max(off) <= tol * max(1.0, np.max(np.abs(X))))


def _diameter(X: np.ndarray) -> int:
    """Graph diameter bound of the sparsity pattern (BFS from node 0, doubled)."""
    adj = np.abs(X) > 0
    n = X.shape[0]
    seen = np.zeros(n, bool)
    frontier = np.zeros(n, bool)
    frontier[0] = seen[0] = True
    depth = 0
    while frontier.any():
        nxt = adj[frontier].any(axis=0) & ~seen
        if not nxt.any():
            break
        seen |= nxt
        frontier = nxt
        depth += 1
    if not seen.all():
        return n
    return min(2 * depth, n)


def expm_nonneg(X: np.ndarray, t: float, order: int | None = None) -> np.ndarray:
    """``exp(-t X)`` for a symmetric Z-matrix ``X`` with small entrywise relative error.

    Parameters
    ----------
    X : ndarray
        Square matrix with nonpositive off-diagonal entries.
    t : float
        Nonnegative time.
    order : int, optional
        Taylor order of each scaled factor. The default covers the lattice
        diameter plus 30 once the squarings are counted, so every entry of
        the result is converged in relative terms.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    X = np.asarray(X, float)
    n = X.shape[0]
    if t == 0:
        return np.eye(n)
    if not is_z_matrix(X):
        raise ValueError("expm_nonneg needs nonpositive off-diagonal entries")
    shift = float(np.max(np.diag(X)))
    B = shift * np.eye(n) - X  # entrywise >= 0
    norm = float(np.max(np.sum(np.abs(B), axis=1))) + float(np.max(np.abs(np.diag(X))))
    k = max(0, int(np.ceil(np.log2(max(t * norm, 1e-300) / 0.5))))
    s = t / 2**k
    # each squaring doubles the reach of the truncated series
    p = order if order is not None else max(30, int(np.ceil((_diameter(X) + 30) / 2**k)))
    # Horner form keeps every partial sum nonnegative.
    sB = s * B
    F = np.eye(n)
    for j in range(p, 0, -1):
        F = np.eye(n) + (sB @ F) / j
    F *= np.exp(-s * shift)
    for _ in range(k):
        F = F @ F
    return 0.5 * (F + F.T)
