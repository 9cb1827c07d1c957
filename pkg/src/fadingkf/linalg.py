"""Small dense linear-algebra helpers shared by the modules."""

import hashlib
import json

import numpy as np

PSD_TOL = 1e-10


def symmetrize(X):
    return 0.5 * (X + X.T)


def min_eig(X):
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(X, dtype=float)))[0])


def is_psd(X, tol=PSD_TOL):
    X = np.asarray(X, dtype=float)
    scale = 1.0 + np.linalg.norm(X)
    return min_eig(X) >= -tol * scale


def is_pd(X):
    try:
        np.linalg.cholesky(symmetrize(np.asarray(X, dtype=float)))
    except np.linalg.LinAlgError:
        return False
    return True


def numerical_rank(M, tol=1e-9):
    """Rank counting singular values ``>= tol * sigma_max``.

    Returns ``(rank, ambiguous)`` where ``ambiguous`` flags a singular value
    lying within two decades of the cut-off.
    """
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0, False
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0, False
    rel = s / s[0]
    rank = int(np.sum(rel >= tol))
    ambiguous = bool(np.any((rel >= tol * 1e-2) & (rel <= tol * 1e2)))
    return rank, ambiguous


def psd_sqrt(X):
    w, V = np.linalg.eigh(symmetrize(X))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def random_pd(rng, n, log10_scale=(-2.0, 2.0)):
    """Random PD matrix with a spread of eigenvalue scales."""
    L = rng.standard_normal((n, n))
    scale = 10.0 ** rng.uniform(*log10_scale)
    return scale * (L @ L.T + 0.05 * np.eye(n))


def random_psd_pair(rng, n, rank=None):
    """``(X, Y)`` with ``X >= Y >= 0``; ``Y`` possibly singular."""
    rank = n if rank is None else rank
    B = rng.standard_normal((n, rank)) * 10.0 ** rng.uniform(-1, 1)
    Y = B @ B.T
    D = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-1, 1)
    X = Y + D @ D.T
    return X, Y


def fingerprint(obj):
    """Stable short hash of a JSON-serializable object."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
