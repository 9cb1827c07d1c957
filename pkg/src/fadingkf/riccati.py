"""Riccati operators on PSD matrices and the Riemannian metric they act on.

``h(X) = A X A' + Q`` is the prediction map after a dropped packet and
``g(X) = h(X) - A X C' (C X C' + R)^{-1} C X A'`` the map after an arrival.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpotrf, dpotrs

from .errors import DimensionError, DomainError, NonConvergenceError, NumericError
from .linalg import is_psd, random_pd, symmetrize
from .seeding import Stream, generator
from .system_model import observability_index

DARE_TOL = 1e-12
DARE_MAX_ITER = 100_000


def _check_square(sys, X):
    X = np.asarray(X, dtype=float)
    if X.shape != (sys.n, sys.n):
        raise DimensionError(f"expected {sys.n}x{sys.n} matrix, got {X.shape}")
    return X


def op_h(sys, X):
    X = _check_square(sys, X)
    return symmetrize(sys.A @ X @ sys.A.T + sys.Q)


def op_g(sys, X):
    """Evaluated through the Joseph-form update, which equals the subtractive
    formula algebraically but keeps full accuracy when X is much larger than R."""
    X = _check_square(sys, X)
    return scaled_step(sys.A, sys.C, sys.Q, sys.R, X, 0, 1)[1]


_OPS = {"h": op_h, "g": op_g, 0: op_h, 1: op_g}


def iterate(sys, X, k, pattern=None):
    """Apply a word in ``{h, g}`` to X, leftmost symbol first.

    ``pattern`` may contain ``"h"``/``"g"`` or arrival bits ``0``/``1``;
    omitting it means ``h`` applied k times.
    """
    if pattern is None:
        pattern = ["h"] * k
    pattern = list(pattern)
    if len(pattern) != k:
        raise ValueError(f"pattern length {len(pattern)} != k={k}")
    X = _check_square(sys, X)
    for sym in pattern:
        try:
            X = _OPS[sym](sys, X)
        except KeyError:
            raise ValueError(f"unknown operator symbol {sym!r}") from None
    return X


@dataclass
class DareSolution:
    P_bar: np.ndarray
    residual: float
    iterations: int


def solve_dare(sys, tol=DARE_TOL, max_iter=DARE_MAX_ITER) -> DareSolution:
    """Fixed point of g reached by iterating g from the zero matrix."""
    X = np.zeros((sys.n, sys.n))
    residual = prev = math.inf
    for it in range(1, max_iter + 1):
        Xn = op_g(sys, X)
        # stop on the step relative to the iterate itself (stricter than the reported
        # residual when P_bar is small)
        norm = np.linalg.norm(Xn)
        residual = np.linalg.norm(Xn - X) / (norm if norm > 0 else 1.0)
        X = Xn
        # a slowly contracting iteration is still far from P_bar when steps get small;
        # bound the remaining distance by step * q / (1 - q) with q the observed ratio
        q = min(residual / prev, 1.0 - 1e-9) if prev > 0 and math.isfinite(prev) else 0.0
        prev = residual
        if residual <= tol and residual * q / (1.0 - q) <= tol:
            break
    else:
        raise NonConvergenceError(
            f"DARE iteration did not converge in {max_iter} steps (residual {residual:.3g})",
            residual=residual,
            iterations=max_iter,
        )
    # report the residual of the returned matrix itself
    residual = np.linalg.norm(op_g(sys, X) - X) / (1.0 + np.linalg.norm(X))
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NumericError("DARE fixed point is not positive definite") from exc
    return DareSolution(P_bar=X, residual=float(residual), iterations=it)


def _gen_eigvals(X, Y):
    X = symmetrize(np.asarray(X, dtype=float))
    Y = symmetrize(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch {X.shape} vs {Y.shape}")
    try:
        L = np.linalg.cholesky(Y)
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        raise DomainError("Riemannian distance needs positive definite arguments") from None
    # eigenvalues of L^{-1} X L^{-T}, similar to X Y^{-1}
    Z = sla.solve_triangular(L, X, lower=True)
    Z = sla.solve_triangular(L, Z.T, lower=True)
    return np.linalg.eigvalsh(symmetrize(Z))


def riemannian_distance(X, Y):
    """``sqrt(sum log2(lambda_i(X Y^{-1}))^2)`` for PD X, Y."""
    lam = _gen_eigvals(X, Y)
    if np.any(lam <= 0):
        raise DomainError("non-positive generalized eigenvalue")
    return float(np.sqrt(np.sum(np.log2(lam) ** 2)))


def comparability_factor(X, Y):
    """``beta = 2**-delta(X, Y)``, so that ``beta X <= Y <= X / beta``."""
    return 2.0 ** (-riemannian_distance(X, Y))


@dataclass
class ContractionReport:
    q_hat: float
    max_h_ratio: float | None
    num_pairs: int
    skipped_pairs: int
    obs_index: int
    applicable: bool
    passed: bool
    note: str = ""

    def to_dict(self):
        return asdict(self)


def estimate_contraction(sys, num_pairs=10_000, seed=0, obs_index=None) -> ContractionReport:
    """Largest observed distance ratios under ``g^{I_o}`` and ``h``.

    Pair ``i`` is drawn from a generator keyed by ``(seed, i)`` so the result
    does not depend on evaluation order.
    """
    I_o = observability_index(sys) if obs_index is None else obs_index
    invertible = abs(np.linalg.det(sys.A)) > 0 and np.linalg.cond(sys.A) < 1e12
    q_hat = 0.0
    h_ratio = 0.0
    skipped = 0
    for i in range(num_pairs):
        rng = generator(seed, i, Stream.CONTRACTION)
        X = random_pd(rng, sys.n)
        Y = random_pd(rng, sys.n)
        d = riemannian_distance(X, Y)
        if d == 0.0:
            skipped += 1
            continue
        q_hat = max(q_hat, riemannian_distance(iterate(sys, X, I_o, "g" * I_o),
                                               iterate(sys, Y, I_o, "g" * I_o)) / d)
        if invertible:
            h_ratio = max(h_ratio, riemannian_distance(op_h(sys, X), op_h(sys, Y)) / d)
    if not invertible:
        return ContractionReport(
            q_hat=q_hat, max_h_ratio=None, num_pairs=num_pairs, skipped_pairs=skipped,
            obs_index=I_o, applicable=False, passed=False,
            note="A is singular; the contraction property is only claimed for invertible A",
        )
    return ContractionReport(
        q_hat=q_hat,
        max_h_ratio=h_ratio,
        num_pairs=num_pairs,
        skipped_pairs=skipped,
        obs_index=I_o,
        applicable=True,
        passed=q_hat < 1.0 and h_ratio <= 1.0 + 1e-8,
    )


# Scaled-covariance arithmetic. A covariance is held as (X, s) with true value
# 2**s * X; power-of-two rescaling is exact, so traces far beyond the float
# range keep an exact log2 representation.

def _spd_solve(S, B):
    """Solve ``S Z = B`` for symmetric PD S through a Cholesky factorization."""
    c, info = dpotrf(S, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    Z, info = dpotrs(c, B, lower=1)
    return Z


def scaled_step(A, C, Q, R, X, s, gamma):
    """One prediction-covariance step on the scaled pair (X, s).

    Returns ``(P_filt, P_next, K)`` in the scale of ``X``; ``P_filt`` uses
    the Joseph form and ``K`` is None on a drop. For ``s == 0`` this is plain
    Riccati arithmetic.
    """
    Qs = np.ldexp(Q, -s) if s else Q
    if gamma:
        Rs = np.ldexp(R, -s) if s else R
        CX = C @ X
        S = CX @ C.T + Rs
        try:
            K = _spd_solve(S, CX).T
        except np.linalg.LinAlgError:
            if not s:
                raise NumericError("innovation covariance is not PD") from None
            # R underflowed after rescaling; the gain is still well defined
            K = np.linalg.lstsq(S, CX, rcond=None)[0].T
        IKC = np.eye(X.shape[0]) - K @ C
        P_filt = IKC @ X @ IKC.T + K @ Rs @ K.T
        P_filt = 0.5 * (P_filt + P_filt.T)
    else:
        K = None
        P_filt = X
    P_next = A @ P_filt @ A.T + Qs
    return P_filt, 0.5 * (P_next + P_next.T), K


SATURATE_AT = 1e200
DESATURATE_BELOW = 1e190
LOG2_DESATURATE = math.log2(DESATURATE_BELOW)


def renormalize(X, s):
    """Move (X, s) into or out of the scaled representation as needed."""
    tr = float(X.trace())
    if s == 0:
        if tr > SATURATE_AT:
            e = math.frexp(tr)[1]
            return np.ldexp(X, -e), e
        return X, 0
    if tr > 0 and math.log2(tr) + s < LOG2_DESATURATE:
        return np.ldexp(X, s), 0
    e = math.frexp(tr)[1] if tr > 0 else 0
    if e:
        X, s = np.ldexp(X, -e), s + e
    return X, s


def _lower_factor(M):
    """Lower-triangular T with ``T T' = M M'`` (QR of ``M'``)."""
    return np.linalg.qr(M.T, mode="r").T


def sqrt_step(A, C, Fq, Fr, L, s, gamma, want_gain=False):
    """Square-root (array) form of ``scaled_step`` on a factor ``X = L L'``.

    ``Fq`` and ``Fr`` are factors of Q and R. The true covariance is
    ``2**s L L'`` with ``s`` even, so noise factors scale by the exact power
    ``2**(-s/2)``. Working with factors keeps the small eigen-directions of
    very ill-conditioned covariances that the matrix form rounds away.
    Returns ``(L_filt, L_next, K)``; ``K`` is only formed when requested.
    """
    half = s // 2
    K = None
    if gamma:
        if half:
            Fr = np.ldexp(Fr, -half)
        m, n = C.shape[0], L.shape[0]
        pre = np.zeros((m + n, m + n))
        pre[:m, :m] = Fr
        pre[:m, m:] = C @ L
        pre[m:, m:] = L
        post = _lower_factor(pre)
        L_filt = post[m:, m:]
        if want_gain:
            # G Sh' = X C' and S = Sh Sh', so K = G Sh^{-1}
            K = sla.solve_triangular(post[:m, :m], post[m:, :m].T, lower=True, trans="T").T
    else:
        L_filt = L
    if half:
        Fq = np.ldexp(Fq, -half)
    return L_filt, _lower_factor(np.hstack([A @ L_filt, Fq])), K


def renormalize_factor(L, s):
    """``renormalize`` for a factor: keeps ``s`` even so ``L`` rescales exactly."""
    tr = float(np.sum(L * L))
    if s == 0:
        if tr > SATURATE_AT:
            e = math.frexp(tr)[1]
            e += e & 1
            return np.ldexp(L, -e // 2), e
        return L, 0
    if tr > 0 and math.log2(tr) + s < LOG2_DESATURATE:
        return np.ldexp(L, s // 2), 0
    e = math.frexp(tr)[1] if tr > 0 else 0
    e += e & 1
    if e:
        L, s = np.ldexp(L, -e // 2), s + e
    return L, s


def log2_trace(X, s):
    tr = float(np.trace(X))
    if tr <= 0:
        return -math.inf
    return math.log2(tr) + s


def check_psd(X, tol=1e-10):
    """Raise if X is not PSD within tolerance; never repairs it."""
    if not is_psd(X, tol):
        raise NumericError("matrix left the PSD cone beyond tolerance")
    return X
