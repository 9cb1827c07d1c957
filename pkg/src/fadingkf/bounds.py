"""Explicit covariance bounds and outage-window thresholds.

``M0`` is the error covariance assigned to a least-squares estimator that
reconstructs the state from ``I_o`` consecutive measurements and ``M`` its
``I_o``-step open-loop propagation. ``I_bar(C)`` and ``I_under(C)`` count how
many consecutive drops push the trace above ``C`` starting from ``M`` and from
the steady-state covariance ``P_bar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, NumericError
from .linalg import min_eig, symmetrize
from .riccati import log2_trace, op_h, renormalize, scaled_step, solve_dare
from .system_model import observability_index

JTJ_COND_CAP = 1e12
THRESHOLD_MAX_ITER = 1_000_000


def stacked_maps(sys, obs_index):
    """``J`` (stacked observability map) and ``H`` (noise-to-measurement map).

    Block row ``i`` corresponds to ``y_{k-1-i}``; block column ``j`` of H to
    ``w_{k-2-j}``. For ``obs_index == 1`` H has no columns.
    """
    n, m, I_o = sys.n, sys.m, obs_index
    powers = [np.eye(n)]
    for _ in range(I_o):
        powers.append(sys.A @ powers[-1])
    J = np.vstack([sys.C @ powers[I_o - 1 - i] for i in range(I_o)])
    H = np.zeros((I_o * m, (I_o - 1) * n))
    for i in range(I_o):
        for j in range(i, I_o - 1):
            H[i * m:(i + 1) * m, j * n:(j + 1) * n] = sys.C @ powers[j - i]
    return J, H


def _ls_pinv(J):
    JtJ = J.T @ J
    cond = np.linalg.cond(JtJ)
    if not np.isfinite(cond) or cond > JTJ_COND_CAP:
        raise NumericError(f"J'J is singular (condition number {cond:.3g})")
    return sla.cho_solve(sla.cho_factor(JtJ), J.T), cond


def compute_M0(sys, obs_index=None):
    """Return ``(M0, J, H)``."""
    I_o = observability_index(sys) if obs_index is None else obs_index
    J, H = stacked_maps(sys, I_o)
    Jp, _ = _ls_pinv(J)
    noise = np.kron(np.eye(I_o), sys.R)
    if H.shape[1]:
        noise = noise + H @ np.kron(np.eye(I_o - 1), sys.Q) @ H.T
    return symmetrize(Jp @ noise @ Jp.T), J, H


def compute_M(sys, obs_index=None, M0=None):
    I_o = observability_index(sys) if obs_index is None else obs_index
    if M0 is None:
        M0 = compute_M0(sys, I_o)[0]
    X = M0
    for _ in range(I_o):
        X = op_h(sys, X)
    return X


def window_estimator_covariance(sys, obs_index=None):
    """Exact error covariance of the ``I_o``-window least-squares predictor.

    Unlike ``M`` this keeps the correlation between the process noise seen
    through ``H`` and the noise accumulated while propagating, so it is a
    valid matrix upper bound on ``P_k`` after ``I_o`` consecutive arrivals.
    Equals ``M`` when ``I_o == 1``.
    """
    I_o = observability_index(sys) if obs_index is None else obs_index
    n = sys.n
    J, H = stacked_maps(sys, I_o)
    Jp, _ = _ls_pinv(J)
    AI = np.linalg.matrix_power(sys.A, I_o)
    G = AI @ Jp
    cov = G @ np.kron(np.eye(I_o), sys.R) @ G.T + sys.Q  # w_{k-1}
    for j in range(I_o - 1):
        # w_{k-2-j} reaches x_k through A^{j+1} and the estimate through H
        T = np.linalg.matrix_power(sys.A, j + 1) - G @ H[:, j * n:(j + 1) * n]
        cov = cov + T @ sys.Q @ T.T
    return symmetrize(cov)


def _first_crossing(sys, X, threshold, max_iter=THRESHOLD_MAX_ITER):
    """Least k >= 1 with ``Tr(h^k(X)) > threshold``."""
    target = math.log2(threshold) if threshold > 0 else -math.inf
    s = 0
    for k in range(1, max_iter + 1):
        _, X, _ = scaled_step(sys.A, sys.C, sys.Q, sys.R, X, s, 0)
        if s == 0:
            if float(np.trace(X)) > threshold:
                return k
        elif log2_trace(X, s) > target:
            return k
        X, s = renormalize(X, s)
    raise NumericError(f"trace did not exceed {threshold} within {max_iter} drops")


def _check_domain(threshold, M):
    trM = float(np.trace(M))
    if not threshold >= trM:
        raise DomainError(f"threshold {threshold} is below Tr(M) = {trM}")


def compute_I_bar(sys, threshold, M=None):
    M = compute_M(sys) if M is None else M
    _check_domain(threshold, M)
    return _first_crossing(sys, M, threshold)


def compute_I_under(sys, threshold, M=None, P_bar=None):
    M = compute_M(sys) if M is None else M
    _check_domain(threshold, M)
    P_bar = solve_dare(sys).P_bar if P_bar is None else P_bar
    return _first_crossing(sys, P_bar, threshold)


def trace_lower_bound_constant(sys, k_max=50):
    """Constant ``a > 0`` with ``Tr(h^k(X)) >= a |lambda_1(A)|^{2k}`` for all PSD X.

    Minimum of the explicit ratios for ``k <= max(n, k_max)`` and the tail
    constant ``lambda_min(h^n(0)) |lambda_1|^{-2n}`` that covers every larger k.
    """
    rho2 = float(np.max(np.abs(np.linalg.eigvals(sys.A)))) ** 2
    X = np.zeros((sys.n, sys.n))
    ratios = []
    a0 = None
    for k in range(1, max(sys.n, k_max) + 1):
        X = op_h(sys, X)
        ratios.append(float(np.trace(X)) / rho2**k)
        if k == sys.n:
            a0 = min_eig(X)
    if a0 <= 0:
        raise NumericError("h^n(0) is not PD: (A, Q^1/2) is not controllable")
    return min(min(ratios), a0 / rho2**sys.n)


@dataclass
class BoundsReport:
    P_bar: np.ndarray
    M0: np.ndarray
    M: np.ndarray
    J: np.ndarray
    H: np.ndarray
    a_lower: float
    obs_index: int
    window_covariance: np.ndarray
    I_bar: dict = field(default_factory=dict)
    I_under: dict = field(default_factory=dict)
    out_of_domain: list = field(default_factory=list)

    def to_dict(self):
        return {
            "obs_index": self.obs_index,
            "P_bar": self.P_bar.tolist(),
            "M0": self.M0.tolist(),
            "M": self.M.tolist(),
            "trace_M": float(np.trace(self.M)),
            "J": self.J.tolist(),
            "H": self.H.tolist(),
            "a_lower": self.a_lower,
            "window_covariance": self.window_covariance.tolist(),
            "I_bar": [[c, k] for c, k in sorted(self.I_bar.items())],
            "I_under": [[c, k] for c, k in sorted(self.I_under.items())],
            "out_of_domain": sorted(self.out_of_domain),
        }


def compute_bounds(sys, thresholds=(), k_max=50, dare_tol=None) -> BoundsReport:
    """All bound objects; thresholds below ``Tr(M)`` are listed as out of domain."""
    I_o = observability_index(sys)
    P_bar = solve_dare(sys).P_bar if dare_tol is None else solve_dare(sys, dare_tol).P_bar
    M0, J, H = compute_M0(sys, I_o)
    M = compute_M(sys, I_o, M0)
    report = BoundsReport(
        P_bar=P_bar, M0=M0, M=M, J=J, H=H,
        a_lower=trace_lower_bound_constant(sys, k_max),
        obs_index=I_o,
        window_covariance=window_estimator_covariance(sys, I_o),
    )
    for c in thresholds:
        c = float(c)
        try:
            report.I_bar[c] = compute_I_bar(sys, c, M)
            report.I_under[c] = compute_I_under(sys, c, M, P_bar)
        except DomainError:
            report.out_of_domain.append(c)
    return report
