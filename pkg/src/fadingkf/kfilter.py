"""Intermittent Kalman filter and sample-path simulation.

Time indexing: ``gamma_k`` is the arrival bit of ``y_k`` for ``k = 1..H`` and
``P_k = P_{k|k-1}`` is the prediction covariance *before* ``y_k`` is used, so
``P_1 = h(P0)`` and ``P_{k+1} = g(P_k)`` if ``gamma_k = 1`` else ``h(P_k)``.
Arrays are 0-based: ``trace[k - 1] = Tr(P_k)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import compute_M
from .channels import ArrivalPath, sample_path
from .errors import NumericError
from .linalg import psd_sqrt
from .riccati import (
    LOG2_DESATURATE,
    SATURATE_AT,
    renormalize_factor,
    scaled_step,
    sqrt_step,
)
from .seeding import Stream, generator
from .system_model import observability_index

M_BOUND_TOL = 1e-6
PSD_DRIFT_TOL = 1e-8
# largest tolerated estimate of the relative rounding error in a measurement update
ROUNDING_LIMIT = 1e-5
# the first-order estimate below undercounts accumulated rounding; 32 eps was
# calibrated against an 80-digit recursion and stays above the observed error
_EPS = 32 * np.finfo(float).eps


@dataclass
class FilterState:
    x_pred: np.ndarray
    P_pred: np.ndarray
    x_filt: np.ndarray | None = None
    P_filt: np.ndarray | None = None
    k: int = 1


def initial_state(sys, x_pred=None):
    """State at k = 1: ``x_hat_{1|0} = 0`` and ``P_1 = A P0 A' + Q``."""
    P1 = sys.A @ sys.P0 @ sys.A.T + sys.Q
    x = np.zeros(sys.n) if x_pred is None else np.asarray(x_pred, dtype=float)
    return FilterState(x_pred=x, P_pred=0.5 * (P1 + P1.T), k=1)


def filter_step(sys, state: FilterState, gamma, y=None) -> FilterState:
    """Measurement update (if ``gamma``) followed by the time update."""
    if bool(gamma) != (y is not None):
        raise ValueError("a measurement must be given exactly when gamma = 1")
    P_filt, P_next, K = scaled_step(sys.A, sys.C, sys.Q, sys.R, state.P_pred, 0, gamma)
    if gamma:
        innov = np.asarray(y, dtype=float).reshape(sys.m) - sys.C @ state.x_pred
        x_filt = state.x_pred + K @ innov
    else:
        x_filt = state.x_pred
    return FilterState(
        x_pred=sys.A @ x_filt, P_pred=P_next, x_filt=x_filt, P_filt=P_filt, k=state.k + 1
    )


@dataclass
class CovTrace:
    trace: np.ndarray
    log2_trace: np.ndarray
    arrivals: ArrivalPath
    obs_index: int
    trace_M: float
    m_check_k: np.ndarray
    m_check_ok: np.ndarray
    crossings: dict = field(default_factory=dict)
    saturated_at: int | None = None
    sq_errors: np.ndarray | None = None
    state_stopped_at: int | None = None
    min_psd_margin: float = 0.0
    max_rounding: float = 0.0

    @property
    def horizon(self):
        return len(self.trace)

    @property
    def bits(self):
        return self.arrivals.bits

    @property
    def m_bound_checks(self):
        return list(zip(self.m_check_k.tolist(), self.m_check_ok.tolist()))

    @property
    def m_violations(self):
        return int((~self.m_check_ok).sum())

    @property
    def saturated(self):
        return ~np.isfinite(self.trace)

    @property
    def arrival_times(self):
        """1-based times ``t_j`` at which packets arrive."""
        return np.flatnonzero(self.bits) + 1

    def gaps(self, k, count):
        """``(tau_{k,1}, ..., tau_{k,count})``, or None if fewer than ``count`` arrivals by k."""
        t = self.arrival_times
        t = t[t <= k]
        if len(t) < count:
            return None
        i = len(t) - 1
        taus = [k - t[i]]
        for j in range(2, count + 1):
            taus.append(int(t[i - j + 2] - t[i - j + 1]))
        return tuple(int(v) for v in taus)

    def exceeds(self, threshold):
        """Boolean array ``Tr(P_k) > threshold`` that stays exact past saturation."""
        sat = self.saturated
        if not sat.any():
            return self.trace > threshold
        lt = math.log2(threshold) if threshold > 0 else -math.inf
        return np.where(sat, self.log2_trace > lt, self.trace > threshold)

    def outage_runs(self):
        """Length of the current drop run at every k (0 right after an arrival)."""
        run = np.zeros(self.horizon, dtype=np.int64)
        cur = 0
        for i, b in enumerate(self.bits):
            cur = 0 if b else cur + 1
            run[i] = cur
        return run

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "gamma", "trace_P", "log2_trace_P", "arrivals_so_far",
                    "longest_outage_so_far"])
        arrived = np.cumsum(self.bits)
        longest = np.maximum.accumulate(self.outage_runs())
        for i in range(self.horizon):
            w.writerow([i + 1, int(self.bits[i]), repr(float(self.trace[i])),
                        repr(float(self.log2_trace[i])), int(arrived[i]), int(longest[i])])
        return buf.getvalue()


def _renormalize_scalar(x, s):
    if s == 0:
        if x > SATURATE_AT:
            e = math.frexp(x)[1]
            return math.ldexp(x, -e), e
        return x, 0
    if x > 0 and math.log2(x) + s < LOG2_DESATURATE:
        return math.ldexp(x, s), 0
    e = math.frexp(x)[1] if x > 0 else 0
    return math.ldexp(x, -e), s + e


def run_path(
    sys,
    model,
    horizon,
    seed,
    path_index=0,
    covariance_only=True,
    thresholds=(),
    obs_index=None,
    trace_M=None,
    arrivals=None,
    m_tol=M_BOUND_TOL,
) -> CovTrace:
    """Simulate one sample path of the filter.

    The covariance recursion depends only on the arrival bits, so in
    ``covariance_only`` mode no state or noise is simulated; the traces are
    bit-identical to those of the full simulation. The covariance is propagated
    as a square-root factor (a plain float when n = 1), which stays accurate for
    the badly conditioned covariances that degenerate systems build up during
    outages. Traces above ``1e200`` are carried in an exact power-of-two scaled
    form and reported through ``log2_trace`` only.
    """
    I_o = observability_index(sys) if obs_index is None else obs_index
    trM = float(np.trace(compute_M(sys, I_o))) if trace_M is None else float(trace_M)
    if arrivals is None:
        arrivals = sample_path(model, horizon, seed, path_index)
    elif len(arrivals.bits) != horizon:
        raise ValueError("arrival path length does not match horizon")
    bits = arrivals.bits
    A, C, Q, R = sys.A, sys.C, sys.Q, sys.R

    full = not covariance_only
    if full:
        # The estimation error is simulated directly: for an unstable plant
        # x_k itself leaves the float range long before the error does.
        rng = generator(seed, path_index, Stream.NOISE)
        sqQ, sqR = psd_sqrt(Q), psd_sqrt(R)
        x0 = psd_sqrt(sys.P0) @ rng.standard_normal(sys.n)
        noise = rng.standard_normal((horizon, sys.n + sys.m))
        err = A @ x0 + sqQ @ noise[0, :sys.n]  # x_1 - x_hat_{1|0}
        sq_errors = np.full(horizon, np.nan)
        stopped = None

    trace = np.empty(horizon)
    log2tr = np.empty(horizon)
    scalar = sys.n == 1
    P1 = initial_state(sys).P_pred
    if scalar:
        # one state dimension: information-form update in plain floats
        a2, q = float(A[0, 0]) ** 2, float(Q[0, 0])
        gain_dir = np.linalg.solve(R, C).T  # C' R^{-1}
        w = float((gain_dir @ C)[0, 0])
        x, s = _renormalize_scalar(float(P1[0, 0]), 0)
    else:
        Fq, Fr = psd_sqrt(Q), psd_sqrt(R)
        L, s = renormalize_factor(psd_sqrt(P1), 0)
    saturated_at = None
    worst_margin = worst_rounding = 0.0
    normC = np.linalg.norm(C, 2)
    arrived_run = 0
    check_k, check_ok = [], []
    for i in range(horizon):
        k = i + 1
        tr = x if scalar else float(np.sum(L * L))
        if s == 0:
            trace[i] = tr
            log2tr[i] = math.log2(tr) if tr > 0 else -math.inf
        else:
            trace[i] = math.inf
            log2tr[i] = math.log2(tr) + s if tr > 0 else -math.inf
            if saturated_at is None:
                saturated_at = k
        if arrived_run >= I_o:
            check_k.append(k)
            check_ok.append(s == 0 and tr <= trM + m_tol)
        if not scalar:
            # L L' is PSD by construction; the margin records rounding in the product
            margin = float(np.linalg.eigvalsh(L @ L.T)[0]) / (1.0 + tr)
            if margin < -PSD_DRIFT_TOL:
                raise NumericError(f"prediction covariance left the PSD cone at k={k}")
            worst_margin = min(worst_margin, margin)

        g = bits[i]
        if g and not scalar:
            # C L loses absolute accuracy eps |C| |L|; what survives is measured
            # against the smallest singular value of the innovation factor row
            row = np.hstack([np.ldexp(Fr, -(s // 2)) if s else Fr, C @ L])
            smin = np.linalg.svd(row, compute_uv=False)[-1]
            rounding = _EPS * normC * math.sqrt(tr) / smin if smin > 0 else math.inf
            if rounding > ROUNDING_LIMIT:
                raise NumericError(
                    f"covariance too ill-conditioned for double precision at k={k} "
                    f"(relative rounding estimate {rounding:.1e})"
                )
            worst_rounding = max(worst_rounding, rounding)
        want_gain = full and stopped is None and s == 0 and g
        if scalar:
            x_filt = x
            if g:
                ws = math.ldexp(w, s) if s else w
                x_filt = x / (1.0 + x * ws)
            x_next = a2 * x_filt + (math.ldexp(q, -s) if s else q)
            K = x_filt * gain_dir if want_gain else None
        else:
            _, L_next, K = sqrt_step(A, C, Fq, Fr, L, s, g, want_gain)
        if full and stopped is None:
            if s:
                stopped = k
            else:
                sq_errors[i] = float(err @ err)
                if g:
                    err = err - K @ (C @ err + sqR @ noise[i, sys.n:])
                if i + 1 < horizon:
                    err = A @ err + sqQ @ noise[i + 1, :sys.n]
        arrived_run = arrived_run + 1 if g else 0
        if scalar:
            x, s = _renormalize_scalar(x_next, s)
        else:
            L, s = renormalize_factor(L_next, s)

    result = CovTrace(
        trace=trace,
        log2_trace=log2tr,
        arrivals=arrivals,
        obs_index=I_o,
        trace_M=trM,
        m_check_k=np.asarray(check_k, dtype=np.int64),
        m_check_ok=np.asarray(check_ok, dtype=bool),
        saturated_at=saturated_at,
        min_psd_margin=worst_margin,
        max_rounding=worst_rounding,
    )
    for c in thresholds:
        hit = np.flatnonzero(result.exceeds(float(c)))
        result.crossings[float(c)] = int(hit[0]) + 1 if hit.size else None
    if full:
        result.sq_errors = sq_errors
        result.state_stopped_at = stopped
    return result


@dataclass
class PathStats:
    exceeded: dict
    tail_min_le: dict
    k0: int
    k_start: int
    longest_outage: int
    arrival_count: int
    max_log2_trace: float
    tail_min_log2_trace: float
    note: str = "finite-horizon proxies: running max for limsup, tail min for liminf"

    def to_dict(self):
        return {
            "exceeded": [[c, v] for c, v in sorted(self.exceeded.items())],
            "tail_min_le": [[c, v] for c, v in sorted(self.tail_min_le.items())],
            "k0": self.k0,
            "k_start": self.k_start,
            "longest_outage": self.longest_outage,
            "arrival_count": self.arrival_count,
            "max_log2_trace": self.max_log2_trace,
            "tail_min_log2_trace": self.tail_min_log2_trace,
            "note": self.note,
        }


def path_statistics(trace: CovTrace, thresholds, k0=None, k_start=1) -> PathStats:
    """Per-threshold exceedance and tail-minimum indicators of one path.

    ``exceeded[C]`` is ``max_{k >= k_start} Tr(P_k) > C`` and
    ``tail_min_le[C]`` is ``min_{k >= k0} Tr(P_k) <= C``; ``k0`` defaults to
    half the horizon.
    """
    H = trace.horizon
    k0 = max(1, H // 2) if k0 is None else int(k0)
    exceeded, tail = {}, {}
    for c in thresholds:
        c = float(c)
        over = trace.exceeds(c)
        exceeded[c] = bool(over[k_start - 1:].any())
        tail[c] = bool((~over[k0 - 1:]).any())
    runs = trace.outage_runs()
    return PathStats(
        exceeded=exceeded,
        tail_min_le=tail,
        k0=k0,
        k_start=k_start,
        longest_outage=int(runs.max()) if H else 0,
        arrival_count=int(np.sum(trace.bits)),
        max_log2_trace=float(trace.log2_trace[k_start - 1:].max()),
        tail_min_log2_trace=float(trace.log2_trace[k0 - 1:].min()),
    )
