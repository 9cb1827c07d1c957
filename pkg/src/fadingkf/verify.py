"""The acceptance suite: eleven numbered checks with fixed tolerances.

Each check returns a :class:`CriterionResult`. Runtime limits are part of the
check where one is stated. Checks never relax their tolerance; a failing
check reports the measured quantity so the gap is visible.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import catalog
from .analysis import classify_series, dichotomy_experiment, stability_verdict
from .bounds import compute_I_bar, compute_I_under, compute_M, trace_lower_bound_constant
from .channels import Iid, PowerApproach, TimeVarying
from .kfilter import run_path
from .linalg import min_eig, random_pd, random_psd_pair
from .riccati import (
    comparability_factor,
    estimate_contraction,
    op_g,
    op_h,
    riemannian_distance,
    solve_dare,
)
from .seeding import Stream, generator
from .system_model import observability_index, profile_system


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    time_limit: float | None = None

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        limit = f" (limit {self.time_limit:g}s)" if self.time_limit else ""
        return f"[{status}] {self.number:2d}. {self.title}: {self.detail} [{self.seconds:.2f}s{limit}]"

    def to_dict(self):
        return asdict(self)


def _timed(number, title, limit=None):
    def wrap(fn):
        def run(seed=0):
            t0 = time.perf_counter()
            ok, detail = fn(seed)
            dt = time.perf_counter() - t0
            if limit is not None and dt >= limit:
                ok = False
                detail += f"; runtime {dt:.2f}s over limit"
            return CriterionResult(number, title, bool(ok), detail, dt, limit)

        run.number = number
        run.title = title
        return run

    return wrap


@_timed(1, "scalar DARE oracle", limit=1.0)
def criterion_1(seed):
    cases = [
        ((2.0, 1.0, 1.0, 1.0), (3.0 + math.sqrt(13.0)) / 2.0),
        ((1.0, 1.0, 1.0, 1.0), (1.0 + math.sqrt(5.0)) / 2.0),
    ]
    ok, parts = True, []
    for (a, c, q, r), expected in cases:
        got = float(solve_dare(catalog.scalar(a, c, q, r)).P_bar[0, 0])
        rel = abs(got - expected) / expected
        ok &= rel <= 1e-10
        parts.append(f"a={a:g}: P_bar={got:.10f} vs {expected:.10f} (rel {rel:.2e})")
    return ok, "; ".join(parts)


@_timed(2, "operator monotonicity", limit=30.0)
def criterion_2(seed, total_pairs=10_000, tol=1e-8):
    systems = catalog.operator_battery()
    per = total_pairs // len(systems)
    violations = 0
    worst = math.inf
    for si, sys in enumerate(systems.values()):
        for i in range(per):
            rng = generator(seed, si * per + i, Stream.PROPERTY)
            rank = int(rng.integers(0, sys.n + 1))
            X, Y = random_psd_pair(rng, sys.n, rank)
            hX, gX = op_h(sys, X), op_g(sys, X)
            m = min(min_eig(hX - op_h(sys, Y)), min_eig(gX - op_g(sys, Y)), min_eig(hX - gX))
            worst = min(worst, m)
            violations += m < -tol
    return violations == 0, (f"{per * len(systems)} ordered pairs on {len(systems)} systems, "
                             f"{violations} violations, worst min-eig {worst:.2e}")


@_timed(3, "metric and comparability")
def criterion_3(seed, pairs=1000):
    tri_bad = comp_bad = 0
    worst_tri = worst_comp = -math.inf
    for i in range(pairs):
        rng = generator(seed, 100_000 + i, Stream.PROPERTY)
        n = int(rng.integers(1, 5))
        X, Y, Z = (random_pd(rng, n) for _ in range(3))
        gap = riemannian_distance(X, Z) - riemannian_distance(X, Y) - riemannian_distance(Y, Z)
        worst_tri = max(worst_tri, gap)
        tri_bad += gap > 1e-9
        beta = comparability_factor(X, Y)
        slack = min(min_eig(Y - beta * X), min_eig(X / beta - Y))
        worst_comp = max(worst_comp, -slack)
        comp_bad += slack < -1e-8
    return tri_bad == 0 and comp_bad == 0, (
        f"{pairs} PD triples: triangle violations {tri_bad} (largest excess {worst_tri:.2e}), "
        f"comparability violations {comp_bad}")


@_timed(4, "contraction of g^I_o")
def criterion_4(seed, pairs=10_000):
    ok, parts = True, []
    for name, sys in catalog.one_step_battery().items():
        rep = estimate_contraction(sys, pairs, seed)
        ok &= rep.applicable and rep.q_hat < 1.0 and rep.max_h_ratio <= 1.0 + 1e-8
        parts.append(f"{name}: q_hat={rep.q_hat:.4f}, h-ratio={rep.max_h_ratio:.6f}")
    return ok, "; ".join(parts)


@_timed(5, "M bound after I_o arrivals")
def criterion_5(seed, paths=1000, horizon=300):
    ok, parts = True, []
    model = Iid(0.5)
    for name, sys in (("scalar", catalog.scalar()), ("2-dim", catalog.double_integrator())):
        I_o = observability_index(sys)
        trM = float(np.trace(compute_M(sys, I_o)))
        checks = violations = 0
        worst = -math.inf
        for i in range(paths):
            tr = run_path(sys, model, horizon, seed, i, obs_index=I_o, trace_M=trM, m_tol=1e-6)
            checks += len(tr.m_check_k)
            violations += tr.m_violations
            if len(tr.m_check_k):
                worst = max(worst, float(tr.trace[tr.m_check_k - 1].max()))
        ok &= violations == 0 and checks > 0
        parts.append(f"{name}: {checks} checks, {violations} violations, "
                     f"max Tr {worst:.4f} vs Tr(M) {trM:g}")
    return ok, "; ".join(parts)


@_timed(6, "trace growth floor")
def criterion_6(seed, starts=100, k_max=20):
    ok, parts = True, []
    for name, sys in catalog.operator_battery().items():
        a = trace_lower_bound_constant(sys)
        rho2 = float(np.max(np.abs(np.linalg.eigvals(sys.A)))) ** 2
        bad = 0
        for i in range(starts):
            rng = generator(seed, 200_000 + i, Stream.PROPERTY)
            X, _ = random_psd_pair(rng, sys.n, 0)
            for k in range(1, k_max + 1):
                X = op_h(sys, X)
                bad += float(np.trace(X)) < a * rho2**k * (1.0 - 1e-12)
        ok &= bad == 0
        parts.append(f"{name}: a={a:.4g}, {bad} violations")
    return ok, "; ".join(parts)


def _scalar_first_crossing(a, q, x, threshold):
    k = 0
    while True:
        x = a * a * x + q
        k += 1
        if x > threshold:
            return k


@_timed(7, "outage thresholds")
def criterion_7(seed):
    sys = catalog.scalar()
    M = compute_M(sys)
    P = 2.0 + math.sqrt(5.0)  # positive root of P^2 - 4P - 1 = 0
    ib, iu = compute_I_bar(sys, 20.0, M), compute_I_under(sys, 20.0, M)
    ok = ib == 1 and iu == 2
    ladder = np.geomspace(float(np.trace(M)), 1e12, 20)
    mismatches = 0
    for c in ladder:
        b, u = compute_I_bar(sys, c, M), compute_I_under(sys, c, M)
        ob, ou = _scalar_first_crossing(2.0, 1.0, 5.0, c), _scalar_first_crossing(2.0, 1.0, P, c)
        mismatches += (b, u) != (ob, ou) or b > u
    ok &= mismatches == 0
    return ok, f"I_bar(20)={ib}, I_under(20)={iu}, ladder of 20: {mismatches} mismatches"


@_timed(8, "dichotomy, unstable side", limit=60.0)
def criterion_8(seed, paths=200, horizon=3000):
    sys = catalog.scalar()
    trM = float(np.trace(compute_M(sys)))
    c_tail = trM + 1e-6
    rep = dichotomy_experiment(sys, Iid(0.5), horizon, paths, [c_tail, 1e6], seed,
                               horizons=[horizon])
    pe = rep.row(1e6).p_exceed
    pt = rep.row(c_tail).p_tail
    return pe >= 0.99 and pt == 1.0, (
        f"p_exceed(1e6)={pe:.3f} (need >= 0.99), p_tail(Tr(M)+1e-6)={pt:.3f} (need 1.0)")


@_timed(9, "dichotomy, stable side")
def criterion_9(seed, paths=200, horizon=3000):
    sys = catalog.scalar()
    C = 10.0 * float(np.trace(compute_M(sys)))
    rep = dichotomy_experiment(sys, TimeVarying(PowerApproach(2.0)), horizon, paths, [C], seed,
                               horizons=[horizon], burn_in=499)
    pe = rep.row(C).p_exceed
    return pe <= 0.02, f"p_exceed(10 Tr(M)) over k >= 500: {pe:.3f} (need <= 0.02)"


@_timed(10, "verdict truth table", limit=1.0)
def criterion_10(seed):
    wrong = []
    cases = catalog.verdict_cases()
    for name, sys, model, expected in cases:
        v = stability_verdict(profile_system(sys), classify_series(model))
        got = (v.lower_as.value, v.lower_absolute.value, v.upper_as.value, v.upper_absolute.value)
        if got != expected:
            wrong.append(f"{name}: {got}")
    return not wrong, f"{len(cases) - len(wrong)}/{len(cases)} cases match" + (
        "; " + "; ".join(wrong) if wrong else "")


DETERMINISM_CONFIG = {
    "system": {"A": [[2.0]], "C": [[1.0]], "Q": [[1.0]], "R": [[1.0]]},
    "channel": {"type": "iid", "p": 0.5},
    "run": {"horizon": 400, "num_paths": 20, "master_seed": 7, "C_list": [100.0, 1e6],
            "export_traces": 2},
    "output": {"formats": ["json", "csv"], "figures": True},
}


def _tree(root):
    return sorted(p.relative_to(root) for p in Path(root).rglob("*") if p.is_file())


@_timed(11, "simulate determinism")
def criterion_11(seed):
    import json

    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = dict(DETERMINISM_CONFIG)
        cfg["run"] = dict(cfg["run"], master_seed=seed)
        (tmp / "config.json").write_text(json.dumps(cfg))
        codes = [main(["simulate", "--config", str(tmp / "config.json"), "--out",
                       str(tmp / name), "--quiet"]) for name in ("a", "b")]
        files_a, files_b = _tree(tmp / "a"), _tree(tmp / "b")
        same = files_a == files_b and all(
            filecmp.cmp(tmp / "a" / f, tmp / "b" / f, shallow=False) for f in files_a)
        return codes == [0, 0] and same and bool(files_a), (
            f"exit codes {codes}, {len(files_a)} files, byte-identical: {same}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


def run_all(seed=0, only=None, echo=None):
    results = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        res = crit(seed)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
