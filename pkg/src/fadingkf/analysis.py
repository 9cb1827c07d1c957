"""Stability verdicts from arrival-rate series and Monte Carlo dichotomy runs.

The verdict logic turns convergence of ``sum p_k^l`` and ``sum (1-p_k)^I``
into statements about ``liminf``/``limsup`` of ``Tr(P_k)``. A verdict is
``indeterminate`` whenever the available results do not decide the question;
the analyzer never extrapolates.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import compute_M, solve_dare
from .channels import GilbertElliott, Iid, PowerApproach, PowerDecay, TimeVarying, model_id
from .errors import PairingError
from .kfilter import run_path
from .system_model import Nondegeneracy, observability_index


class Tri(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


class Stability(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INDETERMINATE = "indeterminate"


# Named results used as verdict citations.
LOWER_SUFFICIENT = "absolute lower stability when sum p_k^I_o diverges"
LOWER_INSTABILITY = "lower instability when sum p_k converges"
UPPER_NECESSARY = "upper stability requires sum (1-p_k)^I < inf for some I"
UPPER_ONE_STEP = "one-step observable: upper stability iff sum (1-p_k)^I < inf for some I"
UPPER_NONDEGENERATE = "non-degenerate: upper stability iff sum (1-p_k)^I < inf for some I"
LOWER_ONE_STEP = "one-step observable: lower stability iff sum p_k diverges"


@dataclass
class SeriesClass:
    """Convergence facts about the arrival-rate sequence of a channel.

    ``pk_pow_converges(l)`` answers whether ``sum p_k^l`` converges;
    ``min_I`` is the least I with ``sum (1-p_k)^I < inf`` when one exists.
    """

    family: str
    monotone: bool
    converges_pk: Tri
    exists_I_with_conv_1mp: Tri
    min_I: int | None = None
    explanation: str = ""
    model_id: str = ""
    _pow_rule: object = field(default=None, repr=False)

    def converges_pk_pow(self, l):
        if self._pow_rule is None:
            return Tri.UNKNOWN
        return self._pow_rule(int(l))

    def to_dict(self):
        return {
            "family": self.family,
            "monotone": self.monotone,
            "converges_pk": self.converges_pk.value,
            "converges_pk_pow": {str(l): self.converges_pk_pow(l).value for l in (1, 2, 3, 4)},
            "exists_I_with_conv_1mp": self.exists_I_with_conv_1mp.value,
            "min_I": self.min_I,
            "explanation": self.explanation,
            "model_id": self.model_id,
        }


def _tri(flag):
    return Tri.YES if flag else Tri.NO


def _constant_series(name, c, mid):
    # p_k = c for all k
    pos = c > 0
    return SeriesClass(
        family=name,
        monotone=True,
        converges_pk=_tri(not pos),
        exists_I_with_conv_1mp=_tri(c == 1.0),
        min_I=1 if c == 1.0 else None,
        explanation=f"constant rate {c}",
        model_id=mid,
        _pow_rule=lambda l: _tri(not pos),
    )


def classify_series(model) -> SeriesClass:
    """Exact convergence decisions for the supported closed-form rate families."""
    mid = model_id(model)
    if isinstance(model, Iid):
        return _constant_series("iid", model.p, mid)
    if isinstance(model, TimeVarying):
        fam = model.family
        if isinstance(fam, PowerDecay):
            if fam.c == 0:
                return _constant_series("power_decay", 0.0, mid)
            beta = fam.beta
            return SeriesClass(
                family="power_decay",
                monotone=True,
                converges_pk=_tri(beta > 1),
                exists_I_with_conv_1mp=Tri.NO,
                explanation=f"p_k ~ {fam.c} k^-{beta}: sum p_k^l converges iff l*beta > 1; "
                "1 - p_k -> 1 so no power of it is summable",
                model_id=mid,
                _pow_rule=lambda l: _tri(l * beta > 1),
            )
        if isinstance(fam, PowerApproach):
            if fam.c == 0:
                return _constant_series("power_approach", 1.0, mid)
            alpha = fam.alpha
            min_I = math.floor(1.0 / alpha) + 1
            return SeriesClass(
                family="power_approach",
                monotone=True,
                converges_pk=Tri.NO,
                exists_I_with_conv_1mp=Tri.YES,
                min_I=min_I,
                explanation=f"1 - p_k ~ {fam.c} k^-{alpha}: sum (1-p_k)^I converges iff "
                f"I*alpha > 1, least such I is {min_I}",
                model_id=mid,
                _pow_rule=lambda l: Tri.NO,
            )
        return _constant_series("constant", fam.c, mid)
    if isinstance(model, GilbertElliott):
        if not model.monotone():
            return SeriesClass(
                family="gilbert_elliott",
                monotone=False,
                converges_pk=Tri.UNKNOWN,
                exists_I_with_conv_1mp=Tri.UNKNOWN,
                explanation="k-step arrival rate oscillates (negative second eigenvalue and "
                "non-stationary start); monotone-rate results do not apply",
                model_id=mid,
            )
        # p_k -> p_inf geometrically, so the series behave like constant p_inf
        p_inf = model.rates(10**6)
        p_inf = float(np.clip(p_inf, 0.0, 1.0))
        if model.p_good == model.p_bad:
            p_inf = model.p_good
        out = _constant_series("gilbert_elliott", p_inf, mid)
        out.explanation = f"rates converge geometrically to {p_inf:.6g}"
        if p_inf not in (0.0, 1.0):
            out.exists_I_with_conv_1mp = Tri.NO
            out.min_I = None
        return out
    return SeriesClass(
        family=type(model).__name__,
        monotone=False,
        converges_pk=Tri.UNKNOWN,
        exists_I_with_conv_1mp=Tri.UNKNOWN,
        explanation="unsupported channel model",
        model_id=mid,
    )


@dataclass
class StabilityVerdict:
    lower_as: Stability
    lower_absolute: Stability
    upper_as: Stability
    upper_absolute: Stability
    witnesses: dict
    applicability: dict
    system_id: str = ""
    model_id: str = ""

    def to_dict(self):
        return {
            "lower_as": self.lower_as.value,
            "lower_absolute": self.lower_absolute.value,
            "upper_as": self.upper_as.value,
            "upper_absolute": self.upper_absolute.value,
            "witnesses": self.witnesses,
            "applicability": self.applicability,
            "system_id": self.system_id,
            "model_id": self.model_id,
        }


def stability_verdict(profile, series: SeriesClass) -> StabilityVerdict:
    I_o = profile.obs_index
    one_step = I_o == 1
    nondeg = profile.nondegenerate == Nondegeneracy.YES
    S, U, X = Stability.STABLE, Stability.UNSTABLE, Stability.INDETERMINATE
    witnesses = {}

    if not series.monotone:
        note = {"test": "rate sequence not monotone", "citation": series.explanation}
        return StabilityVerdict(
            X, X, X, X,
            witnesses={k: note for k in ("lower_as", "lower_absolute", "upper_as",
                                         "upper_absolute")},
            applicability={"one_step_observable": one_step, "nondegenerate": nondeg,
                           "monotone_rates": False},
            system_id=profile.system_id,
            model_id=series.model_id,
        )

    # lower side
    pow_conv = series.converges_pk_pow(I_o)
    if pow_conv == Tri.NO:
        lower_abs = lower_as = S
        w = {"test": f"sum p_k^{I_o} = inf",
             "citation": LOWER_ONE_STEP if one_step else LOWER_SUFFICIENT}
        witnesses["lower_absolute"] = witnesses["lower_as"] = w
    elif series.converges_pk == Tri.YES:
        lower_abs = lower_as = U
        w = {"test": "sum p_k < inf", "citation": LOWER_INSTABILITY}
        witnesses["lower_absolute"] = witnesses["lower_as"] = w
    else:
        lower_abs = lower_as = X
        w = {"test": f"sum p_k = inf but sum p_k^{I_o} < inf" if pow_conv == Tri.YES
             else "series undecided",
             "citation": "no available result covers this case"}
        witnesses["lower_absolute"] = witnesses["lower_as"] = w

    # upper side
    if series.exists_I_with_conv_1mp == Tri.NO:
        upper_abs = upper_as = U
        w = {"test": "sum (1-p_k)^I = inf for every I", "citation": UPPER_NECESSARY}
        witnesses["upper_absolute"] = witnesses["upper_as"] = w
    elif series.exists_I_with_conv_1mp == Tri.YES and (one_step or nondeg):
        upper_abs = upper_as = S
        w = {"test": f"sum (1-p_k)^I < inf at I = {series.min_I}",
             "citation": UPPER_ONE_STEP if one_step else UPPER_NONDEGENERATE}
        witnesses["upper_absolute"] = witnesses["upper_as"] = w
    else:
        upper_abs = upper_as = X
        if series.exists_I_with_conv_1mp == Tri.YES:
            w = {"test": f"sum (1-p_k)^I < inf at I = {series.min_I}, but the system is "
                 "degenerate with I_o >= 2",
                 "citation": UPPER_NECESSARY + " (necessary direction only)"}
        else:
            w = {"test": "series undecided: " + (series.explanation or "no closed form"),
                 "citation": "no available result covers this case"}
        witnesses["upper_absolute"] = witnesses["upper_as"] = w

    if lower_as == U and upper_as != U:
        # limsup >= liminf
        upper_as = upper_abs = U
        w = {"test": "sum p_k < inf", "citation": LOWER_INSTABILITY + ", hence upper instability"}
        witnesses["upper_absolute"] = witnesses["upper_as"] = w

    return StabilityVerdict(
        lower_as=lower_as,
        lower_absolute=lower_abs,
        upper_as=upper_as,
        upper_absolute=upper_abs,
        witnesses=witnesses,
        applicability={
            "one_step_observable": one_step,
            "nondegenerate": nondeg,
            "obs_index": I_o,
            "monotone_rates": True,
        },
        system_id=profile.system_id,
        model_id=series.model_id,
    )


# -- Monte Carlo ---------------------------------------------------------------

DEFAULT_HORIZONS = (500, 1000, 3000)
DEFAULT_BAND = 2.0


def _se(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass
class DichotomyRow:
    threshold: float
    horizon: int
    p_exceed: float
    se_exceed: float
    p_tail: float
    se_tail: float
    p_tail_exceed: float
    se_tail_exceed: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class DichotomyReport:
    system_id: str
    model_id: str
    master_seed: int
    num_paths: int
    horizons: list
    thresholds: list
    burn_in: int
    k0_fraction: float
    trace_M: float
    trace_P_bar: float
    reference_threshold: float
    rows: list
    reference_rows: list
    band: float
    dichotomy_consistent: bool
    arrivals_per_path_mean: float
    saturated_paths: int
    m_bound_violations: int
    note: str = ("finite-horizon estimates: p_exceed uses max over k in (burn_in, h], "
                 "p_tail uses min over k >= k0_fraction*h")

    def row(self, threshold, horizon=None, reference=False):
        rows = self.reference_rows if reference else self.rows
        horizon = max(self.horizons) if horizon is None else horizon
        for r in rows:
            if r.horizon == horizon and (reference or r.threshold == float(threshold)):
                return r
        raise KeyError((threshold, horizon))

    def to_dict(self):
        d = dict(self.__dict__)
        d["rows"] = [r.to_dict() for r in self.rows]
        d["reference_rows"] = [r.to_dict() for r in self.reference_rows]
        return d

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["C", "horizon", "p_exceed", "stderr_exceed", "p_tail", "stderr_tail"])
        for r in self.rows:
            w.writerow([repr(r.threshold), r.horizon, repr(r.p_exceed), repr(r.se_exceed),
                        repr(r.p_tail), repr(r.se_tail)])
        return buf.getvalue()


def _near_zero_or_one(p, se, band):
    return p <= band * se or 1.0 - p <= band * se


def dichotomy_experiment(
    sys,
    model,
    horizon,
    num_paths,
    thresholds,
    seed,
    horizons=None,
    burn_in=0,
    k0_fraction=0.5,
    band=DEFAULT_BAND,
    reference_eps=1e-6,
    on_path=None,
) -> DichotomyReport:
    """Fraction of paths whose trace exceeds / returns below each threshold.

    Paths are simulated in covariance-only mode, path ``i`` keyed by
    ``(seed, i)``. For each horizon ``h`` in the ladder the statistics use the
    prefix ``k <= h``. The reference threshold ``Tr(M)(1 + reference_eps)``
    is always evaluated for the tail statistic. ``on_path(i, trace)`` is
    called for every simulated path.
    """
    thresholds = sorted(float(c) for c in thresholds)
    if horizons is None:
        horizons = [h for h in DEFAULT_HORIZONS if h < horizon] + [horizon]
    horizons = sorted({int(h) for h in horizons if 1 <= h <= horizon})
    I_o = observability_index(sys)
    trM = float(np.trace(compute_M(sys, I_o)))
    ref = trM * (1.0 + reference_eps)
    all_c = thresholds + [ref]

    counts = np.zeros((len(all_c), len(horizons), 3), dtype=np.int64)
    arrivals = 0
    saturated = 0
    m_viol = 0
    for i in range(num_paths):
        tr = run_path(sys, model, horizon, seed, path_index=i, obs_index=I_o, trace_M=trM)
        arrivals += int(tr.bits.sum())
        saturated += tr.saturated_at is not None
        m_viol += tr.m_violations
        if on_path is not None:
            on_path(i, tr)
        for ci, c in enumerate(all_c):
            over = tr.exceeds(c)
            for hi, h in enumerate(horizons):
                k0 = max(1, int(math.floor(k0_fraction * h)))
                counts[ci, hi, 0] += bool(over[burn_in:h].any())
                counts[ci, hi, 1] += bool((~over[k0 - 1:h]).any())
                counts[ci, hi, 2] += bool(over[k0 - 1:h].any())

    def make_row(ci, hi, c, h):
        p = counts[ci, hi] / num_paths
        return DichotomyRow(
            threshold=c, horizon=h,
            p_exceed=float(p[0]), se_exceed=_se(p[0], num_paths),
            p_tail=float(p[1]), se_tail=_se(p[1], num_paths),
            p_tail_exceed=float(p[2]), se_tail_exceed=_se(p[2], num_paths),
        )

    rows = [make_row(ci, hi, c, h) for ci, c in enumerate(thresholds)
            for hi, h in enumerate(horizons)]
    ref_rows = [make_row(len(thresholds), hi, ref, h) for hi, h in enumerate(horizons)]
    consistent = all(
        _near_zero_or_one(r.p_exceed, r.se_exceed, band)
        and _near_zero_or_one(r.p_tail, r.se_tail, band)
        for r in rows
    )
    return DichotomyReport(
        system_id=sys.fingerprint,
        model_id=model_id(model),
        master_seed=int(seed),
        num_paths=num_paths,
        horizons=horizons,
        thresholds=thresholds,
        burn_in=burn_in,
        k0_fraction=k0_fraction,
        trace_M=trM,
        trace_P_bar=float(np.trace(solve_dare(sys).P_bar)),
        reference_threshold=ref,
        rows=rows,
        reference_rows=ref_rows,
        band=band,
        dichotomy_consistent=consistent,
        arrivals_per_path_mean=arrivals / num_paths,
        saturated_paths=int(saturated),
        m_bound_violations=int(m_viol),
    )


@dataclass
class ConsistencyCheck:
    name: str
    status: str  # "pass", "tension" or "not-applicable"
    detail: str


@dataclass
class ConsistencyReport:
    checks: list
    caveat: str = "a finite horizon cannot refute an asymptotic claim; 'tension' flags trends only"

    @property
    def all_pass(self):
        return all(c.status != "tension" for c in self.checks)

    def to_dict(self):
        return {"checks": [c.__dict__ for c in self.checks], "all_pass": self.all_pass,
                "caveat": self.caveat}


def _nondecreasing(values, slack):
    return all(b >= a - slack for a, b in zip(values, values[1:]))


def verdict_vs_empirical(verdict: StabilityVerdict, report: DichotomyReport,
                         band=DEFAULT_BAND) -> ConsistencyReport:
    if verdict.system_id != report.system_id or verdict.model_id != report.model_id:
        raise PairingError("verdict and report were computed for different systems or channels")
    checks = []
    H = report.horizons

    def series(attr, c=None, reference=False):
        return [getattr(report.row(c, h, reference), attr) for h in H]

    if verdict.upper_as == Stability.UNSTABLE:
        for c in report.thresholds:
            pe = series("p_exceed", c)
            se = series("se_exceed", c)
            ok = _nondecreasing(pe, 1e-12) and 1.0 - pe[-1] <= band * se[-1] + 0.05
            checks.append(ConsistencyCheck(
                f"upper unstable: exceedance of C={c:g} trends to 1",
                "pass" if ok else "tension", f"p_exceed over horizons {pe}"))
    elif verdict.upper_absolute == Stability.STABLE:
        c = report.thresholds[-1]
        pte = series("p_tail_exceed", c)
        ok = pte[-1] <= 0.05 and _nondecreasing([-v for v in pte], 0.02)
        checks.append(ConsistencyCheck(
            f"upper stable: late exceedance of C={c:g} vanishes",
            "pass" if ok else "tension", f"tail exceedance over horizons {pte}"))

    if verdict.lower_absolute == Stability.STABLE:
        pt = series("p_tail", reference=True)
        ok = pt[-1] == 1.0
        checks.append(ConsistencyCheck(
            "lower stable: every path returns below Tr(M)(1+eps)",
            "pass" if ok else "tension", f"p_tail(C*) over horizons {pt}"))
    elif verdict.lower_as == Stability.UNSTABLE:
        for c in report.thresholds:
            never_back = [1.0 - v for v in series("p_tail", c)]
            ok = _nondecreasing(never_back, 0.02)
            checks.append(ConsistencyCheck(
                f"lower unstable: fraction staying above C={c:g} grows with horizon",
                "pass" if ok else "tension", f"1 - p_tail over horizons {never_back}"))
    if not checks:
        checks.append(ConsistencyCheck("no decided verdict", "not-applicable",
                                       "all verdicts indeterminate"))
    return ConsistencyReport(checks=checks)
