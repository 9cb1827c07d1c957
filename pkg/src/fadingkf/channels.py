"""Packet-arrival processes ``gamma_k`` and their rates ``p_k = E[gamma_k]``.

Three families are provided: i.i.d. Bernoulli arrivals, independent arrivals
with a monotone time-varying rate and the two-state Gilbert-Elliott Markov
channel. Time is 1-based: ``bits[k - 1]`` is ``gamma_k``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import fingerprint
from .seeding import Stream, generator


class ChannelError(ValueError):
    pass


def _prob(name, value):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ChannelError(f"{name} must lie in [0, 1], got {value}")
    return value


# -- rate families for the time-varying channel ------------------------------

@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        _prob("c", self.c)

    def raw(self, k):
        return np.full(np.shape(k), self.c, dtype=float)

    def monotone(self):
        return True


@dataclass(frozen=True)
class PowerApproach:
    """``p_k = 1 - c k^-alpha``: arrivals become certain."""

    alpha: float
    c: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ChannelError("power_approach needs alpha > 0")
        if self.c < 0:
            raise ChannelError("power_approach needs c >= 0")

    def raw(self, k):
        return 1.0 - self.c * np.asarray(k, dtype=float) ** -self.alpha

    def monotone(self):
        return True


@dataclass(frozen=True)
class PowerDecay:
    """``p_k = c k^-beta``: arrivals die out."""

    beta: float
    c: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ChannelError("power_decay needs beta > 0")
        if self.c < 0:
            raise ChannelError("power_decay needs c >= 0")

    def raw(self, k):
        return self.c * np.asarray(k, dtype=float) ** -self.beta

    def monotone(self):
        return True


FAMILIES = {"constant": Constant, "power_approach": PowerApproach, "power_decay": PowerDecay}


# -- channel models ------------------------------------------------------------

@dataclass(frozen=True)
class Iid:
    p: float
    kind = "iid"

    def __post_init__(self):
        _prob("p", self.p)

    def rates(self, k):
        return np.full(np.shape(k), self.p, dtype=float)

    def monotone(self):
        return True

    def _draw(self, rng, num, horizon):
        return rng.random((num, horizon)) < self.p

    def to_dict(self):
        return {"type": "iid", "p": self.p}


@dataclass(frozen=True)
class TimeVarying:
    family: Constant | PowerApproach | PowerDecay
    kind = "time_varying"

    def __post_init__(self):
        raw = float(self.family.raw(1))
        if not 0.0 <= raw <= 1.0:
            warnings.warn(
                f"rate formula gives p_1 = {raw:.4g}; values are clamped to [0, 1]",
                stacklevel=3,
            )

    def rates(self, k):
        return np.clip(self.family.raw(k), 0.0, 1.0)

    def monotone(self):
        return self.family.monotone()

    def _draw(self, rng, num, horizon):
        p = self.rates(np.arange(1, horizon + 1))
        return rng.random((num, horizon)) < p

    def to_dict(self):
        name = {v: k for k, v in FAMILIES.items()}[type(self.family)]
        return {"type": "time_varying", "family": name, **asdict(self.family)}


@dataclass(frozen=True)
class GilbertElliott:
    """Two-state Markov channel; state 0 is good, 1 is bad.

    ``q_gb`` is P(good -> bad) and ``q_bg`` P(bad -> good). ``initial`` is
    ``"stationary"``, ``"good"``, ``"bad"`` or the probability of starting good.
    """

    q_gb: float
    q_bg: float
    p_good: float
    p_bad: float
    initial: str | float = "stationary"
    kind = "gilbert_elliott"

    def __post_init__(self):
        for name in ("q_gb", "q_bg"):
            v = _prob(name, getattr(self, name))
            if not 0.0 < v < 1.0:
                raise ChannelError(f"{name} must be in (0, 1) for an ergodic chain")
        _prob("p_good", self.p_good)
        _prob("p_bad", self.p_bad)
        self.initial_good()

    @property
    def stationary_good(self):
        return self.q_bg / (self.q_gb + self.q_bg)

    @property
    def second_eigenvalue(self):
        return 1.0 - self.q_gb - self.q_bg

    def initial_good(self):
        init = self.initial
        if init == "stationary":
            return self.stationary_good
        if init == "good":
            return 1.0
        if init == "bad":
            return 0.0
        if isinstance(init, str):
            raise ChannelError(f"unknown initial state {init!r}")
        return _prob("initial", init)

    def good_probability(self, k):
        k = np.asarray(k, dtype=float)
        pi = self.stationary_good
        return pi + (self.initial_good() - pi) * self.second_eigenvalue ** (k - 1)

    def rates(self, k):
        g = self.good_probability(k)
        return g * self.p_good + (1.0 - g) * self.p_bad

    def monotone(self):
        return self.second_eigenvalue >= 0 or self.initial_good() == self.stationary_good

    def _draw(self, rng, num, horizon):
        u = rng.random((num, horizon + 1, 2))
        bad = u[:, 0, 1] >= self.initial_good()
        bits = np.empty((num, horizon), dtype=bool)
        for t in range(horizon):
            p = np.where(bad, self.p_bad, self.p_good)
            bits[:, t] = u[:, t + 1, 0] < p
            flip = u[:, t + 1, 1] < np.where(bad, self.q_bg, self.q_gb)
            bad = bad ^ flip
        return bits

    def to_dict(self):
        return {
            "type": "gilbert_elliott",
            "q_gb": self.q_gb,
            "q_bg": self.q_bg,
            "p_good": self.p_good,
            "p_bad": self.p_bad,
            "initial": self.initial,
        }


DropModel = Iid | TimeVarying | GilbertElliott


def model_from_dict(d) -> DropModel:
    d = dict(d)
    kind = d.pop("type", None)
    try:
        if kind == "iid":
            return Iid(d["p"])
        if kind == "time_varying":
            fam = d.pop("family")
            if fam not in FAMILIES:
                raise ChannelError(f"unknown rate family {fam!r}")
            return TimeVarying(FAMILIES[fam](**d))
        if kind == "gilbert_elliott":
            return GilbertElliott(**d)
    except (KeyError, TypeError) as exc:
        raise ChannelError(f"bad channel description: {exc}") from None
    raise ChannelError(f"unknown channel type {kind!r}")


def model_id(model):
    return fingerprint(model.to_dict())


@dataclass
class ArrivalPath:
    bits: np.ndarray
    seed: int
    model: DropModel
    path_index: int = 0

    @property
    def horizon(self):
        return len(self.bits)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma"])
        w.writerows([[int(b)] for b in self.bits])
        return buf.getvalue()


def sample_path(model, horizon, seed, path_index=0) -> ArrivalPath:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = generator(seed, path_index, Stream.CHANNEL)
    bits = model._draw(rng, 1, horizon)[0].astype(np.int8)
    return ArrivalPath(bits=bits, seed=int(seed), model=model, path_index=path_index)


def arrival_rate(model, k):
    """``p_k = E[gamma_k]`` for 1-based k (scalar or array)."""
    if np.any(np.asarray(k) < 1):
        raise ValueError("time index starts at 1")
    out = model.rates(k)
    return float(out) if np.ndim(out) == 0 else out


# -- dependence diagnostic -----------------------------------------------------

@dataclass
class MixingDiagnostic:
    lags: list
    f_hat: list
    stderr: list
    window: int
    samples: int
    excluded_events: int
    low_confidence: bool
    summary: str
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def empirical_mixing(model, n_lags=10, window=2, samples=100_000, seed=0, min_prob=0.01):
    """Monte Carlo estimate of the dependence coefficient at lags ``1..n_lags``.

    For lag ``n`` the past events are cylinders on ``gamma_1..gamma_w`` and the
    future events cylinders on ``gamma_{w+n}..gamma_{2w+n-1}``. The estimate
    is the largest ``|P(A and B) - P(A)P(B)| / (P(A)P(B))`` over event pairs
    whose probabilities are at least ``min_prob``. This can only show that a
    sample is consistent with mixing; it never certifies it.
    """
    if not 1 <= window <= 3:
        raise ValueError("window must be 1, 2 or 3")
    w = window
    length = 2 * w + n_lags - 1
    bits = model._draw(generator(seed, 0, Stream.MIXING), samples, length).astype(np.int64)
    weights = 1 << np.arange(w)[::-1]
    codes_a = bits[:, :w] @ weights
    n_cells = 1 << w
    p_a = np.bincount(codes_a, minlength=n_cells) / samples
    f_hat, se = [], []
    excluded = 0
    for n in range(1, n_lags + 1):
        start = w + n - 1
        codes_b = bits[:, start:start + w] @ weights
        p_b = np.bincount(codes_b, minlength=n_cells) / samples
        joint = np.bincount(codes_a * n_cells + codes_b, minlength=n_cells**2)
        joint = joint.reshape(n_cells, n_cells) / samples
        ok_a = p_a >= min_prob
        ok_b = p_b >= min_prob
        excluded = max(excluded, int((~ok_a).sum() + (~ok_b).sum()))
        if not ok_a.any() or not ok_b.any():
            f_hat.append(math.nan)
            se.append(math.nan)
            continue
        prod = np.outer(p_a, p_b)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(joint - prod) / prod
            ratio_se = np.sqrt(joint * (1.0 - joint) / samples) / prod
        mask = np.outer(ok_a, ok_b)
        ratio = np.where(mask, ratio, -1.0)
        i = np.unravel_index(np.argmax(ratio), ratio.shape)
        f_hat.append(float(ratio[i]))
        se.append(float(ratio_se[i]))

    finite = [(f, s) for f, s in zip(f_hat, se) if math.isfinite(f)]
    low = not finite
    notes = []
    if excluded:
        notes.append(f"{excluded} cylinder events had probability below {min_prob} and were excluded")
    if low:
        summary = "low confidence: no admissible event pairs"
    else:
        tail = finite[-max(1, len(finite) // 3):]
        settled = all(f <= 3.0 * s + 1e-12 for f, s in tail)
        summary = "consistent with mixing" if settled else "dependence not yet decayed at largest lag"
    return MixingDiagnostic(
        lags=list(range(1, n_lags + 1)),
        f_hat=f_hat,
        stderr=se,
        window=w,
        samples=samples,
        excluded_events=excluded,
        low_confidence=low,
        summary=summary,
        notes=notes,
    )
