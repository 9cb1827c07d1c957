"""LTI plant definition, assumption checks and structural characterization."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, UnobservableError
from .linalg import fingerprint, is_pd, min_eig, numerical_rank, psd_sqrt

RANK_TOL = 1e-9
MAG_TOL = 1e-8
UNSTABLE_TOL = 1e-9
DIAG_COND_CAP = 1e8
SYM_TOL = 1e-12


class Nondegeneracy(str, enum.Enum):
    YES = "yes"
    NO = "no"
    NOT_APPLICABLE = "not-applicable"


def _as_matrix(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a flat list is a single row (e.g. C = [1, 0])
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """``x_{k+1} = A x_k + w_k``, ``y_k = C x_k + v_k`` with noise covariances Q, R.

    ``P0`` is the covariance of the initial state ``x_0``; it defaults to zero.
    Only shapes are checked on construction; see :func:`validate_system`.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        C = _as_matrix(self.C, "C")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        m = C.shape[0]
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        P0 = np.zeros((n, n)) if self.P0 is None else _as_matrix(self.P0, "P0")
        for name, M, k in (("Q", Q, n), ("R", R, m), ("P0", P0, n)):
            if M.shape != (k, k):
                raise DimensionError(f"{name} must be {k}x{k}, got {M.shape}")
        for name, M in (("A", A), ("C", C), ("Q", Q), ("R", R), ("P0", P0)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("A", "C", "Q", "R", "P0")}

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("A", "C", "Q", "R") if k not in d]
        if missing:
            raise DimensionError(f"system is missing fields {missing}")
        return cls(d["A"], d["C"], d["Q"], d["R"], d.get("P0"))

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def fingerprint(self):
        return fingerprint(self.to_dict())

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in ("A", "C", "Q", "R", "P0")}
        d.update(changes)
        return LtiSystem(**d)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def valid(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "valid": self.valid,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "warnings": list(self.warnings),
        }


def observability_matrix(A, C, k):
    blocks = [C]
    for _ in range(k - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def controllability_matrix(A, B):
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _symmetry_check(name, M):
    scale = max(1.0, float(np.abs(M).max()))
    asym = float(np.abs(M - M.T).max())
    return Check(f"{name} symmetric", asym <= SYM_TOL * scale, f"max asymmetry {asym:.3g}")


def validate_system(sys: LtiSystem, tol: float = RANK_TOL) -> ValidationReport:
    """Run every structural check and collect the results.

    Covariance symmetry and definiteness, observability of (C, A),
    controllability of (A, Q^{1/2}) and the requirement that no eigenvalue of
    A lies strictly inside the unit circle.
    """
    report = ValidationReport()
    for name, M in (("Q", sys.Q), ("R", sys.R), ("P0", sys.P0)):
        report.checks.append(_symmetry_check(name, M))
    for name, M in (("Q", sys.Q), ("P0", sys.P0)):
        lam = min_eig(M)
        floor = -tol * max(1.0, float(np.abs(M).max()))
        report.checks.append(Check(f"{name} PSD", lam >= floor, f"min eigenvalue {lam:.6g}"))
    lam_r = min_eig(sys.R)
    report.checks.append(
        Check("R PD", lam_r >= tol and is_pd(sys.R), f"min eigenvalue {lam_r:.6g}")
    )

    O = observability_matrix(sys.A, sys.C, sys.n)
    rank_o, amb_o = numerical_rank(O, tol)
    report.checks.append(Check("(C, A) observable", rank_o == sys.n, f"rank {rank_o}/{sys.n}"))
    if amb_o:
        report.warnings.append("observability rank decision is near the tolerance band")

    Kc = controllability_matrix(sys.A, psd_sqrt(sys.Q))
    rank_c, amb_c = numerical_rank(Kc, tol)
    report.checks.append(
        Check("(A, Q^1/2) controllable", rank_c == sys.n, f"rank {rank_c}/{sys.n}")
    )
    if amb_c:
        report.warnings.append("controllability rank decision is near the tolerance band")

    mags = np.abs(np.linalg.eigvals(sys.A))
    smallest = float(mags.min())
    report.checks.append(
        Check(
            "all modes unstable: |eig(A)| >= 1",
            smallest >= 1.0 - UNSTABLE_TOL,
            f"smallest eigenvalue magnitude {smallest:.6g}",
        )
    )
    return report


def observability_index(sys: LtiSystem, tol: float = RANK_TOL) -> int:
    """Least k such that ``[C; CA; ...; CA^{k-1}]`` has full column rank."""
    for k in range(1, sys.n + 1):
        rank, _ = numerical_rank(observability_matrix(sys.A, sys.C, k), tol)
        if rank == sys.n:
            return k
    raise UnobservableError("(C, A) is not observable: no k <= n gives full column rank")


def _eig_basis(A, cond_cap):
    w, V = np.linalg.eig(A)
    if np.linalg.cond(V) > cond_cap:
        return None
    return w, V


def _group_by_magnitude(w, mag_tol):
    mags = np.abs(w)
    order = sorted(range(len(w)), key=lambda i: (-mags[i], i))
    blocks = []
    for i in order:
        if blocks:
            head = blocks[-1][0]
            if abs(mags[head] - mags[i]) <= mag_tol * max(mags[head], 1.0):
                blocks[-1].append(i)
                continue
        blocks.append([i])
    return [tuple(sorted(b)) for b in blocks]


def quasi_equiblocks(sys: LtiSystem, mag_tol: float = MAG_TOL, cond_cap: float = DIAG_COND_CAP):
    """Group eigen-indices of A into maximal sets of equal eigenvalue magnitude.

    Indices refer to the eigenvalue order returned by ``numpy.linalg.eig``.
    Returns None when A is not (numerically) diagonalizable.
    """
    basis = _eig_basis(sys.A, cond_cap)
    if basis is None:
        return None
    return _group_by_magnitude(basis[0], mag_tol)


def is_nondegenerate(
    sys: LtiSystem,
    tol: float = RANK_TOL,
    mag_tol: float = MAG_TOL,
    cond_cap: float = DIAG_COND_CAP,
) -> Nondegeneracy:
    basis = _eig_basis(sys.A, cond_cap)
    if basis is None:
        return Nondegeneracy.NOT_APPLICABLE
    w, V = basis
    C_eig = sys.C @ V
    for block in _group_by_magnitude(w, mag_tol):
        rank, _ = numerical_rank(C_eig[:, list(block)], tol)
        if rank < len(block):
            return Nondegeneracy.NO
    return Nondegeneracy.YES


@dataclass(frozen=True)
class SystemProfile:
    obs_index: int
    spectral_radius: float
    eigen_magnitudes: tuple
    nondegenerate: Nondegeneracy
    quasi_equiblocks: tuple | None
    system_id: str = ""

    def to_dict(self):
        return {
            "obs_index": self.obs_index,
            "spectral_radius": self.spectral_radius,
            "eigen_magnitudes": list(self.eigen_magnitudes),
            "nondegenerate": self.nondegenerate.value,
            "quasi_equiblocks": None
            if self.quasi_equiblocks is None
            else [list(b) for b in self.quasi_equiblocks],
            "system_id": self.system_id,
        }


def profile_system(
    sys: LtiSystem,
    tol: float = RANK_TOL,
    mag_tol: float = MAG_TOL,
    cond_cap: float = DIAG_COND_CAP,
) -> SystemProfile:
    mags = sorted((float(v) for v in np.abs(np.linalg.eigvals(sys.A))), reverse=True)
    blocks = quasi_equiblocks(sys, mag_tol, cond_cap)
    return SystemProfile(
        obs_index=observability_index(sys, tol),
        spectral_radius=mags[0],
        eigen_magnitudes=tuple(mags),
        nondegenerate=is_nondegenerate(sys, tol, mag_tol, cond_cap),
        quasi_equiblocks=None if blocks is None else tuple(blocks),
        system_id=sys.fingerprint,
    )
