"""Reference systems and channels used by the verification suite and examples."""

from __future__ import annotations

import math

import numpy as np

from .channels import Iid, PowerApproach, PowerDecay, TimeVarying
from .system_model import LtiSystem


def scalar(a=2.0, c=1.0, q=1.0, r=1.0):
    return LtiSystem(A=[[a]], C=[[c]], Q=[[q]], R=[[r]])


def double_integrator():
    """``A = [[1, 1], [0, 1]]`` observed through its first coordinate (I_o = 2)."""
    return LtiSystem(A=[[1.0, 1.0], [0.0, 1.0]], C=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]])


def degenerate_pair():
    """``diag(2, -2)`` seen through ``[1, 1]``: one quasi-equiblock, not one-step observable."""
    return LtiSystem(A=np.diag([2.0, -2.0]), C=[[1.0, 1.0]], Q=np.eye(2), R=[[1.0]])


def nondegenerate_pair():
    return LtiSystem(A=np.diag([2.0, 3.0]), C=[[1.0, 1.0]], Q=np.eye(2), R=[[1.0]])


def diagonal_full_output(n=2, a=2.0):
    return LtiSystem(A=a * np.eye(n), C=np.eye(n), Q=np.eye(n), R=np.eye(n))


def rotating_three():
    """Three states, full output, one rotating pair."""
    t = 0.7
    A = np.zeros((3, 3))
    A[:2, :2] = 1.1 * np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    A[2, 2] = -1.3
    return LtiSystem(A=A, C=np.eye(3), Q=0.5 * np.eye(3), R=np.diag([1.0, 2.0, 0.5]))


def mixed_four():
    """Four states: a Jordan block and a scaled rotation, two outputs (I_o = 2)."""
    t = 0.4
    A = np.zeros((4, 4))
    A[:2, :2] = [[1.2, 1.0], [0.0, 1.2]]
    A[2:, 2:] = 1.05 * np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    Q = np.diag([1.0, 0.5, 0.2, 1.0])
    return LtiSystem(A=A, C=C, Q=Q, R=np.array([[1.0, 0.2], [0.2, 0.5]]))


def operator_battery():
    """Five systems with n <= 4 for the operator-algebra checks."""
    return {
        "scalar": scalar(),
        "double_integrator": double_integrator(),
        "degenerate_pair": degenerate_pair(),
        "rotating_three": rotating_three(),
        "mixed_four": mixed_four(),
    }


def one_step_battery():
    """Three one-step-observable systems with invertible A."""
    return {
        "scalar": scalar(),
        "diagonal_full_output": diagonal_full_output(),
        "rotating_three": rotating_three(),
    }


def verdict_cases():
    """Six canonical (system, channel) pairs with the expected four-way verdict.

    Expected values are ``(lower_as, lower_absolute, upper_as, upper_absolute)``.
    """
    S, U, X = "stable", "unstable", "indeterminate"
    return [
        ("scalar, iid 0.5", scalar(), Iid(0.5), (S, S, U, U)),
        ("scalar, power_approach 2", scalar(), TimeVarying(PowerApproach(2.0)), (S, S, S, S)),
        ("scalar, power_decay 1", scalar(), TimeVarying(PowerDecay(1.0)), (S, S, U, U)),
        ("scalar, power_decay 2", scalar(), TimeVarying(PowerDecay(2.0)), (U, U, U, U)),
        ("degenerate, power_approach 2", degenerate_pair(), TimeVarying(PowerApproach(2.0)),
         (S, S, X, X)),
        ("non-degenerate, power_approach 2", nondegenerate_pair(),
         TimeVarying(PowerApproach(2.0)), (S, S, S, S)),
    ]
