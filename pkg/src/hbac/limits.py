"""Closed-form cooling limits of the PPA.

All quantities depend on the bath polarization only through
``x = m * d * atanh(eps_b)``, which keeps large registers finite:
``eps_max = tanh(x)`` and ``delta_max = 1 - eps_max = 2 / (exp(2x) + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SystemShape


def _check_eps(eps_b: float):
    if not 0 <= eps_b <= 1:
        raise ValueError(f"eps_b must lie in [0, 1], got {eps_b}")


def _log_ratio(eps_b: float) -> float:
    """ln((1+e)/(1-e)) = 2 atanh(e); infinite at e = 1."""
    return math.inf if eps_b == 1 else 2 * math.atanh(eps_b)


@dataclass(frozen=True)
class SteadyState:
    Q: float
    A1: float
    diag: np.ndarray


def steady_state(shape: SystemShape, eps_b: float) -> SteadyState:
    """Fixed point of the computational-qubit diagonal: A1 * Q**i, i < 2d.

    The normalization is A1 = (1 - Q) / (1 - Q**(2d)).  The often-quoted
    form with an extra 1/Q in A1 does not sum to one.
    """
    _check_eps(eps_b)
    n = shape.comp_dim
    if eps_b == 0:
        return SteadyState(1.0, 1.0 / n, np.full(n, 1.0 / n))
    if eps_b == 1:
        diag = np.zeros(n)
        diag[0] = 1.0
        return SteadyState(0.0, 1.0, diag)
    log_q = -shape.m * _log_ratio(eps_b)
    Q = math.exp(log_q)
    A1 = math.expm1(log_q) / math.expm1(n * log_q)
    diag = A1 * np.exp(log_q * np.arange(n))
    return SteadyState(Q, A1, diag)


def epsilon_max(shape: SystemShape, eps_b: float) -> float:
    """Maximum target polarization ((1+e)^md - (1-e)^md) / ((1+e)^md + (1-e)^md)."""
    _check_eps(eps_b)
    if eps_b == 1:
        return 1.0
    return math.tanh(shape.m * shape.d * math.atanh(eps_b))


def delta_max(shape: SystemShape, eps_b: float) -> float:
    """Distance of the maximum target polarization from 1."""
    _check_eps(eps_b)
    if eps_b == 1:
        return 0.0
    x = shape.m * shape.d * _log_ratio(eps_b)
    # 2/(e^x + 1) written so that e^x never overflows
    return 2 * math.exp(-x) / (1 + math.exp(-x))


def steady_state_target_polarization(state: SteadyState) -> float:
    h = state.diag.size // 2
    return float(state.diag[:h].sum() - state.diag[h:].sum())


def epsilon_max_curve(n_list, eps_b_grid, m: int = 1) -> list[dict]:
    """Rows (n, m, d, eps_b, eps_max, delta_max) for qubit registers of size n."""
    rows = []
    for n in n_list:
        if n < m + 2:
            raise ValueError(f"register of {n} qubits too small for m={m}")
        shape = SystemShape.from_qubits(n, m)
        for e in eps_b_grid:
            rows.append(
                {
                    "n": n,
                    "m": m,
                    "d": shape.d,
                    "eps_b": float(e),
                    "eps_max": epsilon_max(shape, e),
                    "delta_max": delta_max(shape, e),
                }
            )
    return rows
