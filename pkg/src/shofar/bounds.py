"""Closed-form shot-count bounds derived from subgaussian tail inequalities.

Every bound comes in a ceilinged integer form and, with ``raw=True``, the
real value before the ceiling. Logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .sampler import CircuitKind, circuit_factor


def _check_delta(delta: float, upper_open: bool = False) -> None:
    ok = 0.0 < delta < 1.0 if upper_open else 0.0 < delta <= 1.0
    if not ok:
        raise InputError(f"delta must lie in (0, 1{')' if upper_open else ']'}, got {delta!r}")


def _finish(value: float, raw: bool):
    if raw:
        return value
    # guard against values like 17.000000000000004 produced by round-off
    r = round(value)
    if abs(value - r) <= 1e-9 * max(1.0, abs(value)):
        return int(r)
    return int(math.ceil(value))


def kappa(delta: float) -> float:
    """Tail quantile ``sqrt(2 ln(1/delta))``."""
    _check_delta(delta)
    return math.sqrt(2.0 * math.log(1.0 / delta))


def n_reliable_point(beta_norm2: float, gamma_x: float, circuit=CircuitKind.GATES,
                     delta: float = 0.01, raw: bool = False):
    """Shots after which one point with margin ``gamma_x`` is classified reliably w.p. 1 - delta."""
    _check_delta(delta)
    if gamma_x == 0:
        raise InputError("a point on the decision boundary cannot be classified reliably")
    c = circuit_factor(circuit)
    return _finish(0.5 * (c * beta_norm2 / abs(gamma_x)) ** 2 * math.log(1.0 / delta), raw)


def n_sg(beta_norm2: float, gamma: float, circuit=CircuitKind.GATES, M: int = 1,
         delta: float = 0.01, raw: bool = False):
    """Shots bounding the classification error by the gamma-margin error over ``M`` points."""
    _check_delta(delta)
    if not gamma > 0:
        raise InputError("gamma must be positive")
    if M < 1:
        raise InputError("M must be at least 1")
    c = circuit_factor(circuit)
    return _finish(c * c / (2.0 * gamma * gamma) * beta_norm2**2 * math.log(M / delta), raw)


def n_sg_worstcase(m_sv: int, C: float, gamma: float, circuit=CircuitKind.GATES, M: int = 1,
                   delta: float = 0.01, raw: bool = False):
    """``n_sg`` with ``||beta||^2`` replaced by its a-priori bound ``m_sv C^2``."""
    if m_sv < 0 or not C > 0:
        raise InputError("m_sv must be nonnegative and C positive")
    return n_sg(math.sqrt(m_sv) * C, gamma, circuit, M, delta, raw)


def n_margin_risk(beta_norm2: float, circuit=CircuitKind.GATES, m: int = 1,
                  delta: float = 0.01, raw: bool = False):
    """Unit-margin specialization of ``n_sg`` over the ``m`` training points."""
    return n_sg(beta_norm2, 1.0, circuit, m, delta, raw)


def n_precise(m_sv: int, M: int, epsilon: float, circuit=CircuitKind.GATES,
              delta: float = 0.01, raw: bool = False):
    """Shots so every needed kernel entry is within ``epsilon`` of exact w.p. 1 - delta."""
    _check_delta(delta)
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    if m_sv < 1 or M < 1:
        raise InputError("m_sv and M must be at least 1")
    c = circuit_factor(circuit)
    n_pairs = m_sv * M
    return _finish(c * c / (2.0 * epsilon**2) * n_pairs * math.log(n_pairs / delta), raw)


def conf_delta(T: int, delta: float, circuit=CircuitKind.GATES) -> float:
    """Half-width ``c kappa(delta) / (2 sqrt(T))`` of the two-sided interval around K*."""
    if T < 1:
        raise InputError("T must be at least 1")
    return circuit_factor(circuit) * kappa(delta) / (2.0 * math.sqrt(T))


def shots_for_conf(delta_conf: float, delta: float, circuit=CircuitKind.GATES) -> int:
    if not delta_conf > 0:
        raise InputError("delta_conf must be positive")
    x = circuit_factor(circuit) * kappa(delta) / (2.0 * delta_conf)
    return max(1, _finish(x * x, False))


def delta_for_conf(half_width: float, T: int, circuit=CircuitKind.GATES) -> float:
    """Largest delta whose interval at ``T`` shots is no wider than ``half_width``."""
    if T < 1 or not half_width > 0:
        raise InputError("T must be at least 1 and half_width positive")
    k = 2.0 * math.sqrt(T) * half_width / circuit_factor(circuit)
    return min(1.0, math.exp(-0.5 * k * k))


def gamma_star(margins, epsilon0: float | None = None, grid=None) -> float:
    """Largest grid value whose gamma-margin error equals the classification error.

    ``margins`` are ``y g(x)`` of the exact classifier on the evaluation set.
    """
    margins = np.asarray(margins, dtype=float)
    if grid is None:
        grid = np.round(np.arange(0.0, 2.0 + 1e-12, 0.01), 10)
    grid = np.sort(np.asarray(grid, dtype=float))
    if epsilon0 is None:
        epsilon0 = float(np.mean(margins < 0.0))
    errs = np.array([np.mean(margins < g) for g in grid])
    ok = np.flatnonzero(np.isclose(errs, epsilon0, rtol=0, atol=1e-12))
    if ok.size == 0:
        raise InputError("no grid value attains the classification error")
    return float(grid[ok[-1]])


@dataclass(frozen=True)
class BoundInputs:
    beta_norm2: float
    gamma: float
    circuit: CircuitKind
    dataset_size: int
    delta_target: float = 0.01
    m_sv: int = 0
    C: float = 1000.0
    epsilon: float = 0.1
    m_train: int = 0


def bound_table(inp: BoundInputs) -> dict:
    """All bounds evaluated on one set of inputs, keyed by name."""
    m_train = inp.m_train or inp.dataset_size
    out = {
        "kappa": kappa(inp.delta_target),
        "n_sg": n_sg(inp.beta_norm2, inp.gamma, inp.circuit, inp.dataset_size, inp.delta_target),
        "n_margin_risk": n_margin_risk(inp.beta_norm2, inp.circuit, m_train, inp.delta_target),
        "shots_for_conf": shots_for_conf(inp.epsilon, inp.delta_target / max(1, m_train), inp.circuit),
    }
    if inp.m_sv >= 1:
        out["n_sg_worstcase"] = n_sg_worstcase(inp.m_sv, inp.C, inp.gamma, inp.circuit,
                                               inp.dataset_size, inp.delta_target)
        out["n_precise"] = n_precise(inp.m_sv, inp.dataset_size, inp.epsilon, inp.circuit,
                                     inp.delta_target)
    return out
