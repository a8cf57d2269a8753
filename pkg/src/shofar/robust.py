"""Chance-constrained SVM programs robust to kernel shot noise.

Each hinge row is tightened by ``sigma0 * kappa(delta1/m) * ||beta||`` and the
quadratic term gains a ridge ``sigma0 * kappa(delta2)``. The estimated-kernel
variants further widen both terms by confidence half-widths for a training
matrix sampled with ``T`` shots. ``||beta||`` is the Euclidean norm, or the
l1 norm for the sparse variants.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import bounds, conic
from .exceptions import ConvexityError, InputError, NotPSDError
from .sampler import CircuitKind, sigma0
from .svm import SvmModel, _solve_checked, build_primal, check_labels

CONVEXITY_MARGIN = 1e-9


class NormKind(enum.Enum):
    L2 = "L2"
    L1 = "L1"

    @classmethod
    def parse(cls, value) -> "NormKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InputError(f"unknown norm {value!r}") from None


@dataclass(frozen=True)
class RobustParams:
    shots_classify: int
    delta1: float = 0.01
    delta2: float = 0.01
    norm: NormKind = NormKind.L2
    kind: CircuitKind = CircuitKind.GATES

    def __post_init__(self):
        object.__setattr__(self, "norm", NormKind.parse(self.norm))
        object.__setattr__(self, "kind", CircuitKind.parse(self.kind))
        if int(self.shots_classify) != self.shots_classify or self.shots_classify < 1:
            raise InputError("shots_classify must be a positive integer")
        for name in ("delta1", "delta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InputError(f"{name} must lie in (0, 1)")
        if self.delta1 + self.delta2 >= 1.0:
            raise InputError("delta1 + delta2 must be below 1")

    @property
    def sigma0(self) -> float:
        return sigma0(self.kind, self.shots_classify)

    def margin_coef(self, m: int) -> float:
        """Per-row penalty; the union bound over ``m`` rows gives ``kappa(delta1/m)``."""
        return self.sigma0 * bounds.kappa(self.delta1 / m)

    @property
    def ridge(self) -> float:
        return self.sigma0 * bounds.kappa(self.delta2)


@dataclass(frozen=True)
class EstParams:
    shots_train: int
    delta1p: float
    delta2p: float
    delta_conf: float
    ridge_conf: float

    @classmethod
    def from_shots(cls, T: int, m: int, kind=CircuitKind.GATES,
                   delta1p: float = 0.01, delta2p: float = 0.01) -> "EstParams":
        kind = CircuitKind.parse(kind)
        return cls(int(T), delta1p, delta2p,
                   bounds.conf_delta(T, delta1p / m, kind), bounds.conf_delta(T, delta2p, kind))

    @classmethod
    def from_conf(cls, delta_conf: float, m: int, kind=CircuitKind.GATES,
                  delta1p: float = 0.01, delta2p: float = 0.01) -> "EstParams":
        """Pick the training shots ``T`` whose interval at ``delta1p/m`` is ``delta_conf`` wide."""
        T = bounds.shots_for_conf(delta_conf, delta1p / m, kind)
        return cls.from_shots(T, m, kind, delta1p, delta2p)

    def with_ridge(self, ridge_conf: float, kind=CircuitKind.GATES) -> "EstParams":
        """Raise ``ridge_conf``; ``delta2p`` becomes the largest level that supports it."""
        if ridge_conf <= self.ridge_conf:
            return self
        d2 = bounds.delta_for_conf(ridge_conf, self.shots_train, kind)
        return EstParams(self.shots_train, self.delta1p, d2, self.delta_conf, ridge_conf)


def _check_sym(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError("kernel matrix must be square")
    if not np.allclose(K, K.T, atol=1e-12, rtol=0):
        raise InputError("kernel matrix must be symmetric")
    return 0.5 * (K + K.T)


def _add_norm_epigraph(prog: conic.ConeProgram, m: int, r_idx: int, norm: NormKind,
                       l1_offset: int) -> None:
    n = prog.n_vars
    if norm is NormKind.L2:
        A = np.zeros((m + 1, n))
        A[0, r_idx] = 1.0
        A[1:, :m] = np.eye(m)
        prog.add_soc(A, np.zeros(m + 1), "r>=|beta|2")
        return
    pos = np.arange(l1_offset, l1_offset + m)
    neg = pos + m
    A = np.zeros((2 * m, n))
    A[:m, pos] = np.eye(m)
    A[m:, neg] = np.eye(m)
    prog.add_nonneg(A, np.zeros(2 * m), "beta+-")
    Z = np.zeros((m, n))
    Z[:, :m] = np.eye(m)
    Z[:, pos] = -np.eye(m)
    Z[:, neg] = np.eye(m)
    prog.add_zero(Z, np.zeros(m), "beta=beta+ - beta-")
    R = np.zeros((1, n))
    R[0, r_idx] = 1.0
    R[0, pos] = -1.0
    R[0, neg] = -1.0
    prog.add_nonneg(R, np.zeros(1), "r>=|beta|1")


def _build(K, y, C, margin_coef, ridge, norm):
    m = K.shape[0]
    extra = 1 + (2 * m if norm is NormKind.L1 else 0)
    Q = K + ridge * np.eye(m)
    prog, layout = build_primal(K, y, C, quad_matrix=Q, margin_coef=margin_coef, extra=extra)
    r_idx = 2 * m + 2
    _add_norm_epigraph(prog, m, r_idx, norm, 2 * m + 3)
    prog.names.update(margin_coef=margin_coef, ridge=ridge, norm=norm.value)
    return prog, layout


def build_shofar(K_star, y, C: float, p: RobustParams):
    """Robust program on the exact training kernel. Returns ``(program, layout)``."""
    K = _check_sym(K_star)
    y = check_labels(y)
    k = conic.min_eig(K)
    if k < -1e-9:
        raise NotPSDError("exact kernel matrix is not PSD", k)
    m = y.shape[0]
    prog, layout = _build(K, y, C, p.margin_coef(m), p.ridge, p.norm)
    prog.names["variant"] = variant_name(p, est=False)
    return prog, layout


def ensure_convexity(K_hat, p: RobustParams, T: int | None = None) -> float:
    """Smallest extra ridge making ``K_hat + (sampling ridge + extra) I`` PSD; 0 if none is needed.

    ``T`` is accepted for symmetry with the estimated-kernel parameters; the
    result does not depend on it.
    """
    K = _check_sym(K_hat)
    need = -conic.min_eig(K) - p.ridge
    return need + CONVEXITY_MARGIN if need > 0 else 0.0


def build_shofar_est(K_hat, y, C: float, p: RobustParams, e: EstParams):
    """Robust program on a ``T``-shot estimate of the training kernel."""
    K = _check_sym(K_hat)
    y = check_labels(y)
    m = y.shape[0]
    required = ensure_convexity(K, p)
    if e.ridge_conf + 1e-15 < required - CONVEXITY_MARGIN:
        raise ConvexityError(f"ridge_conf {e.ridge_conf:.4g} too small; at least {required:.4g} "
                             "is needed for a convex program", required)
    margin = p.margin_coef(m) + e.delta_conf
    ridge = p.ridge + e.ridge_conf
    prog, layout = _build(K, y, C, margin, ridge, p.norm)
    prog.names["variant"] = variant_name(p, est=True)
    return prog, layout


def variant_name(p: RobustParams, est: bool) -> str:
    base = "shofar-est" if est else "shofar"
    return ("l1-" + base) if p.norm is NormKind.L1 else base


def robust_objective(beta, b: float, K, y, C: float, margin_coef: float, ridge: float,
                     norm=NormKind.L2) -> float:
    """Value of the robust objective at a given ``(beta, b)``."""
    beta = np.asarray(beta, dtype=float)
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(beta) if NormKind.parse(norm) is NormKind.L2 else np.abs(beta).sum()
    hinge = np.maximum(0.0, 1.0 + margin_coef * r - y * (K @ beta + b))
    return float(C * hinge.sum() + 0.5 * beta @ (K + ridge * np.eye(len(beta))) @ beta)


def train_robust(K, y, C: float, p: RobustParams, e: EstParams | None = None, *,
                 auto_ridge: bool = True, tol: float = 1e-8, max_iter: int = 100_000) -> SvmModel:
    """Solve ShofaR (``e is None``) or ShofaR-Est and wrap the result as a model.

    With ``auto_ridge`` an estimated kernel whose ridge is too small has its
    ``ridge_conf`` raised to the required value (``delta2p`` shrinks to match)
    instead of raising ``ConvexityError``.
    """
    y_f = check_labels(y)
    m = y_f.shape[0]
    if e is None:
        prog, L = build_shofar(K, y_f, C, p)
    else:
        if auto_ridge:
            e = e.with_ridge(ensure_convexity(K, p), p.kind)
        prog, L = build_shofar_est(K, y_f, C, p, e)
    sol = _solve_checked(prog, tol, max_iter)
    beta = sol.x[L.beta].copy()
    b = float(sol.x[L.b])
    margin = prog.names["margin_coef"]
    ridge = prog.names["ridge"]
    model = SvmModel(beta, b, C, prog.names["variant"])
    model.objective = robust_objective(beta, b, K, y_f, C, margin, ridge, p.norm)
    model.meta.update(
        solver_objective=sol.objective_value,
        shots_classify=p.shots_classify, delta1=p.delta1, delta2=p.delta2,
        norm=p.norm.value, circuit=p.kind.value, margin_coef=margin, ridge=ridge, m=m,
    )
    if e is not None:
        model.meta.update(shots_train=e.shots_train, delta1p=e.delta1p, delta2p=e.delta2p,
                          delta_conf=e.delta_conf, ridge_conf=e.ridge_conf)
    return model


def coefficient_table(p: RobustParams, m: int, e: EstParams | None = None) -> dict:
    out = {"sigma0": p.sigma0, "margin_coef": p.margin_coef(m), "ridge": p.ridge}
    if e is not None:
        out["margin_coef"] += e.delta_conf
        out["ridge"] += e.ridge_conf
    out["kappa_row"] = bounds.kappa(p.delta1 / m)
    out["kappa_ridge"] = bounds.kappa(p.delta2)
    out["inv_sqrt_N"] = 1.0 / math.sqrt(p.shots_classify)
    return out
