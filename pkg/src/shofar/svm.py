"""Nominal primal SVM training and the evaluation metrics used throughout.

The classifier is ``sgn(sum_j beta_j K(x_j, x) + b)``; labels are already
folded into ``beta``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conic
from .exceptions import InputError, NotPSDError, ParseError, SolverError

MODEL_FORMAT_VERSION = 1
VARIANTS = ("nominal", "shofar", "shofar-est", "l1-shofar", "l1-shofar-est")


@dataclass
class SvmModel:
    beta: np.ndarray
    b: float
    C: float
    variant: str = "nominal"
    objective: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.b = float(self.b)
        if not self.C > 0:
            raise InputError("C must be positive")
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}")

    @property
    def m(self) -> int:
        return self.beta.shape[0]

    @property
    def support_threshold(self) -> float:
        return 1e-6 * max(1.0, float(np.max(np.abs(self.beta), initial=0.0)))

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.beta) > self.support_threshold)

    @property
    def m_sv(self) -> int:
        return int(self.support_indices.shape[0])

    @property
    def beta_norm2(self) -> float:
        return float(np.linalg.norm(self.beta))

    @property
    def beta_norm1(self) -> float:
        return float(np.sum(np.abs(self.beta)))

    def to_json(self) -> str:
        rec = {
            "format": "shofar-svm-model",
            "version": MODEL_FORMAT_VERSION,
            "m": self.m,
            "beta": [float(v) for v in self.beta],
            "b": self.b,
            "C": self.C,
            "variant": self.variant,
            "objective": None if np.isnan(self.objective) else self.objective,
            "meta": self.meta,
        }
        return json.dumps(rec, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), line=exc.lineno) from None
        if rec.get("format") != "shofar-svm-model":
            raise ParseError("not a model record")
        if rec.get("version") != MODEL_FORMAT_VERSION:
            raise ParseError(f"unsupported model version {rec.get('version')!r}")
        beta = np.array(rec["beta"], dtype=float)
        if beta.shape[0] != rec["m"]:
            raise ParseError("beta length does not match m")
        obj = rec.get("objective")
        return cls(beta, rec["b"], rec["C"], rec.get("variant", "nominal"),
                   float("nan") if obj is None else float(obj), rec.get("meta", {}))


def save_model(model: SvmModel, path) -> None:
    Path(path).write_text(model.to_json() + "\n")


def load_model(path) -> SvmModel:
    return SvmModel.from_json(Path(path).read_text())


def dataset_hash(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise InputError("labels must be a vector of -1/+1 values")
    return y.astype(float)


def primal_objective(beta, b: float, K, y, C: float) -> float:
    """Hinge-loss objective ``C sum max(0, 1 - y (K beta + b)) + beta' K beta / 2``."""
    beta = np.asarray(beta, dtype=float)
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    hinge = np.maximum(0.0, 1.0 - y * (K @ beta + b))
    return float(C * hinge.sum() + 0.5 * beta @ K @ beta)


@dataclass
class PrimalLayout:
    """Column offsets of the variables in the training programs."""

    m: int
    extra: int = 0

    @property
    def beta(self) -> np.ndarray:
        return np.arange(self.m)

    @property
    def b(self) -> int:
        return self.m

    @property
    def xi(self) -> np.ndarray:
        return np.arange(self.m + 1, 2 * self.m + 1)

    @property
    def t(self) -> int:
        return 2 * self.m + 1

    @property
    def n_vars(self) -> int:
        return 2 * self.m + 2 + self.extra


def build_primal(K, y, C: float, *, quad_matrix=None, margin_coef: float = 0.0,
                 extra: int = 0, label: str = "nominal"):
    """Epigraph form of the hinge-loss SVM as a cone program.

    ``extra`` reserves trailing variables for the robust programs; the hinge
    rows get ``-margin_coef`` on variable ``2m+2`` when ``margin_coef`` is set.
    """
    K = np.asarray(K, dtype=float)
    y = check_labels(y)
    m = y.shape[0]
    if K.shape != (m, m):
        raise InputError("kernel matrix shape does not match labels")
    if not C > 0:
        raise InputError("C must be positive")
    L = PrimalLayout(m, extra)
    c = np.zeros(L.n_vars)
    c[L.xi] = C
    c[L.t] = 1.0
    prog = conic.ConeProgram(L.n_vars, c)
    A = np.zeros((m, L.n_vars))
    A[:, L.xi] = np.eye(m)
    prog.add_nonneg(A, np.zeros(m), "xi>=0")
    H = np.zeros((m, L.n_vars))
    H[:, L.xi] = np.eye(m)
    H[:, L.beta] = y[:, None] * K
    H[:, L.b] = y
    if margin_coef:
        H[:, 2 * m + 2] = -margin_coef
    prog.add_nonneg(H, -np.ones(m), "hinge")
    Q = K if quad_matrix is None else quad_matrix
    try:
        conic.quad_epigraph(Q).add_to(prog, L.beta, L.t)
    except NotPSDError as exc:
        raise NotPSDError(f"{exc}; apply conic.spectral_shift to the kernel matrix first",
                          exc.min_eigenvalue) from None
    prog.names = {"variant": label, "m": m}
    return prog, L


def _solve_checked(prog, tol, max_iter):
    sol = conic.solve(prog, tol=tol, max_iter=max_iter)
    if not sol.ok:
        raise SolverError(f"solver returned {sol.status.value} "
                          f"(residuals {sol.primal_residual:.2e}, {sol.dual_residual:.2e}, gap {sol.gap:.2e})",
                          sol.status)
    return sol


def solve_primal(K, y, C: float = 1000.0, *, tol: float = 1e-8, max_iter: int = 100_000,
                 canonical: bool = True) -> SvmModel:
    """Train the nominal SVM on a PSD kernel matrix.

    When ``K`` is singular the optimal ``beta`` is not unique. With
    ``canonical`` the returned coefficients are ``y * alpha`` where ``alpha``
    are the multipliers of the hinge rows; this point has the same decision
    values and objective and is the sparse representer solution.
    """
    K = np.asarray(K, dtype=float)
    y_f = check_labels(y)
    prog, L = build_primal(K, y_f, C)
    sol = _solve_checked(prog, tol, max_iter)
    beta = sol.x[L.beta]
    b = float(sol.x[L.b])
    if canonical:
        beta, b = _canonical_beta(K, y_f, C, beta, b, sol.block_duals[1])
    model = SvmModel(beta, b, C, "nominal")
    model.objective = primal_objective(beta, b, K, y_f, C)
    model.meta["solver_objective"] = sol.objective_value
    return model


def _canonical_beta(K, y, C, beta, b, hinge_duals):
    """Swap the primal ``(beta, b)`` for the representer point ``(y * alpha, b)``.

    ``alpha`` starts from the hinge-row multipliers. The active set is then
    polished: free support vectors sit exactly on the unit margin, bounded
    ones keep ``alpha = C``, and ``sum y alpha = 0``. The swap is kept only if
    it does not raise the objective beyond round-off.
    """
    alpha = np.clip(hinge_duals, 0.0, C)
    amax = float(alpha.max(initial=0.0))
    S = np.flatnonzero(alpha > 1e-6 * max(1.0, amax))
    if S.size == 0:
        return beta, b
    bounded = S[alpha[S] >= C * (1.0 - 1e-6)]
    free = S[alpha[S] < C * (1.0 - 1e-6)]
    a = np.zeros_like(alpha)
    a[bounded] = C
    if free.size:
        # unknowns: alpha[free], b
        n_f = free.size
        M = np.zeros((n_f + 1, n_f + 1))
        rhs = np.zeros(n_f + 1)
        M[:n_f, :n_f] = y[free, None] * K[np.ix_(free, free)] * y[None, free]
        M[:n_f, n_f] = y[free]
        rhs[:n_f] = 1.0 - y[free] * (K[np.ix_(free, bounded)] @ (y[bounded] * C))
        M[n_f, :n_f] = y[free]
        rhs[n_f] = -float(y[bounded].sum() * C)
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        a[free] = sol[:n_f]
        b_new = float(sol[n_f])
        if np.any(a[free] < 0) or np.any(a[free] > C):
            return beta, b
    else:
        b_new = b
    cand = y * a
    ref = primal_objective(beta, b, K, y, C)
    if primal_objective(cand, b_new, K, y, C) <= ref + 1e-9 * (1.0 + abs(ref)):
        return cand, b_new
    return beta, b


def decision(model: SvmModel, kvec) -> np.ndarray | float:
    """Pre-sign value ``K beta + b`` for one kernel row or a matrix of rows."""
    kvec = np.asarray(kvec, dtype=float)
    if kvec.shape[-1] != model.m:
        raise InputError(f"kernel row length {kvec.shape[-1]} != model size {model.m}")
    g = kvec @ model.beta + model.b
    return float(g) if np.ndim(g) == 0 else g


def sgn(g):
    """Sign with ``sgn(0) = +1``."""
    out = np.where(np.asarray(g) >= 0, 1, -1)
    return int(out) if out.ndim == 0 else out


def classify(model: SvmModel, kvec):
    return sgn(decision(model, kvec))


def gamma_margin_error(model: SvmModel, K_eval, y, gamma: float) -> float:
    """Fraction of points whose margin ``y g(x)`` is strictly below ``gamma``."""
    if gamma < 0:
        raise InputError("gamma must be nonnegative")
    K_eval = np.atleast_2d(np.asarray(K_eval, dtype=float))
    y = check_labels(y)
    if K_eval.shape[0] != y.shape[0]:
        raise InputError("evaluation rows do not match labels")
    margins = y * decision(model, K_eval)
    return float(np.mean(margins < gamma))


def margin_errors_over(margins: np.ndarray, gamma: float) -> float:
    return float(np.mean(np.asarray(margins) < gamma))


def accuracy(predictions, y) -> float:
    predictions = np.asarray(predictions)
    y = np.asarray(y)
    if predictions.shape != y.shape:
        raise InputError("prediction and label lengths differ")
    if predictions.size == 0:
        raise InputError("empty label vectors")
    return float(np.mean(predictions == y))
