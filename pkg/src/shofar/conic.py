"""Second-order cone programs and the symmetric-matrix helpers they need.

A program minimizes ``c @ x`` subject to blocks of the form ``A x + b in K``
where ``K`` is the zero cone, the nonnegative orthant, or a second-order cone
``{(s0, s1..): s0 >= ||s1..||}``. Solving is delegated to Clarabel; the
certificate fields of the returned solution are recomputed here from the raw
iterate so they do not depend on the backend's own bookkeeping.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .exceptions import InputError, NotPSDError, ParseError


class BlockKind(enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"


@dataclass
class Block:
    kind: BlockKind
    A: np.ndarray
    b: np.ndarray
    label: str = ""

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def violation(self, x: np.ndarray) -> float:
        """Distance-like violation of ``A x + b in K`` (0 when satisfied)."""
        s = self.A @ x + self.b
        if self.kind is BlockKind.ZERO:
            return float(np.max(np.abs(s))) if s.size else 0.0
        if self.kind is BlockKind.NONNEG:
            return float(max(0.0, -np.min(s))) if s.size else 0.0
        return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))


@dataclass
class ConeProgram:
    n_vars: int
    objective: np.ndarray
    blocks: list = field(default_factory=list)
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.objective.shape[0] != self.n_vars:
            raise InputError("objective length must equal n_vars")

    def add(self, kind: BlockKind, A, b, label: str = "") -> Block:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[1] != self.n_vars:
            raise InputError(f"block width {A.shape[1]} != n_vars {self.n_vars}")
        if A.shape[0] != b.shape[0]:
            raise InputError("block A and b have different row counts")
        if kind is BlockKind.SOC and A.shape[0] < 2:
            raise InputError("second-order cone blocks need at least two rows")
        blk = Block(kind, A, b, label)
        self.blocks.append(blk)
        return blk

    def add_zero(self, A, b, label=""):
        return self.add(BlockKind.ZERO, A, b, label)

    def add_nonneg(self, A, b, label=""):
        return self.add(BlockKind.NONNEG, A, b, label)

    def add_soc(self, A, b, label=""):
        return self.add(BlockKind.SOC, A, b, label)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return max((blk.violation(x) for blk in self.blocks), default=0.0)

    def value(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float))

    def to_text(self) -> str:
        """Debug dump, one section per block. Not a stable interchange format."""
        out = [f"cone-program n_vars={self.n_vars}", "[objective]", _fmt_row(self.objective)]
        for blk in self.blocks:
            out.append(f"[block {blk.kind.value} rows={blk.rows} label={blk.label or '-'}]")
            for i in range(blk.rows):
                out.append(f"{_fmt_row(blk.A[i])} | {float(blk.b[i])!r}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConeProgram":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("cone-program n_vars="):
            raise ParseError("missing program header", line=1)
        try:
            n = int(lines[0].split("=", 1)[1])
        except ValueError:
            raise ParseError("bad n_vars", line=1) from None
        if len(lines) < 3 or lines[1] != "[objective]":
            raise ParseError("missing objective section", line=2)
        prog = cls(n, _parse_row(lines[2], 3))
        i = 3
        while i < len(lines):
            head = lines[i]
            if not head.strip():
                i += 1
                continue
            if not head.startswith("[block "):
                raise ParseError("expected a block header", line=i + 1)
            fields = dict(tok.split("=", 1) for tok in head.strip("[]").split()[2:])
            kind = BlockKind(head.split()[1])
            rows = int(fields["rows"])
            A, b = [], []
            for r in range(rows):
                lineno = i + 2 + r
                if lineno > len(lines):
                    raise ParseError("block truncated", line=lineno)
                lhs, _, rhs = lines[lineno - 1].partition("|")
                A.append(_parse_row(lhs, lineno))
                b.append(float(rhs))
            label = fields.get("label", "-")
            prog.add(kind, np.array(A).reshape(rows, n), b, "" if label == "-" else label)
            i += rows + 1
        return prog


def _fmt_row(v) -> str:
    return " ".join(repr(float(a)) for a in v)


def _parse_row(s: str, lineno: int) -> np.ndarray:
    try:
        return np.array([float(t) for t in s.split()])
    except ValueError:
        raise ParseError("non-numeric coefficient", line=lineno) from None


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"


@dataclass
class ConeSolution:
    x: np.ndarray
    objective_value: float
    status: SolveStatus
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int = 0
    z: np.ndarray | None = None
    block_duals: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def _clarabel_cone(kind: BlockKind, rows: int):
    if kind is BlockKind.ZERO:
        return clarabel.ZeroConeT(rows)
    if kind is BlockKind.NONNEG:
        return clarabel.NonnegativeConeT(rows)
    return clarabel.SecondOrderConeT(rows)


def _dual_cone_violation(kind: BlockKind, z: np.ndarray) -> float:
    if kind is BlockKind.ZERO or z.size == 0:
        return 0.0
    if kind is BlockKind.NONNEG:
        return float(max(0.0, -np.min(z)))
    return float(max(0.0, np.linalg.norm(z[1:]) - z[0]))


def _run_clarabel(p: ConeProgram, A, b, cones, inner: float, max_iter: int):
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iter)
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.tol_ktratio = min(1e-6, 100 * inner)
    P = sparse.csc_matrix((p.n_vars, p.n_vars))
    solver = clarabel.DefaultSolver(P, p.objective, sparse.csc_matrix(-A), b, cones, settings)
    return solver.solve()


def _certify(p: ConeProgram, A, b, x, z):
    """Scaled primal residual, dual residual, and duality gap of ``(x, z)``.

    Residuals are measured in the infinity norm relative to ``1 + max`` of
    the terms they balance, the convention interior-point codes use.
    """
    Ax = A @ x
    pres = p.max_violation(x) / (1.0 + max(float(np.max(np.abs(Ax))), float(np.max(np.abs(b)))))
    Atz = A.T @ z
    c = p.objective
    dscale = 1.0 + max(float(np.max(np.abs(c))), float(np.max(np.abs(Atz))))
    dres = float(np.max(np.abs(c - Atz))) / dscale
    off = 0
    duals = []
    for blk in p.blocks:
        zb = z[off: off + blk.rows]
        duals.append(zb)
        dres = max(dres, _dual_cone_violation(blk.kind, zb) / dscale)
        off += blk.rows
    pobj = float(c @ x)
    dobj = -float(b @ z)
    gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
    return pres, dres, gap, duals


def solve(p: ConeProgram, tol: float = 1e-8, max_iter: int = 100_000) -> ConeSolution:
    """Solve ``p`` with an interior-point method and certify the result.

    ``Optimal`` is reported only when the recomputed certificates are within
    ``tol``; a backend success that fails them is retried once at a tighter
    internal tolerance and otherwise reported as ``MaxIter``.
    """
    if not p.blocks or p.n_vars < 1:
        raise InputError("program has no variables or no constraints")
    if not (0 < tol <= 1e-2):
        raise InputError("tol must lie in (0, 1e-2]")
    A = np.vstack([blk.A for blk in p.blocks])
    b = np.concatenate([blk.b for blk in p.blocks])
    cones = [_clarabel_cone(blk.kind, blk.rows) for blk in p.blocks]

    inner = min(tol, 1e-8) * 0.1
    for _attempt in range(2):
        res = _run_clarabel(p, A, b, cones, inner, max_iter)
        x = np.asarray(res.x, dtype=float)
        z = np.asarray(res.z, dtype=float)
        st = str(res.status)
        if "PrimalInfeasible" in st:
            status = SolveStatus.INFEASIBLE
        elif "DualInfeasible" in st:
            status = SolveStatus.UNBOUNDED
        elif st.endswith("Solved"):
            status = SolveStatus.OPTIMAL
        else:
            status = SolveStatus.MAX_ITER
        pres, dres, gap, duals = _certify(p, A, b, x, z)
        if status is not SolveStatus.OPTIMAL or max(pres, dres, gap) <= tol:
            break
        status = SolveStatus.MAX_ITER
        inner *= 0.01
    obj = float(p.objective @ x)
    return ConeSolution(x, obj, status, pres, dres, gap, int(res.iterations), z, duals)


# symmetric matrix utilities

def _round_robin(n: int):
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        rounds.append([(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0])
        players = [players[0], players[-1]] + players[1:-1]
    return [(np.array([a for a, _ in r], dtype=int), np.array([b for _, b in r], dtype=int))
            for r in rounds if r]


def _as_sym(M) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if not np.allclose(M, M.T, atol=1e-12 * scale, rtol=0):
        raise InputError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def jacobi_eigh(M, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations within one round of a round-robin schedule touch disjoint index
    pairs and are applied together. Returns ascending eigenvalues and the
    matching orthonormal eigenvectors as columns.
    """
    A = _as_sym(M)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    total = np.linalg.norm(A)
    if total == 0.0:
        return np.zeros(n), V
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off <= tol * total:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            tau = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            big = np.abs(tau) > 1e150
            tau_s = np.where(big, 1.0, tau)
            t = np.where(tau_s >= 0, 1.0, -1.0) / (np.abs(tau_s) + np.sqrt(1.0 + tau_s * tau_s))
            t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rp, rq = A[P].copy(), A[Q].copy()
            A[P] = c[:, None] * rp - s[:, None] * rq
            A[Q] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vp * c - vq * s
            V[:, Q] = vp * s + vq * c
        A = 0.5 * (A + A.T)
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def min_eig(M) -> float:
    return float(jacobi_eigh(M)[0][0])


def psd_sqrt(M, clip: float = 1e-9) -> np.ndarray:
    """Symmetric square root; eigenvalues in ``[-clip, 0)`` are treated as 0."""
    w, V = jacobi_eigh(M)
    if w[0] < -clip:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} below -{clip:g}", float(w[0]))
    A = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (A + A.T)


def spectral_shift(M) -> np.ndarray:
    """Return ``M - kmin I`` when the smallest eigenvalue ``kmin`` is negative, else ``M``."""
    S = _as_sym(M)
    k = min_eig(S)
    if k < 0:
        return S - k * np.eye(S.shape[0])
    return S


@dataclass
class QuadEpigraph:
    """SOC encoding of ``0.5 b' M b <= t`` as ``||(sqrt2 A b, t - 1)|| <= t + 1``, ``A = M^(1/2)``."""

    root: np.ndarray

    @property
    def dim(self) -> int:
        return self.root.shape[0]

    def block(self, n_vars: int, beta_idx, t_idx: int):
        beta_idx = np.asarray(beta_idx, dtype=int)
        k = self.dim
        if beta_idx.shape[0] != k:
            raise InputError("beta index count does not match the matrix size")
        A = np.zeros((k + 2, n_vars))
        b = np.zeros(k + 2)
        A[0, t_idx] = 1.0
        b[0] = 1.0
        A[1:k + 1, beta_idx] = math.sqrt(2.0) * self.root
        A[k + 1, t_idx] = 1.0
        b[k + 1] = -1.0
        return A, b

    def add_to(self, prog: ConeProgram, beta_idx, t_idx: int, label: str = "quad") -> Block:
        A, b = self.block(prog.n_vars, beta_idx, t_idx)
        return prog.add_soc(A, b, label)

    def satisfied(self, beta, t: float, tol: float = 1e-12) -> bool:
        v = math.sqrt(2.0) * (self.root @ np.asarray(beta, dtype=float))
        lhs = math.sqrt(float(v @ v) + (t - 1.0) ** 2)
        return lhs <= t + 1.0 + tol


def quad_epigraph(M, clip: float = 1e-9) -> QuadEpigraph:
    return QuadEpigraph(psd_sqrt(M, clip))
