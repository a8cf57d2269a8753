"""Shot-noise model for kernel estimates from the GATES and SWAP circuits.

A GATES estimate with N shots is ``Bin(N, k)/N``; a SWAP estimate is
``2 Bin(N, (1 + k)/2)/N - 1``. Both are unbiased and subgaussian with scale
``c / (2 sqrt(N))`` where ``c`` is the circuit factor.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError

_ATOL = 1e-12


class CircuitKind(enum.Enum):
    GATES = "GATES"
    SWAP = "SWAP"

    @classmethod
    def parse(cls, value) -> "CircuitKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise InputError(f"unknown circuit kind {value!r}") from None

    @property
    def code(self) -> int:
        return 0 if self is CircuitKind.GATES else 1


@dataclass(frozen=True)
class ShotPlan:
    kind: CircuitKind
    shots: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CircuitKind.parse(self.kind))
        _check_shots(self.shots)
        object.__setattr__(self, "shots", int(self.shots))


@dataclass(frozen=True)
class UncertaintyModel:
    """Subgaussian scale of a kernel-estimate error, optionally widened by extra unbiased noise."""

    sigma0: float
    extra_variance: float = 0.0

    def __post_init__(self):
        if self.sigma0 < 0 or self.extra_variance < 0:
            raise InputError("sigma0 and extra_variance must be nonnegative")

    @classmethod
    def from_plan(cls, plan: ShotPlan, extra_variance: float = 0.0) -> "UncertaintyModel":
        return cls(sigma0(plan.kind, plan.shots), extra_variance)

    @property
    def variance_proxy(self) -> float:
        return self.sigma0**2 + self.extra_variance

    @property
    def scale(self) -> float:
        """Effective subgaussian scale including any extra variance."""
        return math.sqrt(self.variance_proxy)


def _check_shots(shots) -> None:
    if isinstance(shots, bool) or int(shots) != shots or shots < 1:
        raise InputError(f"shots must be a positive integer, got {shots!r}")


def _check_prob(k, name="k_star") -> np.ndarray:
    arr = np.asarray(k, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < -_ATOL) or np.any(arr > 1 + _ATOL):
        raise InputError(f"{name} must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def circuit_factor(kind) -> float:
    return 1.0 if CircuitKind.parse(kind) is CircuitKind.GATES else 2.0


def sigma0(kind, shots: int) -> float:
    _check_shots(shots)
    return circuit_factor(kind) / (2.0 * math.sqrt(shots))


def estimator_variance(kind, k_star: float, shots: int) -> float:
    """Exact variance of the N-shot estimator of ``k_star``."""
    _check_shots(shots)
    k = float(_check_prob(k_star))
    if CircuitKind.parse(kind) is CircuitKind.GATES:
        return k * (1.0 - k) / shots
    return (1.0 - k * k) / shots


def bernoulli_variance_proxy(p: float) -> float:
    """Optimal subgaussian variance proxy of a centered Bernoulli(p) variable.

    Equals ``(p - q) / (2 (ln p - ln q))`` with ``q = 1 - p``. Written as
    ``d / (4 atanh d)`` with ``d = 2p - 1`` so the removable singularity at
    ``p = 1/2`` is handled by a short series.
    """
    p = float(_check_prob(p, "p"))
    if p == 0.0 or p == 1.0:
        return 0.0
    d = 2.0 * p - 1.0
    if abs(d) < 1e-4:
        # d/atanh(d) = 1 - d^2/3 - 4 d^4/45 + O(d^6)
        d2 = d * d
        return 0.25 * (1.0 - d2 / 3.0 - 4.0 * d2 * d2 / 45.0)
    if abs(d) < 0.5:
        return d / (4.0 * math.atanh(d))
    # log form stays finite when p is within rounding of 0 or 1
    return d / (2.0 * (math.log(p) - math.log1p(-p)))


def _binomial_to_estimate(counts: np.ndarray, plan: ShotPlan) -> np.ndarray:
    frac = counts / plan.shots
    if plan.kind is CircuitKind.GATES:
        return frac
    return 2.0 * frac - 1.0


def _success_prob(k: np.ndarray, kind: CircuitKind) -> np.ndarray:
    return k if kind is CircuitKind.GATES else 0.5 * (1.0 + k)


def draw_kernel(k_star: float, plan: ShotPlan, rng: np.random.Generator) -> float:
    k = _check_prob(k_star)
    counts = rng.binomial(plan.shots, _success_prob(k, plan.kind))
    return float(_binomial_to_estimate(np.asarray(counts, dtype=float), plan))


def trial_rng(seed: int, plan: ShotPlan, trial: int = 0) -> np.random.Generator:
    """Generator for one kernel-matrix instantiation.

    The stream depends only on ``(seed, kind, N, trial)``, so adding trials or
    reordering work never changes earlier draws, and every classifier that
    evaluates the same kernel matrix at the same shot count sees the same
    instantiation.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(plan.shots, plan.kind.code, int(trial)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class EstimatedKernelMatrix:
    entries: np.ndarray
    plan: ShotPlan
    seed: int
    same_set: bool = False
    sampled_diagonal: bool = False
    trial: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def counts(self) -> np.ndarray:
        """Recover the integer success counts behind every entry."""
        N = self.plan.shots
        frac = self.entries if self.plan.kind is CircuitKind.GATES else 0.5 * (self.entries + 1.0)
        return np.rint(frac * N).astype(np.int64)


def _draw_from_probs(K: np.ndarray, plan: ShotPlan, rng: np.random.Generator,
                     same_set: bool, sampled_diagonal: bool, batch: int | None) -> np.ndarray:
    p = _success_prob(K, plan.kind)
    if not same_set:
        size = p.shape if batch is None else (batch,) + p.shape
        return _binomial_to_estimate(rng.binomial(plan.shots, p, size=size).astype(float), plan)
    m = K.shape[0]
    iu = np.triu_indices(m, 0 if sampled_diagonal else 1)
    size = iu[0].shape if batch is None else (batch, iu[0].shape[0])
    vals = _binomial_to_estimate(rng.binomial(plan.shots, p[iu], size=size).astype(float), plan)
    out_shape = (m, m) if batch is None else (batch, m, m)
    out = np.zeros(out_shape)
    out[..., iu[0], iu[1]] = vals
    out[..., iu[1], iu[0]] = vals
    if not sampled_diagonal:
        idx = np.arange(m)
        out[..., idx, idx] = 1.0
    return out


def _resolve_rng(rng, seed, plan, trial):
    if rng is not None:
        if seed is not None:
            raise InputError("pass either rng or seed, not both")
        return rng, None
    if seed is None:
        raise InputError("an rng or an integer seed is required")
    if int(seed) < 0 or int(seed) >= 2**64:
        raise InputError("seed must be a 64-bit unsigned integer")
    return trial_rng(seed, plan, trial), int(seed)


def draw_kernel_matrix(K_star, plan: ShotPlan, rng: np.random.Generator | None = None, *,
                       seed: int | None = None, trial: int = 0, same_set: bool | None = None,
                       sampled_diagonal: bool = False) -> EstimatedKernelMatrix:
    """Sample one shot-noise instantiation of a kernel matrix.

    For a same-set square matrix (``same_set``; inferred for symmetric square
    input with unit diagonal) the upper triangle is drawn and mirrored and the
    diagonal is fixed to 1. ``sampled_diagonal=True`` draws the diagonal as
    well, which is what the depolarizing-noise path needs.
    """
    K = _check_prob(K_star, "kernel entries")
    if K.ndim != 2:
        raise InputError("kernel matrix must be two-dimensional")
    if same_set is None:
        same_set = _looks_same_set(K)
    if same_set and K.shape[0] != K.shape[1]:
        raise InputError("same-set sampling requires a square matrix")
    gen, seed_used = _resolve_rng(rng, seed, plan, trial)
    entries = _draw_from_probs(K, plan, gen, same_set, sampled_diagonal, None)
    return EstimatedKernelMatrix(entries, plan, -1 if seed_used is None else seed_used,
                                 same_set=bool(same_set), sampled_diagonal=sampled_diagonal, trial=trial)


def draw_trials(K_star, plan: ShotPlan, seed: int, n_trials: int, *, same_set: bool = False,
                sampled_diagonal: bool = False, first_trial: int = 0) -> np.ndarray:
    """Stack ``n_trials`` independent instantiations into an (n_trials, rows, cols) array.

    Trial ``t`` uses the same stream as ``draw_kernel_matrix(..., seed=seed, trial=t)``.
    """
    K = _check_prob(K_star, "kernel entries")
    out = np.empty((n_trials,) + K.shape)
    for t in range(n_trials):
        gen = trial_rng(seed, plan, first_trial + t)
        out[t] = _draw_from_probs(K, plan, gen, same_set, sampled_diagonal, None)
    return out


def _looks_same_set(K: np.ndarray) -> bool:
    return (K.shape[0] == K.shape[1] and np.array_equal(K, K.T)
            and np.all(np.diag(K) == 1.0))


# persistence

_MAGIC = b"SKEM"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIBIQBBI")


def save_matrix_csv(est: EstimatedKernelMatrix, path) -> None:
    """Write ``row,col,value`` records preceded by a ``#`` provenance line."""
    path = Path(path)
    lines = [
        f"# kind={est.plan.kind.value} shots={est.plan.shots} seed={est.seed} "
        f"rows={est.rows} cols={est.cols} same_set={int(est.same_set)} "
        f"sampled_diagonal={int(est.sampled_diagonal)} trial={est.trial}",
        "row,col,value",
    ]
    for i in range(est.rows):
        for j in range(est.cols):
            lines.append(f"{i},{j},{float(est.entries[i, j])!r}")
    path.write_text("\n".join(lines) + "\n")


def load_matrix_csv(path) -> EstimatedKernelMatrix:
    text = Path(path).read_text().splitlines()
    if len(text) < 2:
        raise ParseError("file is empty or has no header", line=1)
    if not text[0].startswith("#"):
        raise ParseError("missing provenance line", line=1)
    try:
        meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
        plan = ShotPlan(CircuitKind.parse(meta["kind"]), int(meta["shots"]))
        rows, cols = int(meta["rows"]), int(meta["cols"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad provenance line: {exc}", line=1) from None
    if text[1].strip() != "row,col,value":
        raise ParseError("expected header 'row,col,value'", line=2)
    entries = np.full((rows, cols), np.nan)
    for lineno, raw in enumerate(text[2:], start=3):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 3:
            raise ParseError("expected three fields", line=lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("non-numeric field", line=lineno) from None
        if not (0 <= i < rows and 0 <= j < cols):
            raise ParseError(f"index ({i}, {j}) out of range", line=lineno)
        entries[i, j] = v
    if np.isnan(entries).any():
        raise ParseError("missing entries", line=len(text))
    return EstimatedKernelMatrix(entries, plan, int(meta.get("seed", -1)),
                                 same_set=meta.get("same_set") == "1",
                                 sampled_diagonal=meta.get("sampled_diagonal") == "1",
                                 trial=int(meta.get("trial", 0)))


def save_matrix_binary(est: EstimatedKernelMatrix, path) -> None:
    seed = est.seed if est.seed >= 0 else 2**64 - 1
    header = _HEADER.pack(_MAGIC, _VERSION, est.rows, est.cols, est.plan.kind.code,
                          est.plan.shots, seed, int(est.same_set), int(est.sampled_diagonal),
                          est.trial)
    Path(path).write_bytes(header + np.ascontiguousarray(est.entries, dtype="<f8").tobytes())


def load_matrix_binary(path) -> EstimatedKernelMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError("truncated header")
    magic, version, rows, cols, code, shots, seed, same, diag, trial = _HEADER.unpack_from(blob)
    if magic != _MAGIC or version != _VERSION:
        raise ParseError("not an estimated-kernel cache file")
    body = blob[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ParseError("payload size does not match header")
    entries = np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()
    kind = CircuitKind.GATES if code == 0 else CircuitKind.SWAP
    seed = -1 if seed == 2**64 - 1 else seed
    return EstimatedKernelMatrix(entries, ShotPlan(kind, shots), seed,
                                 same_set=bool(same), sampled_diagonal=bool(diag), trial=trial)
