"""Benchmark dataset generators and CSV persistence.

Generators are deterministic in their seed (PCG64). Circles, moons and the
checkerboard end up in ``[0, pi]^2``; Havlicek-style data lives in
``[0, 2 pi]^2`` because its labels are defined through the embedding itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import unitary_group

from .exceptions import GenerationError, InputError, ParseError
from .qkernel import EmbeddingKind, EmbeddingSpec, embed_all

# (train, test) sizes used by the experiment presets
PRESET_SIZES = {
    "circles": (40, 360),
    "havlicek": (40, 40),
    "moons": (50, 350),
    "checkerboard": (100, 300),
}


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    name: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels).astype(int).reshape(-1)
        if self.points.shape[0] != self.labels.shape[0]:
            raise InputError("points and labels have different lengths")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise InputError("labels must be -1 or +1")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx, suffix: str) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        params = dict(self.params, subset=suffix)
        return LabeledDataset(self.points[idx], self.labels[idx], self.name, self.seed, params)

    def unscaled(self) -> np.ndarray:
        """Points mapped back through the recorded min-max rescaling (identity if none)."""
        sc = self.params.get("rescale")
        if not sc:
            return self.points.copy()
        lo, hi = np.array(sc["lo"]), np.array(sc["hi"])
        return lo + self.points / sc["width"] * (hi - lo)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _check_even(m: int) -> None:
    if int(m) != m or m < 2 or m % 2:
        raise InputError("m must be an even integer of at least 2")


def _rescale(X: np.ndarray, width: float = math.pi):
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Y = (X - lo) / span * width
    return Y, {"lo": lo.tolist(), "hi": hi.tolist(), "width": width}


def gen_circles(m: int, noise_sd: float = 0.05, factor: float = 0.5, seed: int = 0,
                rescale: bool = True) -> LabeledDataset:
    """Two concentric circles: outer radius 1 labelled -1, inner radius ``factor`` labelled +1."""
    _check_even(m)
    if not 0 < factor < 1:
        raise InputError("factor must lie in (0, 1)")
    half = m // 2
    ang = np.linspace(0.0, 2.0 * np.pi, half, endpoint=False)
    ring = np.c_[np.cos(ang), np.sin(ang)]
    X = np.vstack([ring, factor * ring])
    y = np.r_[-np.ones(half), np.ones(half)].astype(int)
    if noise_sd > 0:
        X = X + _rng(seed).normal(0.0, noise_sd, X.shape)
    params = {"m": m, "noise_sd": noise_sd, "factor": factor}
    if rescale:
        X, params["rescale"] = _rescale(X)
    return LabeledDataset(X, y, "circles", seed, params)


def gen_moons(m: int, noise_sd: float = 0.05, seed: int = 0, rescale: bool = True) -> LabeledDataset:
    """Two interleaving half circles; the upper moon is labelled -1."""
    _check_even(m)
    half = m // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.c_[np.cos(t), np.sin(t)]
    lower = np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]
    X = np.vstack([upper, lower])
    y = np.r_[-np.ones(half), np.ones(half)].astype(int)
    if noise_sd > 0:
        X = X + _rng(seed).normal(0.0, noise_sd, X.shape)
    params = {"m": m, "noise_sd": noise_sd}
    if rescale:
        X, params["rescale"] = _rescale(X)
    return LabeledDataset(X, y, "moons", seed, params)


def gen_checkerboard(m: int, grid: int = 2, seed: int = 0) -> LabeledDataset:
    """Uniform points in a ``grid x grid`` board over ``[0, pi]^2``; cell (i, j) has label (-1)^(i+j).

    Point ``k`` goes to cell ``k mod grid^2`` (row-major), so cell counts
    differ by at most one.
    """
    if int(grid) != grid or grid < 1:
        raise InputError("grid must be a positive integer")
    if m < grid * grid:
        raise InputError("need at least one point per cell (m >= grid^2)")
    rng = _rng(seed)
    cell = np.arange(m) % (grid * grid)
    i, j = cell // grid, cell % grid
    w = math.pi / grid
    u = rng.random((m, 2))
    X = np.c_[(i + u[:, 0]) * w, (j + u[:, 1]) * w]
    y = np.where((i + j) % 2 == 0, 1, -1)
    return LabeledDataset(X, y, "checkerboard", seed, {"m": m, "grid": grid})


def havlicek_observable(V: np.ndarray) -> np.ndarray:
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    return V.conj().T @ zz @ V


def gen_havlicek(m: int, gap: float = 0.3, seed: int = 0, spec: EmbeddingSpec | None = None,
                 max_candidates: int = 1_000_000) -> LabeledDataset:
    """Labels from ``sign <phi(x)| V^dag (Z x Z) V |phi(x)>`` with a Haar-random ``V``.

    Candidates are uniform in ``[0, 2 pi]^2``; those with expectation inside
    ``(-gap, gap)`` are rejected, and each class stops accepting once it holds
    ``m/2`` points.
    """
    _check_even(m)
    if not 0 < gap < 1:
        raise InputError("gap must lie in (0, 1)")
    spec = spec or EmbeddingSpec(EmbeddingKind.IQP, 2)
    if spec.n_qubits != 2:
        raise InputError("the Havlicek construction here uses two qubits")
    rng = _rng(seed)
    V = unitary_group.rvs(4, random_state=rng)
    O = havlicek_observable(V)
    half = m // 2
    pts = {1: [], -1: []}
    seen = 0
    while len(pts[1]) < half or len(pts[-1]) < half:
        if seen >= max_candidates:
            raise GenerationError(f"only {len(pts[1])}+{len(pts[-1])} of {m} points accepted after "
                                  f"{seen} candidates; try a smaller gap")
        batch = rng.uniform(0.0, 2.0 * np.pi, (256, 2))
        phi = embed_all(spec, batch)
        vals = np.real(np.einsum("ni,ij,nj->n", phi.conj(), O, phi))
        for x, v in zip(batch, vals):
            seen += 1
            if abs(v) < gap:
                continue
            lab = 1 if v > 0 else -1
            if len(pts[lab]) < half:
                pts[lab].append(x)
            if seen >= max_candidates:
                break
    X = np.vstack([np.array(pts[-1]), np.array(pts[1])])
    y = np.r_[-np.ones(half), np.ones(half)].astype(int)
    params = {"m": m, "gap": gap, "embedding": spec.id, "candidates": seen}
    return LabeledDataset(X, y, "havlicek", seed, params)


def havlicek_expectation(ds_seed: int, X, spec: EmbeddingSpec | None = None) -> np.ndarray:
    """Expectation values of the labelling observable for the generator seeded with ``ds_seed``."""
    spec = spec or EmbeddingSpec(EmbeddingKind.IQP, 2)
    V = unitary_group.rvs(4, random_state=_rng(ds_seed))
    phi = embed_all(spec, X)
    return np.real(np.einsum("ni,ij,nj->n", phi.conj(), havlicek_observable(V), phi))


def stratified_split(ds: LabeledDataset, n_test: int, seed: int = 0):
    """Split into ``(train, test)`` keeping class proportions; ``n_test`` points go to test."""
    n = len(ds)
    if not 0 < n_test < n:
        raise InputError("n_test must lie strictly between 0 and the dataset size")
    rng = _rng(seed)
    test_idx = []
    for lab in (-1, 1):
        idx = np.flatnonzero(ds.labels == lab)
        k = int(round(n_test * idx.size / n))
        test_idx.extend(rng.permutation(idx)[:k].tolist())
    # fix rounding so the test set has exactly n_test points
    rest = np.setdiff1d(np.arange(n), test_idx)
    while len(test_idx) < n_test:
        test_idx.append(int(rest[0]))
        rest = rest[1:]
    test_idx = np.sort(np.array(test_idx[:n_test]))
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    return ds.subset(train_idx, "train"), ds.subset(test_idx, "test")


GENERATORS = {
    "circles": gen_circles,
    "moons": gen_moons,
    "checkerboard": gen_checkerboard,
    "havlicek": gen_havlicek,
}


def make_dataset(name: str, m: int, seed: int = 0, **params) -> LabeledDataset:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise InputError(f"unknown dataset {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(m, seed=seed, **params)


def make_train_test(name: str, m_train: int, m_test: int, seed: int = 0, **params):
    """Generate ``m_train + m_test`` points in one draw and split them stratified."""
    total = m_train + m_test
    if name in ("circles", "moons", "havlicek") and total % 2:
        total += 1
    ds = make_dataset(name, total, seed=seed, **params)
    train, test = stratified_split(ds, total - m_train, seed=seed + 1)
    return train, test


# persistence

def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    head = ",".join([f"x{i + 1}" for i in range(ds.dim)] + ["label"])
    rows = [",".join([f"{v:.17g}" for v in x] + [str(int(l))]) for x, l in zip(ds.points, ds.labels)]
    path.write_text("\n".join([head] + rows) + "\n")
    meta = {"name": ds.name, "seed": ds.seed, "params": ds.params}
    _sidecar(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_csv(path) -> LabeledDataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty file", line=1)
    cols = lines[0].strip().split(",")
    d = len(cols) - 1
    if d < 1 or cols[-1] != "label" or cols[:-1] != [f"x{i + 1}" for i in range(d)]:
        raise ParseError("header must be x1,...,xd,label", line=1)
    X, y = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(parts)}", line=lineno)
        try:
            X.append([float(v) for v in parts[:-1]])
            lab = int(parts[-1])
        except ValueError:
            raise ParseError("non-numeric field", line=lineno) from None
        if lab not in (-1, 1):
            raise ParseError(f"label must be -1 or +1, got {parts[-1]!r}", line=lineno)
        y.append(lab)
    if not y:
        raise ParseError("no data rows", line=2)
    name, seed, params = path.stem, -1, {}
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        name, seed, params = meta["name"], meta["seed"], meta.get("params", {})
    return LabeledDataset(np.array(X), np.array(y), name, seed, params)
