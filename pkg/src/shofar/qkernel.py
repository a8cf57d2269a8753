"""Exact quantum embedding kernels by dense statevector simulation.

Qubit 0 is the most significant bit of the computational-basis index, so a
product state is ``kron(q0, q1, ...)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

MAX_QUBITS = 10


class EmbeddingKind(enum.Enum):
    ANGLE = "angle"
    IQP = "iqp"
    IQP_THEN_ANGLE = "iqp+angle"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "angle": cls.ANGLE,
            "iqp": cls.IQP,
            "iqp+angle": cls.IQP_THEN_ANGLE,
            "iqpangle": cls.IQP_THEN_ANGLE,
            "iqpthenangle": cls.IQP_THEN_ANGLE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InputError(f"unknown embedding kind {value!r}") from None


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: EmbeddingKind
    n_qubits: int

    def __post_init__(self):
        object.__setattr__(self, "kind", EmbeddingKind.parse(self.kind))
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 1:
            raise InputError("n_qubits must be a positive integer")
        if self.n_qubits > MAX_QUBITS:
            raise InputError(f"statevector backend supports at most {MAX_QUBITS} qubits")
        object.__setattr__(self, "n_qubits", int(self.n_qubits))

    @property
    def input_dim(self) -> int:
        return self.n_qubits

    @property
    def dim(self) -> int:
        """Dimension of the computational Hilbert space."""
        return 2**self.n_qubits

    @property
    def id(self) -> str:
        return f"{self.kind.value}-{self.n_qubits}q"


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _check_point(spec: EmbeddingSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise InputError(f"expected a point of length {spec.input_dim}, got shape {x.shape}")
    return x


def _apply_single(state: np.ndarray, gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    psi = state.reshape((2,) * n)
    psi = np.tensordot(gate, psi, axes=([1], [qubit]))
    psi = np.moveaxis(psi, 0, qubit)
    return psi.reshape(-1)


def _z_signs(n: int) -> np.ndarray:
    """(2**n, n) array of Z eigenvalues (+1 for bit 0, -1 for bit 1)."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1 - 2 * bits


def _iqp_state(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    z = _z_signs(n).astype(float)
    phase = z @ x
    for i in range(n):
        for j in range(i + 1, n):
            phase = phase + x[i] * x[j] * z[:, i] * z[:, j]
    return np.exp(1j * phase) / np.sqrt(2.0**n)


def embed(spec: EmbeddingSpec, x) -> np.ndarray:
    """Return the normalized state ``U(x)|0...0>`` as a complex vector."""
    x = _check_point(spec, x)
    n = spec.n_qubits
    if spec.kind is EmbeddingKind.ANGLE:
        state = np.array([1.0 + 0j])
        for xi in x:
            state = np.kron(state, rx(xi)[:, 0])
        return state
    state = _iqp_state(x)
    if spec.kind is EmbeddingKind.IQP_THEN_ANGLE:
        for q, xi in enumerate(x):
            state = _apply_single(state, rx(xi), q, n)
    return state


def embed_all(spec: EmbeddingSpec, X) -> np.ndarray:
    """Stack the embedded states of every row of ``X`` into an (n_points, 2**n) array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise InputError("empty point list")
    return np.stack([embed(spec, x) for x in X])


def kernel_exact(spec: EmbeddingSpec, x, x2) -> float:
    """Overlap ``|<phi(x)|phi(x2)>|**2``; argument order is canonicalized so the result is exactly symmetric."""
    x = _check_point(spec, x)
    x2 = _check_point(spec, x2)
    if tuple(x2) < tuple(x):
        x, x2 = x2, x
    amp = np.vdot(embed(spec, x), embed(spec, x2))
    return float(min(max(abs(amp) ** 2, 0.0), 1.0))


def kernel_matrix_exact(spec: EmbeddingSpec, X, X2=None) -> np.ndarray:
    """Exact kernel matrix between point lists.

    With ``X2`` omitted the result is over ``X`` itself: it is computed on the
    upper triangle, mirrored, and carries an exact unit diagonal.
    """
    phi = embed_all(spec, X)
    if X2 is None:
        gram = np.abs(phi.conj() @ phi.T) ** 2
        K = np.triu(gram, 1)
        K = K + K.T
        np.fill_diagonal(K, 1.0)
    else:
        phi2 = embed_all(spec, X2)
        K = np.abs(phi.conj() @ phi2.T) ** 2
    return np.clip(K, 0.0, 1.0)


def angle_kernel_analytic(X, X2) -> np.ndarray:
    """Closed form of the angle-embedding kernel: product over features of cos^2(dx/2)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    diff = X[:, None, :] - X2[None, :, :]
    return np.prod(np.cos(diff / 2) ** 2, axis=-1)


@dataclass(frozen=True)
class DepolarizingChannel:
    """Uniform depolarizing noise with parameter ``lam`` on a ``d``-dimensional register."""

    lam: float
    d: int

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InputError("depolarizing parameter must lie in [0, 1]")
        d = int(self.d)
        if d != self.d or d < 2 or d & (d - 1):
            raise InputError("d must be a power of two, at least 2")

    @classmethod
    def for_spec(cls, lam: float, spec: EmbeddingSpec) -> "DepolarizingChannel":
        return cls(lam, spec.dim)


def depolarize(k, channel: DepolarizingChannel):
    """Device kernel ``(1 - lam**2) k + lam**2 / d`` for scalars or arrays."""
    lam2 = channel.lam**2
    arr = np.asarray(k, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
        raise InputError("kernel values must lie in [0, 1]")
    out = (1.0 - lam2) * arr + lam2 / channel.d
    if np.ndim(k) == 0:
        return float(out)
    return out
