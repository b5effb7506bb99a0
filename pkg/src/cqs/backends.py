"""Dense and symbolic state backends with a common overlap interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .pauli import (
    PauliString,
    ProductState,
    apply_to_basis,
    expectation_product_state,
    pauli_mul,
)

__all__ = [
    "DenseState",
    "SymbolicState",
    "DenseOperatorMatrix",
    "PauliSum",
    "overlap",
    "haar_unitary",
    "evolve_exp",
    "apply_pauli_dense",
    "apply_gate",
    "as_rng",
]

DENSE_MAX_QUBITS = 14
SYMBOLIC_MAX_QUBITS = 1024


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_dense_n(n: int):
    if n > DENSE_MAX_QUBITS:
        raise ValueError(f"dense backend limited to n <= {DENSE_MAX_QUBITS}, got {n}")


@dataclass(frozen=True, eq=False)
class DenseState:
    """Statevector on ``n`` qubits (``2**n`` amplitudes)."""

    n: int
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        _check_dense_n(self.n)
        a = np.array(self.amplitudes, dtype=complex).ravel()
        if a.size != 1 << self.n:
            raise ValueError(f"expected {1 << self.n} amplitudes, got {a.size}")
        if self.normalized and abs(np.linalg.norm(a) - 1.0) > 1e-10:
            raise ValueError("state flagged normalized but norm differs from 1")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_vector(cls, v, normalize: bool = False) -> "DenseState":
        v = np.asarray(v, dtype=complex).ravel()
        if normalize:
            v = v / np.linalg.norm(v)
        n = int(round(np.log2(v.size)))
        return cls(n, v)

    @classmethod
    def basis(cls, n: int, index: int = 0) -> "DenseState":
        v = np.zeros(1 << n, dtype=complex)
        v[index] = 1.0
        return cls(n, v)

    @classmethod
    def from_product(cls, s: ProductState) -> "DenseState":
        return cls(s.n, s.dense())

    def vector(self) -> np.ndarray:
        return self.amplitudes


@dataclass(frozen=True, eq=False)
class SymbolicState:
    """State ``scale * op |base>`` with ``base`` a product state."""

    base: ProductState
    op: PauliString
    scale: complex = 1.0

    def __post_init__(self):
        if self.op.n != self.base.n:
            raise ValueError("operator and base state qubit counts differ")
        if self.base.n > SYMBOLIC_MAX_QUBITS:
            raise ValueError(f"symbolic backend limited to n <= {SYMBOLIC_MAX_QUBITS}")
        object.__setattr__(self, "scale", complex(self.scale))

    @property
    def n(self) -> int:
        return self.base.n

    def to_dense(self) -> DenseState:
        v = apply_pauli_dense(self.op, self.base.dense()) * self.scale
        return DenseState(self.n, v, normalized=abs(abs(self.scale) - 1) < 1e-12)


@dataclass(frozen=True, eq=False)
class DenseOperatorMatrix:
    """Dense ``dim x dim`` operator, optionally flagged Hermitian."""

    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        dim = m.shape[0]
        if dim > 1 << DENSE_MAX_QUBITS:
            raise ValueError(f"dense backend limited to n <= {DENSE_MAX_QUBITS}")
        if self.hermitian and dim and np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("matrix flagged hermitian but is not")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self):
        d = self.dim
        return d.bit_length() - 1 if d & (d - 1) == 0 else None

    def dagger(self) -> "DenseOperatorMatrix":
        return DenseOperatorMatrix(self.entries.conj().T, self.hermitian)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.entries @ v

    def apply_adjoint(self, v: np.ndarray) -> np.ndarray:
        return self.entries.conj().T @ v

    @cached_property
    def eigh(self):
        if not self.hermitian:
            raise ValueError("eigendecomposition requires a hermitian operator")
        return np.linalg.eigh(self.entries)

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))


@dataclass(frozen=True)
class PauliSum:
    """Linear combination ``sum_t c_t P_t`` of Pauli strings."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple((complex(c), p) for c, p in self.terms)
        if len({p.n for _, p in terms}) > 1:
            raise ValueError("all Pauli terms must share n")
        object.__setattr__(self, "terms", terms)

    @property
    def n(self):
        return self.terms[0][1].n if self.terms else None

    def adjoint(self) -> "PauliSum":
        return PauliSum(tuple((np.conj(c), p.adjoint()) for c, p in self.terms))

    def matrix(self) -> np.ndarray:
        return sum(c * p.matrix() for c, p in self.terms)


def apply_pauli_dense(p: PauliString, v: np.ndarray) -> np.ndarray:
    """``p @ v`` for a dense vector (or a stack of row vectors)."""
    v = np.asarray(v)
    dim = v.shape[-1]
    idx = np.arange(dim, dtype=np.uint64)
    sign = 1 - 2 * (np.bitwise_count(idx & np.uint64(p.z)) & 1).astype(np.int64)
    c = (1, 1j, -1, -1j)[p.xz_phase()]
    out = np.empty(v.shape, dtype=complex)
    out[..., idx ^ np.uint64(p.x)] = c * sign * v
    return out


def apply_gate(psi: np.ndarray, U: np.ndarray, qubits, n: int) -> np.ndarray:
    """Apply a ``2^k x 2^k`` gate to ``qubits`` (qubit 0 is the most significant bit)."""
    k = len(qubits)
    t = psi.reshape([2] * n)
    t = np.moveaxis(t, list(qubits), list(range(k)))
    sh = t.shape
    t = (U @ t.reshape(1 << k, -1)).reshape(sh)
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return t.reshape(-1)


def _operator_terms(O):
    """Normalise an operator expression into ``[(coeff, term)]``.

    ``term`` is a PauliString, a DenseOperatorMatrix, or None for identity.
    """
    if O is None:
        return [(1.0, None)]
    if isinstance(O, (PauliString, DenseOperatorMatrix)):
        return [(1.0, O)]
    if isinstance(O, PauliSum):
        return list(O.terms)
    if hasattr(O, "terms"):  # DecomposedOperator
        return [(c, t) for c, t in O.terms]
    if isinstance(O, np.ndarray):
        return [(1.0, DenseOperatorMatrix(O))]
    return [(c, t) for c, t in O]


def _apply_dense_term(t, v):
    if t is None:
        return v
    if isinstance(t, PauliString):
        return apply_pauli_dense(t, v)
    return t.apply(v)


def overlap(u, O, v) -> complex:
    """Evaluate ``<u|O|v>``.

    Parameters
    ----------
    u, v : DenseState or SymbolicState
        Both must come from the same backend.  Symbolic states must share
        their product base.
    O : operator expression
        ``None`` (identity), a PauliString, a PauliSum, a DenseOperatorMatrix,
        a DecomposedOperator or an iterable of ``(coeff, term)`` pairs.
    """
    terms = _operator_terms(O)
    if isinstance(u, SymbolicState) and isinstance(v, SymbolicState):
        if u.n != v.n:
            raise ValueError("qubit count mismatch")
        if u.base != v.base:
            raise ValueError("symbolic overlap needs a shared base state")
        total = 0j
        left = u.op.adjoint()
        for c, t in terms:
            if t is None:
                t = PauliString.identity(u.n)
            elif not isinstance(t, PauliString):
                raise TypeError("symbolic backend requires Pauli operator terms")
            if t.n != u.n:
                raise ValueError("qubit count mismatch")
            r = pauli_mul(left, pauli_mul(t, v.op))
            total += c * expectation_product_state(r, u.base)
        return complex(np.conj(u.scale) * v.scale * total)
    if isinstance(u, DenseState) and isinstance(v, DenseState):
        if u.n != v.n:
            raise ValueError("qubit count mismatch")
        vv = v.amplitudes
        acc = np.zeros_like(vv)
        for c, t in terms:
            if isinstance(t, DenseOperatorMatrix) and t.dim != vv.size:
                raise ValueError("operator dimension mismatch")
            if isinstance(t, PauliString) and t.n != v.n:
                raise ValueError("qubit count mismatch")
            acc = acc + c * _apply_dense_term(t, vv)
        return complex(np.vdot(u.amplitudes, acc))
    raise TypeError("backend mismatch: states must both be dense or both symbolic")


def haar_unitary(dim: int, seed=None, real: bool = False) -> DenseOperatorMatrix:
    """Haar-random unitary (or orthogonal if ``real``) via QR with phase fix."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = as_rng(seed)
    if real:
        g = rng.standard_normal((dim, dim))
    else:
        g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return DenseOperatorMatrix(q)


def evolve_exp(A: DenseOperatorMatrix, t: float, v):
    """``exp(-i A t) v`` by eigendecomposition of the hermitian ``A``.

    ``v`` may be a DenseState or a raw vector; the return type follows it.
    ``t`` may also be a 1-D array, giving a stack of states (raw arrays).
    """
    if not A.hermitian:
        raise ValueError("evolve_exp requires a hermitian operator")
    w, V = A.eigh
    raw = v.amplitudes if isinstance(v, DenseState) else np.asarray(v, dtype=complex)
    c = V.conj().T @ raw
    ts = np.asarray(t, dtype=float)
    if ts.ndim == 0:
        out = V @ (np.exp(-1j * w * float(ts)) * c)
        if isinstance(v, DenseState):
            return DenseState(v.n, out, normalized=v.normalized)
        return out
    phases = np.exp(-1j * np.outer(ts, w))
    return (phases * c) @ V.T
