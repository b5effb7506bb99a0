"""Problem instances: decomposed operators, linear systems, generators, H(s).

Instance files are JSON (``*.system.json``) with an optional binary sidecar
for dense matrices.  Sidecar layout: 8-byte magic ``b"CQSDENS1"``, then
little-endian uint32 ``n``, uint64 ``rows``, uint64 ``cols``, uint64
``count`` followed by ``count`` matrices of float64 interleaved re/im in
row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .backends import (
    DenseOperatorMatrix,
    DenseState,
    apply_pauli_dense,
    as_rng,
    haar_unitary,
)
from .pauli import PauliString, ProductState, bits_to_array, format_term, parse_term

__all__ = [
    "DecomposedOperator",
    "LinearSystem",
    "AdiabaticHamiltonian",
    "SpectralBounds",
    "gen_haar_sum_system",
    "gen_pauli_sum_system",
    "gen_real_symmetric_system",
    "toy_system",
    "build_H",
    "build_H_expanded",
    "spectral_bounds",
    "save_system",
    "load_system",
]

CHECK_MAX_QUBITS = 10


@dataclass(frozen=True, eq=False)
class DecomposedOperator:
    """``A = sum_k beta_k U_k`` with real ``beta_k``.

    Parameters
    ----------
    terms : sequence of (float, PauliString | DenseOperatorMatrix)
    hermitian : bool
        Claimed hermiticity; verified densely for ``n <= 10``.
    normalized : bool
        Claimed ``rho(A) <= 1``; verified densely for ``n <= 10``, otherwise
        through the bound ``sum |beta_k|``.
    """

    terms: tuple
    hermitian: bool = True
    normalized: bool = False
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        terms = tuple((float(c), u) for c, u in self.terms)
        if not terms:
            raise ValueError("operator needs at least one term")
        kinds = {isinstance(u, PauliString) for _, u in terms}
        if len(kinds) != 1:
            raise ValueError("all terms must share a backend")
        ns = {_term_n(u) for _, u in terms}
        if len(ns) != 1:
            raise ValueError("all terms must act on the same number of qubits")
        object.__setattr__(self, "terms", terms)
        if self.validate:
            self._check_flags()

    def _check_flags(self):
        if self.n <= CHECK_MAX_QUBITS:
            if self.hermitian or self.normalized:
                M = self.dense()
                if self.hermitian and np.max(np.abs(M - M.conj().T)) > 1e-10:
                    raise ValueError("operator flagged hermitian but is not")
                if self.normalized and np.linalg.norm(M, 2) > 1 + 1e-9:
                    raise ValueError("operator flagged normalized but rho(A) > 1")
        elif self.normalized and self.one_norm > 1 + 1e-9:
            raise ValueError("operator flagged normalized but sum |beta| > 1")

    @property
    def backend(self) -> str:
        return "pauli" if isinstance(self.terms[0][1], PauliString) else "dense"

    @property
    def n(self) -> int:
        return _term_n(self.terms[0][1])

    @property
    def K_A(self) -> int:
        return len(self.terms)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    @property
    def unitaries(self) -> list:
        return [u for _, u in self.terms]

    @property
    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def dense(self) -> np.ndarray:
        return self._dense

    @cached_property
    def _dense(self) -> np.ndarray:
        if self.n > 14:
            raise ValueError("dense assembly limited to n <= 14")
        dim = 1 << self.n
        M = np.zeros((dim, dim), dtype=complex)
        for c, u in self.terms:
            M += c * (u.matrix() if isinstance(u, PauliString) else u.entries)
        M.setflags(write=False)
        return M

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(np.shape(v), dtype=complex)
        for c, u in self.terms:
            out += c * _apply_unitary(u, v)
        return out

    def scaled(self, factor: float, normalized=None) -> "DecomposedOperator":
        return DecomposedOperator(
            tuple((c * factor, u) for c, u in self.terms),
            hermitian=self.hermitian,
            normalized=self.normalized if normalized is None else normalized,
        )


def _term_n(u) -> int:
    if isinstance(u, PauliString):
        return u.n
    n = u.n
    if n is None:
        raise ValueError("dense term dimension must be a power of two")
    return n


def _apply_unitary(u, v):
    if isinstance(u, PauliString):
        return apply_pauli_dense(u, v)
    return v @ u.entries.T if np.ndim(v) == 2 else u.entries @ v


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``A x = b`` with ``b`` normalised."""

    A: DecomposedOperator
    b: object
    kappa_bound: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        b = self.b
        if isinstance(b, np.ndarray):
            b = DenseState.from_vector(b)
            object.__setattr__(self, "b", b)
        if b.n != self.A.n:
            raise ValueError("b and A act on different qubit counts")
        if isinstance(b, DenseState) and abs(np.linalg.norm(b.amplitudes) - 1) > 1e-10:
            raise ValueError("b must be normalized")

    @property
    def n(self) -> int:
        return self.A.n

    def b_dense(self) -> np.ndarray:
        if isinstance(self.b, DenseState):
            return self.b.amplitudes
        return self.b.dense()

    def solution(self) -> np.ndarray:
        """Normalised ``A^{-1} b`` (dense)."""
        x = np.linalg.solve(self.A.dense(), self.b_dense())
        return x / np.linalg.norm(x)


class SpectralBounds(NamedTuple):
    rho: float
    kappa: float
    exact: bool


def spectral_bounds(A: DecomposedOperator, dense_limit: int = CHECK_MAX_QUBITS) -> SpectralBounds:
    """Largest singular value and condition number.

    Dense mode (``n <= dense_limit``) is exact; otherwise ``rho`` is the
    bound ``sum |beta_k|`` and ``kappa`` is ``inf`` (unknown).
    """
    if A.n <= dense_limit:
        s = np.linalg.svd(A.dense(), compute_uv=False)
        smin = s[-1]
        return SpectralBounds(float(s[0]), float(s[0] / smin) if smin > 0 else np.inf, True)
    return SpectralBounds(A.one_norm, np.inf, False)


# generators -------------------------------------------------------------

def _zero_b(n: int):
    return ProductState.zero(n)


def gen_haar_sum_system(dim: int = 256, S: int = 10, coeff_range=(-2.0, 2.0), seed=None,
                        real: bool = False, b=None) -> LinearSystem:
    """``A = sum_i alpha_i (U_i + U_i^dagger)`` from Haar unitaries.

    The raw operator is divided by its exact spectral norm so that
    ``rho(A) = 1``.  ``real=True`` draws Haar orthogonal matrices instead.
    """
    if dim < 1 or dim & (dim - 1):
        raise ValueError("dim must be a power of two")
    n = dim.bit_length() - 1
    if n > 14:
        raise ValueError("dim too large for the dense backend (max 2**14)")
    rng = as_rng(seed)
    alphas = rng.uniform(coeff_range[0], coeff_range[1], size=S)
    us = [haar_unitary(dim, rng, real=real) for _ in range(S)]
    raw = np.zeros((dim, dim), dtype=complex)
    for a, u in zip(alphas, us):
        raw += a * (u.entries + u.entries.conj().T)
    scale = float(np.linalg.norm(raw, 2))
    terms = []
    for a, u in zip(alphas, us):
        terms.append((a / scale, u))
        terms.append((a / scale, u.dagger()))
    A = DecomposedOperator(tuple(terms), hermitian=True, normalized=False, validate=False)
    bvec = DenseState.basis(n) if b is None else b
    meta = {
        "family": "haar",
        "seed": _seed_repr(seed),
        "S": S,
        "dim": dim,
        "real": real,
        "scale": scale,
        "raw_one_norm": float(2 * np.sum(np.abs(alphas))),
        "alphas": alphas.tolist(),
    }
    return LinearSystem(A, bvec, metadata=meta)


def gen_real_symmetric_system(n: int, S: int = 10, seed=None) -> LinearSystem:
    """Real symmetric variant used by the variational experiments."""
    return gen_haar_sum_system(1 << n, S, seed=seed, real=True)


def gen_pauli_sum_system(n: int, S: int = 8, coeff_range=(-2.0, 2.0), seed=None,
                         letters: str = "IXYZ", normalize: bool = True) -> LinearSystem:
    """Random weighted sum of ``S`` Pauli strings, duplicates merged.

    Letters are drawn uniformly from ``letters`` per qubit (``"IXYZ"`` gives
    the uniform distribution over all ``4**n`` strings).  With
    ``normalize=True`` the coefficients are divided by ``sum |beta|``.
    """
    if not 1 <= n <= 1024:
        raise ValueError("n must be in [1, 1024]")
    rng = as_rng(seed)
    alphas = rng.uniform(coeff_range[0], coeff_range[1], size=S)
    pool = np.array([_letter_bits(ch) for ch in letters.upper()], dtype=np.uint8)
    merged: dict = {}
    order = []
    for a in alphas:
        pick = pool[rng.integers(0, len(pool), size=n)]
        p = PauliString.from_arrays(pick[:, 0], pick[:, 1])
        key = (p.x, p.z)
        if key not in merged:
            merged[key] = [0.0, p]
            order.append(key)
        merged[key][0] += float(a)
    terms = [(merged[k][0], merged[k][1]) for k in order if merged[k][0] != 0.0]
    raw_norm = float(sum(abs(c) for c, _ in terms))
    scale = raw_norm if normalize else 1.0
    terms = tuple((c / scale, p) for c, p in terms)
    A = DecomposedOperator(terms, hermitian=True, normalized=normalize, validate=n <= 8)
    meta = {
        "family": "pauli",
        "seed": _seed_repr(seed),
        "S": S,
        "letters": letters,
        "scale": scale,
        "raw_one_norm": raw_norm,
        "alphas": alphas.tolist(),
    }
    return LinearSystem(A, _zero_b(n), metadata=meta)


def toy_system(n: int, k=None) -> LinearSystem:
    """``A = X^{k_1} (x) ... (x) X^{k_n}``, ``b = |0^n>`` (flat-landscape toy)."""
    if k is None:
        k = np.ones(n, dtype=np.uint8)
    k = np.asarray(k, dtype=np.uint8)
    p = PauliString.from_arrays(k, np.zeros(n, dtype=np.uint8))
    A = DecomposedOperator(((1.0, p),), hermitian=True, normalized=True, validate=n <= 8)
    return LinearSystem(A, _zero_b(n), metadata={"family": "toy", "k": k.tolist()})


def _letter_bits(ch):
    return {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}[ch]


def _seed_repr(seed):
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    return str(seed)


# adiabatic Hamiltonian ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdiabaticHamiltonian:
    """``H(s) = A(s) (1 - |+,b><+,b|) A(s)`` on ``n + 1`` qubits."""

    s: float
    matrix: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError("s must lie in [0, 1]")
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def energy(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.matrix @ psi)))


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


def _dense_parts(system: LinearSystem):
    if system.A.backend != "dense" and system.n > CHECK_MAX_QUBITS:
        raise ValueError("unsupported backend: H(s) needs a dense assembly (n <= 10)")
    if system.n > CHECK_MAX_QUBITS:
        raise ValueError("H(s) assembly limited to n <= 10")
    return system.A.dense(), system.b_dense()


def build_H(s: float, system: LinearSystem, backend: str | None = None) -> AdiabaticHamiltonian:
    """Assemble ``H(s)`` densely from ``A(s) = (1-s) Z(x)1 + s X(x)A``."""
    if backend == "symbolic":
        raise ValueError("unsupported backend: build_H requires the dense backend")
    A, b = _dense_parts(system)
    dim = A.shape[0]
    As = (1 - s) * np.kron(_Z, np.eye(dim)) + s * np.kron(_X, A)
    pb = np.kron(_PLUS, b)
    Pperp = np.eye(2 * dim) - np.outer(pb, pb.conj())
    H = As @ Pperp @ As
    H = 0.5 * (H + H.conj().T)
    return AdiabaticHamiltonian(float(s), H)


def build_H_expanded(s: float, system: LinearSystem) -> np.ndarray:
    """Four-term expansion of ``H(s)`` (structural cross-check of build_H)."""
    A, b = _dense_parts(system)
    dim = A.shape[0]
    mb = np.kron(_MINUS, b)
    pAb = np.kron(_PLUS, A @ b)
    H = ((1 - s) ** 2) * np.eye(2 * dim) + s ** 2 * np.kron(np.eye(2), A @ A)
    H -= (1 - s) ** 2 * np.outer(mb, mb.conj())
    H -= s ** 2 * np.outer(pAb, pAb.conj())
    cross = np.outer(mb, pAb.conj())
    H -= s * (1 - s) * (cross + cross.conj().T)
    return H


# serialisation -----------------------------------------------------------------

_MAGIC = b"CQSDENS1"


def write_dense_sidecar(path, n: int, mats) -> None:
    mats = [np.asarray(m, dtype=complex) for m in mats]
    rows, cols = mats[0].shape if mats else (0, 0)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQQ", n, rows, cols, len(mats)))
        for m in mats:
            inter = np.empty(m.shape + (2,), dtype="<f8")
            inter[..., 0] = m.real
            inter[..., 1] = m.imag
            fh.write(inter.tobytes(order="C"))


def read_dense_sidecar(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a dense sidecar file")
        n, rows, cols, count = struct.unpack("<IQQQ", fh.read(28))
        out = []
        for _ in range(count):
            raw = np.frombuffer(fh.read(rows * cols * 16), dtype="<f8")
            raw = raw.reshape(rows, cols, 2)
            out.append(raw[..., 0] + 1j * raw[..., 1])
    return n, out


def save_system(path, system: LinearSystem) -> Path:
    """Write ``system`` to ``path`` (JSON) plus a sidecar for dense terms."""
    path = Path(path)
    doc = {
        "format": "cqs-system/1",
        "n": system.n,
        "hermitian": system.A.hermitian,
        "normalized": system.A.normalized,
        "metadata": system.metadata,
        "kappa_bound": system.kappa_bound,
    }
    b = system.b
    if isinstance(b, ProductState):
        if b.basis_index is not None:
            doc["b"] = {"kind": "basis", "bits": "".join(map(str, bits_to_array(b.basis_index, b.n)))}
        else:
            doc["b"] = {"kind": "product", "re": b.amps.real.tolist(), "im": b.amps.imag.tolist()}
    else:
        doc["b"] = {"kind": "dense", "re": b.amplitudes.real.tolist(), "im": b.amplitudes.imag.tolist()}
    if system.A.backend == "pauli":
        doc["terms"] = [{"coeff": c, "pauli": p.label(), "text": format_term(c, p)}
                        for c, p in system.A.terms]
        for t, (_, p) in zip(doc["terms"], system.A.terms):
            if p.phase:
                t["phase"] = p.phase
    else:
        side = path.with_name(path.name.replace(".system.json", "").replace(".json", "") + ".dense.bin")
        write_dense_sidecar(side, system.n, [u.entries for _, u in system.A.terms])
        doc["sidecar"] = side.name
        doc["terms"] = [{"coeff": c, "dense_index": i} for i, (c, _) in enumerate(system.A.terms)]
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_system(path) -> LinearSystem:
    path = Path(path)
    doc = json.loads(path.read_text())
    n = int(doc["n"])
    terms = []
    mats = None
    for i, t in enumerate(doc["terms"]):
        if "pauli" in t:
            p = PauliString.from_label(t["pauli"], t.get("phase", 0))
            if p.n != n:
                raise ValueError(f"terms[{i}].pauli: length {p.n} != n={n}")
            terms.append((float(t["coeff"]), p))
        elif "text" in t:
            terms.append(parse_term(t["text"]))
        elif "dense_index" in t:
            if mats is None:
                _, mats = read_dense_sidecar(path.with_name(doc["sidecar"]))
            terms.append((float(t["coeff"]), DenseOperatorMatrix(mats[t["dense_index"]])))
        else:
            raise ValueError(f"terms[{i}]: needs 'pauli' or 'dense_index'")
    A = DecomposedOperator(tuple(terms), hermitian=doc.get("hermitian", True),
                           normalized=doc.get("normalized", False), validate=n <= 8)
    bd = doc.get("b", {"kind": "zero"})
    kind = bd.get("kind", "zero")
    if kind == "zero":
        b = ProductState.zero(n)
    elif kind == "basis":
        bits = bd["bits"]
        b = ProductState.from_bits(int(bits, 2), len(bits))
    elif kind == "product":
        b = ProductState(np.array(bd["re"]) + 1j * np.array(bd["im"]))
    elif kind == "dense":
        b = DenseState.from_vector(np.array(bd["re"]) + 1j * np.array(bd["im"]))
    else:
        raise ValueError(f"b.kind: unknown value {kind!r}")
    return LinearSystem(A, b, kappa_bound=doc.get("kappa_bound"), metadata=doc.get("metadata", {}))
