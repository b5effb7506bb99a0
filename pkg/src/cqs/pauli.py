"""Phase-exact Pauli-string algebra on integer bit masks.

A :class:`PauliString` on ``n`` qubits is stored as two Python integers
``x`` and ``z`` plus a phase exponent, and represents the operator

    i**phase * sigma_0 (x) sigma_1 (x) ... (x) sigma_{n-1}

where ``sigma_j`` is the letter selected by the bits of qubit ``j``:
``(x, z) = (0, 0) -> I``, ``(1, 0) -> X``, ``(0, 1) -> Z``, ``(1, 1) -> Y``.
Qubit ``j`` lives in bit ``n - 1 - j`` so that the integer masks coincide with
computational-basis indices (qubit 0 is the most significant bit and the
leftmost Kronecker factor).  Python integers give arbitrary width, so the
representation is word-chunked by the interpreter and has no hard cap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PauliString",
    "ProductState",
    "pauli_mul",
    "canonical_form",
    "expectation_product_state",
    "apply_to_basis",
    "format_term",
    "parse_term",
]

MAX_QUBITS = 1024

_LETTERS = "IXZY"  # index = x + 2*z
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_IPOW = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


def _popcount(v: int) -> int:
    return v.bit_count()


def bits_to_array(v: int, n: int) -> np.ndarray:
    """Unpack integer mask ``v`` into a length-``n`` uint8 array, qubit order."""
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (n + 7) // 8
    raw = np.frombuffer(v.to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[nbytes * 8 - n:]


def array_to_bits(a) -> int:
    a = np.asarray(a, dtype=np.uint8).ravel()
    if a.size == 0:
        return 0
    pad = (-a.size) % 8
    packed = np.packbits(np.concatenate([np.zeros(pad, np.uint8), a]))
    return int.from_bytes(packed.tobytes(), "big")


@dataclass(frozen=True)
class PauliString:
    """Immutable n-qubit Pauli operator ``i**phase * P``.

    Parameters
    ----------
    n : int
        Number of qubits.
    x, z : int
        Bit masks of the X and Z components (qubit ``j`` at bit ``n-1-j``).
    phase : int
        Exponent of the global factor ``i**phase``, reduced mod 4.
    """

    n: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if not (0 <= self.n <= MAX_QUBITS):
            raise ValueError(f"qubit count {self.n} outside [0, {MAX_QUBITS}]")
        full = (1 << self.n) - 1
        if self.x < 0 or self.z < 0 or (self.x | self.z) & ~full:
            raise ValueError("bit masks do not fit in n qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    # construction -------------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def from_label(cls, label: str, phase: int = 0) -> "PauliString":
        label = label.strip().upper()
        x = z = 0
        for ch in label:
            if ch not in _LETTER_BITS:
                raise ValueError(f"invalid Pauli letter {ch!r}")
            bx, bz = _LETTER_BITS[ch]
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(len(label), x, z, phase)

    @classmethod
    def from_arrays(cls, xa, za, phase: int = 0) -> "PauliString":
        xa = np.asarray(xa)
        return cls(int(xa.size), array_to_bits(xa), array_to_bits(za), phase)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        bx, bz = _LETTER_BITS[letter.upper()]
        shift = n - 1 - qubit
        return cls(n, bx << shift, bz << shift)

    # views --------------------------------------------------------------
    @property
    def x_bits(self) -> np.ndarray:
        return bits_to_array(self.x, self.n)

    @property
    def z_bits(self) -> np.ndarray:
        return bits_to_array(self.z, self.n)

    @property
    def phase_pow(self) -> int:
        return self.phase

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def coefficient(self) -> complex:
        return _IPOW[self.phase]

    def letters(self) -> np.ndarray:
        """Letter indices per qubit in the ``IXZY`` order (0..3)."""
        return self.x_bits + 2 * self.z_bits

    def label(self) -> str:
        return "".join(_LETTERS[k] for k in self.letters())

    def __str__(self) -> str:
        pre = {0: "", 1: "i*", 2: "-", 3: "-i*"}[self.phase]
        return pre + self.label()

    def is_hermitian(self) -> bool:
        # letters are Hermitian, so only the global phase matters
        return self.phase % 2 == 0

    def adjoint(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, -self.phase)

    def with_phase(self, phase: int) -> "PauliString":
        return PauliString(self.n, self.x, self.z, phase)

    def xz_phase(self) -> int:
        """Phase exponent when written as ``i**p X^x Z^z``."""
        return (self.phase + _popcount(self.x & self.z)) % 4

    def matrix(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` matrix (n <= 14)."""
        if self.n > 14:
            raise ValueError("dense matrix only available for n <= 14")
        dim = 1 << self.n
        idx = np.arange(dim)
        sign = _parity(idx & self.z)
        vals = _IPOW[self.xz_phase()] * (1 - 2 * sign)
        out = np.zeros((dim, dim), dtype=complex)
        out[idx ^ self.x, idx] = vals
        return out

    def kron_matrix(self) -> np.ndarray:
        """Same as :meth:`matrix` but built from Kronecker products (oracle)."""
        out = np.ones((1, 1), dtype=complex)
        for ch in self.label():
            out = np.kron(out, _SINGLE[ch])
        return _IPOW[self.phase] * out

    def __mul__(self, other):
        if isinstance(other, PauliString):
            return pauli_mul(self, other)
        return NotImplemented


def _parity(a: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(a.astype(np.uint64)) & 1).astype(np.int64)


def pauli_mul(p: PauliString, q: PauliString) -> PauliString:
    """Exact product ``p @ q`` including the phase.

    Uses ``sigma = i**|x&z| X^x Z^z`` per letter and
    ``Z^z1 X^x2 = (-1)**|z1&x2| X^x2 Z^z1``.
    """
    if p.n != q.n:
        raise ValueError(f"dimension mismatch: {p.n} vs {q.n} qubits")
    x = p.x ^ q.x
    z = p.z ^ q.z
    ph = (p.phase + q.phase + _popcount(p.x & p.z) + _popcount(q.x & q.z)
          + 2 * _popcount(p.z & q.x) - _popcount(x & z))
    return PauliString(p.n, x, z, ph)


def canonical_form(p: PauliString):
    """Split ``p`` into a phase-free ray key and its phase exponent.

    Returns
    -------
    ray : tuple
        ``(x, z)`` integer masks; equal for operators equal up to phase.
    phase : int
        ``p.phase``.
    """
    return (p.x, p.z), p.phase


def apply_to_basis(p: PauliString, index: int):
    """Action on a computational basis state: ``p|i> = c |j>``.

    Returns ``(j, c)`` with ``c`` a power of ``i``.
    """
    k = (p.xz_phase() + 2 * _popcount(index & p.z)) % 4
    return index ^ p.x, _IPOW[k]


class ProductState:
    """Tensor product of single-qubit states.

    Parameters
    ----------
    amps : array_like, shape (n, 2)
        Per-qubit amplitude pairs, each of unit norm.
    """

    __slots__ = ("n", "amps", "_table", "_basis")

    def __init__(self, amps, atol: float = 1e-12):
        a = np.array(amps, dtype=complex).reshape(-1, 2)
        norms = np.sum(np.abs(a) ** 2, axis=1)
        if np.any(np.abs(norms - 1.0) > atol):
            raise ValueError("each qubit amplitude pair must have unit norm")
        a.setflags(write=False)
        object.__setattr__(self, "n", a.shape[0])
        object.__setattr__(self, "amps", a)
        object.__setattr__(self, "_table", None)
        object.__setattr__(self, "_basis", _detect_basis(a))

    def __setattr__(self, key, value):
        raise AttributeError("ProductState is immutable")

    @classmethod
    def zero(cls, n: int) -> "ProductState":
        a = np.zeros((n, 2), dtype=complex)
        a[:, 0] = 1.0
        return cls(a)

    @classmethod
    def from_bits(cls, bits: int, n: int) -> "ProductState":
        b = bits_to_array(bits, n)
        a = np.zeros((n, 2), dtype=complex)
        a[np.arange(n), b] = 1.0
        return cls(a)

    @classmethod
    def random(cls, n: int, rng=None) -> "ProductState":
        rng = np.random.default_rng(rng)
        a = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        return cls(a)

    @property
    def basis_index(self):
        """Computational-basis index if every qubit is |0> or |1>, else None."""
        return self._basis

    def expectation_table(self) -> np.ndarray:
        """``(n, 4)`` table of single-qubit expectations in ``IXZY`` order."""
        if self._table is None:
            a0, a1 = self.amps[:, 0], self.amps[:, 1]
            t = np.empty((self.n, 4), dtype=complex)
            t[:, 0] = 1.0
            t[:, 1] = 2 * (np.conj(a0) * a1).real
            t[:, 2] = np.abs(a0) ** 2 - np.abs(a1) ** 2
            t[:, 3] = 2 * (np.conj(a0) * a1).imag
            t.setflags(write=False)
            object.__setattr__(self, "_table", t)
        return self._table

    def dense(self) -> np.ndarray:
        if self.n > 14:
            raise ValueError("dense vector only available for n <= 14")
        out = np.ones(1, dtype=complex)
        for j in range(self.n):
            out = np.kron(out, self.amps[j])
        return out

    def __eq__(self, other):
        return isinstance(other, ProductState) and np.array_equal(self.amps, other.amps)

    def __hash__(self):
        return hash(self.amps.tobytes())

    def __repr__(self):
        return f"ProductState(n={self.n})"


def _detect_basis(a: np.ndarray):
    exact0 = (a[:, 0] == 1.0) & (a[:, 1] == 0.0)
    exact1 = (a[:, 0] == 0.0) & (a[:, 1] == 1.0)
    if np.all(exact0 | exact1):
        return array_to_bits(exact1.astype(np.uint8))
    return None


def expectation_product_state(p: PauliString, s: ProductState) -> complex:
    """``<s|p|s>`` for a product state, as a product of per-qubit factors."""
    if p.n != s.n:
        raise ValueError(f"dimension mismatch: {p.n} vs {s.n} qubits")
    if s.basis_index is not None:
        if p.x:
            return 0j
        return _IPOW[(p.phase + 2 * _popcount(s.basis_index & p.z)) % 4]
    table = s.expectation_table()
    vals = table[np.arange(p.n), p.letters()]
    return complex(_IPOW[p.phase] * np.prod(vals))


_TERM_RE = re.compile(r"^\s*([-+]?[0-9.eE+-]+)\s*\*\s*([IXYZixyz]+)\s*$")


def format_term(coeff: float, p: PauliString) -> str:
    """Serialise ``coeff * p`` as e.g. ``"-2.0 * XIZY"`` (phase folded in)."""
    c = complex(coeff) * p.coefficient
    if abs(c.imag) > 0:
        raise ValueError("only real coefficients can be serialised")
    return f"{repr(float(c.real))} * {p.label()}"


def parse_term(text: str):
    """Inverse of :func:`format_term`; returns ``(coeff, PauliString)``."""
    m = _TERM_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse Pauli term {text!r}")
    return float(m.group(1)), PauliString.from_label(m.group(2))
