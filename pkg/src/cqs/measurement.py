"""Exact and shot-sampled estimation of overlaps and expectation values.

In shot mode every elementary measurement (one Hadamard-test circuit, one
swap test, one Pauli measurement) produces ``T`` outcomes in ``{-1, +1}``
with mean equal to the exact quantity.  The outcomes are drawn directly as
``2 * Binomial(T, (1 + mu) / 2) - T`` which has the same law as simulating
the ancilla.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .backends import (
    DenseOperatorMatrix,
    DenseState,
    PauliSum,
    SymbolicState,
    apply_pauli_dense,
    overlap,
)
from .pauli import PauliString, ProductState

__all__ = [
    "Estimator",
    "hoeffding_shots",
    "pauli_expectation",
    "hadamard_test",
    "modified_hadamard_test",
    "hamiltonian_loss_estimate",
    "hamiltonian_loss_exact",
    "hamiltonian_loss_budget",
    "swap_test",
]


def hoeffding_shots(eps: float, delta: float, value_range: float = 1.0) -> int:
    """Samples for ``|err| <= eps`` with probability ``1 - delta`` (Hoeffding).

    ``ceil(value_range^2 ln(2/delta) / (2 eps^2))``.  The default range 1
    bounds the error of an outcome frequency; use ``value_range=2`` for the
    mean of +/-1 outcomes.
    """
    return int(math.ceil(value_range ** 2 * math.log(2.0 / delta) / (2.0 * eps * eps)))


class Estimator:
    """Evaluation context: exact, or ``shots`` samples per elementary test.

    Parameters
    ----------
    mode : {"exact", "shots"}
    shots_per_sample : int
        Outcomes per elementary test in shot mode.
    delta : float
        Failure probability used by budgeted routines.
    seed : int or Generator, optional
    """

    def __init__(self, mode: str = "exact", shots_per_sample: int = 1000,
                 delta: float = 0.01, seed=None):
        if mode not in ("exact", "shots"):
            raise ValueError("mode must be 'exact' or 'shots'")
        if shots_per_sample < 1:
            raise ValueError("shots_per_sample must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.mode = mode
        self.shots_per_sample = int(shots_per_sample)
        self.delta = float(delta)
        self.rng_seed = seed
        self._rng = None
        self._ledger = 0
        self._lock = threading.Lock()

    @classmethod
    def exact(cls) -> "Estimator":
        return cls("exact")

    @classmethod
    def shots(cls, shots: int, seed=None, delta: float = 0.01) -> "Estimator":
        return cls("shots", shots, delta, seed)

    @property
    def is_exact(self) -> bool:
        return self.mode == "exact"

    @property
    def shot_ledger(self) -> int:
        return self._ledger

    @property
    def rng(self) -> np.random.Generator:
        if self.is_exact:
            raise RuntimeError("exact estimator has no random stream")
        if self._rng is None:
            s = self.rng_seed
            self._rng = s if isinstance(s, np.random.Generator) else np.random.default_rng(s)
        return self._rng

    def spawn(self, k: int) -> list:
        """Independent child estimators for parallel work."""
        if self.is_exact:
            return [Estimator("exact") for _ in range(k)]
        return [Estimator("shots", self.shots_per_sample, self.delta, g)
                for g in self.rng.spawn(k)]

    def charge(self, shots: int) -> None:
        with self._lock:
            self._ledger += int(shots)

    def sample(self, mu, shots=None) -> np.ndarray:
        """Mean of ``shots`` +/-1 outcomes with expectation ``mu`` (elementwise)."""
        mu = np.asarray(mu, dtype=float)
        if self.is_exact:
            return mu.copy()
        T = np.broadcast_to(np.asarray(self.shots_per_sample if shots is None else shots,
                                       dtype=np.int64), mu.shape)
        p = np.clip((1.0 + mu) / 2.0, 0.0, 1.0)
        k = self.rng.binomial(T, p)
        self.charge(int(np.sum(T)))
        return 2.0 * k / T - 1.0

    def sample_complex(self, values, shots=None) -> np.ndarray:
        """Independent Re/Im Hadamard-test estimates of complex ``values``."""
        v = np.asarray(values, dtype=complex)
        if self.is_exact:
            return v.copy()
        re = self.sample(v.real, shots)
        im = self.sample(v.imag, shots)
        return re + 1j * im

    def config(self) -> dict:
        return {"mode": self.mode, "shots_per_sample": self.shots_per_sample,
                "delta": self.delta, "seed": _jsonable_seed(self.rng_seed)}


def _jsonable_seed(s):
    if s is None or isinstance(s, (int, np.integer)):
        return None if s is None else int(s)
    return repr(s)


def _to_state(s):
    if isinstance(s, ProductState):
        return DenseState.from_product(s) if s.n <= 14 else SymbolicState(s, PauliString.identity(s.n))
    if isinstance(s, np.ndarray):
        return DenseState.from_vector(s)
    return s


def pauli_expectation(est: Estimator, state, p: PauliString) -> float:
    """``<psi|P|psi>`` for a hermitian Pauli string."""
    if not p.is_hermitian():
        raise ValueError("pauli_expectation needs a hermitian Pauli string")
    st = _to_state(state)
    mu = overlap(st, p, st).real
    return float(est.sample(mu))


def hadamard_test(est: Estimator, v0, v1, part: str = "real") -> float:
    """Real or imaginary part of ``<v0|v1>``."""
    val = overlap(_to_state(v0), None, _to_state(v1))
    mu = _part(val, part)
    return float(est.sample(mu))


def _part(val: complex, part: str) -> float:
    if part in ("real", "re"):
        return float(np.real(val))
    if part in ("imag", "im"):
        return float(np.imag(val))
    raise ValueError("part must be 'real' or 'imag'")


def _observable_terms(O):
    if isinstance(O, PauliString):
        return [(1.0, O)]
    if isinstance(O, PauliSum):
        return list(O.terms)
    if isinstance(O, DenseOperatorMatrix):
        return [(1.0, O)]
    return list(O)


def modified_hadamard_test(est: Estimator, v0, v1, O, part: str = "real") -> float:
    """Real or imaginary part of ``<v0|O|v1>`` for ``O = sum_t c_t P_t``.

    Each term is measured with its own Re and Im Hadamard tests (the complex
    coefficient mixes both parts), then combined linearly.
    """
    terms = _observable_terms(O)
    s0, s1 = _to_state(v0), _to_state(v1)
    total = 0.0
    for c, t in terms:
        if isinstance(t, DenseOperatorMatrix):
            if t.spectral_norm() > 1 + 1e-10:
                raise ValueError("observable term has |eigenvalue| > 1")
        elif not isinstance(t, PauliString):
            raise TypeError("observable terms must be Pauli strings")
        val = overlap(s0, t, s1)
        if est.is_exact:
            total += _part(complex(c) * val, part)
            continue
        re = float(est.sample(val.real))
        im = float(est.sample(val.imag))
        total += _part(complex(c) * (re + 1j * im), part)
    return float(total)


def swap_test(est: Estimator, u, v) -> float:
    """``|<v|u>|^2``; shot outcomes are +/-1 with that mean."""
    val = abs(overlap(_to_state(v), None, _to_state(u))) ** 2
    return float(est.sample(val))


def _term_vectors(system, x: np.ndarray):
    A = system.A
    vecs = []
    for _, u in A.terms:
        vecs.append(apply_pauli_dense(u, x) if isinstance(u, PauliString) else u.entries @ x)
    return np.array(vecs)


def hamiltonian_loss_exact(x, system) -> float:
    """``<x|A^2|x> - |<b|A|x>|^2`` for a normalised dense ``x``."""
    xv = x.amplitudes if isinstance(x, DenseState) else np.asarray(x, dtype=complex)
    Ax = system.A.apply(xv)
    return float(np.vdot(Ax, Ax).real - abs(np.vdot(system.b_dense(), Ax)) ** 2)


def hamiltonian_loss_budget(betas, eps: float, delta: float):
    """Shot allocation for :func:`hamiltonian_loss_estimate`.

    Returns ``(N_kl, N_k)``: shots for each ``Re <x|U_k^dag U_l|x>`` term
    and for each part of each ``<b|U_k|x>`` term.  The target is split as
    ``eps / sqrt(5)`` and ``delta / 4``; the per-term counts are
    ``|beta_k beta_l| * eta / eps'^2 * log(2 K^2 / delta')`` with
    ``eta = (sum |beta|)^2`` and ``|beta_k| * (sum |beta|)^3 / eps'^2 * log(...)``.
    """
    b = np.abs(np.asarray(betas, dtype=float))
    K = b.size
    l1 = float(b.sum())
    e2 = eps * eps / 5.0
    log_term = max(1.0, math.log(2.0 * K * K / (delta / 4.0)))
    Nkl = np.ceil(np.outer(b, b) * l1 ** 2 / e2 * log_term).astype(np.int64)
    Nk = np.ceil(b * l1 ** 3 / e2 * log_term).astype(np.int64)
    return np.maximum(Nkl, 1), np.maximum(Nk, 1)


def hamiltonian_loss_estimate(est: Estimator, x_state, system, eps: float | None = None) -> float:
    """Estimate ``L_H(x) = <x|A^2|x> - <x|A|b><b|A|x>`` on the dense backend.

    Exact mode sums exact overlaps.  Shot mode measures every
    ``Re <U_k x|U_l x>`` with shots proportional to ``|beta_k beta_l|`` and
    the projection term as the product of two independent estimates of
    ``<b|A|x>``.  ``eps`` defaults to the Hoeffding accuracy implied by
    ``est.shots_per_sample``.
    """
    if est.is_exact:
        return hamiltonian_loss_exact(x_state, system)
    xv = x_state.amplitudes if isinstance(x_state, DenseState) else np.asarray(x_state, dtype=complex)
    betas = system.A.coeffs
    if eps is None:
        # Hoeffding accuracy of a +/-1 mean (range 2)
        eps = 2.0 * math.sqrt(math.log(2.0 / est.delta) / (2.0 * est.shots_per_sample))
    Nkl, Nk = hamiltonian_loss_budget(betas, eps, est.delta)
    V = _term_vectors(system, xv)
    T = (V.conj() @ V.T).real  # Re <U_k x | U_l x>
    T_est = est.sample(T, Nkl)
    first = float(betas @ T_est @ betas)
    bvec = system.b_dense()
    # <b|A|x> = sum_k beta_k <b|U_k x>
    bx = V.conj() @ bvec  # <U_k x|b>
    bx = np.conj(bx)
    e1 = betas @ (est.sample(bx.real, Nk) + 1j * est.sample(bx.imag, Nk))
    e2 = betas @ (est.sample(bx.real, Nk) + 1j * est.sample(bx.imag, Nk))
    return first - float(np.real(np.conj(e1) * e2))
