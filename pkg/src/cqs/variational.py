"""Variational baselines on the dense backend.

Agnostic layered ansaetze optimised with Nelder-Mead (VQE), variational
imaginary-time steps, the adiabatic-assisted schedule (AAVQE) and the
alternating operator ansatz built from ``A`` and ``|b>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from scipy.optimize import minimize

from .backends import DenseState, as_rng
from .measurement import Estimator, hamiltonian_loss_estimate
from .operators import CHECK_MAX_QUBITS, LinearSystem, build_H, gen_real_symmetric_system

__all__ = [
    "TOPOLOGIES",
    "cnot_pairs",
    "cnot_permutation",
    "LayeredAnsatz",
    "XRotationAnsatz",
    "nelder_mead",
    "hamiltonian_matrix",
    "VQEResult",
    "vqe_solve",
    "ImagTimeState",
    "imaginary_time_step",
    "imaginary_time_evolve",
    "AAVQEResult",
    "aavqe_initial",
    "aavqe_solve",
    "AOAnsatz",
    "ao_hamiltonians",
    "ao_hamiltonians_from_terms",
    "ao_ansatz_state",
    "ao_loss",
    "vqe_benchmark",
    "aavqe_benchmark",
]

TOPOLOGIES = ("star", "line", "ring", "complete")
PINV_CUTOFF = 1e-8


def cnot_pairs(n: int, topology: str) -> list:
    """``(control, target)`` CNOT list of one layer, in application order."""
    if topology == "star":
        return [(0, i) for i in range(1, n)]
    if topology == "line":
        return [(i, i + 1) for i in range(n - 1)]
    if topology == "ring":
        return [(i, i + 1) for i in range(n - 1)] + ([(n - 1, 0)] if n > 2 else [])
    if topology == "complete":
        return [(i, j) for i in range(n) for j in range(n) if i != j]
    raise ValueError(f"topology: unknown value {topology!r} (expected one of {TOPOLOGIES})")


def cnot_permutation(n: int, pairs) -> np.ndarray:
    """Index map ``perm`` with ``(C psi)[i] = psi[perm[i]]`` for the CNOT product."""
    idx = np.arange(1 << n, dtype=np.int64)
    perm = idx.copy()
    for c, t in pairs:
        cb, tb = 1 << (n - 1 - c), 1 << (n - 1 - t)
        src = np.where(idx & cb, idx ^ tb, idx)
        perm = perm[src]
    return perm


@numba.njit(cache=True)
def _layered_state(thetas, n, layers, perm):
    dim = 1 << n
    psi = np.zeros(dim)
    psi[0] = 1.0
    tmp = np.empty(dim)
    for l in range(layers):
        for q in range(n):
            th = thetas[l * n + q]
            c = np.cos(th / 2)
            s = np.sin(th / 2)
            bit = 1 << (n - 1 - q)
            for i in range(dim):
                if i & bit == 0:
                    a0 = psi[i]
                    a1 = psi[i | bit]
                    psi[i] = c * a0 - s * a1
                    psi[i | bit] = s * a0 + c * a1
        for i in range(dim):
            tmp[i] = psi[perm[i]]
        psi, tmp = tmp, psi
    return psi


@dataclass(frozen=True)
class LayeredAnsatz:
    """``layers`` x (``R_Y`` on every qubit, then the topology's CNOTs) on ``|0^n>``.

    ``R_Y(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]``.  Amplitudes are
    real by construction.
    """

    n: int
    layers: int
    topology: str = "line"

    def __post_init__(self):
        if not 1 <= self.n <= 14:
            raise ValueError("n must be in [1, 14]")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        cnot_pairs(self.n, self.topology)

    @property
    def num_params(self) -> int:
        return self.n * self.layers

    @cached_property
    def perm(self) -> np.ndarray:
        return cnot_permutation(self.n, cnot_pairs(self.n, self.topology))

    def state(self, thetas) -> np.ndarray:
        th = np.ascontiguousarray(thetas, dtype=np.float64)
        if th.size != self.num_params:
            raise ValueError(f"expected {self.num_params} angles, got {th.size}")
        return _layered_state(th, self.n, self.layers, self.perm)

    def jacobian(self, thetas) -> np.ndarray:
        """Columns ``d psi / d theta_i``, exact via ``dR_Y(t)/dt = R_Y(t + pi) / 2``."""
        th = np.asarray(thetas, dtype=float)
        J = np.empty((1 << self.n, th.size))
        for i in range(th.size):
            t = th.copy()
            t[i] += np.pi
            J[:, i] = 0.5 * self.state(t)
        return J


@dataclass(frozen=True)
class XRotationAnsatz:
    """Product ansatz ``prod_j exp(-i theta_j X_j) |0^n>`` (complex amplitudes)."""

    n: int

    @property
    def num_params(self) -> int:
        return self.n

    def state(self, thetas) -> np.ndarray:
        v = np.ones(1, dtype=complex)
        for t in np.asarray(thetas, dtype=float):
            v = np.kron(v, np.array([np.cos(t), -1j * np.sin(t)]))
        return v

    def jacobian(self, thetas) -> np.ndarray:
        th = np.asarray(thetas, dtype=float)
        cols = []
        for j in range(th.size):
            v = np.ones(1, dtype=complex)
            for i, t in enumerate(th):
                a = np.array([np.cos(t), -1j * np.sin(t)])
                if i == j:
                    a = np.array([-np.sin(t), -1j * np.cos(t)])
                v = np.kron(v, a)
            cols.append(v)
        return np.array(cols).T


# ------------------------------------------------------------------ optimiser


def nelder_mead(f, x0, step: float | None = None, maxfev: int = 20000,
                xatol: float = 1e-8, fatol: float = 1e-12):
    """Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).

    Thin wrapper over :func:`scipy.optimize.minimize`; ``step`` sets an axis
    aligned initial simplex around ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    opts = dict(maxfev=maxfev, maxiter=maxfev, xatol=xatol, fatol=fatol, adaptive=False)
    if step is not None:
        opts["initial_simplex"] = np.vstack([x0, x0 + step * np.eye(x0.size)])
    return minimize(f, x0, method="Nelder-Mead", options=opts)


# ------------------------------------------------------------------ VQE


def _dense_system(system: LinearSystem):
    if system.n > CHECK_MAX_QUBITS:
        raise ValueError(f"variational solvers need the dense backend (n <= {CHECK_MAX_QUBITS})")
    A = system.A.dense()
    b = system.b_dense()
    if not np.iscomplexobj(A) or np.abs(A.imag).max() == 0:
        A = A.real
    if np.abs(b.imag).max() == 0:
        b = b.real
    return A, b


def hamiltonian_matrix(system: LinearSystem) -> np.ndarray:
    """``A^2 - A|b><b|A`` on ``n`` qubits (kernel of ``L_H``)."""
    A, b = _dense_system(system)
    Ab = A @ b
    return A @ A - np.outer(Ab, Ab.conj())


def _solution(system):
    x = system.solution()
    return x / np.linalg.norm(x)


@dataclass
class VQEResult:
    thetas: np.ndarray
    loss: float
    loss_trace: list
    fidelity: float           # |<x(theta)|x*>|^2 of the best restart
    fidelity_abs: float       # |<x(theta)|x*>|
    restart_losses: list
    restart_fidelities: list
    nfev: int
    converged: bool


class _Trace:
    def __init__(self, f):
        self.f = f
        self.best = math.inf
        self.trace = []

    def __call__(self, th):
        v = self.f(th)
        if v < self.best:
            self.best = v
        self.trace.append(self.best)
        return v


def vqe_solve(system: LinearSystem, ansatz, optimizer: str = "nelder_mead", est: Estimator | None = None,
              restarts: int = 5, maxfev: int = 20000, seed=None, theta0=None) -> VQEResult:
    """Minimise ``L_H(x(theta))`` with random-restart Nelder-Mead.

    ``loss_trace`` is the running best loss per function evaluation of the
    winning restart.  Non-convergence is reported via ``converged``.
    """
    if optimizer != "nelder_mead":
        raise ValueError(f"optimizer: unknown value {optimizer!r}")
    if ansatz.n != system.n:
        raise ValueError("ansatz and system qubit counts differ")
    est = est or Estimator.exact()
    rng = as_rng(seed)
    H = hamiltonian_matrix(system)
    if est.is_exact:
        def f(th):
            p = ansatz.state(th)
            return float(np.real(np.vdot(p, H @ p)))
    else:
        def f(th):
            return hamiltonian_loss_estimate(est, ansatz.state(th).astype(complex), system)
    xs = _solution(system)
    best = None
    losses, fids = [], []
    for r in range(restarts):
        x0 = rng.uniform(0, 2 * np.pi, ansatz.num_params) if theta0 is None or r else np.asarray(theta0)
        tr = _Trace(f)
        res = nelder_mead(tr, x0, maxfev=maxfev)
        p = ansatz.state(res.x)
        fid = abs(np.vdot(p, xs)) ** 2
        exact_loss = float(np.real(np.vdot(p, H @ p)))
        losses.append(exact_loss)
        fids.append(float(fid))
        if best is None or exact_loss < best[0]:
            best = (exact_loss, res, tr.trace, fid)
    loss, res, trace, fid = best
    return VQEResult(res.x, loss, trace, float(fid), float(math.sqrt(fid)), losses, fids,
                     int(res.nfev), bool(res.success))


# ------------------------------------------------------------------ imaginary time


@dataclass
class ImagTimeState:
    thetas: np.ndarray
    dt: float = 0.1
    M: np.ndarray | None = None
    C: np.ndarray | None = None
    energy: float | None = None
    stalled: bool = False
    halvings: int = 0


def _energy(H, ansatz, th):
    p = ansatz.state(th)
    return float(np.real(np.vdot(p, H @ p)))


def imaginary_time_step(state: ImagTimeState, H: np.ndarray, ansatz, max_halvings: int = 20) -> ImagTimeState:
    """One step ``theta <- theta - pinv(M) C dt``.

    ``M_ij = Re <d_i psi|d_j psi>`` and ``C_i = Re <d_i psi|H|psi>``.  If the
    energy would rise, ``dt`` is halved (at most ``max_halvings`` times);
    the returned state keeps the accepted ``dt``.
    """
    th = np.asarray(state.thetas, dtype=float)
    psi = ansatz.state(th)
    J = ansatz.jacobian(th)
    M = np.real(J.conj().T @ J)
    M = 0.5 * (M + M.T)
    C = np.real(J.conj().T @ (H @ psi))
    E0 = float(np.real(np.vdot(psi, H @ psi)))
    if np.abs(M).max() < 1e-14:
        return ImagTimeState(th, state.dt, M, C, E0, stalled=True)
    step = np.linalg.pinv(M, rcond=PINV_CUTOFF, hermitian=True) @ C
    if not np.any(step):
        return ImagTimeState(th, state.dt, M, C, E0)
    dt = state.dt
    for h in range(max_halvings + 1):
        new = th - step * dt
        E1 = _energy(H, ansatz, new)
        if E1 <= E0 + 1e-14:
            return ImagTimeState(new, dt, M, C, E1, halvings=h)
        dt *= 0.5
    return ImagTimeState(th, state.dt, M, C, E0, stalled=True, halvings=max_halvings)


def imaginary_time_evolve(H: np.ndarray, ansatz, thetas, dt: float = 0.1, steps: int = 100):
    """Repeat :func:`imaginary_time_step`; returns the final state and energy trace."""
    st = ImagTimeState(np.asarray(thetas, dtype=float), dt)
    energies = [_energy(H, ansatz, st.thetas)]
    for _ in range(steps):
        st = imaginary_time_step(st, H, ansatz)
        energies.append(st.energy if st.energy is not None else energies[-1])
        if st.stalled:
            break
    return st, energies


# ------------------------------------------------------------------ AAVQE


@dataclass
class AAVQEResult:
    steps: int
    s_grid: np.ndarray
    losses: list            # energy of H(s_t) at the optimum found for s_t
    thetas: np.ndarray
    fidelity: float         # |<+, x*|psi>|^2
    fidelities: list = field(default_factory=list)


def _real_H(s, system):
    H = build_H(s, system).matrix
    return H.real if np.abs(H.imag).max() == 0 else H


def _target(system):
    xs = _solution(system)
    return np.kron(np.array([1.0, 1.0]) / math.sqrt(2), xs)


def aavqe_initial(system: LinearSystem, ansatz, restarts: int = 5, step: float = 0.5,
                  maxfev_per_param: int = 200, seed=None) -> np.ndarray:
    """Angles approximating the ground state ``|-, b>`` of ``H(0)``."""
    if ansatz.n != system.n + 1:
        raise ValueError("AAVQE ansatz must act on n + 1 qubits")
    rng = as_rng(seed)
    H0 = _real_H(0.0, system)
    f = lambda th: _energy(H0, ansatz, th)  # noqa: E731
    best = None
    for _ in range(restarts):
        res = nelder_mead(f, rng.uniform(0, 2 * np.pi, ansatz.num_params), step,
                          maxfev_per_param * ansatz.num_params, 1e-9, 1e-13)
        if best is None or res.fun < best.fun:
            best = res
    return best.x


def aavqe_solve(system: LinearSystem, ansatz, steps: int, inner_optimizer: str = "nelder_mead",
                theta0=None, step: float = 0.1, maxfev_per_param: int = 200, seed=None) -> AAVQEResult:
    """Warm-started sweep over ``s_t = t / steps`` for ``t = 1..steps``.

    ``theta0`` are angles for the ``H(0)`` ground state (computed with
    :func:`aavqe_initial` when omitted).  Each stage runs Nelder-Mead from the
    previous optimum with initial simplex size ``step``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if inner_optimizer not in ("nelder_mead", "imaginary_time"):
        raise ValueError(f"inner_optimizer: unknown value {inner_optimizer!r}")
    th = aavqe_initial(system, ansatz, seed=seed) if theta0 is None else np.asarray(theta0, float).copy()
    target = _target(system)
    s_grid = np.arange(steps + 1) / steps
    losses, fids = [], []
    for s in s_grid[1:]:
        H = _real_H(float(s), system)
        if inner_optimizer == "nelder_mead":
            f = lambda t, H=H: _energy(H, ansatz, t)  # noqa: E731
            res = nelder_mead(f, th, step, maxfev_per_param * ansatz.num_params, 1e-9, 1e-13)
            th = res.x
        else:
            st, _ = imaginary_time_evolve(H, ansatz, th, dt=step, steps=maxfev_per_param)
            th = st.thetas
        p = ansatz.state(th)
        losses.append(_energy(H, ansatz, th))
        fids.append(float(abs(np.vdot(target, p)) ** 2))
    return AAVQEResult(steps, s_grid, losses, th, fids[-1], fids)


# ------------------------------------------------------------------ alternating operator ansatz

_PLUS = np.array([1.0, 1.0]) / math.sqrt(2)
_MINUS = np.array([1.0, -1.0]) / math.sqrt(2)


def ao_hamiltonians(system: LinearSystem):
    """``H_1..H_4`` on ``n + 1`` qubits, built directly from ``A`` and ``|b>``.

    They satisfy ``H(s) = (1-s)^2 1 + s^2 H_1 - (1-s)^2 H_2 - s^2 H_3 - s(1-s) H_4``.
    """
    A, b = _dense_system(system)
    IA = np.kron(np.eye(2), A)
    pb = np.kron(_PLUS, b)
    mb = np.kron(_MINUS, b)
    H1 = np.kron(np.eye(2), A @ A)
    H2 = np.outer(mb, mb.conj())
    pAb = IA @ pb
    H3 = np.outer(pAb, pAb.conj())
    # cross term of A(s)|+,b><+,b|A(s): |-,b><+,b|(1 (x) A) + h.c.
    H4 = np.outer(mb, pb.conj()) @ IA + IA @ np.outer(pb, mb.conj())
    return H1, H2, H3, H4


def _state_prep(b: np.ndarray) -> np.ndarray:
    """A unitary ``U_b`` with ``U_b |0> = |b>`` (Householder reflection times a phase)."""
    dim = b.size
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    ph = b[0] / abs(b[0]) if abs(b[0]) > 0 else 1.0
    w = e0 - np.conj(ph) * b
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        return ph * np.eye(dim, dtype=complex)
    w = w / nw
    R = np.eye(dim, dtype=complex) - 2 * np.outer(w, w.conj())  # R b' = e0 with b' = conj(ph) b
    return ph * R.conj().T


def ao_hamiltonians_from_terms(system: LinearSystem):
    """``H_1..H_4`` assembled from the ``alpha_k, U_k`` decomposition and ``U_b``."""
    A_op = system.A
    alphas = A_op.coeffs
    Us = []
    for _, u in A_op.terms:
        Us.append(u.matrix() if hasattr(u, "x") else u.entries)
    b = system.b_dense()
    dim = b.size
    Ub = np.kron(np.eye(2), _state_prep(b))
    z = np.zeros(dim)
    z[0] = 1.0
    p0 = Ub @ np.kron(_PLUS, z)
    m0 = Ub @ np.kron(_MINUS, z)
    I2 = np.eye(2)
    IU = [np.kron(I2, U) for U in Us]
    H1 = sum(a * ap * np.kron(I2, Up @ U) for a, U in zip(alphas, Us) for ap, Up in zip(alphas, Us))
    H2 = np.outer(m0, m0.conj())
    P = np.outer(p0, p0.conj())
    H3 = sum(a * ap * U @ P @ Up for a, U in zip(alphas, IU) for ap, Up in zip(alphas, IU))
    PM = np.outer(m0, p0.conj())
    H4 = sum(a * (PM @ U + U @ PM.conj().T) for a, U in zip(alphas, IU))
    return H1, H2, H3, H4


@dataclass(eq=False)
class AOAnsatz:
    """Alternating operator ansatz with ``p`` layers of ``exp(-i theta H_j)``, j = 1..4."""

    system: LinearSystem
    p: int

    def __post_init__(self):
        if self.system.n > 8:
            raise ValueError("alternating operator ansatz limited to n <= 8")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def n(self) -> int:
        return self.system.n + 1

    @property
    def num_params(self) -> int:
        return 4 * self.p

    @cached_property
    def hamiltonians(self):
        return ao_hamiltonians(self.system)

    @cached_property
    def _eig(self):
        return [np.linalg.eigh(H) for H in self.hamiltonians]

    @cached_property
    def loss_matrix(self) -> np.ndarray:
        return build_H(1.0, self.system).matrix

    @cached_property
    def input_state(self) -> np.ndarray:
        return np.kron(_PLUS, self.system.b_dense()).astype(complex)

    def state(self, thetas) -> np.ndarray:
        th = np.asarray(thetas, dtype=float).reshape(self.p, 4)
        psi = self.input_state
        for k in range(self.p):
            for j in range(4):
                w, V = self._eig[j]
                psi = V @ (np.exp(-1j * th[k, j] * w) * (V.conj().T @ psi))
        return psi


def ao_ansatz_state(system: LinearSystem, thetas, ansatz: AOAnsatz | None = None) -> DenseState:
    """``U_4 U_3 U_2 U_1 ... U_4 U_3 U_2 U_1 |+, b>`` (``thetas`` is ``p x 4``)."""
    th = np.asarray(thetas, dtype=float)
    p = th.size // 4
    if th.size != 4 * p or p < 1:
        raise ValueError("thetas must have shape (p, 4)")
    ans = ansatz or AOAnsatz(system, p)
    v = ans.state(th)
    return DenseState(system.n + 1, v, normalized=False)


def ao_loss(ansatz: AOAnsatz, thetas) -> float:
    """``<psi|H(1)|psi>`` for the alternating-operator state."""
    H = ansatz.loss_matrix
    psi = ansatz.state(thetas)
    return float(np.real(np.vdot(psi, H @ psi)))


# ------------------------------------------------------------------ benchmark harness


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _vqe_trial(args):
    n, layers, topology, trial, seed, restarts, maxfev = args
    system = gen_real_symmetric_system(n, 10, seed=seed + trial)
    res = vqe_solve(system, LayeredAnsatz(n, layers, topology), restarts=restarts, maxfev=maxfev,
                    seed=np.random.default_rng([seed, trial, layers, TOPOLOGIES.index(topology)]))
    return {"trial": trial, "layers": layers, "topology": topology, "steps": 0,
            "fidelity": res.fidelity, "fidelity_abs": res.fidelity_abs,
            "restart_mean_fidelity": float(np.mean(res.restart_fidelities)), "loss": res.loss}


def vqe_benchmark(n: int = 4, layers=(20,), topologies=TOPOLOGIES, trials: int = 100, seed: int = 0,
                  restarts: int = 5, maxfev: int = 20000, workers: int = 1) -> list:
    """Agnostic-ansatz VQE over ``trials`` random real symmetric systems.

    System ``i`` is ``gen_real_symmetric_system(n, 10, seed + i)`` and is
    shared by all topologies and layer counts.  One row per
    ``(trial, layers, topology)``.
    """
    items = [(n, L, t, i, seed, restarts, maxfev) for i in range(trials) for L in layers for t in topologies]
    return _map(_vqe_trial, items, workers)


def _aavqe_trial(args):
    n, layers, topologies, steps, trial, seed = args
    system = gen_real_symmetric_system(n, 10, seed=seed + trial)
    rows = []
    for topo in topologies:
        for L in layers:
            an = LayeredAnsatz(n + 1, L, topo)
            rng = np.random.default_rng([seed, trial, L, TOPOLOGIES.index(topo)])
            th0 = aavqe_initial(system, an, seed=rng)
            for T in steps:
                r = aavqe_solve(system, an, T, theta0=th0)
                rows.append({"trial": trial, "layers": L, "topology": topo, "steps": T,
                             "fidelity": r.fidelity, "fidelity_abs": math.sqrt(r.fidelity),
                             "loss": r.losses[-1]})
    return rows


def aavqe_benchmark(n: int = 3, layers=(1, 3, 5, 9), topologies=TOPOLOGIES, steps=(1, 6),
                    trials: int = 50, seed: int = 0, workers: int = 1) -> list:
    """AAVQE sweep on ``n``-qubit systems (ansatz on ``n + 1`` qubits).

    All step counts share the ``H(0)`` starting angles of a given
    ``(trial, layers, topology)``.
    """
    items = [(n, tuple(layers), tuple(topologies), tuple(steps), i, seed) for i in range(trials)]
    return [row for rows in _map(_aavqe_trial, items, workers) for row in rows]
