"""Executable checks of the solver's guarantees.

Contains the Chebyshev expansion behind the Tikhonov depth bound, the
closed-form Tikhonov optimum, the BQP-reduction scenario and the check
suites used by ``cqs check``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import chebyshev as C

from .backends import DenseState, apply_gate, as_rng, haar_unitary
from .measurement import Estimator
from .operators import DecomposedOperator, LinearSystem, gen_haar_sum_system, gen_pauli_sum_system
from .pauli import PauliString
from .solver import (
    AnsatzNode,
    AnsatzTree,
    SolveConfig,
    Subspace,
    cqs_solve,
    expand_bfs,
    solve_qp,
)

__all__ = [
    "chebyshev_coefficients",
    "chebyshev_tikhonov",
    "chebyshev_eta",
    "tikhonov_target",
    "tikhonov_depth",
    "tikhonov_min",
    "bqp_reduction_check",
    "random_circuit",
    "circuit_state",
    "shot_qp_suboptimality",
    "check_bfs_depth",
    "check_tikhonov_depth",
    "check_decrease",
    "check_shot_qp",
    "SUITES",
]

R = 2.0 - math.sqrt(3.0)


def chebyshev_coefficients(K0: int) -> np.ndarray:
    """``c_k = (-2 + sqrt 3)^k (1 - 1/sqrt 3)`` for ``k <= floor((K0-1)/2)``."""
    if K0 < 1:
        raise ValueError("K0 must be >= 1")
    k = np.arange((K0 - 1) // 2 + 1)
    return (-R) ** k * (1.0 - 1.0 / math.sqrt(3.0))


def chebyshev_tikhonov(K0: int) -> np.ndarray:
    """Monomial coefficients ``p`` of ``sum_k c_k T_{2k+1}(z)`` (``p[j]`` of ``z^j``).

    The infinite series sums to ``z / (2 z^2 + 1)``, see :func:`tikhonov_target`.
    """
    c = chebyshev_coefficients(K0)
    cheb = np.zeros(2 * c.size)
    cheb[1::2] = c
    return C.cheb2poly(cheb)


def tikhonov_target(z, scale: float = 1.0):
    """Limit of the series: ``scale * z / (2 z^2 + 1)``.

    ``scale = 2`` gives ``z / (z^2 + 1/2)``, the per-eigenvalue Tikhonov
    minimiser.
    """
    z = np.asarray(z, dtype=float)
    return scale * z / (2 * z * z + 1)


def chebyshev_eta(K0: int) -> float:
    """Truncation bound ``(2 - sqrt 3)^{K0/2} (1 - 1/sqrt 3) / (sqrt 3 - 1)``."""
    return R ** (K0 / 2.0) * (1.0 - 1.0 / math.sqrt(3.0)) / (math.sqrt(3.0) - 1.0)


def tikhonov_depth(eps: float) -> int:
    """``ceil(C log(1/(2 eps)))`` with ``C = 1 / log(1/(2 - sqrt 3))``."""
    return int(math.ceil(math.log(1.0 / (2.0 * eps)) / math.log(1.0 / R)))


def tikhonov_min(system: LinearSystem) -> float:
    """Closed-form ``min_x 1/2 |x|^2 + |Ax - b|^2 = sum_i |b_i|^2 / (1 + 2 lam_i^2)``."""
    w, V = np.linalg.eigh(system.A.dense())
    bt = V.conj().T @ system.b_dense()
    return float(np.sum(np.abs(bt) ** 2 / (1.0 + 2.0 * w ** 2)))


# ---------------------------------------------------------------------------
# reduction scenario


def random_circuit(n: int, gates: int = 10, seed=None) -> list:
    """Random circuit of Haar single- and two-qubit gates as ``(U, qubits)``."""
    rng = as_rng(seed)
    out = []
    for _ in range(gates):
        if n >= 2 and rng.random() < 0.5:
            q = int(rng.integers(0, n - 1))
            out.append((haar_unitary(4, rng).entries, (q, q + 1)))
        else:
            q = int(rng.integers(0, n))
            out.append((haar_unitary(2, rng).entries, (q,)))
    return out


def circuit_state(circuit, n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    for U, qs in circuit:
        psi = apply_gate(psi, np.asarray(U, dtype=complex), qs, n)
    return psi


def bqp_reduction_check(circuit, n: int, eps: float = 1e-6, est: Estimator | None = None,
                        assert_ok: bool = True):
    """Recover ``(P0, P1)`` of ``circuit`` from optimal combination parameters.

    Builds the ``(n+1)``-qubit system with ``A = CNOT`` (control: first
    original qubit, target: the added first qubit), ``|b> = |u_1> = |0>W|0>``
    and ``|u_2> = |1>W|0>``, solves the two-state QP and compares.

    Returns
    -------
    alpha1, alpha2, P0, P1
    """
    if n > 6:
        raise ValueError("reduction check limited to 6 circuit qubits")
    est = est or Estimator.exact()
    w = circuit_state(circuit, n)
    half = 1 << (n - 1)
    P0 = float(np.sum(np.abs(w[:half]) ** 2))
    P1 = float(np.sum(np.abs(w[half:]) ** 2))
    N = n + 1
    # CNOT = 1/2 (I + Z_c + X_t - Z_c X_t), t = qubit 0, c = qubit 1
    I = PauliString.identity(N)
    Zc = PauliString.single(N, 1, "Z")
    Xt = PauliString.single(N, 0, "X")
    ZX = Zc * Xt
    A = DecomposedOperator(((0.5, I), (0.5, Zc), (0.5, Xt), (-0.5, ZX)), hermitian=True, normalized=True)
    zero, one = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    b = np.kron(zero, w)
    u2 = np.kron(one, w)
    system = LinearSystem(A, DenseState(N, b))
    tree = AnsatzTree(system, "dense")
    sub = Subspace(tree, "LR")
    sub.add(est, AnsatzNode((), DenseState(N, b), None, vec=b, time=0.0))
    sub.add(est, AnsatzNode((), DenseState(N, u2), None, vec=u2, time=1.0))
    alpha, _ = solve_qp(sub)
    a1, a2 = alpha
    err = abs(a1 - P0) ** 2 + abs(a2 - P1) ** 2
    if assert_ok and err > eps:
        raise AssertionError(f"reduction recovery error {err:.3e} > {eps}")
    return complex(a1), complex(a2), P0, P1


# ---------------------------------------------------------------------------
# check suites; each returns a dict with a boolean "passed" and details


def check_bfs_depth(n: int = 4, eps: float = 0.1, systems: int = 5, seed: int = 0, kappa_max: float = 3.0):
    """BFS to depth ``ceil(kappa ln(kappa/eps))`` reaches ``L_R <= eps``.

    Systems are ``A = a I + (Pauli sum)`` rescaled to ``rho(A) = 1`` and
    kept only if ``rho(A^{-1}) <= kappa_max``.
    """
    rng = as_rng(seed)
    rows = []
    while len(rows) < systems:
        base = gen_pauli_sum_system(n, 4, seed=rng, normalize=False)
        shift = rng.uniform(2.0, 4.0) * rng.choice([-1, 1])
        terms = ((shift, PauliString.identity(n)),) + base.A.terms
        A = DecomposedOperator(terms, hermitian=True)
        s = np.linalg.svd(A.dense(), compute_uv=False)
        kappa = s[0] / s[-1]
        if kappa > kappa_max:
            continue
        A = A.scaled(1.0 / s[0], normalized=True)
        sys_ = LinearSystem(A, base.b)
        depth = int(math.ceil(kappa * math.log(kappa / eps)))
        rep = cqs_solve(sys_, SolveConfig(strategy="bfs", depth=depth, trace="node"))
        ok_depth = min((d for d, v in rep.depth_losses.items() if v <= eps), default=None)
        rows.append({"kappa": float(kappa), "depth": depth, "loss": rep.final_loss,
                     "observed_depth": ok_depth, "passed": rep.final_loss <= eps})
    return {"suite": "depth", "passed": all(r["passed"] for r in rows), "rows": rows}


def check_tikhonov_depth(n: int = 6, systems: int = 20, seed: int = 0, eps_values=(0.02, 0.1), depth=None):
    """Tikhonov BFS at the bound depth reaches ``min L_T + eps``."""
    rows = []
    for i in range(systems):
        sys_ = gen_pauli_sum_system(n, 8, seed=seed + i)
        opt = tikhonov_min(sys_)
        for eps in eps_values:
            d = tikhonov_depth(eps) if depth is None else depth
            rep = cqs_solve(sys_, SolveConfig(strategy="bfs", depth=d, loss="LT", trace="depth"))
            rows.append({"seed": seed + i, "eps": eps, "depth": d, "loss": rep.final_loss,
                         "min": opt, "passed": rep.final_loss <= opt + eps + 1e-12})
    return {"suite": "tikhonov", "passed": all(r["passed"] for r in rows), "rows": rows}


def check_decrease(runs: int = 20, seed: int = 0, iters: int = 20, haar_dim: int = 64, pauli_n: int = 20):
    """Guaranteed decrease ``g^2/4`` at every exact gradient step."""
    rows = []
    for i in range(runs):
        if i % 2 == 0:
            sys_ = gen_haar_sum_system(haar_dim, 10, seed=seed + i)
        else:
            sys_ = gen_pauli_sum_system(pauli_n, 8, seed=seed + i)
        rep = cqs_solve(sys_, SolveConfig(strategy="gradient", max_iters=iters))
        mono = bool(np.all(np.diff(rep.loss_trace) <= 1e-12))
        rows.append({"seed": seed + i, "family": sys_.metadata["family"], "steps": len(rep.loss_trace) - 1,
                     "violations": len(rep.decrease_violations), "monotone": mono,
                     "passed": not rep.decrease_violations and mono})
    return {"suite": "decrease", "passed": all(r["passed"] for r in rows), "rows": rows}


def shot_qp_suboptimality(tree: AnsatzTree, nodes, T: int, repeats: int, seed=0) -> float:
    """Mean true-loss gap of the QP solved from ``T``-shot estimates."""
    exact = Subspace(tree, "LR")
    for nd in nodes:
        exact.add(Estimator.exact(), nd)
    _, opt = solve_qp(exact)
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(repeats):
        est = Estimator.shots(T, seed=rng)
        sub = Subspace(tree, "LR")
        for nd in nodes:
            sub.add(est, nd)
        alpha, _ = solve_qp(sub)
        gaps.append(exact.objective(alpha) - opt)
    return float(np.mean(gaps))


def check_shot_qp(n: int = 4, m: int = 4, Ts=(100, 1000, 10000), repeats: int = 50, seed: int = 0,
                factor: float = 3.0):
    """Suboptimality from shot-estimated ``Q, r`` scales like ``1/T``.

    The products ``T * gap(T)`` must agree within ``factor`` (max / min).
    Uses a Pauli system with ``sum |beta| = 1`` so every sampled entry is
    bounded by 1.
    """
    system = gen_pauli_sum_system(n, 8, seed=seed)
    tree = AnsatzTree(system, "dense")
    nodes = expand_bfs(tree, 1, max_nodes=m)
    gaps = [shot_qp_suboptimality(tree, nodes, T, repeats, seed=seed + 1 + i) for i, T in enumerate(Ts)]
    scaled = [g * T for g, T in zip(gaps, Ts)]
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else np.inf
    return {"suite": "shots", "passed": bool(spread <= factor), "T": list(Ts), "gaps": gaps,
            "T_times_gap": scaled, "spread": spread}


SUITES = {
    "depth": check_bfs_depth,
    "tikhonov": check_tikhonov_depth,
    "decrease": check_decrease,
    "shots": check_shot_qp,
}
