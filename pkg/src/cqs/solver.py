"""Classical combination of quantum states over an Ansatz tree.

The solution is represented as ``x = sum_i alpha_i |u_i>`` where the
``|u_i>`` are nodes of the Ansatz tree rooted at ``|b>`` (each node has one
child ``U_k |psi>`` per term of ``A``).  The combination coefficients solve
the convex quadratic program

    min_alpha  alpha^dag M alpha - 2 Re(q^dag alpha) + 1

with ``M = <u_i|A^dag A|u_j>`` (residual loss) or that plus half the plain
Gram matrix (Tikhonov loss) and ``q_i = <u_i|A^dag|b>``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .backends import DenseOperatorMatrix, DenseState, SymbolicState, apply_pauli_dense, evolve_exp
from .measurement import Estimator
from .operators import LinearSystem
from .pauli import PauliString, ProductState, apply_to_basis, expectation_product_state, pauli_mul

__all__ = [
    "AnsatzNode",
    "AnsatzTree",
    "Subspace",
    "QPProblem",
    "SolveConfig",
    "SolveReport",
    "FrontierExhausted",
    "build_gram",
    "solve_qp",
    "gradient_overlap",
    "expand_bfs",
    "expand_gradient",
    "expand_lookahead",
    "cqs_solve",
    "hamiltonian_time_grid",
    "subspace_loss_oracle",
]

PINV_RTOL = 1e-10
TIE_RTOL = 1e-12
DUP_TOL = 1e-9


class FrontierExhausted(RuntimeError):
    """Every child of the current subspace is already in it."""


# ---------------------------------------------------------------------------
# vector spaces: how node states are stored and combined per backend


class _DenseSpace:
    """Node states as dense vectors; terms applied as matrices or Paulis."""

    kind = "dense"

    def __init__(self, system: LinearSystem):
        A = system.A
        if A.n > 14:
            raise ValueError("dense backend limited to n <= 14")
        self.A = A
        self.n = A.n
        self.b = np.asarray(system.b_dense(), dtype=complex)
        self.betas = A.coeffs
        self.K = A.K_A
        self.pauli = A.backend == "pauli"
        self.Amat = A.dense()
        base = system.b
        self.base_index = base.basis_index if isinstance(base, ProductState) else None

    # single vectors
    def root(self):
        return self.b

    def child(self, v, k):
        u = self.A.terms[k][1]
        if isinstance(u, PauliString):
            return apply_pauli_dense(u, v)
        return u.entries @ v

    def child_adj(self, v, k):
        u = self.A.terms[k][1]
        if isinstance(u, PauliString):
            return apply_pauli_dense(u.adjoint(), v)
        return u.entries.conj().T @ v

    def apply_A(self, v):
        return self.Amat @ v

    def inner(self, a, b):
        return complex(np.vdot(a, b))

    def combine(self, coeffs, vecs):
        if len(vecs) == 0:
            return np.zeros_like(self.b)
        return np.asarray(coeffs) @ np.asarray(vecs)

    def sub(self, a, b):
        return a - b

    def scale(self, c, a):
        return c * a

    # batches (stacked rows)
    def terms_of(self, v):
        return np.array([self.child(v, k) for k in range(self.K)])

    def concat(self, batches):
        return np.concatenate(batches, axis=0)

    def batch(self, vecs):
        return np.asarray(vecs)

    def cross(self, L, R):
        return np.conj(L) @ np.asarray(R).T

    def gram_row(self, v, vecs):
        if len(vecs) == 0:
            return np.zeros(0, dtype=complex)
        return np.conj(v) @ np.asarray(vecs).T

    def frontier_scores(self, vecs, r):
        W = np.array([self.child_adj(r, k) for k in range(self.K)])
        return np.conj(np.asarray(vecs)) @ W.T

    def ray_key(self, op):
        if op is None:
            return None
        if self.base_index is not None:
            return self.base_index ^ op.x
        return (op.x, op.z)


class _PauliSpace:
    """Node states as sparse dicts over Pauli rays of a product base.

    For a computational-basis base the key is the basis index and distinct
    keys are orthogonal.  For a general product base the key is the ``(x, z)``
    mask pair of a phase-free Pauli and inner products are product-state
    expectations of ``P_a P_b``.
    """

    kind = "symbolic"

    def __init__(self, system: LinearSystem):
        A = system.A
        if A.backend != "pauli":
            raise ValueError("symbolic backend requires Pauli terms")
        if not isinstance(system.b, ProductState):
            raise ValueError("symbolic backend requires a product-state b")
        self.A = A
        self.n = A.n
        self.base = system.b
        self.betas = A.coeffs
        self.K = A.K_A
        self.ops = [u for _, u in A.terms]
        self.basis = system.b.basis_index
        self.pauli = True
        self._pair_cache: dict = {}

    def _key_op(self, key) -> PauliString:
        return PauliString(self.n, key[0], key[1])

    def _apply(self, p: PauliString, key):
        if self.basis is not None:
            return apply_to_basis(p, key)
        r = pauli_mul(p, self._key_op(key))
        return (r.x, r.z), (1, 1j, -1, -1j)[r.phase]

    def _pair(self, k1, k2) -> complex:
        if self.basis is not None:
            return 1.0 if k1 == k2 else 0.0
        hit = self._pair_cache.get((k1, k2))
        if hit is None:
            r = pauli_mul(self._key_op(k1), self._key_op(k2))
            hit = expectation_product_state(r, self.base)
            self._pair_cache[(k1, k2)] = hit
        return hit

    def root(self):
        key = self.basis if self.basis is not None else (0, 0)
        return {key: 1.0 + 0j}

    def child(self, v, k):
        p = self.ops[k]
        out = {}
        for key, a in v.items():
            nk, c = self._apply(p, key)
            out[nk] = out.get(nk, 0j) + a * c
        return out

    def apply_A(self, v):
        out: dict = {}
        for key, a in v.items():
            for beta, p in zip(self.betas, self.ops):
                nk, c = self._apply(p, key)
                out[nk] = out.get(nk, 0j) + beta * c * a
        return out

    def inner(self, a, b):
        if self.basis is not None:
            if len(a) > len(b):
                return complex(np.conj(sum(np.conj(v) * a[k] for k, v in b.items() if k in a)))
            return complex(sum(np.conj(v) * b[k] for k, v in a.items() if k in b))
        return complex(sum(np.conj(va) * vb * self._pair(ka, kb)
                           for ka, va in a.items() for kb, vb in b.items()))

    def combine(self, coeffs, vecs):
        out: dict = {}
        for c, v in zip(coeffs, vecs):
            for key, a in v.items():
                out[key] = out.get(key, 0j) + c * a
        return out

    def sub(self, a, b):
        out = dict(a)
        for key, v in b.items():
            out[key] = out.get(key, 0j) - v
        return out

    def scale(self, c, a):
        return {k: c * v for k, v in a.items()}

    # batches are (keys, amps) of single-key vectors
    def terms_of(self, v):
        (key, a), = v.items()
        keys, amps = [], []
        for p in self.ops:
            nk, c = self._apply(p, key)
            keys.append(nk)
            amps.append(a * c)
        return keys, np.array(amps)

    def batch(self, vecs):
        keys, amps = [], []
        for v in vecs:
            (key, a), = v.items()
            keys.append(key)
            amps.append(a)
        return keys, np.array(amps, dtype=complex)

    def concat(self, batches):
        keys = [k for b in batches for k in b[0]]
        return keys, np.concatenate([b[1] for b in batches])

    def cross(self, L, R):
        lk, la = L
        rk, ra = R
        if self.basis is not None:
            ids: dict = {}
            li = np.array([ids.setdefault(k, len(ids)) for k in lk])
            ri = np.array([ids.setdefault(k, len(ids)) for k in rk])
            eq = li[:, None] == ri[None, :]
            return eq * np.outer(np.conj(la), ra)
        P = np.array([[self._pair(a, b) for b in rk] for a in lk], dtype=complex)
        return P * np.outer(np.conj(la), ra)

    def gram_row(self, v, vecs):
        return np.array([self.inner(v, w) for w in vecs], dtype=complex)

    def frontier_scores(self, vecs, r):
        out = np.zeros((len(vecs), self.K), dtype=complex)
        for i, v in enumerate(vecs):
            (key, a), = v.items()
            for k, p in enumerate(self.ops):
                nk, c = self._apply(p, key)
                if self.basis is not None:
                    val = r.get(nk)
                    if val is not None:
                        out[i, k] = np.conj(a * c) * val
                else:
                    out[i, k] = self.inner({nk: a * c}, r)
        return out

    def ray_key(self, op):
        if self.basis is not None:
            return self.basis ^ op.x
        return (op.x, op.z)


# ---------------------------------------------------------------------------


@dataclass
class AnsatzNode:
    """Node of the Ansatz tree.

    Attributes
    ----------
    path : tuple of int
        Term indices applied to ``|b>`` (first index applied first).
    reduced : SymbolicState or DenseState
        The node state.
    ray_key : hashable or None
        Phase-free identity of the state (Pauli operators only).
    overlap : complex or None
        Gradient overlap that selected the node, if any.
    """

    path: tuple
    reduced: object
    ray_key: object = None
    overlap: complex | None = None
    time: float | None = None
    vec: object = field(default=None, repr=False)
    op: PauliString | None = field(default=None, repr=False)

    @property
    def depth(self) -> int:
        return len(self.path)


def _order_key(path):
    return (len(path), tuple(path))


class AnsatzTree:
    """Ansatz tree of a linear system on a chosen backend.

    Parameters
    ----------
    system : LinearSystem
    backend : {"auto", "dense", "symbolic"}
        ``auto`` picks the symbolic backend for Pauli operators acting on a
        product-state ``b`` and the dense backend otherwise.
    """

    def __init__(self, system: LinearSystem, backend: str = "auto"):
        self.system = system
        if backend == "auto":
            backend = "symbolic" if (system.A.backend == "pauli"
                                     and isinstance(system.b, ProductState)
                                     and (system.b.basis_index is not None or system.n > 14)) else "dense"
        if backend == "symbolic":
            self.space = _PauliSpace(system)
        elif backend == "dense":
            self.space = _DenseSpace(system)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.K = system.A.K_A

    def _make(self, path, vec, op):
        sp = self.space
        if sp.kind == "symbolic":
            (key, a), = vec.items()
            reduced = SymbolicState(self.system.b, op, 1.0)
            return AnsatzNode(tuple(path), reduced, key, vec=vec, op=op)
        reduced = DenseState(sp.n, vec, normalized=False)
        return AnsatzNode(tuple(path), reduced, sp.ray_key(op), vec=vec, op=op)

    def root(self) -> AnsatzNode:
        op = PauliString.identity(self.system.n) if self.space.pauli else None
        return self._make((), self.space.root(), op)

    def child(self, node: AnsatzNode, k: int) -> AnsatzNode:
        op = None
        if node.op is not None:
            op = pauli_mul(self.system.A.terms[k][1], node.op)
        return self._make(node.path + (k,), self.space.child(node.vec, k), op)

    def node(self, path) -> AnsatzNode:
        nd = self.root()
        for k in path:
            nd = self.child(nd, k)
        return nd

    def children(self, node: AnsatzNode) -> list:
        return [self.child(node, k) for k in range(self.K)]

    def same_ray(self, a: AnsatzNode, b: AnsatzNode) -> bool:
        if a.ray_key is not None and b.ray_key is not None:
            return a.ray_key == b.ray_key
        va, vb = a.vec, b.vec
        return abs(abs(np.vdot(va, vb)) - np.linalg.norm(va) * np.linalg.norm(vb)) <= DUP_TOL


# ---------------------------------------------------------------------------


@dataclass
class Subspace:
    """Ordered node set with cached Gram data.

    ``gram_AA[i, j] = <u_i|A^dag A|u_j>``, ``gram_I[i, j] = <u_i|u_j>``,
    ``q[i] = <u_i|A^dag|b>``.
    """

    tree: AnsatzTree
    loss_kind: str = "LR"
    nodes: list = field(default_factory=list)
    gram_AA: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))
    gram_I: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))
    q: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    alpha: np.ndarray | None = None
    loss: float | None = None
    exact_gram_AA: np.ndarray | None = None
    exact_gram_I: np.ndarray | None = None
    exact_q: np.ndarray | None = None
    _Avecs: list = field(default_factory=list, repr=False)
    _keys: set = field(default_factory=set, repr=False)

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def vecs(self):
        return [nd.vec for nd in self.nodes]

    def contains(self, node: AnsatzNode) -> bool:
        if node.ray_key is not None:
            return node.ray_key in self._keys
        if any(nd.path == node.path and nd.time == node.time for nd in self.nodes):
            return True
        return any(self.tree.same_ray(node, nd) for nd in self.nodes)

    def add(self, est: Estimator, node: AnsatzNode) -> None:
        """Append ``node`` and fill the new Gram row (estimated if shots)."""
        sp = self.tree.space
        Av = sp.apply_A(node.vec)
        row_AA = np.append(sp.gram_row(Av, self._Avecs), sp.inner(Av, Av))
        row_I = np.append(sp.gram_row(node.vec, self.vecs), sp.inner(node.vec, node.vec))
        q_new = sp.inner(Av, sp.root())
        exact = (row_AA, row_I, q_new)
        if not est.is_exact:
            row_AA, row_I, q_new = self._estimate_row(est, node)
        self.nodes.append(node)
        self._Avecs.append(Av)
        if node.ray_key is not None:
            self._keys.add(node.ray_key)
        self.gram_AA = _grow(self.gram_AA, row_AA)
        self.gram_I = _grow(self.gram_I, row_I)
        self.q = np.append(self.q, q_new)
        if not est.is_exact:
            self.exact_gram_AA = _grow(self.exact_gram_AA, exact[0])
            self.exact_gram_I = _grow(self.exact_gram_I, exact[1])
            self.exact_q = np.append(self.exact_q if self.exact_q is not None else [], exact[2])
        self.alpha = None

    def _estimate_row(self, est: Estimator, node: AnsatzNode):
        sp = self.tree.space
        beta = sp.betas
        K = sp.K
        vecs = self.vecs + [node.vec]
        m1 = len(vecs)
        T_new = sp.terms_of(node.vec)
        T_all = sp.concat([sp.terms_of(v) for v in vecs])
        # <U_k u_new | U_l u_j> for all k, (j, l)
        vals = est.sample_complex(sp.cross(T_new, T_all)).reshape(K, m1, K)
        row_AA = np.einsum("k,kjl,l->j", beta, vals, beta)
        row_AA[-1] = row_AA[-1].real
        pl = sp.cross(sp.batch([node.vec]), sp.batch(vecs))[0]
        row_I = est.sample_complex(pl[:-1])
        row_I = np.append(row_I, 1.0)
        qv = sp.cross(T_new, sp.batch([sp.root()]))[:, 0]
        q_new = beta @ est.sample_complex(qv)
        return row_AA, row_I, q_new

    def matrix(self, exact: bool = False) -> np.ndarray:
        G = self.exact_gram_AA if exact and self.exact_gram_AA is not None else self.gram_AA
        if self.loss_kind == "LT":
            GI = self.exact_gram_I if exact and self.exact_gram_I is not None else self.gram_I
            G = G + 0.5 * GI
        return G

    def rhs(self, exact: bool = False) -> np.ndarray:
        return self.exact_q if exact and self.exact_q is not None else self.q

    def objective(self, alpha, exact: bool = True) -> float:
        M = self.matrix(exact)
        q = self.rhs(exact)
        return float(np.real(np.vdot(alpha, M @ alpha)) - 2 * np.real(np.vdot(q, alpha)) + 1.0)

    def solution_vector(self):
        if self.alpha is None:
            raise ValueError("alpha unset")
        return self.tree.space.combine(self.alpha, self.vecs)


def _grow(G, row):
    m = 0 if G is None else G.shape[0]
    out = np.zeros((m + 1, m + 1), dtype=complex)
    if m:
        out[:m, :m] = G
    # row[j] = <u_new|...|u_j>
    out[m, :] = row
    out[:, m] = np.conj(row)
    out[m, m] = np.real(row[m])
    return out


@dataclass
class QPProblem:
    """Real form ``min_z z^T Q z - 2 r^T z + 1`` of the complex QP.

    With ``alpha = x + i y`` and ``z = (x, y)``:
    ``Q = [[Re M, -Im M], [Im M, Re M]]`` and ``r = (Re q, Im q)``.
    """

    Qmat: np.ndarray
    rvec: np.ndarray
    z: np.ndarray | None = None

    @classmethod
    def from_complex(cls, M: np.ndarray, q: np.ndarray) -> "QPProblem":
        M = np.asarray(M, dtype=complex)
        q = np.asarray(q, dtype=complex)
        Q = np.block([[M.real, -M.imag], [M.imag, M.real]])
        return cls(Q, np.concatenate([q.real, q.imag]))

    @classmethod
    def from_subspace(cls, sub: Subspace) -> "QPProblem":
        return cls.from_complex(sub.matrix(), sub.rhs())

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.Qmat @ z - 2 * self.rvec @ z + 1.0)

    def solve(self, rtol: float = PINV_RTOL) -> np.ndarray:
        Qs = 0.5 * (self.Qmat + self.Qmat.T)
        self.z = _pinv_solve(Qs, self.rvec, rtol)
        return self.z

    @property
    def alpha(self):
        if self.z is None:
            return None
        m = self.z.size // 2
        return self.z[:m] + 1j * self.z[m:]


def _pinv_solve(M, q, rtol=PINV_RTOL, floor=False):
    w, V = np.linalg.eigh(M)
    if floor:
        w = np.maximum(w, 0.0)
    top = np.max(np.abs(w)) if w.size else 0.0
    keep = w > rtol * top if top > 0 else np.zeros_like(w, dtype=bool)
    c = V.conj().T @ q
    c = np.where(keep, c / np.where(keep, w, 1.0), 0.0)
    return V @ c


def solve_qp(sub: Subspace, loss: str | None = None, rtol: float = PINV_RTOL):
    """Minimum-norm minimiser of the combination-coefficient QP.

    Returns ``(alpha, loss_value)`` and stores both on ``sub``.  In shot mode
    the estimated matrix is symmetrised and its eigenvalues floored at 0.
    """
    if sub.m == 0:
        raise ValueError("empty subspace")
    if loss is not None:
        sub.loss_kind = loss.upper()
    M = sub.matrix()
    M = 0.5 * (M + M.conj().T)
    noisy = sub.exact_gram_AA is not None
    alpha = _pinv_solve(M, sub.q, rtol, floor=noisy)
    if noisy:
        w, V = np.linalg.eigh(M)
        M = (V * np.maximum(w, 0.0)) @ V.conj().T
    value = float(np.real(np.vdot(alpha, M @ alpha)) - 2 * np.real(np.vdot(sub.q, alpha)) + 1.0)
    sub.alpha = alpha
    sub.loss = value
    return alpha, value


def build_gram(est: Estimator, S: Sequence[AnsatzNode], tree: AnsatzTree, loss: str = "LR") -> Subspace:
    """Subspace over nodes ``S`` with Gram data from ``est``."""
    sub = Subspace(tree, loss.upper())
    for nd in S:
        sub.add(est, nd)
    return sub


def subspace_loss_oracle(system: LinearSystem, vecs, loss: str = "LR") -> float:
    """Dense oracle: optimum of the loss over ``span(vecs)``.

    Uses an orthonormal basis of ``span(vecs)`` and least squares, independent
    of the Gram/QP path.
    """
    A = system.A.dense()
    b = system.b_dense()
    V = np.array(vecs, dtype=complex).T
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    Q = U[:, s > 1e-10 * s[0]]
    if loss.upper() == "LR":
        B = A @ Q
        c, *_ = np.linalg.lstsq(B, b, rcond=None)
        r = B @ c - b
        return float(np.vdot(r, r).real)
    # Tikhonov: stack [A Q; Q/sqrt(2)] against [b; 0]
    B = np.vstack([A @ Q, Q / np.sqrt(2)])
    t = np.concatenate([b, np.zeros(Q.shape[0])])
    c, *_ = np.linalg.lstsq(B, t, rcond=None)
    r = B @ c - t
    return float(np.vdot(r, r).real)


# ---------------------------------------------------------------------------
# gradient overlaps and expansion


def _residual_gradient(sub: Subspace):
    """``r = 2 (A^2 x - A b)``; then ``<psi|grad> = <psi|r>``."""
    sp = sub.tree.space
    x = sub.solution_vector()
    Ax = sp.apply_A(x)
    AAx = sp.apply_A(Ax)
    Ab = sp.apply_A(sp.root())
    return sp.scale(2.0, sp.sub(AAx, Ab))


def gradient_overlap(est: Estimator, node: AnsatzNode, sub: Subspace, A=None, b=None) -> complex:
    """``<psi|grad L_R> = 2 sum_i alpha_i <psi|A^2|u_i> - 2 <psi|A|b>``."""
    if sub.alpha is None:
        raise ValueError("alpha unset: call solve_qp first")
    if A is not None and A is not sub.tree.system.A:
        raise ValueError("operator does not match the subspace's tree")
    sp = sub.tree.space
    if est.is_exact:
        r = _residual_gradient(sub)
        return sp.inner(node.vec, r)
    return _estimated_overlaps(est, sub, [node.vec])[0]


def _estimated_overlaps(est: Estimator, sub: Subspace, child_vecs) -> np.ndarray:
    sp = sub.tree.space
    beta = sp.betas
    K = sp.K
    m = sub.m
    T_nodes = sp.concat([sp.terms_of(v) for v in sub.vecs])
    broot = sp.batch([sp.root()])
    out = np.zeros(len(child_vecs), dtype=complex)
    for c, v in enumerate(child_vecs):
        Tc = sp.terms_of(v)
        vals = est.sample_complex(sp.cross(Tc, T_nodes)).reshape(K, m, K)
        a2 = np.einsum("k,kil,l->i", beta, vals, beta)
        ab = beta @ est.sample_complex(sp.cross(Tc, broot)[:, 0])
        out[c] = 2 * np.dot(sub.alpha, a2) - 2 * ab
    return out


def _frontier(est: Estimator, tree: AnsatzTree, sub: Subspace, dead=frozenset()):
    """All candidate children with their overlaps, deduplicated by ray."""
    sp = tree.space
    if est.is_exact:
        r = _residual_gradient(sub)
        scores = sp.frontier_scores(sub.vecs, r)
    else:
        scores = None
    cands: dict = {}
    in_sub = {nd.path for nd in sub.nodes if nd.time is None}
    for i, nd in enumerate(sub.nodes):
        if nd.time is not None:
            continue
        for k in range(sp.K):
            path = nd.path + (k,)
            if path in dead or path in in_sub:
                continue
            key = None
            if nd.op is not None:
                key = sp.ray_key(pauli_mul(tree.system.A.terms[k][1], nd.op))
                if key in sub._keys:
                    continue
                prev = cands.get(key)
                if prev is not None and _order_key(prev[0]) <= _order_key(path):
                    continue
                cands[key] = (path, i, k)
            else:
                cands[path] = (path, i, k)
    items = list(cands.values())
    if not items:
        return [], np.zeros(0)
    if scores is not None:
        g = np.array([scores[i, k] for _, i, k in items])
    else:
        vecs = [sp.child(sub.nodes[i].vec, k) for _, i, k in items]
        g = _estimated_overlaps(est, sub, vecs)
    return items, g


def expand_gradient(est: Estimator, tree: AnsatzTree, sub: Subspace) -> AnsatzNode:
    """Child of the subspace with the largest ``|<psi|grad L_R>|``.

    Ties (relative ``1e-12``) are broken by ``(depth, path)`` order.  The
    winning overlap is stored on ``node.overlap``.
    """
    if sub.alpha is None:
        raise ValueError("alpha unset: call solve_qp first")
    dead = set()
    while True:
        items, g = _frontier(est, tree, sub, dead)
        if not items:
            raise FrontierExhausted("all children are already in the subspace")
        mag = np.abs(g)
        order = sorted(range(len(items)), key=lambda j: (-mag[j], _order_key(items[j][0])))
        gmax = mag[order[0]]
        tied = [j for j in order if mag[j] >= gmax * (1 - TIE_RTOL)]
        j = min(tied, key=lambda j: _order_key(items[j][0]))
        path, i, k = items[j]
        node = tree.child(sub.nodes[i], k)
        if node.ray_key is None and sub.contains(node):
            dead.add(path)
            continue
        node.overlap = complex(g[j])
        return node


def expand_lookahead(est: Estimator, tree: AnsatzTree, sub: Subspace):
    """Child whose own children carry the largest gradient overlap.

    Used when every child of the subspace has a vanishing overlap while the
    loss is still positive (e.g. operators whose terms grade the tree by
    depth parity).  Returns ``(node, score)``; ``node.overlap`` holds the
    child's own (near-zero) overlap.
    """
    if sub.alpha is None:
        raise ValueError("alpha unset: call solve_qp first")
    items, g = _frontier(est, tree, sub)
    if not items:
        raise FrontierExhausted("all children are already in the subspace")
    sp = tree.space
    cvecs = [sp.child(sub.nodes[i].vec, k) for _, i, k in items]
    if est.is_exact:
        r = _residual_gradient(sub)
        look = np.abs(sp.frontier_scores(cvecs, r)).max(axis=1)
    else:
        gvecs = [sp.child(c, k) for c in cvecs for k in range(sp.K)]
        look = np.abs(_estimated_overlaps(est, sub, gvecs)).reshape(len(cvecs), sp.K).max(axis=1)
    top = look.max()
    tied = [j for j in range(len(items)) if look[j] >= top * (1 - TIE_RTOL)]
    j = min(tied, key=lambda j: _order_key(items[j][0]))
    path, i, k = items[j]
    node = tree.child(sub.nodes[i], k)
    node.overlap = complex(g[j])
    return node, float(top)


def expand_bfs(tree: AnsatzTree, depth: int, max_nodes: int | None = None) -> list:
    """All distinct-ray nodes up to ``depth`` in path-lexicographic BFS order."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    root = tree.root()
    out = [root]
    seen_keys = {root.ray_key} if root.ray_key is not None else set()
    layer = [root]
    for _ in range(depth):
        nxt = []
        for nd in layer:
            for k in range(tree.K):
                if max_nodes is not None and len(out) >= max_nodes:
                    return out
                ch = tree.child(nd, k)
                if ch.ray_key is not None:
                    if ch.ray_key in seen_keys:
                        continue
                    seen_keys.add(ch.ray_key)
                elif any(tree.same_ray(ch, o) for o in out):
                    continue
                out.append(ch)
                nxt.append(ch)
        layer = nxt
        if not layer:
            break
    if max_nodes is not None:
        out = out[:max_nodes]
    return out


def hamiltonian_time_grid(kappa: float, eps: float, scale: float = 1.0, cap: int = 100_000) -> np.ndarray:
    """Symmetric grid ``t_j = eps j / (kappa log(kappa/eps))``, ``|j| <= J``.

    ``J = ceil(scale * kappa^2 log^2(kappa/eps) / eps)``.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    L = math.log(kappa / eps)
    J = int(math.ceil(scale * kappa ** 2 * L ** 2 / eps))
    if 2 * J + 1 > cap:
        raise ValueError(f"time grid has {2 * J + 1} states, above the cap {cap}; "
                         "use a smaller kappa or a larger eps")
    j = np.arange(-J, J + 1)
    return eps * j / (kappa * L)


# ---------------------------------------------------------------------------
# driver


@dataclass
class SolveConfig:
    """Settings for :func:`cqs_solve`."""

    strategy: str = "gradient"
    depth: int = 2
    max_iters: int = 50
    tol: float = 1e-10
    grad_tol: float | None = None
    loss: str = "LR"
    kappa: float | None = None
    eps: float = 0.1
    time_scale: float = 1.0
    time_cap: int = 100_000
    max_nodes: int | None = None
    backend: str = "auto"
    trace: str = "node"
    stall: str = "lookahead"

    def validate(self):
        if self.strategy not in ("bfs", "gradient", "hamiltonian"):
            raise ValueError(f"strategy: unknown value {self.strategy!r}")
        if self.loss.upper() not in ("LR", "LT"):
            raise ValueError(f"loss: unknown value {self.loss!r}")
        if self.depth < 0:
            raise ValueError("depth: must be >= 0")
        if self.max_iters < 0:
            raise ValueError("max_iters: must be >= 0")
        if self.tol < 0:
            raise ValueError("tol: must be >= 0")
        if self.stall not in ("lookahead", "stop", "argmax"):
            raise ValueError(f"stall: unknown value {self.stall!r}")
        if self.trace not in ("node", "depth"):
            raise ValueError(f"trace: unknown value {self.trace!r}")
        return self

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveReport:
    """Result of :func:`cqs_solve`."""

    loss_trace: list
    chosen_paths: list
    alpha: np.ndarray
    gradient_overlaps: list
    node_counts: list
    shot_trace: list
    shot_ledger: int
    config: dict
    timings: dict
    converged: bool
    stop_reason: str
    true_loss_trace: list | None = None
    decrease_violations: list = field(default_factory=list)
    depth_losses: dict = field(default_factory=dict)
    subspace: Subspace | None = field(default=None, repr=False)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]

    def to_dict(self) -> dict:
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "version": __version__,
            "config": self.config,
            "loss_trace": [float(v) for v in self.loss_trace],
            "true_loss_trace": None if self.true_loss_trace is None else [float(v) for v in self.true_loss_trace],
            "chosen_paths": [list(p) if isinstance(p, tuple) else p for p in self.chosen_paths],
            "alpha": [cplx(a) for a in self.alpha],
            "gradient_overlaps": [None if g is None else cplx(g) for g in self.gradient_overlaps],
            "node_counts": self.node_counts,
            "shot_trace": self.shot_trace,
            "shot_ledger": self.shot_ledger,
            "timings": self.timings,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "decrease_violations": self.decrease_violations,
            "depth_losses": {str(k): v for k, v in self.depth_losses.items()},
        }

    def csv_rows(self):
        rows = []
        for i, loss in enumerate(self.loss_trace):
            g = self.gradient_overlaps[i]
            rows.append((i, float(loss), "" if g is None else float(abs(g)), self.node_counts[i],
                         self.shot_trace[i]))
        return rows


def cqs_solve(system: LinearSystem, config: SolveConfig | None = None,
              est: Estimator | None = None, **overrides) -> SolveReport:
    """Alternate Gram estimation / QP solves with an expansion strategy.

    Stops when the loss is at most ``tol``, the frontier is exhausted, the
    best gradient overlap is at most ``grad_tol`` or ``max_iters`` expansions
    were made.  Non-convergence is reported, not raised.

    For ``loss="LT"`` the tolerance is measured above the closed-form
    minimum of ``L_T`` when ``A`` can be assembled densely (``n <= 10``).

    ``stall`` decides what happens when every child overlap is at most
    ``grad_tol`` while the loss is above ``tol``: ``"stop"`` ends the run,
    ``"argmax"`` adds the tie-broken child anyway and ``"lookahead"`` (default)
    adds the child whose own children have the largest overlap, stopping
    only if those vanish too.
    """
    cfg = config or SolveConfig()
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise ValueError(f"{k}: unknown solver setting")
        setattr(cfg, k, v)
    cfg.validate()
    est = est or Estimator.exact()
    t0 = time.perf_counter()
    loss_kind = cfg.loss.upper()
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-8 * system.A.one_norm
    floor = _loss_floor(system, loss_kind)
    target = cfg.tol + (floor or 0.0)

    if cfg.strategy == "hamiltonian":
        tree = AnsatzTree(system, "dense")
    else:
        tree = AnsatzTree(system, cfg.backend)
    sub = Subspace(tree, loss_kind)

    losses, true_losses, paths, overlaps, counts, shots = [], [], [], [], [], []
    violations = []
    depth_losses = {}

    def record(g=None):
        _, val = solve_qp(sub)
        losses.append(val)
        if sub.exact_gram_AA is not None:
            true_losses.append(sub.objective(sub.alpha, exact=True))
        overlaps.append(g)
        counts.append(sub.m)
        shots.append(est.shot_ledger if not est.is_exact else 0)
        return val

    converged = False
    reason = "max_iters"
    if cfg.strategy == "hamiltonian":
        if cfg.kappa is None:
            raise ValueError("kappa: required for the hamiltonian strategy")
        ts = hamiltonian_time_grid(cfg.kappa, cfg.eps, cfg.time_scale, cfg.time_cap)
        Ad = DenseOperatorMatrix(system.A.dense(), hermitian=True)
        states = evolve_exp(Ad, ts, system.b_dense())
        _solve_time_set(est, sub, tree, ts, states)
        losses.append(sub.loss)
        overlaps.append(None)
        counts.append(sub.m)
        shots.append(est.shot_ledger if not est.is_exact else 0)
        paths = [("t", float(t)) for t in ts]
        converged = sub.loss <= max(cfg.tol, cfg.eps ** 2)
        reason = "converged" if converged else "time_grid"
    elif cfg.strategy == "bfs":
        nodes = expand_bfs(tree, cfg.depth, cfg.max_nodes)
        for nd in nodes:
            sub.add(est, nd)
            paths.append(nd.path)
            if cfg.trace == "node" or nd is nodes[-1]:
                record()
            if cfg.trace == "node":
                depth_losses[nd.depth] = losses[-1]
        if cfg.trace == "depth":
            depth_losses[nodes[-1].depth] = losses[-1]
        converged = losses[-1] <= target
        reason = "converged" if converged else "depth_reached"
    else:
        root = tree.root()
        sub.add(est, root)
        paths.append(root.path)
        loss = record()
        it = 0
        while True:
            if loss <= target:
                converged, reason = True, "converged"
                break
            if it >= cfg.max_iters:
                reason = "max_iters"
                break
            try:
                node = expand_gradient(est, tree, sub)
            except FrontierExhausted:
                reason = "frontier_exhausted"
                break
            g = node.overlap
            if abs(g) <= grad_tol:
                if cfg.stall == "stop":
                    converged, reason = True, "stationary"
                    break
                if cfg.stall == "lookahead":
                    node, score = expand_lookahead(est, tree, sub)
                    if score <= grad_tol:
                        converged, reason = True, "stationary"
                        break
                g = node.overlap
            Apsi = tree.space.apply_A(node.vec)
            a2 = max(1.0, tree.space.inner(Apsi, Apsi).real)
            sub.add(est, node)
            paths.append(node.path)
            new = record(g)
            if est.is_exact and new > loss - abs(g) ** 2 / (4 * a2) + 1e-9:
                violations.append({"iter": it + 1, "before": loss, "after": new, "g": abs(g)})
            loss = new
            it += 1

    report = SolveReport(
        loss_trace=losses,
        chosen_paths=paths,
        alpha=sub.alpha,
        gradient_overlaps=overlaps,
        node_counts=counts,
        shot_trace=shots,
        shot_ledger=0 if est.is_exact else est.shot_ledger,
        config={"solver": cfg.to_dict(), "estimator": est.config(), "grad_tol": grad_tol,
                "loss_floor": floor, "system": _system_echo(system)},
        timings={"total_s": time.perf_counter() - t0},
        converged=converged,
        stop_reason=reason,
        true_loss_trace=true_losses or None,
        decrease_violations=violations,
        depth_losses=depth_losses,
        subspace=sub,
    )
    return report


def _loss_floor(system: LinearSystem, loss_kind: str):
    """``min L_T = b^dag (1 + 2 A A^dag)^{-1} b`` via the SVD of ``A`` (``None`` if too large)."""
    if loss_kind == "LR":
        return 0.0
    if system.n > 10:
        return None
    U, sv, _ = np.linalg.svd(system.A.dense())
    bt = U.conj().T @ system.b_dense()
    return float(np.sum(np.abs(bt) ** 2 / (1.0 + 2.0 * sv ** 2)))


def _system_echo(system: LinearSystem) -> dict:
    return {"n": system.n, "K_A": system.A.K_A, "backend": system.A.backend,
            "metadata": {k: v for k, v in system.metadata.items() if k != "alphas"}}


def _solve_time_set(est, sub: Subspace, tree: AnsatzTree, ts, states):
    """Fill ``sub`` with time-evolved states and solve.

    When there are more states than dimensions the QP is solved through a
    thin factor of ``M`` (same pseudo-inverse, cutoff applied to
    ``sigma^2``), which avoids forming the large Gram matrix.
    """
    sp = tree.space
    nodes = [AnsatzNode((), DenseState(sp.n, v, normalized=False), None, time=float(t), vec=v)
             for t, v in zip(ts, states)]
    dim = states.shape[1]
    if len(nodes) <= 2 * dim or not est.is_exact:
        for nd in nodes:
            sub.add(est, nd)
        solve_qp(sub)
        return
    AV = states @ sp.Amat.T  # rows A u_j
    F = AV.T
    target = sp.b
    if sub.loss_kind == "LT":
        F = np.vstack([F, states.T / np.sqrt(2)])
        target = np.concatenate([target, np.zeros(dim)])
    U, s, Vh = np.linalg.svd(F, full_matrices=False)
    keep = s ** 2 > PINV_RTOL * s[0] ** 2
    alpha = Vh[keep].conj().T @ ((U[:, keep].conj().T @ target) / s[keep])
    resid = F @ alpha - target
    sub.nodes = nodes
    sub.alpha = alpha
    sub.loss = float(np.vdot(resid, resid).real)
