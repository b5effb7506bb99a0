"""Loss landscapes of variational linear-system solvers.

Everything here uses the product ansatz

    |x(theta)> = exp(-i theta_1 X) (x) ... (x) exp(-i theta_n X) |0^n>,

whose qubit ``j`` carries amplitudes ``(cos theta_j, -i sin theta_j)``.  For
the flat-landscape toy system ``A = X^{k_1} (x) ... (x) X^{k_n}``, ``b = |0^n>``,
all overlaps factor per qubit and are evaluated in log-space, so ``n = 100``
is handled without underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backends import apply_gate, apply_pauli_dense, as_rng, haar_unitary
from .pauli import PauliString

__all__ = [
    "ProductAnsatz",
    "AdiabaticCutSpec",
    "half_weight_k",
    "toy_loss",
    "toy_loss_cut",
    "toy_gradient",
    "toy_gradient_norm",
    "adiabatic_cut",
    "adiabatic_terms",
    "adiabatic_loss_dense",
    "initial_point_is_minimizer",
    "brickwork_circuit",
    "local_loss",
    "local_loss_concentration",
]


@dataclass(frozen=True)
class ProductAnsatz:
    """Angles of the product ansatz, plus an optional ancilla angle.

    The ancilla (if any) is the first qubit and sits in
    ``cos(phi)|-> + sin(phi)|+>``.
    """

    thetas: np.ndarray
    ancilla: float | None = None

    def __post_init__(self):
        t = np.array(self.thetas, dtype=float).ravel()
        t.setflags(write=False)
        object.__setattr__(self, "thetas", t)

    @property
    def n(self) -> int:
        return self.thetas.size

    def qubit_amplitudes(self) -> np.ndarray:
        """``(n, 2)`` per-qubit amplitudes ``(cos theta, -i sin theta)``."""
        return np.stack([np.cos(self.thetas), -1j * np.sin(self.thetas)], axis=1).astype(complex)

    def dense(self) -> np.ndarray:
        if self.n + (self.ancilla is not None) > 14:
            raise ValueError("dense product state limited to 14 qubits")
        v = np.ones(1, dtype=complex)
        if self.ancilla is not None:
            c, s = np.cos(self.ancilla), np.sin(self.ancilla)
            v = np.array([c + s, s - c], dtype=complex) / np.sqrt(2)
        for a in self.qubit_amplitudes():
            v = np.kron(v, a)
        return v

    def derivative_norms(self) -> np.ndarray:
        """``|d/dtheta_i |x>|`` (the constant ``G`` of the flatness argument); all 1 here."""
        return np.ones(self.n)


@dataclass(frozen=True)
class AdiabaticCutSpec:
    """Bit string ``k`` and the ``(s, lambda)`` grid of an adiabatic cut."""

    k: np.ndarray
    s_grid: np.ndarray = field(default_factory=lambda: np.round(np.linspace(0, 1, 11), 12))
    lambda_grid: np.ndarray = field(default_factory=lambda: np.linspace(0, 1, 101))

    def __post_init__(self):
        for name in ("k", "s_grid", "lambda_grid"):
            a = np.array(getattr(self, name), dtype=np.uint8 if name == "k" else float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any((self.s_grid < 0) | (self.s_grid > 1)):
            raise ValueError("s_grid must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.k.size

    def evaluate(self) -> np.ndarray:
        return adiabatic_cut(self.n, self.k, self.s_grid, self.lambda_grid)


def half_weight_k(n: int) -> np.ndarray:
    """``k`` with the first ``ceil(n/2)`` bits set."""
    k = np.zeros(n, dtype=np.uint8)
    k[: (n + 1) // 2] = 1
    return k


def _as_k(n, k):
    k = half_weight_k(n) if k is None else np.asarray(k, dtype=np.uint8).ravel()
    if k.size != n:
        raise ValueError(f"k must have {n} bits, got {k.size}")
    return k


def _log_factors(thetas, k):
    """``log |<k|x>|`` factor per qubit and the phase ``(-i)^{|k|}`` sign data.

    ``thetas`` may carry leading batch axes; reduction is over the last one.
    """
    t = np.asarray(thetas, dtype=float)
    mag = np.where(k.astype(bool), np.abs(np.sin(t)), np.abs(np.cos(t)))
    sgn = np.where(k.astype(bool), np.sign(np.sin(t)), np.sign(np.cos(t)))
    with np.errstate(divide="ignore"):
        logm = np.log(mag)
    return logm, sgn


def _overlap_kx(thetas, k):
    """``<k|x(theta)>`` as ``(log|.|, unit phase)``."""
    logm, sgn = _log_factors(thetas, k)
    phase = np.prod(sgn, axis=-1) * (-1j) ** int(k.sum())
    return logm.sum(axis=-1), phase


def toy_loss(thetas, k, loss: str = "LH") -> np.ndarray:
    """Toy-system loss at one or many angle vectors (last axis = qubits).

    ``LH = 1 - |<k|x>|^2`` and ``LR = 2 - 2 Re <k|x>``, using ``A|x>`` and
    ``<b|A = <k|``.
    """
    k = np.asarray(k, dtype=np.uint8)
    logv, ph = _overlap_kx(thetas, k)
    loss = loss.upper()
    if loss == "LH":
        return -np.expm1(2.0 * logv) + 0.0
    if loss == "LR":
        return 2.0 - 2.0 * np.real(ph) * np.exp(logv)
    raise ValueError(f"loss: unknown value {loss!r} (expected LH or LR)")


def toy_loss_cut(n: int, k=None, loss: str = "LH", lambda_grid=None) -> np.ndarray:
    """Loss along ``theta(lambda) = lambda * pi/2 * k`` (0: start, 1: solution)."""
    k = _as_k(n, k)
    lam = np.linspace(0, 1, 101) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    thetas = lam[:, None] * (np.pi / 2) * k[None, :]
    return toy_loss(thetas, k, loss)


def toy_gradient(n: int, k, theta0, loss: str = "LH") -> np.ndarray:
    """Exact partial derivatives of the toy loss at ``theta0``.

    With ``<k|x> = prod_j a_j(theta_j)`` the partial in ``theta_i`` is the
    leave-one-out product times ``a_i'``.  Zero factors are counted so that
    the leave-one-out logs stay finite.
    """
    k = _as_k(n, k)
    t = np.asarray(theta0, dtype=float).ravel()
    if t.size != n:
        raise ValueError(f"theta0 must have {n} entries")
    on = k.astype(bool)
    a = np.where(on, -1j * np.sin(t), np.cos(t))
    da = np.where(on, -1j * np.cos(t), -np.sin(t))
    mag = np.abs(a)
    zero = mag == 0
    with np.errstate(divide="ignore"):
        logs = np.where(zero, 0.0, np.log(np.where(zero, 1.0, mag)))
    unit = np.where(zero, 1.0, a / np.where(zero, 1.0, mag))
    total = logs.sum()
    nz = int(zero.sum())
    uprod = np.prod(unit)
    loo = np.empty(n, dtype=complex)
    for i in range(n):
        if nz - int(zero[i]) > 0:
            loo[i] = 0.0
        else:
            loo[i] = np.exp(total - logs[i]) * uprod / unit[i]
    dv = loo * da  # d<k|x>/dtheta_i
    loss = loss.upper()
    if loss == "LH":
        v = np.exp(total) * uprod if nz == 0 else 0.0
        return -2.0 * np.real(np.conj(v) * dv)
    if loss == "LR":
        return -2.0 * np.real(dv)
    raise ValueError(f"loss: unknown value {loss!r} (expected LH or LR)")


def toy_gradient_norm(n: int, k, theta0, loss: str = "LH") -> float:
    """``max_i |dL/dtheta_i|`` at ``theta0``."""
    return float(np.max(np.abs(toy_gradient(n, k, theta0, loss))))


# adiabatic cut ------------------------------------------------------------------


def adiabatic_terms(k, phi, thetas):
    """``f, g, h`` of the adiabatic loss for ancilla angle ``phi`` and data angles.

    ``f = |<-,0^n|x>|^2``, ``g = |<+,k|x>|^2`` and
    ``h = Re(<x|-,0^n> <+,k|x>)``; batched over leading axes.
    """
    k = np.asarray(k, dtype=np.uint8)
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(thetas, dtype=float)
    with np.errstate(divide="ignore"):
        log0 = np.log(np.abs(np.cos(t))).sum(axis=-1)
    sg0 = np.prod(np.sign(np.cos(t)), axis=-1)
    logk, phk = _overlap_kx(t, k)
    cph, sph = np.cos(phi), np.sin(phi)
    f = cph ** 2 * np.exp(2 * log0)
    g = sph ** 2 * np.exp(2 * logk)
    h = cph * sph * sg0 * np.exp(log0 + logk) * np.real(phk)
    return f, g, h


def adiabatic_cut(n: int, k=None, s_grid=None, lambda_grid=None) -> np.ndarray:
    """``<x|H(s)|x>`` on the straight cut from ``|-,0^n>`` to ``|+,k>``.

    Along ``lambda`` the data angles are ``lambda * pi/2 * k`` and the
    ancilla angle is ``lambda * pi/2`` (linear rotation from ``|->`` to
    ``|+>``).  Returns a ``(len(s_grid), len(lambda_grid))`` matrix of
    ``c(s) - (1-s)^2 f - s^2 g - 2 s (1-s) h`` with ``c(s) = 1 - 2s + 2s^2``.
    """
    k = _as_k(n, k)
    s = np.round(np.linspace(0, 1, 11), 12) if s_grid is None else np.asarray(s_grid, dtype=float)
    lam = np.linspace(0, 1, 101) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    f, g, h = adiabatic_terms(k, lam * np.pi / 2, lam[:, None] * (np.pi / 2) * k[None, :])
    s = s[:, None]
    c = 1 - 2 * s + 2 * s * s
    return c - (1 - s) ** 2 * f - s ** 2 * g - 2 * s * (1 - s) * h


def adiabatic_loss_dense(n: int, k, s: float, lam: float) -> float:
    """Dense oracle for one point of :func:`adiabatic_cut` (``n <= 10``)."""
    from .operators import build_H, toy_system

    k = _as_k(n, k)
    H = build_H(s, toy_system(n, k)).matrix
    x = ProductAnsatz(lam * np.pi / 2 * k, ancilla=lam * np.pi / 2).dense()
    return float(np.real(np.vdot(x, H @ x)))


def initial_point_is_minimizer(cut: np.ndarray, lambda_grid, basin: float = 0.5,
                               tol: float = 1e-12) -> np.ndarray:
    """Per ``s`` row: is ``lambda = 0`` a grid minimizer of the cut near the start?

    The comparison runs over grid points with ``lambda <= basin`` (the half
    of the cut nearer the initial point) and allows ``tol`` slack.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if lam[0] != 0.0:
        raise ValueError("lambda_grid must start at 0")
    sel = lam <= basin
    return cut[:, 0] <= cut[:, sel].min(axis=1) + tol


# local loss concentration -----------------------------------------------------------


def brickwork_circuit(n: int, gates: int | None = None, seed=None) -> list:
    """Nearest-neighbour brickwork of Haar two-qubit gates (``n^2`` gates by default)."""
    if n < 2:
        raise ValueError("brickwork needs n >= 2")
    rng = as_rng(seed)
    gates = n * n if gates is None else int(gates)
    out = []
    layer = 0
    while len(out) < gates:
        for q in range(layer % 2, n - 1, 2):
            if len(out) == gates:
                break
            out.append((haar_unitary(4, rng).entries, (q, q + 1)))
        layer += 1
    return out


def _run(circuit, psi, n, adjoint=False):
    seq = reversed(circuit) if adjoint else circuit
    for U, qs in seq:
        psi = apply_gate(psi, U.conj().T if adjoint else U, qs, n)
    return psi


def _p0_per_qubit(y, n):
    p = np.abs(y.reshape([2] * n)) ** 2
    return np.array([p.take(0, axis=i).sum() for i in range(n)])


def local_loss(circuit, A: PauliString, thetas, gradient: bool = False):
    """``L_L = 1 - 1/n sum_i <x|A U_b |0_i><0_i| U_b^dag A|x>`` and optionally its gradient.

    The gradient uses ``d|x>/dtheta_j = -i X_j |x>``, so
    ``dL/dtheta_j = 2 Re(i <x|X_j|v>)`` with ``v = A U_b M U_b^dag A |x>``.
    """
    n = A.n
    x = ProductAnsatz(thetas).dense()
    y = _run(circuit, apply_pauli_dense(A, x), n, adjoint=True)
    p0 = _p0_per_qubit(y, n)
    L = 1.0 - p0.mean()
    if not gradient:
        return float(L)
    # M = 1 - (1/n) sum_i |0_i><0_i| is diagonal in the computational basis
    zeros = n - np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(float)
    My = (1.0 - zeros / n) * y
    v = apply_pauli_dense(A, _run(circuit, My, n))
    g = np.empty(n)
    for j in range(n):
        Xj = PauliString.single(n, j, "X")
        g[j] = 2.0 * np.real(1j * np.vdot(x, apply_pauli_dense(Xj, v)))
    return float(L), g


def _fd_gradient(circuit, A, thetas, h=1e-5):
    g = np.empty(len(thetas))
    for j in range(len(thetas)):
        e = np.zeros(len(thetas))
        e[j] = h
        g[j] = (local_loss(circuit, A, thetas + e) - local_loss(circuit, A, thetas - e)) / (2 * h)
    return g


def _random_pauli(n, rng) -> PauliString:
    while True:
        xz = rng.integers(0, 2, size=(2, n), dtype=np.uint8)
        if xz.any():
            return PauliString.from_arrays(xz[0], xz[1])


def local_loss_concentration(n: int, circuit_depth: int | None = None, trials: int = 100,
                             seed=None, finite_difference: bool = False) -> dict:
    """Sample ``L_L`` and ``max_k |dL_L/dtheta_k|`` over random instances.

    Each trial draws a brickwork ``U_b`` with ``circuit_depth`` gates
    (default ``n^2``), a random non-identity Pauli ``A`` and uniform angles.

    Returns
    -------
    dict
        ``losses``, ``grad_max`` arrays and summary statistics.
    """
    if n > 12:
        raise ValueError(f"n={n} too large for dense local-loss sampling (max 12)")
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = as_rng(seed)
    losses = np.empty(trials)
    gmax = np.empty(trials)
    for t in range(trials):
        circ = brickwork_circuit(n, circuit_depth, rng)
        A = _random_pauli(n, rng)
        th = rng.uniform(0, 2 * np.pi, n)
        if finite_difference:
            losses[t] = local_loss(circ, A, th)
            g = _fd_gradient(circ, A, th)
        else:
            losses[t], g = local_loss(circ, A, th, gradient=True)
        gmax[t] = np.abs(g).max()
    dev = np.abs(losses - 0.5)
    return {
        "n": n,
        "gates": n * n if circuit_depth is None else int(circuit_depth),
        "trials": trials,
        "losses": losses,
        "grad_max": gmax,
        "mean": float(losses.mean()),
        "variance": float(losses.var(ddof=1)) if trials > 1 else 0.0,
        "median_dev": float(np.median(dev)),
        "median_grad_max": float(np.median(gmax)),
    }
