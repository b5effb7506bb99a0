import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqs.landscape import (
    AdiabaticCutSpec,
    ProductAnsatz,
    _fd_gradient,
    _random_pauli,
    adiabatic_cut,
    adiabatic_loss_dense,
    brickwork_circuit,
    half_weight_k,
    initial_point_is_minimizer,
    local_loss,
    local_loss_concentration,
    toy_gradient,
    toy_gradient_norm,
    toy_loss,
    toy_loss_cut,
)
from cqs.operators import toy_system


def test_toy_endpoints():
    for n in (5, 100):
        cut = toy_loss_cut(n, loss="LH")
        assert cut[0] == 1.0 and cut[-1] == 0.0
        # <k|x> at the end of the cut is (-i)^w with w the weight of k
        w = int(half_weight_k(n).sum())
        lr = toy_loss_cut(n, loss="LR")
        assert lr[0] == 2.0
        assert lr[-1] == pytest.approx(2 - 2 * np.real((-1j) ** w), abs=1e-12)
        assert np.all((lr >= -1e-12) & (lr <= 4 + 1e-12))


def test_toy_midpoint_log_space():
    n = 100
    k = half_weight_k(n)
    mid = toy_loss_cut(n, k, "LH", [0.5])[0]
    w = int(k.sum())
    exact = -np.expm1(w * np.log(0.5))  # |<k|x>|^2 = (1/2)^w
    assert abs(mid - exact) < 1e-12
    assert mid < 1.0


@given(st.integers(0, 2**31), st.integers(1, 6))
@settings(max_examples=20, deadline=None)
def test_toy_loss_vs_dense(seed, n):
    rng = np.random.default_rng(seed)
    k = rng.integers(0, 2, n).astype(np.uint8)
    th = rng.uniform(0, 2 * np.pi, n)
    sys_ = toy_system(n, k)
    x = ProductAnsatz(th).dense()
    A, b = sys_.A.dense(), sys_.b_dense()
    bA = A.conj().T @ b
    Ax = A @ x
    lh = np.vdot(Ax, Ax).real - abs(np.vdot(b, Ax)) ** 2
    lr = np.vdot(Ax - b, Ax - b).real
    assert toy_loss(th, k, "LH") == pytest.approx(lh, abs=1e-12)
    assert toy_loss(th, k, "LR") == pytest.approx(lr, abs=1e-12)
    assert np.allclose(bA, np.eye(1 << n)[int("".join(map(str, k)), 2)])


def test_toy_gradient_fd():
    rng = np.random.default_rng(3)
    k = half_weight_k(6)
    th = rng.uniform(0, 2 * np.pi, 6)
    g = toy_gradient(6, k, th, "LR")
    h = 1e-6
    fd = [(toy_loss(th + h * e, k, "LR") - toy_loss(th - h * e, k, "LR")) / (2 * h) for e in np.eye(6)]
    assert np.allclose(g, fd, atol=1e-7)


def test_toy_gradient_vanishes_at_start():
    assert np.all(toy_gradient(50, None, np.zeros(50), "LH") == 0)


def test_toy_loss_bad_kind():
    with pytest.raises(ValueError, match="loss"):
        toy_loss(np.zeros(2), [1, 0], "LQ")


@pytest.mark.parametrize("s", [0.0, 0.4, 1.0])
def test_adiabatic_cut_vs_dense(s):
    n = 4
    k = half_weight_k(n)
    lam = np.array([0.0, 0.3, 0.77, 1.0])
    cut = adiabatic_cut(n, k, [s], lam)[0]
    ref = [adiabatic_loss_dense(n, k, s, l) for l in lam]
    assert np.allclose(cut, ref, atol=1e-12)


def test_adiabatic_cut_endpoints():
    cut = adiabatic_cut(100, None, [0.0, 1.0], np.linspace(0, 1, 11))
    assert abs(cut[0, 0]) < 1e-12   # ground state of H(0)
    assert abs(cut[1, -1]) < 1e-12  # ground state of H(1)


def test_initial_point_minimizer_large_n():
    lam = np.linspace(0, 1, 101)
    cut = AdiabaticCutSpec(half_weight_k(100), lambda_grid=lam).evaluate()
    assert initial_point_is_minimizer(cut, lam).all()
    with pytest.raises(ValueError):
        initial_point_is_minimizer(cut, lam[1:])


def test_local_loss_gradient_matches_fd():
    rng = np.random.default_rng(0)
    n = 4
    circ = brickwork_circuit(n, seed=rng)
    A = _random_pauli(n, rng)
    th = rng.uniform(0, 2 * np.pi, n)
    L, g = local_loss(circ, A, th, gradient=True)
    assert 0 <= L <= 1
    assert np.allclose(g, _fd_gradient(circ, A, th), atol=1e-8)


def test_local_loss_zero_for_trivial_instance():
    from cqs.pauli import PauliString

    # U_b = identity-like (no gates), A = identity, x = |0>: all projectors hit
    L = local_loss([], PauliString.identity(3), np.zeros(3))
    assert L == 0.0


def test_brickwork_gate_count():
    assert len(brickwork_circuit(5, seed=0)) == 25
    assert len(brickwork_circuit(4, 7, seed=0)) == 7


def test_concentration_small():
    out = local_loss_concentration(4, trials=20, seed=1)
    assert out["losses"].shape == (20,)
    assert 0 < out["mean"] < 1
    with pytest.raises(ValueError):
        local_loss_concentration(13, trials=1)


def test_toy_gradient_exponentially_small():
    k = half_weight_k(100)
    small = 0
    for seed in range(100):
        th = np.random.default_rng(seed).uniform(0, 2 * np.pi, 100)
        small += toy_gradient_norm(100, k, th) <= 2.0 ** -20
    assert small >= 95


def test_toy_gradient_vs_dense_fd():
    n = 4
    k = np.array([1, 0, 1, 1], np.uint8)
    th = np.random.default_rng(1).uniform(0, 2 * np.pi, n)
    sys_ = toy_system(n, k)
    A, b = sys_.A.dense(), sys_.b_dense()

    def lh(t):
        Ax = A @ ProductAnsatz(t).dense()
        return np.vdot(Ax, Ax).real - abs(np.vdot(b, Ax)) ** 2

    h = 1e-5
    fd = [(lh(th + h * e) - lh(th - h * e)) / (2 * h) for e in np.eye(n)]
    assert np.allclose(toy_gradient(n, k, th, "LH"), fd, atol=1e-7)


def test_adiabatic_plateau_value():
    cut = adiabatic_cut(100, None, [1.0], [0.0])
    assert cut[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_local_loss_exact_solution():
    from cqs.pauli import PauliString

    n = 5
    X = PauliString.from_arrays(np.ones(n, np.uint8), np.zeros(n, np.uint8))
    assert local_loss([], X, np.full(n, np.pi / 2)) == pytest.approx(0.0, abs=1e-15)


def test_concentration_n12_median():
    out = local_loss_concentration(12, 144, trials=100, seed=3)
    assert out["median_dev"] <= 0.1
