import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from cqs.backends import (
    DenseOperatorMatrix,
    DenseState,
    PauliSum,
    SymbolicState,
    apply_gate,
    apply_pauli_dense,
    evolve_exp,
    haar_unitary,
    overlap,
)
from cqs.pauli import PauliString, ProductState


def rand_pauli(n, rng):
    return PauliString.from_label("".join(rng.choice(list("IXYZ"), n)), int(rng.integers(0, 4)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_symbolic_and_dense_overlap_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    base = ProductState.random(n, rng)
    u = SymbolicState(base, rand_pauli(n, rng))
    v = SymbolicState(base, rand_pauli(n, rng), scale=np.exp(1j * rng.uniform(0, 6)))
    O = PauliSum(tuple((rng.standard_normal(), rand_pauli(n, rng)) for _ in range(3)))
    sym = overlap(u, O, v)
    den = overlap(u.to_dense(), O, v.to_dense())
    assert abs(sym - den) < 1e-12


def test_overlap_identity_is_inner_product():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    assert abs(overlap(DenseState(3, a), None, DenseState(3, b)) - np.vdot(a, b)) < 1e-14


def test_backend_mismatch_raises():
    d = DenseState.basis(2)
    s = SymbolicState(ProductState.zero(2), PauliString.identity(2))
    with pytest.raises(TypeError):
        overlap(d, None, s)


def test_symbolic_needs_pauli_terms():
    s = SymbolicState(ProductState.zero(1), PauliString.identity(1))
    with pytest.raises(TypeError):
        overlap(s, DenseOperatorMatrix(np.eye(2)), s)


def test_dense_state_validation():
    with pytest.raises(ValueError):
        DenseState(2, np.ones(4))
    with pytest.raises(ValueError):
        DenseState(15, np.zeros(1 << 15))


@pytest.mark.parametrize("real", [False, True])
def test_haar_unitary_is_unitary(real):
    U = haar_unitary(16, seed=3, real=real).entries
    assert np.allclose(U @ U.conj().T, np.eye(16), atol=1e-12)
    if real:
        assert np.abs(U.imag).max() == 0


def test_haar_phases_are_uniform():
    # diagonal-phase fix makes the eigenphase distribution rotation invariant
    ph = np.concatenate([np.angle(np.linalg.eigvals(haar_unitary(4, seed=s).entries)) for s in range(300)])
    assert abs(np.mean(np.cos(ph))) < 0.05 and abs(np.mean(np.sin(ph))) < 0.05


def test_evolve_exp_matches_expm():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = DenseOperatorMatrix(G + G.conj().T, hermitian=True)
    v = DenseState.basis(3, 2)
    out = evolve_exp(H, 0.7, v)
    ref = sla.expm(-0.7j * H.entries) @ v.amplitudes
    assert np.allclose(out.amplitudes, ref, atol=1e-12)
    stack = evolve_exp(H, np.array([0.0, 0.7]), v.amplitudes)
    assert np.allclose(stack[1], ref, atol=1e-12)
    assert np.allclose(stack[0], v.amplitudes)


def test_evolve_exp_requires_hermitian():
    with pytest.raises(ValueError):
        evolve_exp(DenseOperatorMatrix(np.eye(2)), 1.0, np.ones(2))


def test_apply_pauli_dense_rows():
    rng = np.random.default_rng(5)
    p = rand_pauli(3, rng)
    V = rng.standard_normal((4, 8))
    assert np.allclose(apply_pauli_dense(p, V), V @ p.matrix().T)


def test_apply_gate_matches_kron():
    rng = np.random.default_rng(2)
    U = haar_unitary(4, rng).entries
    psi = rng.standard_normal(16) + 0j
    out = apply_gate(psi, U, (1, 2), 4)
    ref = np.kron(np.kron(np.eye(2), U), np.eye(2)) @ psi
    assert np.allclose(out, ref)


def test_overlap_trivial_cases():
    z = SymbolicState(ProductState.zero(3), PauliString.identity(3))
    assert overlap(z, PauliSum(((1.0, PauliString.identity(3)),)), z) == 1
    n = 300
    X = PauliString.from_arrays(np.ones(n, np.uint8), np.zeros(n, np.uint8))
    u = SymbolicState(ProductState.zero(n), PauliString.identity(n))
    assert overlap(u, PauliSum(((1.0, X * X),)), u) == pytest.approx(1.0)
    v = SymbolicState(ProductState.zero(n), X)
    assert overlap(v, PauliSum(((1.0, X),)), u) == pytest.approx(1.0)


def test_symbolic_vs_dense_n6():
    rng = np.random.default_rng(6)
    base = ProductState.random(6, rng)
    u, v = (SymbolicState(base, rand_pauli(6, rng)) for _ in range(2))
    O = PauliSum(tuple((rng.standard_normal(), rand_pauli(6, rng)) for _ in range(5)))
    assert abs(overlap(u, O, v) - overlap(u.to_dense(), O, v.to_dense())) < 1e-10


def test_haar_examples():
    U1 = haar_unitary(1, seed=0).entries
    assert U1.shape == (1, 1) and abs(abs(U1[0, 0]) - 1) < 1e-12
    U = haar_unitary(256, seed=1).entries
    G = U.conj().T @ U
    assert np.abs(G - np.eye(256)).max() <= 1e-10


def test_haar_eigenangles_chi_square():
    from scipy.stats import chisquare

    ang = np.concatenate([np.angle(np.linalg.eigvals(haar_unitary(64, seed=s).entries)) for s in range(200)])
    counts, _ = np.histogram(ang, bins=32, range=(-np.pi, np.pi))
    assert chisquare(counts).pvalue > 0.01


def test_evolve_exp_examples():
    v = DenseState.from_vector(np.ones(2), normalize=True)
    Z = DenseOperatorMatrix(np.diag([1.0, -1.0]).astype(complex), hermitian=True)
    assert np.allclose(evolve_exp(Z, 0.0, v).amplitudes, v.amplitudes)
    out = evolve_exp(Z, np.pi / 2, v).amplitudes
    assert np.allclose(out, np.array([np.exp(-1j * np.pi / 2), np.exp(1j * np.pi / 2)]) / np.sqrt(2))
    rng = np.random.default_rng(3)
    G = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    H = DenseOperatorMatrix(G + G.conj().T, hermitian=True)
    w = DenseState.from_vector(rng.standard_normal(64) + 0j, normalize=True)
    back = evolve_exp(H, -0.9, evolve_exp(H, 0.9, w))
    assert np.linalg.norm(back.amplitudes - w.amplitudes) <= 1e-9
