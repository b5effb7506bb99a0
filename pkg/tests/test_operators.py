import json

import numpy as np
import pytest

from cqs.backends import DenseState, haar_unitary
from cqs.operators import (
    DecomposedOperator,
    LinearSystem,
    build_H,
    build_H_expanded,
    gen_haar_sum_system,
    gen_pauli_sum_system,
    load_system,
    save_system,
    spectral_bounds,
    toy_system,
)
from cqs.pauli import PauliString, ProductState


def test_pauli_generator_normalised():
    s = gen_pauli_sum_system(5, 8, seed=1)
    assert abs(s.A.one_norm - 1.0) < 1e-12
    assert s.A.hermitian and s.A.normalized
    assert np.linalg.norm(s.A.dense(), 2) <= 1 + 1e-12
    assert s.metadata["scale"] == pytest.approx(s.metadata["raw_one_norm"])


def test_pauli_generator_deterministic_and_large_n():
    a = gen_pauli_sum_system(300, 8, seed=7)
    b = gen_pauli_sum_system(300, 8, seed=7)
    assert [p for _, p in a.A.terms] == [p for _, p in b.A.terms]
    assert a.A.backend == "pauli" and a.n == 300


def test_haar_generator_spectral_norm_one():
    s = gen_haar_sum_system(32, 4, seed=2)
    A = s.A.dense()
    assert np.allclose(A, A.conj().T)
    assert abs(np.linalg.norm(A, 2) - 1.0) < 1e-10
    assert s.A.K_A == 8


def test_decomposed_operator_flags_checked():
    U = haar_unitary(4, seed=0)
    with pytest.raises(ValueError):
        DecomposedOperator(((1.0, U),), hermitian=True)
    with pytest.raises(ValueError):
        DecomposedOperator(((2.0, PauliString.from_label("XX")),), normalized=True)


def test_apply_matches_dense():
    s = gen_pauli_sum_system(4, 6, seed=3)
    v = np.random.default_rng(0).standard_normal(16) + 0j
    assert np.allclose(s.A.apply(v), s.A.dense() @ v)


def test_spectral_bounds():
    s = gen_pauli_sum_system(4, 6, seed=4)
    sb = spectral_bounds(s.A)
    sv = np.linalg.svd(s.A.dense(), compute_uv=False)
    assert sb.exact
    assert sb.rho == pytest.approx(sv[0])
    assert sb.kappa == pytest.approx(sv[0] / sv[-1])


def test_toy_solution():
    s = toy_system(3, [1, 0, 1])
    x = s.solution()
    assert np.argmax(np.abs(x)) == 0b101


@pytest.mark.parametrize("s", [0.0, 0.3, 1.0])
def test_build_H_expansion(s):
    sys_ = gen_pauli_sum_system(3, 4, seed=5)
    H = build_H(s, sys_).matrix
    assert np.allclose(H, build_H_expanded(s, sys_), atol=1e-12)
    assert np.allclose(H, H.conj().T)


def test_H1_ground_state_is_solution():
    sys_ = gen_haar_sum_system(8, 3, seed=9)
    H = build_H(1.0, sys_).matrix
    w, V = np.linalg.eigh(H)
    x = sys_.solution()
    x /= np.linalg.norm(x)
    target = np.kron(np.ones(2) / np.sqrt(2), x)
    assert abs(w[0]) < 1e-10
    assert abs(abs(np.vdot(V[:, 0], target)) - 1) < 1e-8


def test_build_H_symbolic_rejected():
    with pytest.raises(ValueError, match="unsupported backend"):
        build_H(0.5, gen_pauli_sum_system(2, 2, seed=0), backend="symbolic")


@pytest.mark.parametrize("kind", ["pauli", "haar"])
def test_save_load_roundtrip(tmp_path, kind):
    if kind == "pauli":
        s = gen_pauli_sum_system(5, 6, seed=11)
    else:
        s = gen_haar_sum_system(16, 2, seed=12)
    path = tmp_path / "sys.json"
    save_system(path, s)
    t = load_system(path)
    assert np.allclose(t.A.dense(), s.A.dense())
    assert np.allclose(t.b_dense(), s.b_dense())


def test_save_load_dense_b(tmp_path):
    v = np.random.default_rng(0).standard_normal(8) + 0j
    s = LinearSystem(gen_pauli_sum_system(3, 3, seed=1).A, DenseState.from_vector(v, normalize=True))
    save_system(tmp_path / "a.json", s)
    assert np.allclose(load_system(tmp_path / "a.json").b_dense(), s.b_dense())


def test_load_errors_name_field(tmp_path):
    s = gen_pauli_sum_system(3, 3, seed=1)
    path = tmp_path / "a.json"
    save_system(path, s)
    doc = json.loads(path.read_text())
    doc["terms"][0]["pauli"] = "XX"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match=r"terms\[0\]\.pauli"):
        load_system(path)
    doc = json.loads((tmp_path / "a.json").read_text())
    save_system(path, s)
    doc = json.loads(path.read_text())
    doc["b"]["kind"] = "weird"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match=r"b\.kind"):
        load_system(path)


def test_product_b_expectations():
    s = LinearSystem(gen_pauli_sum_system(2, 2, seed=3).A, ProductState.from_bits(2, 2))
    assert np.argmax(np.abs(s.b_dense())) == 2


def test_generator_examples():
    assert gen_haar_sum_system(16, 10, seed=0).A.K_A == 20
    s = gen_pauli_sum_system(300, 8, seed=7)
    assert s.A.K_A == 8 and all(p.n == 300 for _, p in s.A.terms)
    for seed in range(5):
        A = gen_haar_sum_system(32, 10, seed=seed).A.dense()
        assert np.abs(A - A.conj().T).max() <= 1e-10


def test_haar_condition_number_order_of_dim():
    kappas = [np.linalg.cond(gen_haar_sum_system(256, 10, seed=s).A.dense()) for s in range(20)]
    assert 16 <= np.median(kappas) <= 10 * 256


def test_duplicate_rays_merge():
    s = gen_pauli_sum_system(1, 2, seed=3, letters="I", normalize=False)
    assert s.A.K_A == 1
    assert s.A.terms[0][0] == pytest.approx(sum(s.metadata["alphas"]))


def test_single_ix_term_is_toy_system():
    s = gen_pauli_sum_system(6, 1, seed=2, letters="IX")
    (beta, p), = s.A.terms
    assert not p.z_bits.any()
    toy = toy_system(6, p.x_bits)
    assert np.allclose(s.A.dense(), np.sign(beta) * toy.A.dense())
    assert np.allclose(s.b_dense(), toy.b_dense())


def test_build_H_examples():
    sys_ = gen_pauli_sum_system(4, 6, seed=8)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    v = np.kron(minus, sys_.b_dense())
    assert np.linalg.norm(build_H(0.0, sys_).matrix @ v) <= 1e-9
    for s in np.round(np.linspace(0, 1, 11), 12):
        assert np.linalg.eigvalsh(build_H(s, sys_).matrix).min() >= -1e-9


def test_spectral_bounds_examples():
    I = DecomposedOperator(((1.0, PauliString.identity(3)),), hermitian=True, normalized=True)
    assert (spectral_bounds(I).rho, spectral_bounds(I).kappa) == pytest.approx((1.0, 1.0))
    X = toy_system(4).A
    assert (spectral_bounds(X).rho, spectral_bounds(X).kappa) == pytest.approx((1.0, 1.0))
    s = gen_pauli_sum_system(6, 8, seed=1, normalize=False)
    assert s.A.one_norm >= spectral_bounds(s.A).rho - 1e-12
    assert not spectral_bounds(gen_pauli_sum_system(40, 3, seed=0).A).exact
