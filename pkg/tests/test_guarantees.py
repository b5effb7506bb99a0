import math

import numpy as np
import pytest

from cqs.guarantees import (
    bqp_reduction_check,
    chebyshev_coefficients,
    chebyshev_eta,
    chebyshev_tikhonov,
    check_bfs_depth,
    check_shot_qp,
    random_circuit,
    tikhonov_depth,
    tikhonov_min,
    tikhonov_target,
)
from cqs.measurement import Estimator
from cqs.operators import gen_pauli_sum_system


def test_chebyshev_frozen_values():
    c = chebyshev_coefficients(5)
    assert c[0] == pytest.approx(0.4226497308, abs=1e-10)
    assert c[1] == pytest.approx(-0.1132486541, abs=1e-10)
    assert c.size == 3


def test_tikhonov_depth_frozen():
    assert tikhonov_depth(0.02) == 3
    assert tikhonov_depth(0.1) == 2


@pytest.mark.parametrize("K0", range(2, 13))
def test_chebyshev_truncation_bound(K0):
    z = np.linspace(-1, 1, 4001)
    err = np.abs(np.polyval(chebyshev_tikhonov(K0)[::-1], z) - tikhonov_target(z))
    assert err.max() <= chebyshev_eta(K0)


def test_series_limit():
    z = np.linspace(-1, 1, 101)
    assert np.allclose(np.polyval(chebyshev_tikhonov(41)[::-1], z), tikhonov_target(z), atol=1e-12)


def test_tikhonov_min_matches_direct():
    s = gen_pauli_sum_system(3, 4, seed=2)
    A, b = s.A.dense(), s.b_dense()
    x = np.linalg.solve(A @ A + 0.5 * np.eye(8), A @ b)
    val = np.linalg.norm(A @ x - b) ** 2 + 0.5 * np.linalg.norm(x) ** 2
    assert tikhonov_min(s) == pytest.approx(val, abs=1e-12)


def test_bqp_reduction_exact():
    for seed in range(5):
        circ = random_circuit(3, 8, seed=seed)
        a1, a2, P0, P1 = bqp_reduction_check(circ, 3)
        assert abs(a1 - P0) < 1e-8 and abs(a2 - P1) < 1e-8


def test_bqp_reduction_shots():
    circ = random_circuit(2, 6, seed=9)
    a1, a2, P0, P1 = bqp_reduction_check(circ, 2, est=Estimator.shots(200_000, seed=0), assert_ok=False)
    assert max(abs(a1 - P0), abs(a2 - P1)) < 0.05


def test_bfs_depth_suite_small():
    out = check_bfs_depth(n=3, systems=2, seed=1)
    assert out["passed"]
    assert all(r["depth"] == math.ceil(r["kappa"] * math.log(r["kappa"] / 0.1)) for r in out["rows"])


def test_shot_qp_suite_small():
    out = check_shot_qp(n=3, m=3, Ts=(200, 2000), repeats=30, seed=2)
    assert out["gaps"][0] > out["gaps"][1] > 0


def test_eta_at_depth_four():
    eta = chebyshev_eta(4)
    assert eta == pytest.approx(0.0415, abs=5e-4)
    assert 1.5 * eta ** 2 <= 0.02
    assert 1 / math.log(1 / (2 - math.sqrt(3))) == pytest.approx(0.76, abs=5e-3)


def test_truncation_fine_grid():
    z = np.linspace(-1, 1, 10 ** 5)
    for K0 in (4, 9):
        err = np.abs(np.polynomial.polynomial.polyval(z, chebyshev_tikhonov(K0)) - tikhonov_target(z)).max()
        assert err <= chebyshev_eta(K0)


def test_bqp_reduction_known_circuits():
    a1, a2, P0, P1 = bqp_reduction_check([], 3)
    assert (P0, P1) == (1.0, 0.0) and abs(a1 - 1) < 1e-9 and abs(a2) < 1e-9
    H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    a1, a2, P0, P1 = bqp_reduction_check([(H, (0,))], 3)
    assert P0 == pytest.approx(0.5) and abs(a1 - 0.5) < 1e-9 and abs(a2 - 0.5) < 1e-9


def test_bqp_reduction_eps_1e4():
    for seed in range(5):
        bqp_reduction_check(random_circuit(3, 10, seed=seed), 3, eps=1e-4)


def test_series_is_half_the_tikhonov_minimiser():
    # independent oracle: Chebyshev interpolation of z / (z^2 + 1/2)
    z = np.linspace(-1, 1, 2001)
    interp = np.polynomial.chebyshev.Chebyshev.interpolate(lambda t: t / (t * t + 0.5), 60)
    for K0 in (3, 6, 11):
        poly = np.polynomial.polynomial.polyval(z, chebyshev_tikhonov(K0))
        assert np.abs(2 * poly - interp(z)).max() <= 2 * chebyshev_eta(K0)
    assert np.allclose(tikhonov_target(z, 2.0), interp(z), atol=1e-12)
