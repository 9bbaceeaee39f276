import numpy as np
import pytest

from conftest import bell_state, ghz_state, random_state
from spsansatz.errors import NullStateError
from spsansatz.observables import (
    Bipartition,
    expect_sigma_x,
    expect_sigma_z,
    expect_zz,
    ferro_correlator,
    pauli_sum_tensor,
    quadratic,
    reference_site,
    renyi2_bound,
    renyi2_entropy,
)
from spsansatz.oracle import (
    dense_expect_x,
    dense_expect_z,
    dense_expect_zz,
    dense_ferro_correlator,
    dense_renyi2,
    expand_statevector,
)
from spsansatz.state import SpsState, compute_overlap_matrix


def uniform_product(L, angle):
    return SpsState.product(np.full(L, angle))


def test_sigma_x_closed_forms():
    assert expect_sigma_x(uniform_product(5, np.pi / 4), 2) == pytest.approx(1.0, abs=1e-15)
    assert expect_sigma_x(uniform_product(5, 0.0), 2) == 0.0


def test_sigma_z_closed_forms():
    assert expect_sigma_z(uniform_product(5, 0.0), 0) == 1.0
    assert expect_sigma_z(uniform_product(5, np.pi / 4), 0) == pytest.approx(0.0, abs=1e-15)


def test_zz_product_and_bell():
    assert expect_zz(uniform_product(4, 0.0), 1, 3) == 1.0
    bell = bell_state()
    assert expect_zz(bell, 0, 1) == pytest.approx(1.0, abs=1e-15)
    assert expect_sigma_z(bell, 0) == pytest.approx(0.0, abs=1e-15)


def test_zz_rejects_same_site():
    with pytest.raises(ValueError):
        expect_zz(uniform_product(3, 0.1), 1, 1)


def test_site_out_of_range():
    with pytest.raises(IndexError):
        expect_sigma_x(uniform_product(3, 0.1), 3)


@pytest.mark.parametrize("L, M, seed", [(10, 5, 0), (10, 5, 1), (8, 4, 2)])
def test_local_observables_match_dense(L, M, seed):
    s = random_state(seed, L, M)
    psi = expand_statevector(s)
    for k in range(L):
        assert abs(expect_sigma_x(s, k) - dense_expect_x(psi, k)) <= 1e-12
        assert abs(expect_sigma_z(s, k) - dense_expect_z(psi, k)) <= 1e-12
    for k, l in [(0, 1), (0, L - 1), (2, 5)]:
        assert abs(expect_zz(s, k, l) - dense_expect_zz(psi, k, l)) <= 1e-12


def test_ferro_correlator_cases():
    assert ferro_correlator(random_state(3, 6, 1)) == pytest.approx(0.0, abs=1e-15)
    assert ferro_correlator(ghz_state(4)) == pytest.approx(1.0, abs=1e-14)
    s = random_state(4, 8, 4)
    assert abs(ferro_correlator(s) - dense_ferro_correlator(expand_statevector(s))) <= 1e-11
    assert reference_site(8) == 4 and reference_site(7) == 3


def test_renyi_cases():
    assert renyi2_entropy(random_state(5, 6, 1)) == pytest.approx(0.0, abs=1e-14)
    assert renyi2_entropy(bell_state(), Bipartition.from_region(2, [0])) == pytest.approx(np.log(2), abs=1e-14)
    s = random_state(6, 12, 6)
    assert abs(renyi2_entropy(s) - dense_renyi2(expand_statevector(s))) <= 1e-10


def test_bipartition_default_and_validation():
    part = Bipartition.half(5)
    assert part.region_a == (0, 1, 2) and part.region_b == (3, 4)
    with pytest.raises(ValueError):
        Bipartition.from_region(3, [0, 0])
    with pytest.raises(ValueError):
        Bipartition.from_region(3, [4])


def test_renyi_bound_values():
    assert renyi2_bound(4, 10) == pytest.approx(np.log(4))
    assert renyi2_bound(4096, 10) == pytest.approx(10 * np.log(2))


def test_null_state_rejected():
    s = SpsState([1.0, -1.0], np.zeros((3, 2)))
    with pytest.raises(NullStateError):
        expect_sigma_x(s, 0)
    with pytest.raises(NullStateError):
        renyi2_entropy(s)


def test_pauli_sum_matches_individual_terms():
    s = random_state(7, 5, 4)
    pm = compute_overlap_matrix(s)
    a_x = np.array([0.3, 0.0, -1.2, 0.5, 0.0])
    a_z = np.array([0.0, 0.7, 0.0, 0.0, -0.4])
    J = np.zeros((5, 5))
    J[0, 3] = J[3, 0] = 0.9
    J[1, 2] = J[2, 1] = -0.6
    W, _ = pauli_sum_tensor(pm, a_x, a_z, J)
    expected = sum(a_x[k] * expect_sigma_x(pm, k) + a_z[k] * expect_sigma_z(pm, k) for k in range(5))
    expected += 0.9 * expect_zz(pm, 0, 3) - 0.6 * expect_zz(pm, 1, 2)
    assert quadratic(pm, W) / pm.norm == pytest.approx(expected, abs=1e-13)


def test_singular_pairs_fall_back_to_products():
    theta = np.array([[0.0, np.pi / 2, 0.3], [0.2, 0.2 + np.pi / 2, -0.4], [0.5, 0.1, 0.0]])
    s = SpsState([0.6, -0.8, 0.5], theta)
    psi = expand_statevector(s)
    for k in range(3):
        assert abs(expect_sigma_x(s, k) - dense_expect_x(psi, k)) <= 1e-13
        assert abs(expect_sigma_z(s, k) - dense_expect_z(psi, k)) <= 1e-13
    assert abs(expect_zz(s, 0, 1) - dense_expect_zz(psi, 0, 1)) <= 1e-13
