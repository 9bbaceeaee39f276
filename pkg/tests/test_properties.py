import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from spsansatz.hamiltonian import RandomGraphSpec, build_chain_1d, build_random_graph, energy
from spsansatz.observables import Bipartition, expect_sigma_x, expect_sigma_z, expect_zz, renyi2_bound, renyi2_entropy
from spsansatz.optimizer import AdamWConfig, TrainSchedule, resample_low_weight, run_restart
from spsansatz.oracle import exact_ground_state, expand_statevector
from spsansatz.state import ParameterDomain, SpsState, compute_overlap_matrix

from conftest import random_state

seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(1, 6)
branches = st.integers(1, 6)


def _state(seed, L, M):
    state = random_state(seed, L, M)
    if np.linalg.norm(expand_statevector(state).amplitudes) < 1e-6:
        state = SpsState(state.c + 1.0, state.theta)
    return state


@given(seeds, sizes, branches, st.data())
def test_branch_permutation_invariance(seed, L, M, data):
    state = _state(seed, L, M)
    perm = data.draw(st.permutations(range(M)))
    other = state.permuted(perm)
    a, b = compute_overlap_matrix(state), compute_overlap_matrix(other)
    assert abs(a.norm - b.norm) <= 1e-12 * max(1.0, a.norm)
    assert np.max(np.abs(expand_statevector(state).amplitudes - expand_statevector(other).amplitudes)) <= 1e-12
    k = data.draw(st.integers(0, L - 1))
    assert abs(expect_sigma_x(a, k) - expect_sigma_x(b, k)) <= 1e-10
    assert abs(expect_sigma_z(a, k) - expect_sigma_z(b, k)) <= 1e-10


@given(seeds, st.integers(2, 6), branches, st.floats(0.05, 20.0), st.sampled_from([1.0, -1.0]))
def test_scale_invariance(seed, L, M, scale, sign):
    state = _state(seed, L, M)
    graph = build_chain_1d(L, -1.0, 0.7, 0.3)
    scaled = state.scaled(sign * scale)
    assert abs(energy(state, graph) - energy(scaled, graph)) <= 1e-10 * max(1.0, L)
    assert abs(expect_sigma_x(state, 0) - expect_sigma_x(scaled, 0)) <= 1e-10


@given(seeds, sizes, st.integers(1, 10))
def test_overlap_matrix_is_psd(seed, L, M):
    C = compute_overlap_matrix(random_state(seed, L, M)).C
    assert np.allclose(C, C.T, atol=0, rtol=0)
    assert np.min(np.linalg.eigvalsh(C)) >= -1e-10 * max(1.0, np.max(np.abs(C)))


@given(seeds, st.integers(2, 6), branches, st.data())
def test_zz_symmetry_and_pauli_range(seed, L, M, data):
    pm = compute_overlap_matrix(_state(seed, L, M))
    k, l = data.draw(st.lists(st.integers(0, L - 1), min_size=2, max_size=2, unique=True))
    assert expect_zz(pm, k, l) == expect_zz(pm, l, k)
    for value in (expect_sigma_x(pm, k), expect_sigma_z(pm, k), expect_zz(pm, k, l)):
        assert -1 - 1e-10 <= value <= 1 + 1e-10


@given(seeds, st.integers(2, 6), branches, st.data())
def test_renyi2_bound(seed, L, M, data):
    state = _state(seed, L, M)
    region = data.draw(st.lists(st.integers(0, L - 1), min_size=1, max_size=L - 1, unique=True))
    part = Bipartition.from_region(L, region)
    s2 = renyi2_entropy(state, part)
    assert -1e-10 <= s2 <= renyi2_bound(M, len(part.region_a)) + 1e-8


@given(seeds, st.integers(2, 6), branches, st.tuples(*[st.floats(-2, 2)] * 3), st.tuples(*[st.floats(-2, 2)] * 3))
def test_energy_is_linear_in_couplings(seed, L, M, p, q):
    state = _state(seed, L, M)
    e = lambda J, hx, hz: energy(state, build_chain_1d(L, J, hx, hz))  # noqa: E731
    combined = e(*(a + b for a, b in zip(p, q)))
    assert abs(combined - e(*p) - e(*q)) <= 1e-9 * (1 + L)


@given(seeds, sizes, st.integers(1, 4), st.integers(1, 4))
def test_expansion_is_linear_in_branches(seed, L, M1, M2):
    a, b = random_state(seed, L, M1), random_state(seed + 1, L, M2)
    joined = SpsState(np.concatenate([a.c, b.c]), np.concatenate([a.theta, b.theta], axis=1))
    psi = expand_statevector(a).amplitudes + expand_statevector(b).amplitudes
    assert np.max(np.abs(expand_statevector(joined).amplitudes - psi)) <= 1e-12


@given(st.integers(2, 12), st.floats(0.1, 0.9), st.integers(0, 2**31 - 1))
def test_random_graph_is_deterministic(L, p, seed):
    spec = RandomGraphSpec(L, p, -1.0, seed)
    assert build_random_graph(spec, 1.0, 0.0).same_as(build_random_graph(spec, 1.0, 0.0))


@given(seeds, st.integers(2, 8), st.integers(1, 6), st.floats(-3, 3), st.floats(-3, 3))
def test_variational_bound(seed, L, M, h_x, h_z):
    graph = build_chain_1d(L, -1.0, h_x, h_z)
    e0, _ = exact_ground_state(graph)
    assert energy(_state(seed, L, M), graph) >= e0 - 1e-9 * max(1.0, abs(e0))


@given(seeds, st.integers(1, 5), st.integers(1, 8), st.floats(1e-3, 0.9))
def test_resample_only_touches_low_weight_branches(seed, L, M, threshold):
    state = random_state(seed, L, M)
    moments = (np.ones(state.n_params), np.ones(state.n_params))
    new, low = resample_low_weight(state, threshold, ParameterDomain(seed=seed), moments)
    keep = [m for m in range(M) if m not in low]
    assert set(low) == set(np.flatnonzero(np.abs(state.c) < threshold).tolist())
    assert np.array_equal(new.c[keep], state.c[keep])
    assert np.array_equal(new.theta[:, keep], state.theta[:, keep])
    zeroed = SpsState.from_flat(moments[0], L, M)
    assert np.all(zeroed.c[low] == 0) and np.all(zeroed.theta[:, low] == 0)
    assert np.all(zeroed.c[keep] == 1) and np.all(zeroed.theta[:, keep] == 1)


@given(st.integers(0, 1000), st.integers(2, 5))
def test_best_so_far_is_monotone(seed, L):
    graph = build_chain_1d(L, -1.0, 1.0, 0.25)
    record = run_restart(graph, 2, TrainSchedule(epochs=60, restarts=1, seed=seed), AdamWConfig(learning_rate=0.05))
    best = np.minimum.accumulate(record.energy_trace)
    assert np.all(np.diff(best) <= 0)
    assert np.all(np.isfinite(record.energy_trace))
