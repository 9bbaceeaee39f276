"""Brute-force dense reference: statevectors, exact diagonalization, partial traces.

Basis convention: site 0 is the most significant bit, bit value 0 is the
sigma^z = +1 state ``(1, 0)``.  Everything is real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import CapacityError, ConvergenceError
from .gradients import GradientVector
from .hamiltonian import CouplingGraph
from .observables import Bipartition, reference_site
from .rng import make_rng
from .state import SpsState

MAX_SITES = 20
# 2^12 x 2^12 doubles is 128 MiB; the dense eigensolver stops there.
MAX_DENSE_SITES = 12
AUTO_DENSE_SITES = 10
RESIDUAL_TOL = 1e-9


def check_capacity(L: int, cap: int = MAX_SITES, what: str = "dense oracle"):
    if L > cap:
        raise CapacityError(f"L={L} exceeds the {what} capacity of {cap} sites")


@dataclass(frozen=True, eq=False)
class DenseState:
    """Real amplitudes over the 2^L computational basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        n = amps.shape[0] if amps.ndim == 1 else 0
        if n < 2 or n & (n - 1):
            raise ValueError(f"amplitude vector length {amps.shape} is not a power of two >= 2")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        check_capacity(n.bit_length() - 1)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def L(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    def norm_sq(self) -> float:
        return float(self.amplitudes @ self.amplitudes)

    def normalized(self) -> "DenseState":
        return DenseState(self.amplitudes / np.sqrt(self.norm_sq()))


def expand_statevector(state: SpsState, chunk: int = 16) -> DenseState:
    """Sum of weighted Kronecker products; no normalization applied."""
    L, M = state.L, state.M
    check_capacity(L)
    out = np.zeros(2**L)
    cos, sin = np.cos(state.theta), np.sin(state.theta)
    for start in range(0, M, chunk):
        cols = slice(start, min(start + chunk, M))
        vecs = np.ones((cols.stop - cols.start, 1))
        for l in range(L):
            local = np.stack([cos[l, cols], sin[l, cols]], axis=1)
            vecs = (vecs[:, :, None] * local[:, None, :]).reshape(vecs.shape[0], -1)
        out += state.c[cols] @ vecs
    return DenseState(out)


def _z_signs(L: int, k: int) -> np.ndarray:
    idx = np.arange(2**L)
    return 1.0 - 2.0 * ((idx >> (L - 1 - k)) & 1)


def _flip(psi: np.ndarray, L: int, k: int) -> np.ndarray:
    """``sigma^x_k psi``."""
    return psi.reshape(2**k, 2, 2 ** (L - k - 1))[:, ::-1, :].reshape(-1)


def diagonal_energies(graph: CouplingGraph) -> np.ndarray:
    L = graph.L
    check_capacity(L)
    signs = [_z_signs(L, k) for k in range(L)]
    diag = np.zeros(2**L)
    for k, l, w in graph.edges:
        diag += w * signs[k] * signs[l]
    if graph.h_z:
        diag -= graph.h_z * np.sum(signs, axis=0)
    return diag


def apply_hamiltonian(graph: CouplingGraph, psi: np.ndarray, diag: np.ndarray | None = None) -> np.ndarray:
    if diag is None:
        diag = diagonal_energies(graph)
    out = diag * psi
    if graph.h_x:
        for k in range(graph.L):
            out -= graph.h_x * _flip(psi, graph.L, k)
    return out


def dense_hamiltonian(graph: CouplingGraph) -> np.ndarray:
    L = graph.L
    check_capacity(L, MAX_DENSE_SITES, "dense Hamiltonian")
    dim = 2**L
    H = np.diag(diagonal_energies(graph))
    idx = np.arange(dim)
    for k in range(L):
        H[idx, idx ^ (1 << (L - 1 - k))] -= graph.h_x
    return H


def exact_ground_state(graph: CouplingGraph, method: str = "auto") -> tuple[float, DenseState]:
    """Lowest eigenpair of the tilted Ising Hamiltonian.

    ``method`` is ``"dense"`` (full ``eigh``, L <= 12), ``"iterative"``
    (ARPACK Lanczos on a matrix-free operator, L <= 20) or ``"auto"``.
    """
    L = graph.L
    check_capacity(L)
    if method == "auto":
        method = "dense" if L <= AUTO_DENSE_SITES else "iterative"
    if method == "dense":
        H = dense_hamiltonian(graph)
        evals, evecs = np.linalg.eigh(H)
        energy, vec = float(evals[0]), evecs[:, 0]
    elif method == "iterative":
        diag = diagonal_energies(graph)
        dim = diag.shape[0]
        op = spla.LinearOperator((dim, dim), matvec=lambda v: apply_hamiltonian(graph, v.ravel(), diag), dtype=np.float64)
        v0 = make_rng(0, "lanczos-start", L).uniform(0.5, 1.5, size=dim)
        try:
            evals, evecs = spla.eigsh(op, k=1, which="SA", v0=v0, tol=0, ncv=min(dim, 40), maxiter=50 * dim)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge for L={L}") from exc
        energy, vec = float(evals[0]), evecs[:, 0]
    else:
        raise ValueError(f"unknown method {method!r}")
    vec = vec / np.linalg.norm(vec)
    residual = np.linalg.norm(apply_hamiltonian(graph, vec) - energy * vec)
    if residual > RESIDUAL_TOL:
        raise ConvergenceError(f"eigen-residual {residual:.2e} exceeds {RESIDUAL_TOL:g}")
    return energy, DenseState(vec)


# ---------------------------------------------------------------------------
# Expectation values on normalized dense states


def _normalized(psi) -> tuple[np.ndarray, int]:
    amps = psi.amplitudes if isinstance(psi, DenseState) else np.asarray(psi, dtype=np.float64)
    amps = amps / np.linalg.norm(amps)
    return amps, amps.shape[0].bit_length() - 1


def dense_expect_x(psi, k: int) -> float:
    v, L = _normalized(psi)
    return float(v @ _flip(v, L, k))


def dense_expect_z(psi, k: int) -> float:
    v, L = _normalized(psi)
    return float(v @ (_z_signs(L, k) * v))


def dense_expect_zz(psi, k: int, l: int) -> float:
    v, L = _normalized(psi)
    return float(v @ (_z_signs(L, k) * _z_signs(L, l) * v))


def dense_energy(psi, graph: CouplingGraph) -> float:
    v, _ = _normalized(psi)
    return float(v @ apply_hamiltonian(graph, v))


def dense_ferro_correlator(psi) -> float:
    v, L = _normalized(psi)
    ref = reference_site(L)
    z = [dense_expect_z(v, l) for l in range(L)]
    total = sum(dense_expect_zz(v, ref, l) - z[ref] * z[l] for l in range(L) if l != ref)
    return total / (L - 1)


def reduced_density(dense: DenseState, part: Bipartition) -> np.ndarray:
    """``rho_A = Tr_B |psi><psi|`` for a normalized state."""
    amps = dense.amplitudes if isinstance(dense, DenseState) else np.asarray(dense)
    L = amps.shape[0].bit_length() - 1
    check_capacity(L)
    order = list(part.region_a) + list(part.region_b)
    if sorted(order) != list(range(L)):
        raise ValueError("bipartition does not cover the state's sites")
    psi = amps.reshape((2,) * L).transpose(order).reshape(2 ** len(part.region_a), -1)
    return psi @ psi.T


def dense_renyi2(dense: DenseState, part: Bipartition | None = None) -> float:
    dense = dense if isinstance(dense, DenseState) else DenseState(dense)
    part = part or Bipartition.half(dense.L)
    rho = reduced_density(dense.normalized(), part)
    return float(-np.log(np.sum(rho * rho)))


def finite_difference_gradient(f, state: SpsState, h: float = 1e-5, order: int = 2) -> GradientVector:
    """Central differences of ``f(state)`` in every parameter.

    ``order=2`` is the three-point stencil; ``order=4`` the five-point one,
    whose O(h^4) truncation error allows a larger step and so less round-off.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    if order == 2:
        stencil = ((1.0, 0.5), (-1.0, -0.5))
    elif order == 4:
        stencil = ((2.0, -1.0 / 12), (1.0, 8.0 / 12), (-1.0, -8.0 / 12), (-2.0, 1.0 / 12))
    else:
        raise ValueError("order must be 2 or 4")
    base = state.flat()
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        total = 0.0
        for shift, weight in stencil:
            moved = base.copy()
            moved[i] += shift * h
            total += weight * f(SpsState.from_flat(moved, state.L, state.M))
        out[i] = total / h
    return GradientVector.from_flat(out, state.L, state.M)
