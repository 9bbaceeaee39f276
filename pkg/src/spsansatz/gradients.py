"""Analytic derivatives with respect to every amplitude and angle.

For an unnormalized quantity ``c^T W c`` with symmetric pair matrix ``W``:

    d/dc_m          = 2 (W c)_m
    d/dtheta_l^m    = 2 c_m (dW_l c)_m

where ``dW_l`` differentiates each pair term in its first-index angle.  The
normalized energy follows from the quotient rule,
``dE = (dH_u - E dZ) / Z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NullStateError
from .kernels import pauli_energy_kernel
from .observables import NULL_NORM, check_norm, pauli_sum_tensor, quadratic
from .state import PairMatrices, SpsState, compute_overlap_matrix


@dataclass(frozen=True, eq=False)
class GradientVector:
    """Derivatives laid out like :class:`SpsState`: ``d_c`` (M,), ``d_theta`` (L, M)."""

    d_c: np.ndarray
    d_theta: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_c, self.d_theta.ravel()])

    @classmethod
    def from_flat(cls, vec, L: int, M: int) -> "GradientVector":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[:M], vec[M:].reshape(L, M))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.d_c)) and np.all(np.isfinite(self.d_theta)))

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.d_c)), np.max(np.abs(self.d_theta))))


def _unnormalized(pm: PairMatrices, W: np.ndarray, dW: np.ndarray):
    """Derivatives of ``c^T W c``; broadcasts over batch axes."""
    c = pm.c
    d_c = 2.0 * np.einsum("...mn,...n->...m", W, c)
    d_theta = 2.0 * c[..., None, :] * np.einsum("...lmn,...n->...lm", dW, c)
    return d_c, d_theta


def norm_derivative_tensor(pm: PairMatrices) -> np.ndarray:
    """First-index angle derivative of every overlap: ``-sin(a-b) * prod_{p!=l} cos``."""
    return -pm.sin_diff * pm.leave_one_out


def _norm_parts(pm: PairMatrices):
    return _unnormalized(pm, pm.C, norm_derivative_tensor(pm))


def grad_norm(state: SpsState) -> GradientVector:
    """Gradient of ``Z = c^T C c``."""
    return GradientVector(*_norm_parts(compute_overlap_matrix(state)))


def _unit(L: int, k: int) -> np.ndarray:
    if not 0 <= k < L:
        raise IndexError(f"site {k} out of range for L={L}")
    e = np.zeros(L)
    e[k] = 1.0
    return e


def grad_unnormalized_x(state: SpsState, k: int) -> GradientVector:
    """Gradient of ``<psi_u|sigma^x_k|psi_u>``."""
    pm = compute_overlap_matrix(state)
    W, dW = pauli_sum_tensor(pm, a_x=_unit(pm.L, k), derivative=True)
    return GradientVector(*_unnormalized(pm, W, dW))


def grad_unnormalized_z(state: SpsState, k: int) -> GradientVector:
    pm = compute_overlap_matrix(state)
    W, dW = pauli_sum_tensor(pm, a_z=_unit(pm.L, k), derivative=True)
    return GradientVector(*_unnormalized(pm, W, dW))


def _single_edge(L: int, k: int, l: int) -> np.ndarray:
    if k == l:
        raise ValueError("sigma^z sigma^z needs two distinct sites")
    J = np.zeros((L, L))
    J[k, l] = J[l, k] = 1.0
    return J


def grad_unnormalized_zz(state: SpsState, k: int, l: int) -> GradientVector:
    pm = compute_overlap_matrix(state)
    for site in (k, l):
        _unit(pm.L, site)
    W, dW = pauli_sum_tensor(pm, J=_single_edge(pm.L, k, l), derivative=True)
    return GradientVector(*_unnormalized(pm, W, dW))


def normalized_gradient(pm: PairMatrices, W: np.ndarray, dW: np.ndarray):
    """Value and gradient of ``c^T W c / Z``; broadcasts over batch axes."""
    check_norm(pm)
    Z = pm.norm
    value = quadratic(pm, W) / Z
    h_c, h_theta = _unnormalized(pm, W, dW)
    z_c, z_theta = _norm_parts(pm)
    Zb = np.asarray(Z)[..., None]
    vb = np.asarray(value)[..., None]
    d_c = (h_c - vb * z_c) / Zb
    d_theta = (h_theta - vb[..., None] * z_theta) / Zb[..., None]
    return value, d_c, d_theta


def grad_expectation_x(state: SpsState, k: int) -> tuple[float, GradientVector]:
    """Normalized ``<sigma^x_k>`` and its gradient."""
    pm = compute_overlap_matrix(state)
    W, dW = pauli_sum_tensor(pm, a_x=_unit(pm.L, k), derivative=True)
    value, d_c, d_theta = normalized_gradient(pm, W, dW)
    return float(value), GradientVector(d_c, d_theta)


def energy_and_gradient_tensor(state: SpsState, graph) -> tuple[float, GradientVector]:
    """Variational energy and gradient through the (L, M, M) tensor path."""
    pm = compute_overlap_matrix(state)
    graph.check_sites(state.L)
    W, dW = pauli_sum_tensor(pm, *graph.field_coefficients(), graph.coupling_matrix(), derivative=True)
    value, d_c, d_theta = normalized_gradient(pm, W, dW)
    return float(value), GradientVector(d_c, d_theta)


def energy_and_gradient(state: SpsState, graph) -> tuple[float, GradientVector]:
    """Variational energy and its gradient from the compiled pair kernel."""
    graph.check_sites(state.L)
    a_x, a_z = graph.field_coefficients()
    H, Z, h_c, h_theta, z_c, z_theta = pauli_energy_kernel(state.c, state.theta, a_x, a_z, *graph.coupling_csr())
    if not Z > NULL_NORM:
        raise NullStateError(f"state norm {Z:.3e} is numerically zero")
    value = H / Z
    return value, GradientVector((h_c - value * z_c) / Z, (h_theta - value * z_theta) / Z)


def grad_energy(state: SpsState, graph) -> GradientVector:
    return energy_and_gradient(state, graph)[1]
