"""Closed-form expectation values on SPS states.

Any observable built from sigma^x, sigma^z and sigma^z sigma^z terms has an
unnormalized expectation ``c^T W c`` where ``W`` is an M x M pair matrix.
:func:`pauli_sum_tensor` assembles ``W`` (and optionally its derivatives with
respect to the first-index angles) for the general operator

    sum_l a_x[l] X_l + a_z[l] Z_l + sum_{k<l} J_kl Z_k Z_l

in O((L + |edges|) M^2).  The fast path uses the ratio tensors
``X_l = sin(a+b)/cos(a-b)``; pairs with a vanishing overlap factor at some site
are recomputed one at a time from explicit products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NullStateError, NumericalDegeneracyError
from .state import SINGULAR_TOL, PairMatrices, SpsState, _exclusive_products, compute_overlap_matrix

NULL_NORM = 1e-14


@dataclass(frozen=True)
class Bipartition:
    """Split of the sites into region A and its complement B."""

    region_a: tuple[int, ...]
    region_b: tuple[int, ...]

    @classmethod
    def half(cls, L: int) -> "Bipartition":
        """First ceil(L/2) sites versus the rest."""
        return cls.from_region(L, range((L + 1) // 2))

    @classmethod
    def from_region(cls, L: int, region_a) -> "Bipartition":
        a = tuple(int(i) for i in region_a)
        if len(set(a)) != len(a) or any(not 0 <= i < L for i in a):
            raise ValueError(f"invalid region {a} for L={L}")
        b = tuple(i for i in range(L) if i not in set(a))
        return cls(a, b)

    def __post_init__(self):
        if set(self.region_a) & set(self.region_b):
            raise ValueError("regions overlap")


def _pairs(state_or_pairs) -> PairMatrices:
    if isinstance(state_or_pairs, PairMatrices):
        return state_or_pairs
    return compute_overlap_matrix(state_or_pairs)


def check_norm(pm: PairMatrices):
    if np.any(np.asarray(pm.norm) <= NULL_NORM):
        raise NullStateError(f"state norm {np.min(pm.norm):.3e} is numerically zero")


def quadratic(pm: PairMatrices, W: np.ndarray) -> np.ndarray | float:
    """``c^T W c`` for every batch entry."""
    return np.einsum("...m,...mn,...n->...", pm.c, W, pm.c)


def _site(pm: PairMatrices, k: int) -> int:
    k = int(k)
    if not 0 <= k < pm.L:
        raise IndexError(f"site {k} out of range for L={pm.L}")
    return k


def expect_sigma_x(state: SpsState | PairMatrices, k: int):
    pm = _pairs(state)
    check_norm(pm)
    return quadratic(pm, pm.weighted_x(_site(pm, k))) / pm.norm


def expect_sigma_z(state: SpsState | PairMatrices, k: int):
    pm = _pairs(state)
    check_norm(pm)
    return quadratic(pm, pm.weighted_z(_site(pm, k))) / pm.norm


def zz_pair_matrix(pm: PairMatrices, k: int, l: int) -> np.ndarray:
    """``C * Z_k * Z_l`` with the singular-pair fallback."""
    k, l = sorted((_site(pm, k), _site(pm, l)))
    if k == l:
        raise ValueError("sigma^z sigma^z needs two distinct sites")
    return pm.cos_sum[..., k, :, :] * pm.cos_sum[..., l, :, :] * pm.leave_two_out(k, l)


def expect_zz(state: SpsState | PairMatrices, k: int, l: int):
    pm = _pairs(state)
    check_norm(pm)
    return quadratic(pm, zz_pair_matrix(pm, k, l)) / pm.norm


def reference_site(L: int) -> int:
    return L // 2


def ferro_correlator(state: SpsState | PairMatrices):
    """Average connected <z_r z_l> - <z_r><z_l> over l != r, with r = L // 2."""
    pm = _pairs(state)
    check_norm(pm)
    L = pm.L
    if L < 2:
        raise ValueError("the ferromagnetic correlator needs L >= 2")
    ref = reference_site(L)
    z = [quadratic(pm, pm.weighted_z(l)) / pm.norm for l in range(L)]
    total = 0.0
    for l in range(L):
        if l == ref:
            continue
        total = total + quadratic(pm, zz_pair_matrix(pm, ref, l)) / pm.norm - z[ref] * z[l]
    return total / (L - 1)


def renyi2_entropy(state: SpsState | PairMatrices, part: Bipartition | None = None):
    """2-Renyi entropy ``-ln Tr rho_A^2`` from two M x M products."""
    pm = _pairs(state)
    check_norm(pm)
    part = part or Bipartition.half(pm.L)
    cd = pm.cos_diff
    C_A = np.prod(cd[..., list(part.region_a), :, :], axis=-3)
    C_B = np.prod(cd[..., list(part.region_b), :, :], axis=-3)
    weighted_B = pm.c[..., :, None] * pm.c[..., None, :] * C_B
    P = weighted_B @ C_A
    trace = np.einsum("...ij,...ji->...", P, P) / pm.norm**2
    if np.any(trace <= 0.0):
        raise NumericalDegeneracyError(f"Tr rho_A^2 = {np.min(trace):.3e} is not positive")
    return -np.log(trace)


def renyi2_bound(M: int, size_a: int) -> float:
    return min(np.log(M), size_a * np.log(2.0))


# ---------------------------------------------------------------------------
# General Pauli sums


def _as_coupling(J, L: int):
    if J is None:
        return None
    if sp.issparse(J):
        return J.tocsr()
    J = np.asarray(J, dtype=np.float64)
    if J.shape != (L, L):
        raise ValueError(f"coupling matrix must be {L}x{L}")
    return J


def _neighbour_field(J, Z: np.ndarray) -> np.ndarray:
    """``N_l = sum_k J_lk Z_k`` for ``Z`` of shape (..., L, M, M)."""
    L = Z.shape[-3]
    if sp.issparse(J) and Z.ndim == 3:
        return np.asarray(J @ Z.reshape(L, -1)).reshape(Z.shape)
    Jd = J.toarray() if sp.issparse(J) else J
    return np.moveaxis(np.tensordot(Jd, Z, axes=([1], [Z.ndim - 3])), 0, -3)


def _direct_pair(cd, sd, cs, ss, a_x, a_z, edges, derivative: bool):
    """Pauli-sum pair value (and first-index angle derivatives) for one pair.

    Builds one row of site factors per term and multiplies explicitly; used
    only where some overlap factor is too small for the ratio form.
    """
    L = cd.shape[0]
    coefs, rows_f, rows_d = [], [], []
    for l in np.flatnonzero(a_x):
        f, d = cd.copy(), -sd.copy()
        f[l], d[l] = ss[l], cs[l]
        coefs.append(a_x[l]); rows_f.append(f); rows_d.append(d)
    for l in np.flatnonzero(a_z):
        f, d = cd.copy(), -sd.copy()
        f[l], d[l] = cs[l], -ss[l]
        coefs.append(a_z[l]); rows_f.append(f); rows_d.append(d)
    for k, l, w in edges:
        f, d = cd.copy(), -sd.copy()
        f[k], f[l] = cs[k], cs[l]
        d[k], d[l] = -ss[k], -ss[l]
        coefs.append(w); rows_f.append(f); rows_d.append(d)
    if not coefs:
        return 0.0, np.zeros(L)
    coefs = np.asarray(coefs)
    F = np.asarray(rows_f)
    value = coefs @ np.prod(F, axis=1)
    if not derivative:
        return value, None
    D = np.asarray(rows_d)
    return value, coefs @ (D * _exclusive_products(F, axis=1))


def pauli_sum_tensor(pm: PairMatrices, a_x=None, a_z=None, J=None, derivative: bool = False):
    """Pair matrix ``W`` of a Pauli sum, optionally with ``dW/dtheta_l^m``.

    ``a_x`` and ``a_z`` are per-site field coefficients (length L, or None);
    ``J`` is a symmetric L x L coupling matrix (dense or sparse) with zero
    diagonal, each edge stored in both triangles.

    Returns ``W`` of shape (..., M, M) and, when ``derivative`` is set, ``dW``
    of shape (..., L, M, M) where ``dW[l, m, m']`` differentiates the pair
    term with respect to ``theta_l^m`` only (the first index).  Because ``W``
    is symmetric, the derivative of ``c^T W c`` in ``theta_l^m`` is
    ``2 c_m (dW[l] c)_m``.
    """
    L = pm.L
    a_x = np.zeros(L) if a_x is None else np.asarray(a_x, dtype=np.float64)
    a_z = np.zeros(L) if a_z is None else np.asarray(a_z, dtype=np.float64)
    J = _as_coupling(J, L)

    has_singular = bool(np.any(pm.singular))
    cd = pm.cos_diff
    inv = 1.0 / (np.where(np.abs(cd) < SINGULAR_TOL, 1.0, cd) if has_singular else cd)
    X = pm.sin_sum * inv
    Z = np.multiply(pm.cos_sum, inv, out=inv)
    ax = a_x[:, None, None]
    az = a_z[:, None, None]

    F = ax * X
    F += az * Z
    T = F.sum(axis=-3)
    N = ZN = None
    if J is not None and (J.nnz if sp.issparse(J) else np.any(J)):
        N = _neighbour_field(J, Z)
        ZN = Z * N
        T += 0.5 * ZN.sum(axis=-3)
    W = pm.C * T

    dW = None
    if derivative:
        rest = np.subtract(T[..., None, :, :], F, out=F)
        if ZN is not None:
            rest -= ZN
        rest *= pm.sin_diff
        dW = ax * pm.cos_sum
        dW -= az * pm.sin_sum
        if N is not None:
            dW -= np.multiply(pm.sin_sum, N, out=N)
        dW -= rest
        dW *= pm.leave_one_out

    if has_singular:
        edges = _edge_list(J)
        for idx in zip(*np.nonzero(pm.singular)):
            batch, (m, n) = idx[:-2], idx[-2:]
            sel = batch + (slice(None), m, n)
            value, grad = _direct_pair(
                pm.cos_diff[sel], pm.sin_diff[sel], pm.cos_sum[sel], pm.sin_sum[sel],
                a_x, a_z, edges, derivative,
            )
            W[batch + (m, n)] = value
            if derivative:
                dW[sel] = grad
    return W, dW


def _edge_list(J):
    if J is None:
        return []
    coo = sp.triu(sp.coo_matrix(J), k=1)
    return [(int(k), int(l), float(w)) for k, l, w in zip(coo.row, coo.col, coo.data) if w != 0.0]

