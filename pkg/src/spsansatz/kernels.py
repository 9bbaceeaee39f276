"""Compiled energy-and-gradient kernel used in the optimization loop.

The tensor code in :mod:`observables` materializes several (L, M, M) arrays
per evaluation.  Inside an optimizer that runs for tens of thousands of
epochs this is the bottleneck, so this module evaluates the same Pauli-sum
energy with one pass over the unordered pairs (m <= m'), keeping every site
factor in a length-L scratch buffer.  The math is identical to
``pauli_sum_tensor`` (ratio form, explicit products for singular pairs); the
tensor path is the reference it is tested against.
"""

from __future__ import annotations

import numba
import numpy as np

from .state import SINGULAR_TOL


@numba.njit(cache=True)
def _exclusive(f, out):
    n = f.shape[0]
    acc = 1.0
    for i in range(n):
        out[i] = acc
        acc *= f[i]
    acc = 1.0
    for i in range(n - 1, -1, -1):
        out[i] *= acc
        acc *= f[i]


@numba.njit(cache=True)
def _direct_term(cd, sd, cs, ss, sites, kinds, coef, fac, dfa, dfb, loo, out_a, out_b):
    """Add ``coef * prod(factors)`` and its angle derivatives for one term.

    ``sites``/``kinds`` list the replaced sites; kind 0 puts sin(a+b) there
    (a sigma^x), kind 1 puts cos(a+b) (a sigma^z).  Returns the term value.
    """
    L = cd.shape[0]
    for p in range(L):
        fac[p] = cd[p]
        dfa[p] = -sd[p]
        dfb[p] = sd[p]
    for j in range(sites.shape[0]):
        p = sites[j]
        if kinds[j] == 0:
            fac[p] = ss[p]
            dfa[p] = cs[p]
            dfb[p] = cs[p]
        else:
            fac[p] = cs[p]
            dfa[p] = -ss[p]
            dfb[p] = -ss[p]
    _exclusive(fac, loo)
    for p in range(L):
        out_a[p] += coef * loo[p] * dfa[p]
        out_b[p] += coef * loo[p] * dfb[p]
    return coef * loo[0] * fac[0]


@numba.njit(cache=True)
def pauli_energy_kernel(c, theta, a_x, a_z, indptr, indices, data):
    """Unnormalized ``H_u = c^T W c`` and ``Z = c^T C c`` with gradients.

    ``(indptr, indices, data)`` is the CSR form of the symmetric coupling
    matrix.  Returns ``(H_u, Z, h_c, h_theta, z_c, z_theta)``.
    """
    L, M = theta.shape
    ca = np.cos(theta)
    sa = np.sin(theta)
    cd = np.empty(L)
    sd = np.empty(L)
    cs = np.empty(L)
    ss = np.empty(L)
    loo = np.empty(L)
    X = np.empty(L)
    Zr = np.empty(L)
    N = np.empty(L)
    fac = np.empty(L)
    dfa = np.empty(L)
    dfb = np.empty(L)
    scratch = np.empty(L)
    wa = np.empty(L)
    wb = np.empty(L)
    one_site = np.empty(1, dtype=np.int64)
    kind_x = np.zeros(1, dtype=np.int64)
    kind_z = np.ones(1, dtype=np.int64)
    two_sites = np.empty(2, dtype=np.int64)
    kind_zz = np.ones(2, dtype=np.int64)

    h_c = np.zeros(M)
    z_c = np.zeros(M)
    h_theta = np.zeros((L, M))
    z_theta = np.zeros((L, M))
    H_total = 0.0
    Z_total = 0.0

    for m in range(M):
        for n in range(m, M):
            singular = False
            for l in range(L):
                a_c, a_s = ca[l, m], sa[l, m]
                b_c, b_s = ca[l, n], sa[l, n]
                if m == n:
                    cd[l] = 1.0
                    sd[l] = 0.0
                else:
                    cd[l] = a_c * b_c + a_s * b_s
                    sd[l] = a_s * b_c - a_c * b_s
                cs[l] = a_c * b_c - a_s * b_s
                ss[l] = a_s * b_c + a_c * b_s
                if abs(cd[l]) < SINGULAR_TOL:
                    singular = True
            _exclusive(cd, loo)
            C = loo[0] * cd[0]

            if not singular:
                T = 0.0
                for l in range(L):
                    X[l] = ss[l] / cd[l]
                    Zr[l] = cs[l] / cd[l]
                    T += a_x[l] * X[l] + a_z[l] * Zr[l]
                for l in range(L):
                    acc = 0.0
                    for j in range(indptr[l], indptr[l + 1]):
                        acc += data[j] * Zr[indices[j]]
                    N[l] = acc
                    T += 0.5 * Zr[l] * N[l]
                W = C * T
                for l in range(L):
                    base = a_x[l] * cs[l] - a_z[l] * ss[l] - ss[l] * N[l]
                    rest = sd[l] * (T - a_x[l] * X[l] - a_z[l] * Zr[l] - Zr[l] * N[l])
                    wa[l] = loo[l] * (base - rest)
                    wb[l] = loo[l] * (base + rest)
            else:
                W = 0.0
                for l in range(L):
                    wa[l] = 0.0
                    wb[l] = 0.0
                for l in range(L):
                    one_site[0] = l
                    if a_x[l] != 0.0:
                        W += _direct_term(cd, sd, cs, ss, one_site, kind_x, a_x[l], fac, dfa, dfb, scratch, wa, wb)
                    if a_z[l] != 0.0:
                        W += _direct_term(cd, sd, cs, ss, one_site, kind_z, a_z[l], fac, dfa, dfb, scratch, wa, wb)
                    for j in range(indptr[l], indptr[l + 1]):
                        k = indices[j]
                        if k > l and data[j] != 0.0:
                            two_sites[0] = l
                            two_sites[1] = k
                            W += _direct_term(cd, sd, cs, ss, two_sites, kind_zz, data[j], fac, dfa, dfb, scratch, wa, wb)

            weight = c[m] * c[n]
            if m == n:
                H_total += weight * W
                Z_total += weight * C
                h_c[m] += 2.0 * W * c[m]
                z_c[m] += 2.0 * C * c[m]
                for l in range(L):
                    h_theta[l, m] += weight * (wa[l] + wb[l])
                    # sd = 0 on the diagonal, so the overlap has no angle derivative
            else:
                H_total += 2.0 * weight * W
                Z_total += 2.0 * weight * C
                h_c[m] += 2.0 * W * c[n]
                h_c[n] += 2.0 * W * c[m]
                z_c[m] += 2.0 * C * c[n]
                z_c[n] += 2.0 * C * c[m]
                for l in range(L):
                    h_theta[l, m] += 2.0 * weight * wa[l]
                    h_theta[l, n] += 2.0 * weight * wb[l]
                    dz = 2.0 * weight * sd[l] * loo[l]
                    z_theta[l, m] -= dz
                    z_theta[l, n] += dz
    return H_total, Z_total, h_c, h_theta, z_c, z_theta


def coupling_csr(J, L: int):
    """``(indptr, indices, data)`` arrays for the kernel from a sparse or dense J."""
    import scipy.sparse as sp

    if J is None:
        return np.zeros(L + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
    csr = sp.csr_matrix(J)
    csr.sort_indices()
    return csr.indptr.astype(np.int64), csr.indices.astype(np.int64), csr.data.astype(np.float64)
