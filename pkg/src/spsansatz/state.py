"""Superposition-of-product-states parameters and their pair-overlap structure.

A state is

    |psi> = sum_m c_m  (x)_l  (cos theta_l^m, sin theta_l^m)

with real amplitudes ``c`` (length M) and angles ``theta`` (shape L x M).  The
amplitudes are kept raw; normalization lives in the norm ``Z = c^T C c``.

Every observable reduces to sums over ordered pairs (m, m') of products of
single-site factors.  :class:`PairMatrices` caches those factors for all sites
and pairs.  All kernels here broadcast over leading batch axes, so ``theta`` of
shape ``(B, L, M)`` and ``c`` of shape ``(B, M)`` evaluate B states at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .rng import make_rng

# Below this |cos(theta_l^m - theta_l^m')| a pair is treated as singular and the
# ratio-form Pauli tensors are bypassed in favour of explicit products.
SINGULAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpsState:
    """Variational parameters: amplitudes ``c`` (M,) and angles ``theta`` (L, M)."""

    c: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64)
        theta = np.array(self.theta, dtype=np.float64)
        if c.ndim != 1 or theta.ndim != 2:
            raise DimensionError(f"expected c of shape (M,) and theta of shape (L, M), got {c.shape} and {theta.shape}")
        if theta.shape[1] != c.shape[0]:
            raise DimensionError(f"theta has {theta.shape[1]} columns but c has {c.shape[0]} entries")
        if c.shape[0] < 1 or theta.shape[0] < 1:
            raise DimensionError("need L >= 1 and M >= 1")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(theta))):
            raise ValueError("state parameters must be finite")
        c.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "theta", theta)

    @property
    def L(self) -> int:
        return self.theta.shape[0]

    @property
    def M(self) -> int:
        return self.c.shape[0]

    @property
    def n_params(self) -> int:
        return (self.L + 1) * self.M

    @classmethod
    def product(cls, angles, amplitude: float = 1.0) -> "SpsState":
        """Single product state with one angle per site."""
        angles = np.asarray(angles, dtype=np.float64).reshape(-1, 1)
        return cls(np.array([amplitude]), angles)

    def flat(self) -> np.ndarray:
        """Parameters as one vector: ``c`` followed by ``theta`` in row-major order."""
        return np.concatenate([self.c, self.theta.ravel()])

    @classmethod
    def from_flat(cls, vec, L: int, M: int) -> "SpsState":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != ((L + 1) * M,):
            raise DimensionError(f"flat vector has shape {vec.shape}, expected ({(L + 1) * M},)")
        return cls(vec[:M], vec[M:].reshape(L, M))

    def permuted(self, perm) -> "SpsState":
        perm = np.asarray(perm)
        return SpsState(self.c[perm], self.theta[:, perm])

    def scaled(self, factor: float) -> "SpsState":
        return SpsState(self.c * factor, self.theta)

    def to_dict(self) -> dict:
        return {"L": self.L, "M": self.M, "c": self.c.tolist(), "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SpsState":
        state = cls(data["c"], data["theta"])
        if "L" in data and "M" in data and (state.L, state.M) != (data["L"], data["M"]):
            raise DimensionError("declared L, M do not match stored arrays")
        return state


@dataclass(frozen=True)
class ParameterDomain:
    """Uniform sampling box for amplitudes and angles."""

    c_low: float = -1.0
    c_high: float = 1.0
    theta_low: float = -np.pi / 2
    theta_high: float = np.pi / 2
    seed: int = 0

    def __post_init__(self):
        if not self.c_low < self.c_high:
            raise ConfigError(f"c_low ({self.c_low}) must be below c_high ({self.c_high})")
        if not self.theta_low < self.theta_high:
            raise ConfigError(f"theta_low ({self.theta_low}) must be below theta_high ({self.theta_high})")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def draw_parameters(rng: np.random.Generator, L: int, M: int, domain: ParameterDomain, size=None):
    """Draw ``(c, theta)`` uniformly from ``domain``; ``size`` adds a leading batch axis.

    Amplitudes are drawn before angles, so a stream always yields the same
    state for the same ``(L, M)``.
    """
    if L < 1 or M < 1:
        raise ConfigError(f"need L >= 1 and M >= 1, got L={L}, M={M}")
    lead = () if size is None else (int(size),)
    c = rng.uniform(domain.c_low, domain.c_high, size=lead + (M,))
    theta = rng.uniform(domain.theta_low, domain.theta_high, size=lead + (L, M))
    return c, theta


def sample_random_sps(L: int, M: int, domain: ParameterDomain | None = None, rng=None) -> SpsState:
    """Random state with i.i.d. uniform parameters.

    Without an explicit ``rng`` the stream is derived from ``domain.seed``, so
    the same ``(L, M, domain)`` always gives a bit-identical state.
    """
    domain = domain or ParameterDomain()
    if rng is None:
        rng = make_rng(domain.seed, "sample_random_sps")
    c, theta = draw_parameters(rng, L, M, domain)
    return SpsState(c, theta)


def _exclusive_products(factors: np.ndarray, axis: int) -> np.ndarray:
    """Product of all entries along ``axis`` except the one at each position.

    Uses prefix/suffix products, so no division is involved and zeros are
    handled exactly.
    """
    f = np.moveaxis(factors, axis, 0)
    n = f.shape[0]
    out = np.empty_like(f)
    out[0] = 1.0
    for i in range(1, n):
        np.multiply(out[i - 1], f[i - 1], out=out[i])
    suffix = np.ones_like(f[0])
    for i in range(n - 2, -1, -1):
        suffix *= f[i + 1]
        out[i] *= suffix
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class PairMatrices:
    """Pairwise single-site factors for all sites and ordered pairs (m, m').

    For site ``l`` and pair ``(m, m')``, with ``a = theta_l^m`` and
    ``b = theta_l^m'``:

    * ``cos_diff = cos(a - b)``, the overlap of the two local states;
    * ``sin_diff = sin(a - b)``, minus its derivative in ``a``;
    * ``cos_sum = cos(a + b)``, the local sigma^z matrix element;
    * ``sin_sum = sin(a + b)``, the local sigma^x matrix element.

    ``leave_one_out[l]`` is the overlap product over every site except ``l``,
    so ``C = cos_diff[l] * leave_one_out[l]`` for any ``l``.
    """

    c: np.ndarray
    cos_diff: np.ndarray
    sin_diff: np.ndarray
    cos_sum: np.ndarray
    sin_sum: np.ndarray
    leave_one_out: np.ndarray
    C: np.ndarray
    norm: np.ndarray | float
    singular: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.cos_diff.shape[-3]

    @property
    def M(self) -> int:
        return self.cos_diff.shape[-1]

    def weighted_x(self, k: int) -> np.ndarray:
        """``C * X_k``: the pair matrix of an unnormalized <sigma^x_k>, finite everywhere."""
        return self.sin_sum[..., k, :, :] * self.leave_one_out[..., k, :, :]

    def weighted_z(self, k: int) -> np.ndarray:
        return self.cos_sum[..., k, :, :] * self.leave_one_out[..., k, :, :]

    @property
    def X(self) -> np.ndarray:
        """Pauli-X tensor ``sin(a+b)/cos(a-b)`` per site; undefined on singular pairs."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.sin_sum / self.cos_diff

    @property
    def Z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.cos_sum / self.cos_diff

    def leave_two_out(self, k: int, l: int) -> np.ndarray:
        """Overlap product over all sites except ``k`` and ``l``."""
        cd_l = self.cos_diff[..., l, :, :]
        small = np.abs(cd_l) < SINGULAR_TOL
        out = self.leave_one_out[..., k, :, :] / np.where(small, 1.0, cd_l)
        if np.any(small):
            keep = np.ones(self.L, dtype=bool)
            keep[[k, l]] = False
            direct = np.prod(self.cos_diff[..., keep, :, :], axis=-3)
            out = np.where(small, direct, out)
        return out


def pair_matrices_from_arrays(c: np.ndarray, theta: np.ndarray) -> PairMatrices:
    """Build :class:`PairMatrices` for ``c`` (..., M) and ``theta`` (..., L, M).

    Pair factors come from per-site cosines and sines through the
    angle-addition identities; the diagonal is pinned to the exact values
    cos(0) = 1 and sin(0) = 0.
    """
    ca, sa = np.cos(theta), np.sin(theta)
    # Rank-2 products: [u1, u2] @ [ca, sa]^T gives u1 ca' + u2 sa' per site.
    left = np.stack([
        np.stack([ca, sa], axis=-1),
        np.stack([ca, -sa], axis=-1),
        np.stack([sa, -ca], axis=-1),
        np.stack([sa, ca], axis=-1),
    ])
    cos_diff, cos_sum, sin_diff, sin_sum = left @ np.stack([ca, sa], axis=-2)
    diag = np.arange(theta.shape[-1])
    cos_diff[..., diag, diag] = 1.0
    sin_diff[..., diag, diag] = 0.0
    loo = _exclusive_products(cos_diff, axis=-3)
    C = loo[..., 0, :, :] * cos_diff[..., 0, :, :]
    norm = np.einsum("...m,...mn,...n->...", c, C, c)
    singular = np.any(np.abs(cos_diff) < SINGULAR_TOL, axis=-3)
    return PairMatrices(
        c=c,
        cos_diff=cos_diff,
        sin_diff=sin_diff,
        cos_sum=cos_sum,
        sin_sum=sin_sum,
        leave_one_out=loo,
        C=C,
        norm=norm,
        singular=singular,
    )


def compute_overlap_matrix(state: SpsState) -> PairMatrices:
    """Pair overlaps ``C``, site factors and the norm of ``state``. O(L M^2)."""
    return pair_matrices_from_arrays(state.c, state.theta)


def norm(state: SpsState) -> float:
    """``Z = <psi_u|psi_u> = c^T C c``."""
    return float(compute_overlap_matrix(state).norm)


def norm_prediction(L: int, M: int, exact: bool = False) -> tuple[float, float]:
    """Mean and variance of ``Z`` for the default sampling domain.

    Diagonal terms contribute c^2 with mean 1/3 and variance 4/45.  Each
    off-diagonal term has zero mean and variance 1/(9 2^L), but the terms for
    (m, m') and (m', m) are equal, so the exact variance counts the
    off-diagonal part twice.  The default omits that factor; the two agree to
    O(M^2 / 2^L), which is far below sampling error for large L.
    """
    off = M * (M - 1) / (9.0 * 2.0**L)
    return M / 3.0, 4.0 * M / 45.0 + (2.0 * off if exact else off)
