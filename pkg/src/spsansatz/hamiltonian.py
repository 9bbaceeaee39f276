"""Tilted Ising coupling graphs and the variational energy.

    H = sum_{<k,l>} J_kl Z_k Z_l - h_x sum_k X_k - h_z sum_k Z_k

Sites of 3D lattices are flattened with x fastest:
``index = x + nx * (y + ny * z)``.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError
from .files import atomic_write_text
from .kernels import coupling_csr
from .observables import check_norm, pauli_sum_tensor, quadratic
from .rng import make_rng
from .state import SpsState, compute_overlap_matrix


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    """Weighted undirected interaction graph plus uniform field strengths."""

    L: int
    edges: tuple[tuple[int, int, float], ...]
    h_x: float = 0.0
    h_z: float = 0.0
    geometry_tag: str = "custom"
    coordinates: tuple[tuple[int, int, int], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError("a graph needs at least one site")
        canon = []
        seen = set()
        for k, l, w in self.edges:
            k, l, w = int(k), int(l), float(w)
            if k == l:
                raise ConfigError(f"self edge at site {k}")
            if k > l:
                k, l = l, k
            if not 0 <= k < l < self.L:
                raise ConfigError(f"edge ({k}, {l}) outside 0..{self.L - 1}")
            if (k, l) in seen:
                raise ConfigError(f"duplicate edge ({k}, {l})")
            if not math.isfinite(w):
                raise ConfigError(f"non-finite coupling on edge ({k}, {l})")
            seen.add((k, l))
            canon.append((k, l, w))
        canon.sort(key=lambda e: (e[0], e[1]))
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "h_x", float(self.h_x))
        object.__setattr__(self, "h_z", float(self.h_z))
        if self.coordinates is not None:
            coords = tuple(tuple(int(v) for v in xyz) for xyz in self.coordinates)
            if len(coords) != self.L:
                raise ConfigError("need one coordinate triple per site")
            object.__setattr__(self, "coordinates", coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def check_sites(self, L: int):
        if L != self.L:
            raise DimensionError(f"state has {L} sites but the graph has {self.L}")

    @cached_property
    def _coupling(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.L, self.L))
        k, l, w = (np.array(v) for v in zip(*self.edges))
        rows = np.concatenate([k, l]).astype(int)
        cols = np.concatenate([l, k]).astype(int)
        return sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(self.L, self.L))

    def coupling_matrix(self) -> sp.csr_matrix:
        """Symmetric sparse J with each edge in both triangles."""
        return self._coupling

    @cached_property
    def _csr_arrays(self):
        return coupling_csr(self._coupling, self.L)

    def coupling_csr(self):
        """``(indptr, indices, data)`` of :meth:`coupling_matrix` for compiled kernels."""
        return self._csr_arrays

    def field_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        return np.full(self.L, -self.h_x), np.full(self.L, -self.h_z)

    def adjacency_matrix(self) -> np.ndarray:
        A = np.zeros((self.L, self.L), dtype=np.int8)
        for k, l, _ in self.edges:
            A[k, l] = A[l, k] = 1
        return A

    def with_fields(self, h_x=None, h_z=None) -> "CouplingGraph":
        return CouplingGraph(
            self.L, self.edges,
            self.h_x if h_x is None else h_x,
            self.h_z if h_z is None else h_z,
            self.geometry_tag, self.coordinates,
        )

    def scaled(self, factor: float) -> "CouplingGraph":
        """Every coupling and field multiplied by ``factor``."""
        return CouplingGraph(
            self.L, tuple((k, l, factor * w) for k, l, w in self.edges),
            factor * self.h_x, factor * self.h_z, self.geometry_tag, self.coordinates,
        )

    def same_as(self, other: "CouplingGraph") -> bool:
        return (self.L, self.edges, self.h_x, self.h_z) == (other.L, other.edges, other.h_x, other.h_z)


@dataclass(frozen=True)
class LongRangeSpec:
    """Power-law couplings ``J / d^alpha`` on a 1D chain or 3D box."""

    J: float
    alpha: float
    lattice_dims: int | tuple[int, int, int]

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        dims = self.dims()
        if any(d < 1 for d in dims) or math.prod(dims) < 2:
            raise ConfigError(f"degenerate lattice dimensions {self.lattice_dims}")

    def dims(self) -> tuple[int, int, int]:
        if isinstance(self.lattice_dims, (int, np.integer)):
            return (int(self.lattice_dims), 1, 1)
        dims = tuple(int(d) for d in self.lattice_dims)
        if len(dims) == 1:
            return (dims[0], 1, 1)
        if len(dims) != 3:
            raise ConfigError("lattice_dims must be a length or an (nx, ny, nz) triple")
        return dims


@dataclass(frozen=True)
class RandomGraphSpec:
    """G(L, p) coupling graph with uniform weight J."""

    L: int
    p: float
    J: float
    seed: int = 5

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"edge probability {self.p} outside [0, 1]")
        if self.L < 2:
            raise ConfigError("a random graph needs L >= 2")


def lattice_coordinates(nx: int, ny: int, nz: int) -> list[tuple[int, int, int]]:
    """Site coordinates in flattening order (x fastest)."""
    return [(x, y, z) for z in range(nz) for y in range(ny) for x in range(nx)]


def site_index(x: int, y: int, z: int, nx: int, ny: int) -> int:
    return x + nx * (y + ny * z)


def build_chain_1d(L: int, J: float, h_x: float, h_z: float) -> CouplingGraph:
    """Open chain with uniform nearest-neighbour coupling."""
    if L < 2:
        raise ConfigError(f"a chain needs L >= 2, got {L}")
    edges = tuple((i, i + 1, J) for i in range(L - 1))
    return CouplingGraph(L, edges, h_x, h_z, "chain1d", tuple((i, 0, 0) for i in range(L)))


def build_cubic_3d(nx: int, ny: int, nz: int, J: float, h_x: float, h_z: float) -> CouplingGraph:
    """Open simple-cubic lattice with unit-distance bonds."""
    if min(nx, ny, nz) < 1 or nx * ny * nz < 2:
        raise ConfigError(f"degenerate lattice dimensions ({nx}, {ny}, {nz})")
    coords = lattice_coordinates(nx, ny, nz)
    edges = []
    for x, y, z in coords:
        i = site_index(x, y, z, nx, ny)
        if x + 1 < nx:
            edges.append((i, site_index(x + 1, y, z, nx, ny), J))
        if y + 1 < ny:
            edges.append((i, site_index(x, y + 1, z, nx, ny), J))
        if z + 1 < nz:
            edges.append((i, site_index(x, y, z + 1, nx, ny), J))
    return CouplingGraph(nx * ny * nz, tuple(edges), h_x, h_z, f"cubic{nx}x{ny}x{nz}", tuple(coords))


def build_long_range(spec: LongRangeSpec, h_x: float, h_z: float) -> CouplingGraph:
    """All-to-all couplings ``J / d(k, l)^alpha`` with Euclidean lattice distance."""
    nx, ny, nz = spec.dims()
    coords = lattice_coordinates(nx, ny, nz)
    pts = np.array(coords, dtype=np.float64)
    edges = []
    for k, l in itertools.combinations(range(len(coords)), 2):
        d = float(np.linalg.norm(pts[k] - pts[l]))
        edges.append((k, l, spec.J / d**spec.alpha))
    tag = f"longrange{'x'.join(str(d) for d in (nx, ny, nz))}_a{spec.alpha:g}"
    return CouplingGraph(len(coords), tuple(edges), h_x, h_z, tag, tuple(coords))


def build_random_graph(spec: RandomGraphSpec, h_x: float, h_z: float) -> CouplingGraph:
    """Each pair ``i < j`` is kept with probability ``p``.

    Pairs are visited in lexicographic order and consume one uniform draw each
    from the stream ``(seed, "random-graph")``.
    """
    rng = make_rng(spec.seed, "random-graph")
    pairs = list(itertools.combinations(range(spec.L), 2))
    draws = rng.random(len(pairs))
    edges = tuple((i, j, spec.J) for (i, j), u in zip(pairs, draws) if u < spec.p)
    return CouplingGraph(spec.L, edges, h_x, h_z, f"random{spec.L}_p{spec.p:g}")


def hamiltonian_tensor(state_pairs, graph: CouplingGraph, derivative: bool = False):
    return pauli_sum_tensor(state_pairs, *graph.field_coefficients(), graph.coupling_matrix(), derivative=derivative)


def energy(state: SpsState, graph: CouplingGraph) -> float:
    """Variational energy ``<psi|H|psi>`` in O((L + |edges|) M^2)."""
    graph.check_sites(state.L)
    pm = compute_overlap_matrix(state)
    check_norm(pm)
    W, _ = hamiltonian_tensor(pm, graph)
    return float(quadratic(pm, W) / pm.norm)


def energy_per_site(state: SpsState, graph: CouplingGraph) -> float:
    return energy(state, graph) / graph.L


# ---------------------------------------------------------------------------
# Text formats

GRAPH_HEADER = "# sps coupling graph v1"


def format_graph(graph: CouplingGraph) -> str:
    out = io.StringIO()
    out.write(f"{GRAPH_HEADER}\n")
    out.write(f"L {graph.L}\n")
    out.write(f"h_x {graph.h_x!r}\n")
    out.write(f"h_z {graph.h_z!r}\n")
    out.write(f"tag {graph.geometry_tag}\n")
    out.write(f"edges {graph.n_edges}\n")
    for k, l, w in graph.edges:
        out.write(f"{k} {l} {w!r}\n")
    return out.getvalue()


def parse_graph(text: str) -> CouplingGraph:
    header = {}
    edges = []
    expected = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if expected is None:
            if len(parts) != 2:
                raise ConfigError(f"line {lineno}: malformed header line {raw!r}")
            key, value = parts
            if key == "edges":
                expected = int(value)
            else:
                header[key] = value
            continue
        if len(parts) != 3:
            raise ConfigError(f"line {lineno}: expected 'k l J', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    missing = {"L", "h_x", "h_z", "tag"} - header.keys()
    if missing or expected is None:
        raise ConfigError(f"graph file missing header keys: {sorted(missing | ({'edges'} if expected is None else set()))}")
    if len(edges) != expected:
        raise ConfigError(f"graph file declares {expected} edges but lists {len(edges)}")
    return CouplingGraph(int(header["L"]), tuple(edges), float(header["h_x"]), float(header["h_z"]), header["tag"])


def write_graph(graph: CouplingGraph, path) -> None:
    atomic_write_text(Path(path), format_graph(graph))


def read_graph(path) -> CouplingGraph:
    return parse_graph(Path(path).read_text())


def format_adjacency_csv(graph: CouplingGraph) -> str:
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in graph.adjacency_matrix())
