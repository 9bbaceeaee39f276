"""Statistical scans over random SPS states and ground-state sweeps.

Every scan is a list of independent cells.  A cell draws its samples from the
stream ``(seed, scan name, L, M)``, one state at a time (amplitudes, then
angles), so results do not depend on the evaluation chunk size or on how cells
are distributed over workers.  Rows always come back in canonical cell order.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .files import read_csv, write_csv, write_json
from .gradients import normalized_gradient
from .hamiltonian import (
    CouplingGraph,
    LongRangeSpec,
    RandomGraphSpec,
    build_chain_1d,
    build_cubic_3d,
    build_long_range,
    build_random_graph,
)
from .observables import expect_sigma_x, pauli_sum_tensor, renyi2_bound, renyi2_entropy
from .optimizer import AdamWConfig, TrainSchedule, relative_error, run_ground_state_search
from .oracle import check_capacity, dense_ferro_correlator, exact_ground_state
from .rng import make_rng
from .state import ParameterDomain, draw_parameters, norm_prediction, pair_matrices_from_arrays

log = logging.getLogger(__name__)

# Doubles per chunk of (B, L, M, M) tensors; keeps a chunk around 32 MB.
CHUNK_ELEMENTS = 4_000_000
VARIATIONAL_SLACK = 1e-9


@dataclass(frozen=True)
class StatScanConfig:
    L: tuple[int, ...]
    M: tuple[int, ...]
    samples: int = 10_000
    seed: int = 0
    site: int | None = None
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "L", tuple(int(v) for v in np.atleast_1d(self.L)))
        object.__setattr__(self, "M", tuple(int(v) for v in np.atleast_1d(self.M)))
        if not self.L or not self.M:
            raise ConfigError("L and M lists must be non-empty")
        if min(self.L) < 1:
            raise ConfigError(f"L values must be positive, got {self.L}")
        if min(self.M) < 1:
            raise ConfigError(f"M values must be positive, got {self.M}")
        if self.samples < 2:
            raise ConfigError("need at least 2 samples per cell")
        if self.site is not None and not 0 <= self.site < min(self.L):
            raise ConfigError(f"site {self.site} is outside the smallest lattice")

    def site_for(self, L: int) -> int:
        return L // 2 if self.site is None else self.site

    def cells(self) -> list[tuple[int, int]]:
        return [(L, M) for L in self.L for M in self.M]


def _sample_batches(seed: int, scan: str, L: int, M: int, samples: int):
    """Yield ``(c, theta)`` chunks with a leading batch axis."""
    rng = make_rng(seed, scan, L, M)
    domain = ParameterDomain()
    batch = max(1, min(samples, CHUNK_ELEMENTS // (L * M * M)))
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        draws = [draw_parameters(rng, L, M, domain) for _ in range(n)]
        yield np.stack([d[0] for d in draws]), np.stack([d[1] for d in draws])
        done += n


def _map_cells(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two points for a slope")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# Norm distribution


def _norm_cell(args):
    cfg, L, M = args
    values = np.concatenate([pair_matrices_from_arrays(c, th).norm
                             for c, th in _sample_batches(cfg.seed, "norm", L, M, cfg.samples)])
    mean_pred, var_pred = norm_prediction(L, M)
    return {
        "L": L, "M": M, "samples": values.size,
        "mean": float(values.mean()), "var": float(values.var(ddof=1)),
        "std_error": float(values.std(ddof=1) / math.sqrt(values.size)),
        "predicted_mean": mean_pred, "predicted_var": var_pred,
    }, values


def norm_samples(cfg: StatScanConfig, L: int, M: int) -> np.ndarray:
    """Raw norm samples of one cell, e.g. for histograms."""
    return _norm_cell((cfg, L, M))[1]


def norm_statistics(cfg: StatScanConfig, workers: int = 1, cells=None) -> list[dict]:
    """Sample mean and variance of ``Z`` per cell next to the closed-form prediction.

    ``cells`` restricts the scan to a subset of ``cfg.cells()`` (same for the
    other scans).
    """
    return [row for row, _ in _map_cells(_norm_cell, [(cfg, L, M) for L, M in (cells or cfg.cells())], workers)]


def norm_histogram(values, bins: int = 50) -> list[dict]:
    counts, edges = np.histogram(values, bins=bins)
    return [{"left": float(a), "right": float(b), "count": int(n)} for a, b, n in zip(edges[:-1], edges[1:], counts)]


# ---------------------------------------------------------------------------
# Restricted typicality of sigma^x


def _obs_cell(args):
    cfg, L, M = args
    k = cfg.site_for(L)
    values = np.concatenate([np.atleast_1d(expect_sigma_x(pair_matrices_from_arrays(c, th), k))
                             for c, th in _sample_batches(cfg.seed, "obs-variance", L, M, cfg.samples)])
    return {"L": L, "M": M, "site": k, "samples": values.size,
            "mean": float(values.mean()), "var": float(values.var(ddof=1))}


def observable_variance_scan(cfg: StatScanConfig, workers: int = 1, cells=None) -> list[dict]:
    """Variance of ``<sigma^x_k>`` over random states, per (L, M) cell."""
    return _map_cells(_obs_cell, [(cfg, L, M) for L, M in (cells or cfg.cells())], workers)


def slopes_by_L(rows: list[dict], column: str) -> dict[int, float]:
    """Log-log slope of ``column`` against M for every L with two or more M values."""
    out = {}
    for L in sorted({r["L"] for r in rows}):
        sub = sorted((r for r in rows if r["L"] == L), key=lambda r: r["M"])
        if len(sub) >= 2:
            out[L] = loglog_slope([r["M"] for r in sub], [r[column] for r in sub])
    return out


# ---------------------------------------------------------------------------
# Entanglement typicality


def _entropy_cell(args):
    cfg, L, M = args
    if L < 2:
        raise ConfigError("entropy scans need L >= 2")
    size_a = (L + 1) // 2
    values = np.concatenate([np.atleast_1d(renyi2_entropy(pair_matrices_from_arrays(c, th)))
                             for c, th in _sample_batches(cfg.seed, "entropy", L, M, cfg.samples)])
    bound = renyi2_bound(M, size_a)
    gap = float(np.min((bound - values) / bound)) if bound > 0 else math.nan
    return {"L": L, "M": M, "samples": values.size, "mean_S2": float(values.mean()),
            "min_S2": float(values.min()), "max_S2": float(values.max()),
            "bound": bound, "min_rel_gap": gap}


def entropy_typicality_scan(cfg: StatScanConfig, workers: int = 1, cells=None) -> list[dict]:
    """2-Renyi entropy of the half-chain cut against ``min(ln M, |A| ln 2)``.

    ``min_rel_gap`` is the smallest ``(bound - S2) / bound`` over the samples
    (NaN when the bound is zero, i.e. M = 1).
    """
    return _map_cells(_entropy_cell, [(cfg, L, M) for L, M in (cells or cfg.cells())], workers)


# ---------------------------------------------------------------------------
# Gradient variance


def _sigma_x_gradients(c, theta, k: int):
    pm = pair_matrices_from_arrays(c, theta)
    a_x = np.zeros(theta.shape[-2])
    a_x[k] = 1.0
    W, dW = pauli_sum_tensor(pm, a_x=a_x, derivative=True)
    return normalized_gradient(pm, W, dW)


def _grad_cell(args):
    cfg, L, M = args
    k = cfg.site_for(L)
    d_c, d_theta, off_site = [], [], 0.0
    for c, th in _sample_batches(cfg.seed, "grad-variance", L, M, cfg.samples):
        _, gc, gt = _sigma_x_gradients(c, th, k)
        d_c.append(gc[:, 0])
        d_theta.append(gt[:, k, 0])
        mask = np.ones(L, dtype=bool)
        mask[k] = False
        off_site = max(off_site, float(np.max(np.abs(gt[:, mask, :]), initial=0.0)))
    d_c = np.concatenate(d_c)
    d_theta = np.concatenate(d_theta)
    return {"L": L, "M": M, "site": k, "samples": d_c.size,
            "var_dc": float(d_c.var(ddof=1)), "var_dtheta": float(d_theta.var(ddof=1)),
            "max_off_site_dtheta": off_site}


def gradient_variance_scan(cfg: StatScanConfig, workers: int = 1, cells=None) -> list[dict]:
    """Variances of d<sigma^x_k>/dc_1 and d<sigma^x_k>/dtheta^1_k per cell.

    ``max_off_site_dtheta`` is the largest |d<sigma^x_k>/dtheta^m_l| with
    l != k over all samples and branches; it vanishes identically at M = 1.
    """
    return _map_cells(_grad_cell, [(cfg, L, M) for L, M in (cells or cfg.cells())], workers)


# ---------------------------------------------------------------------------
# Ground-state sweeps

GEOMETRIES = ("chain", "cubic", "long-range", "random")
SWEEP_PARAMETERS = ("h_x", "alpha", "p")


@dataclass(frozen=True)
class GeometrySpec:
    """Which builder to call and with what arguments.

    ``L`` is used by the chain, random and 1D long-range builders; ``dims``
    (nx, ny, nz) by the cubic builder and 3D long-range couplings.
    """

    kind: str
    L: int | None = None
    dims: tuple[int, int, int] | None = None
    J: float = -1.0
    h_x: float = 0.0
    h_z: float = 0.0
    alpha: float | None = None
    p: float | None = None
    graph_seed: int = 5

    def __post_init__(self):
        if self.kind not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {', '.join(GEOMETRIES)}, got {self.kind!r}")
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.kind == "cubic" and self.dims is None:
            raise ConfigError("cubic geometry needs dims")
        if self.kind in ("chain", "random") and self.L is None:
            raise ConfigError(f"{self.kind} geometry needs L")
        if self.kind == "long-range":
            if self.alpha is None:
                raise ConfigError("long-range geometry needs alpha")
            if self.L is None and self.dims is None:
                raise ConfigError("long-range geometry needs L or dims")
        if self.kind == "random" and self.p is None:
            raise ConfigError("random geometry needs p")

    @property
    def n_sites(self) -> int:
        return int(self.L) if self.dims is None else math.prod(self.dims)

    def build(self) -> CouplingGraph:
        if self.kind == "chain":
            return build_chain_1d(self.L, self.J, self.h_x, self.h_z)
        if self.kind == "cubic":
            return build_cubic_3d(*self.dims, self.J, self.h_x, self.h_z)
        if self.kind == "long-range":
            dims = self.dims if self.dims is not None else self.L
            return build_long_range(LongRangeSpec(self.J, self.alpha, dims), self.h_x, self.h_z)
        return build_random_graph(RandomGraphSpec(self.L, self.p, self.J, self.graph_seed), self.h_x, self.h_z)


@dataclass(frozen=True)
class SweepConfig:
    """Grid of (parameter value, M) cells, each a best-of-restarts search.

    ``reference`` is ``"oracle"`` (exact diagonalization per cell), a number
    (one reference energy for every cell) or ``"none"``.
    """

    geometry: GeometrySpec
    M: tuple[int, ...]
    parameter: str = "h_x"
    values: tuple[float, ...] = ()
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    optimizer: AdamWConfig = field(default_factory=AdamWConfig)
    reference: str | float = "oracle"
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(v) for v in np.atleast_1d(self.M)))
        object.__setattr__(self, "values", tuple(float(v) for v in np.atleast_1d(self.values)))
        if not self.M or min(self.M) < 1:
            raise ConfigError(f"M values must be positive, got {self.M}")
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}")
        if self.parameter == "alpha" and self.geometry.kind != "long-range":
            raise ConfigError("alpha sweeps need the long-range geometry")
        if self.parameter == "p" and self.geometry.kind != "random":
            raise ConfigError("p sweeps need the random geometry")
        if isinstance(self.reference, str) and self.reference not in ("oracle", "none"):
            try:
                object.__setattr__(self, "reference", float(self.reference))
            except ValueError:
                raise ConfigError(f"reference must be 'oracle', 'none' or a number, got {self.reference!r}") from None
        if self.reference == "oracle":
            check_capacity(self.geometry.n_sites)

    def points(self) -> tuple[float, ...]:
        return self.values or (float(getattr(self.geometry, self.parameter)),)

    def cells(self) -> list[tuple[float, int]]:
        return [(v, M) for v in self.points() for M in self.M]

    def graph_at(self, value: float) -> CouplingGraph:
        return replace(self.geometry, **{self.parameter: value}).build()


SWEEP_HEADER = ["parameter", "value", "M", "reference_energy", "energy", "rel_error", "ferro_correlator",
                "variational_violation", "restarts_run", "epochs_run"]


def _reference(cfg: SweepConfig, graph: CouplingGraph):
    """``(E_ref, C_F of the reference state)``; C_F only when the oracle is used."""
    if cfg.reference == "oracle":
        e0, psi = exact_ground_state(graph)
        return e0, dense_ferro_correlator(psi)
    if cfg.reference == "none":
        return None, math.nan
    return float(cfg.reference), math.nan


def variational_violation(value: float, reference: float) -> bool:
    """True when an energy undercuts the reference by more than the round-off slack."""
    return value < reference - VARIATIONAL_SLACK * abs(reference)


def _sweep_cell(args):
    cfg, value, M, reference = args
    graph = cfg.graph_at(value)
    e_ref, cf = reference
    rec = run_ground_state_search(graph, M, cfg.schedule, cfg.optimizer, reference_energy=e_ref)
    rel = relative_error(rec.final_energy, e_ref) if e_ref is not None else math.nan
    violation = e_ref is not None and variational_violation(rec.final_energy, e_ref)
    if violation:
        log.error("cell %s=%g M=%d: energy %.15g is below the reference %.15g", cfg.parameter, value, M,
                  rec.final_energy, e_ref)
    return {
        "parameter": cfg.parameter, "value": value, "M": M,
        "reference_energy": math.nan if e_ref is None else e_ref,
        "energy": rec.final_energy, "rel_error": rel, "ferro_correlator": cf,
        "variational_violation": int(violation), "restarts_run": len(rec.restart_energies),
        "epochs_run": rec.epochs_run,
    }


def _cell_key(value, M) -> tuple[str, int]:
    return repr(float(value)), int(M)


def ground_state_sweep(cfg: SweepConfig, workers: int = 1, resume_rows: list[dict] | None = None,
                       on_row=None) -> list[dict]:
    """Best-of-restarts relative error for every (parameter value, M) cell.

    ``resume_rows`` are previously completed rows (as read back from CSV);
    their cells are skipped and the rows are kept verbatim.  ``on_row`` is
    called with the full row list after each newly finished cell, which lets
    callers checkpoint.  Cells with one parameter value share the reference
    computation.
    """
    done = {}
    for row in resume_rows or ():
        done[_cell_key(row["value"], row["M"])] = row
    references = {}
    pending = []
    for value, M in cfg.cells():
        if _cell_key(value, M) in done:
            continue
        if value not in references:
            references[value] = _reference(cfg, cfg.graph_at(value))
        pending.append((cfg, value, M, references[value]))

    def ordered():
        return [done[_cell_key(v, M)] for v, M in cfg.cells() if _cell_key(v, M) in done]

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for job, row in zip(pending, pool.map(_sweep_cell, pending)):
                done[_cell_key(job[1], job[2])] = row
                if on_row:
                    on_row(ordered())
    else:
        for job in pending:
            started = time.perf_counter()
            row = _sweep_cell(job)
            done[_cell_key(job[1], job[2])] = row
            log.info("cell %s=%g M=%d: rel_error=%.3e (%.1f s)", cfg.parameter, job[1], job[2], row["rel_error"],
                     time.perf_counter() - started)
            if on_row:
                on_row(ordered())
    return ordered()


def parse_sweep_rows(path) -> list[dict]:
    """Read back a sweep CSV with numeric columns converted."""
    rows = []
    for raw in read_csv(path):
        row = dict(raw)
        for key in ("value", "reference_energy", "energy", "rel_error", "ferro_correlator"):
            row[key] = float(row[key])
        for key in ("M", "variational_violation", "restarts_run", "epochs_run"):
            row[key] = int(row[key])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Output


def config_echo(cfg) -> dict:
    return json.loads(json.dumps(asdict(cfg), default=str))


def write_scan(path, header, rows, cfg, scan: str, extra: dict | None = None) -> None:
    """CSV with the config inline, plus a JSON summary next to it.

    The CSV carries no timestamp so that identical runs give identical files;
    wall-clock provenance goes to the JSON summary only.
    """
    path = Path(path)
    echo = config_echo(cfg)
    preamble = [f"scan={scan}", "config=" + json.dumps(echo, sort_keys=True)]
    write_csv(path, header, rows, preamble)
    write_json(path.with_suffix(".json"), {
        "scan": scan,
        "tool": "sps",
        "version": __version__,
        "seed": echo.get("seed", echo.get("schedule", {}).get("seed")),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": echo,
        "rows": len(rows),
        **(extra or {}),
    })
