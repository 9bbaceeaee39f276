"""AdamW minimization of the variational energy with low-weight resampling."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, SpsError
from .gradients import energy_and_gradient
from .hamiltonian import CouplingGraph, energy
from .rng import derive_entropy, make_rng
from .state import ParameterDomain, SpsState, draw_parameters

log = logging.getLogger(__name__)

EARLY_STOP_CADENCE = 10


@dataclass(frozen=True)
class AdamWConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 20_000
    resample_threshold: float = 1e-5
    resample_every: int = 5_000
    restarts: int = 20
    target_rel_error: float | None = None
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.resample_threshold < 0:
            raise ConfigError("resample_threshold must be >= 0")
        if self.resample_every < 1:
            raise ConfigError("resample_every must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.trace_every < 1:
            raise ConfigError("trace_every must be >= 1")
        if self.target_rel_error is not None and not self.target_rel_error > 0:
            raise ConfigError("target_rel_error must be positive")

    def resample_epochs(self) -> list[int]:
        """Epochs at which the low-weight check runs (never epoch 0)."""
        return list(range(self.resample_every, self.epochs, self.resample_every))


def relative_error(value: float, reference: float) -> float:
    """``(E - E_ref) / E_ref`` with the sign preserved."""
    return (value - reference) / reference


@dataclass(eq=False)
class RunRecord:
    """Outcome of one restart (or the best of several)."""

    energy_trace: np.ndarray
    trace_epochs: np.ndarray
    final_state: SpsState
    final_energy: float
    rel_error: float | None = None
    reference_energy: float | None = None
    resample_events: list[tuple[int, list[int]]] = field(default_factory=list)
    wall_time: float = 0.0
    seeds: dict = field(default_factory=dict)
    restart: int = 0
    epochs_run: int = 0
    aborted: bool = False
    message: str = ""
    restart_energies: list[float] = field(default_factory=list)
    restart_trace_minima: list[float] = field(default_factory=list)
    graph_tag: str = ""
    adjacency: list | None = None

    def to_dict(self) -> dict:
        return {
            "final_energy": self.final_energy,
            "rel_error": self.rel_error,
            "reference_energy": self.reference_energy,
            "restart": self.restart,
            "epochs_run": self.epochs_run,
            "aborted": self.aborted,
            "message": self.message,
            "wall_time": self.wall_time,
            "seeds": self.seeds,
            "resample_events": [[e, list(idx)] for e, idx in self.resample_events],
            "restart_energies": list(self.restart_energies),
            "restart_trace_minima": list(self.restart_trace_minima),
            "graph_tag": self.graph_tag,
            "adjacency": self.adjacency,
            "final_state": self.final_state.to_dict(),
            "trace_epochs": self.trace_epochs.tolist(),
            "energy_trace": self.energy_trace.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            energy_trace=np.asarray(data["energy_trace"], dtype=np.float64),
            trace_epochs=np.asarray(data["trace_epochs"], dtype=np.int64),
            final_state=SpsState.from_dict(data["final_state"]),
            final_energy=data["final_energy"],
            rel_error=data.get("rel_error"),
            reference_energy=data.get("reference_energy"),
            resample_events=[(e, list(idx)) for e, idx in data.get("resample_events", [])],
            wall_time=data.get("wall_time", 0.0),
            seeds=data.get("seeds", {}),
            restart=data.get("restart", 0),
            epochs_run=data.get("epochs_run", 0),
            aborted=data.get("aborted", False),
            message=data.get("message", ""),
            restart_energies=list(data.get("restart_energies", [])),
            restart_trace_minima=list(data.get("restart_trace_minima", [])),
            graph_tag=data.get("graph_tag", ""),
            adjacency=data.get("adjacency"),
        )

    def trace_rows(self):
        return zip(self.trace_epochs.tolist(), self.energy_trace.tolist())


def adamw_step(params, grads, m, v, t: int, cfg: AdamWConfig):
    """One bias-corrected Adam update with decoupled weight decay.

    Returns new ``(params, m, v)``; the inputs are left untouched.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == np.shape(m) == np.shape(v)):
        raise DimensionError("parameters, gradients and moments must share one shape")
    if t < 1:
        raise ValueError("step index starts at 1")
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads * grads
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    if cfg.weight_decay:
        params = params * (1.0 - cfg.learning_rate * cfg.weight_decay)
    params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, m, v


def resample_low_weight(state: SpsState, threshold: float, domain: ParameterDomain, moments=None, rng=None):
    """Redraw every branch with ``|c_m| < threshold``.

    The branch amplitude and its full angle column are redrawn from
    ``domain``; matching entries of the flat Adam ``moments`` (a tuple of
    arrays laid out like ``SpsState.flat``) are zeroed in place.  Returns the
    new state and the list of resampled branch indices.
    """
    low = np.flatnonzero(np.abs(state.c) < threshold)
    if low.size == 0:
        return state, []
    rng = rng if rng is not None else make_rng(domain.seed, "resample")
    new_c, new_theta = draw_parameters(rng, state.L, low.size, domain)
    c = state.c.copy()
    theta = state.theta.copy()
    c[low] = new_c
    theta[:, low] = new_theta
    if moments is not None:
        L, M = state.L, state.M
        flat_idx = np.concatenate([low, M + (np.arange(L)[:, None] * M + low[None, :]).ravel()])
        for arr in moments:
            arr[flat_idx] = 0.0
    return SpsState(c, theta), low.tolist()


def _restart_domain(domain: ParameterDomain | None, seed: int, restart: int) -> tuple[ParameterDomain, np.random.Generator]:
    domain = domain or ParameterDomain()
    return domain, make_rng(seed, "restart", restart)


def run_restart(graph: CouplingGraph, M: int, schedule: TrainSchedule, cfg: AdamWConfig,
                restart: int = 0, reference_energy: float | None = None,
                domain: ParameterDomain | None = None) -> RunRecord:
    """Optimize one randomly initialized state."""
    domain, rng = _restart_domain(domain, schedule.seed, restart)
    t0 = time.perf_counter()
    L = graph.L
    c, theta = draw_parameters(rng, L, M, domain)
    state = SpsState(c, theta)
    params = state.flat()
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    resample_at = set(schedule.resample_epochs())
    events: list[tuple[int, list[int]]] = []
    trace_e, trace_t = [], []
    aborted, message = False, ""
    epoch = 0
    for epoch in range(schedule.epochs):
        if epoch in resample_at:
            state, idx = resample_low_weight(state, schedule.resample_threshold, domain, (m, v), rng)
            if idx:
                events.append((epoch, idx))
                params = state.flat()
        try:
            value, grad = energy_and_gradient(state, graph)
        except SpsError as exc:
            aborted, message = True, f"epoch {epoch}: {exc}"
            break
        flat_grad = grad.flat()
        if not (math.isfinite(value) and np.all(np.isfinite(flat_grad))):
            aborted, message = True, f"epoch {epoch}: non-finite energy or gradient"
            break
        if epoch % schedule.trace_every == 0:
            trace_e.append(value)
            trace_t.append(epoch)
        if (schedule.target_rel_error is not None and reference_energy is not None
                and epoch % EARLY_STOP_CADENCE == 0
                and abs(relative_error(value, reference_energy)) <= schedule.target_rel_error):
            message = f"target reached at epoch {epoch}"
            break
        params, m, v = adamw_step(params, flat_grad, m, v, epoch + 1, cfg)
        if not np.all(np.isfinite(params)):
            aborted, message = True, f"epoch {epoch}: non-finite parameters"
            break
        state = SpsState.from_flat(params, L, M)
    else:
        epoch = schedule.epochs

    try:
        final_energy = energy(state, graph)
    except SpsError as exc:
        final_energy, aborted = math.nan, True
        message = message or str(exc)
    rel = None
    if reference_energy is not None and math.isfinite(final_energy):
        rel = relative_error(final_energy, reference_energy)
    return RunRecord(
        energy_trace=np.asarray(trace_e, dtype=np.float64),
        trace_epochs=np.asarray(trace_t, dtype=np.int64),
        final_state=state,
        final_energy=final_energy,
        rel_error=rel,
        reference_energy=reference_energy,
        resample_events=events,
        wall_time=time.perf_counter() - t0,
        seeds={"master": int(schedule.seed), "restart": restart,
               "entropy": derive_entropy(schedule.seed, "restart", restart)},
        restart=restart,
        epochs_run=epoch,
        aborted=aborted,
        message=message,
        graph_tag=graph.geometry_tag,
    )


def _restart_job(args):
    return run_restart(*args)


def _rank(record: RunRecord):
    energy_key = record.final_energy if (not record.aborted and math.isfinite(record.final_energy)) else math.inf
    return (energy_key, record.restart)


def run_ground_state_search(graph: CouplingGraph, M: int, schedule: TrainSchedule | None = None,
                            cfg: AdamWConfig | None = None, reference_energy: float | None = None,
                            domain: ParameterDomain | None = None, workers: int = 1) -> RunRecord:
    """Best of ``schedule.restarts`` independent optimizations.

    Restart ``r`` draws all of its randomness from the stream
    ``(schedule.seed, "restart", r)``, so results do not depend on how the
    restarts are scheduled.  The winner is the lowest final energy, ties
    broken by restart index; aborted restarts rank last.  With a reference
    energy and ``target_rel_error`` set, each restart stops early and the
    remaining restarts are skipped once one has hit the target.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    schedule = schedule or TrainSchedule()
    cfg = cfg or AdamWConfig()
    jobs = [(graph, M, schedule, cfg, r, reference_energy, domain) for r in range(schedule.restarts)]
    t0 = time.perf_counter()
    records: list[RunRecord] = []
    early = schedule.target_rel_error is not None and reference_energy is not None
    if workers > 1 and len(jobs) > 1 and not early:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_restart_job, jobs))
    else:
        for job in jobs:
            rec = run_restart(*job)
            records.append(rec)
            log.debug("restart %d: E=%.12g", rec.restart, rec.final_energy)
            if early and rec.rel_error is not None and abs(rec.rel_error) <= schedule.target_rel_error:
                break
    best = min(records, key=_rank)
    best.restart_energies = [r.final_energy for r in records]
    best.restart_trace_minima = [float(np.min(r.energy_trace)) if r.energy_trace.size else math.nan for r in records]
    best.wall_time = time.perf_counter() - t0
    if graph.geometry_tag.startswith("random"):
        best.adjacency = graph.adjacency_matrix().tolist()
    return best
