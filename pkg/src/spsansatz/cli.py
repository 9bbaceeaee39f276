"""``sps`` command-line front end.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.  Logs go to standard error; data goes to files under
``--out`` (and short summaries to standard output).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import Config, load_config
from .errors import CapacityError, ConfigError, ConvergenceError, DimensionError, SpsError
from .experiments import (
    SWEEP_HEADER,
    GeometrySpec,
    StatScanConfig,
    SweepConfig,
    config_echo,
    entropy_typicality_scan,
    ground_state_sweep,
    gradient_variance_scan,
    norm_histogram,
    norm_samples,
    norm_statistics,
    observable_variance_scan,
    parse_sweep_rows,
    slopes_by_L,
    variational_violation,
    write_scan,
)
from .files import atomic_write_text, read_csv, write_csv, write_json
from .gradients import energy_and_gradient
from .hamiltonian import CouplingGraph, format_adjacency_csv, read_graph, write_graph
from .observables import ferro_correlator, renyi2_entropy
from .optimizer import AdamWConfig, TrainSchedule, run_ground_state_search
from .oracle import check_capacity, dense_ferro_correlator, exact_ground_state
from .state import ParameterDomain, SpsState, sample_random_sps
from .verify import run_verification

log = logging.getLogger("spsansatz")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

STAT_SCANS = {
    "norm-stats": (norm_statistics, ["L", "M", "samples", "mean", "var", "std_error", "predicted_mean", "predicted_var"]),
    "obs-variance": (observable_variance_scan, ["L", "M", "site", "samples", "mean", "var"]),
    "entropy": (entropy_typicality_scan, ["L", "M", "samples", "mean_S2", "min_S2", "max_S2", "bound", "min_rel_gap"]),
    "grad-variance": (gradient_variance_scan, ["L", "M", "site", "samples", "var_dc", "var_dtheta", "max_off_site_dtheta"]),
}


# ---------------------------------------------------------------------------
# Config -> domain objects


def _schedule(cfg: Config) -> TrainSchedule:
    return TrainSchedule(**cfg.section("schedule"))


def _optimizer(cfg: Config) -> AdamWConfig:
    return AdamWConfig(**cfg.section("optimizer"))


def _geometry(cfg: Config) -> GeometrySpec:
    geo = cfg.section("geometry")
    geo.pop("graph_file")
    return GeometrySpec(**geo)


def _graph(cfg: Config) -> CouplingGraph:
    if not cfg.has("geometry"):
        raise ConfigError("missing required key 'geometry'")
    path = cfg.get("geometry", "graph_file")
    if path:
        try:
            return read_graph(path)
        except OSError as exc:
            raise ConfigError(f"cannot read geometry.graph_file {path}: {exc.strerror}") from None
    return _geometry(cfg).build()


def _single_M(cfg: Config) -> int:
    Ms = cfg.get("ansatz", "M")
    if len(Ms) != 1:
        raise ConfigError(f"ansatz.M must be a single value here, got {Ms}")
    if Ms[0] < 1:
        raise ConfigError(f"ansatz.M must be >= 1, got {Ms[0]}")
    return Ms[0]


def _reference_source(cfg: Config):
    source = cfg.get("reference", "source")
    if source in ("oracle", "none"):
        return source
    try:
        return float(source)
    except ValueError:
        raise ConfigError(f"reference.source must be 'oracle', 'none' or a number, got {source!r}") from None


def _oracle_method(cfg: Config) -> str:
    method = cfg.get("reference", "method")
    if method not in ("auto", "dense", "iterative"):
        raise ConfigError(f"reference.method must be auto, dense or iterative, got {method!r}")
    return method


def _oracle(graph: CouplingGraph, cfg: Config):
    try:
        return exact_ground_state(graph, _oracle_method(cfg))
    except CapacityError as exc:
        raise ConfigError(f"reference.source=oracle: {exc}") from None


# ---------------------------------------------------------------------------
# Commands


def cmd_ground_state(args, cfg: Config) -> int:
    graph = _graph(cfg)
    M = _single_M(cfg)
    schedule = _schedule(cfg)
    optimizer = _optimizer(cfg)
    source = _reference_source(cfg)
    e_ref, cf = None, None
    if source == "oracle":
        check_capacity(graph.L)
        e_ref, psi = _oracle(graph, cfg)
        cf = dense_ferro_correlator(psi) if graph.L >= 2 else None
    elif source != "none":
        e_ref = source
    record = run_ground_state_search(graph, M, schedule, optimizer, reference_energy=e_ref, workers=args.threads)
    out = Path(args.out)
    doc = record.to_dict()
    doc.update({"tool": "sps", "version": __version__, "config": cfg.echo(), "M": M, "L": graph.L,
                "reference_ferro_correlator": cf})
    write_json(out / "ground_state.json", doc)
    write_csv(out / "energy_trace.csv", ["epoch", "energy"], record.trace_rows(),
              preamble=["config=" + json.dumps(cfg.echo(), sort_keys=True)])
    rel = "n/a" if record.rel_error is None else f"{record.rel_error:.6e}"
    print(f"energy={record.final_energy!r} rel_error={rel} restart={record.restart} epochs={record.epochs_run}")
    if record.aborted or not math.isfinite(record.final_energy):
        log.error("optimization aborted: %s", record.message)
        return EXIT_NUMERIC
    if e_ref is not None and variational_violation(record.final_energy, e_ref):
        log.error("energy %.15g is below the reference %.15g", record.final_energy, e_ref)
        return EXIT_NUMERIC
    return EXIT_OK


def _stat_config(args, cfg: Config) -> StatScanConfig:
    return StatScanConfig(
        L=cfg.get("scan", "sizes"),
        M=cfg.get("ansatz", "M"),
        samples=cfg.get("scan", "samples"),
        seed=cfg.get("schedule", "seed"),
        site=cfg.get("scan", "site"),
        output=None,
    )


def _check_resume(path: Path, echo: str):
    """Existing rows of ``path`` if it was written with the same config."""
    if not path.exists():
        return []
    lines = path.read_text().splitlines()
    stored = next((ln[len("# config="):] for ln in lines if ln.startswith("# config=")), None)
    if stored != echo:
        raise ConfigError(f"cannot resume {path}: it was written with a different configuration")
    return read_csv(path)


def _run_stat_scan(args, cfg: Config, name: str) -> int:
    fn, header = STAT_SCANS[name]
    scan_cfg = _stat_config(args, cfg)
    path = Path(args.out) / f"{name}.csv"
    echo = json.dumps(config_echo(scan_cfg), sort_keys=True)
    done = {}
    if args.resume:
        for row in _check_resume(path, echo):
            done[(int(row["L"]), int(row["M"]))] = row
    pending = [cell for cell in scan_cfg.cells() if cell not in done]
    if args.threads > 1 and len(pending) > 1:
        for cell, row in zip(pending, fn(scan_cfg, workers=args.threads, cells=pending)):
            done[cell] = row
    else:
        for cell in pending:
            done[cell] = fn(scan_cfg, cells=[cell])[0]
            write_scan(path, header, [done[k] for k in scan_cfg.cells() if k in done], scan_cfg, name)
            log.info("%s: finished L=%d M=%d", name, *cell)
    rows = [done[cell] for cell in scan_cfg.cells()]
    if name == "norm-stats" and args.histogram:
        for L, M in scan_cfg.cells():
            hist = norm_histogram(norm_samples(scan_cfg, L, M), bins=args.histogram)
            write_csv(Path(args.out) / f"norm-hist_L{L}_M{M}.csv", ["left", "right", "count"], hist)
    extra = {}
    numeric = [{k: float(v) if k not in ("L", "M") else int(v) for k, v in r.items()} for r in rows]
    if name == "obs-variance":
        extra["loglog_slope_vs_M"] = slopes_by_L(numeric, "var")
    elif name == "grad-variance":
        extra["loglog_slope_vs_M"] = {"var_dc": slopes_by_L(numeric, "var_dc"),
                                      "var_dtheta": slopes_by_L(numeric, "var_dtheta")}
    write_scan(path, header, rows, scan_cfg, name, extra)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _sweep_config(cfg: Config) -> SweepConfig:
    if not cfg.has("geometry"):
        raise ConfigError("missing required key 'geometry'")
    source = _reference_source(cfg)
    return SweepConfig(
        geometry=_geometry(cfg),
        M=cfg.get("ansatz", "M"),
        parameter=cfg.get("scan", "parameter"),
        values=cfg.get("scan", "values"),
        schedule=_schedule(cfg),
        optimizer=_optimizer(cfg),
        reference=source,
    )


def _run_gs_sweep(args, cfg: Config) -> int:
    sweep = _sweep_config(cfg)
    path = Path(args.out) / "gs-sweep.csv"
    echo = json.dumps(config_echo(sweep), sort_keys=True)
    previous = []
    if args.resume and path.exists():
        _check_resume(path, echo)
        previous = parse_sweep_rows(path)

    def checkpoint(rows):
        write_scan(path, SWEEP_HEADER, rows, sweep, "gs-sweep")

    rows = ground_state_sweep(sweep, workers=args.threads, resume_rows=previous, on_row=checkpoint)
    violations = sum(int(r["variational_violation"]) for r in rows)
    write_scan(path, SWEEP_HEADER, rows, sweep, "gs-sweep", {"variational_violations": violations})
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_NUMERIC if violations else EXIT_OK


def cmd_scan(args, cfg: Config) -> int:
    if args.scan == "gs-sweep":
        return _run_gs_sweep(args, cfg)
    return _run_stat_scan(args, cfg, args.scan)


def cmd_verify(args, cfg: Config) -> int:
    seed = args.seed if args.seed is not None else 0
    report = run_verification(args.cases, args.max_L, args.max_M, seed, args.perturb_gradient)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_oracle(args, cfg: Config) -> int:
    graph = _graph(cfg)
    check_capacity(graph.L)
    e0, psi = _oracle(graph, cfg)
    cf = dense_ferro_correlator(psi) if graph.L >= 2 else math.nan
    write_json(Path(args.out) / "oracle.json", {"L": graph.L, "energy": e0, "energy_per_site": e0 / graph.L,
                                                "ferro_correlator": cf, "config": cfg.echo()})
    print(f"energy={e0!r} ferro_correlator={cf!r}")
    return EXIT_OK


def cmd_graph(args, cfg: Config) -> int:
    graph = _graph(cfg)
    out = Path(args.out)
    write_graph(graph, out / "graph.txt")
    atomic_write_text(out / "adjacency.csv", format_adjacency_csv(graph))
    print(f"L={graph.L} edges={graph.n_edges} tag={graph.geometry_tag}")
    return EXIT_OK


def cmd_sample(args, cfg: Config) -> int:
    if args.L < 1 or args.M < 1:
        raise ConfigError("--L and --M must be >= 1")
    seed = args.seed if args.seed is not None else cfg.get("schedule", "seed")
    state = sample_random_sps(args.L, args.M, ParameterDomain(seed=seed))
    write_json(Path(args.out) / "state.json", state.to_dict())
    print(f"wrote state L={state.L} M={state.M}")
    return EXIT_OK


def cmd_evaluate(args, cfg: Config) -> int:
    try:
        state = SpsState.from_dict(json.loads(Path(args.state).read_text()))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load state {args.state}: {exc}") from None
    result = {"L": state.L, "M": state.M}
    if cfg.has("geometry"):
        graph = _graph(cfg)
        value, grad = energy_and_gradient(state, graph)
        result.update(energy=value, gradient_sup_norm=grad.sup_norm())
    if state.L >= 2:
        result.update(ferro_correlator=float(ferro_correlator(state)), renyi2=float(renyi2_entropy(state)))
    print(json.dumps(result))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (bare or section.key); repeatable")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--seed", type=int, help="master seed (overrides schedule.seed)")
    common.add_argument("--resume", action="store_true", help="skip cells already present in the output")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="sps", description="SPS variational engine for tilted Ising models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ground-state", parents=[common], help="best-of-restarts ground-state search")

    scan = sub.add_parser("scan", parents=[common], help="statistical scans and ground-state sweeps")
    scan.add_argument("scan", choices=[*STAT_SCANS, "gs-sweep"])
    scan.add_argument("--L", help="comma-separated lattice sizes (scan.sizes)")
    scan.add_argument("--M", help="comma-separated branch counts (ansatz.M)")
    scan.add_argument("--samples", help="samples per cell (scan.samples)")
    scan.add_argument("--histogram", type=int, default=0, metavar="BINS",
                      help="norm-stats only: also write a histogram per cell")

    verify = sub.add_parser("verify", parents=[common], help="randomized oracle and gradient checks")
    verify.add_argument("--cases", type=int, default=100)
    verify.add_argument("--max-L", dest="max_L", type=int, default=10)
    verify.add_argument("--max-M", dest="max_M", type=int, default=8)
    verify.add_argument("--perturb-gradient", type=float, default=0.0,
                        help="add this to every analytic gradient entry (negative control)")

    sub.add_parser("oracle", parents=[common], help="exact ground energy of the configured geometry")
    sub.add_parser("graph", parents=[common], help="write the configured coupling graph")

    sample = sub.add_parser("sample", parents=[common], help="draw a random SPS state")
    sample.add_argument("--L", type=int, required=True)
    sample.add_argument("--M", type=int, required=True)

    evaluate = sub.add_parser("evaluate", parents=[common], help="observables of a stored state")
    evaluate.add_argument("state", help="state JSON written by 'sample' or a run record's final_state")
    return parser


COMMANDS = {
    "ground-state": cmd_ground_state,
    "scan": cmd_scan,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "graph": cmd_graph,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
}


def _overrides(args) -> list[str]:
    items = list(args.set)
    if args.seed is not None:
        items.append(f"schedule.seed={args.seed}")
    if getattr(args, "command", None) == "scan":
        for flag, key in (("L", "scan.sizes"), ("M", "ansatz.M"), ("samples", "scan.samples")):
            value = getattr(args, flag)
            if value is not None:
                items.append(f"{key}={value}")
    return items


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, CapacityError, DimensionError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (ConvergenceError, ArithmeticError, SpsError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
