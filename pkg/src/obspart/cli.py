"""Command-line interface: ``obspart <command> [options]``.

Reports are JSON (sorted keys, two-space indent, trailing newline) written
to ``--out`` or stdout.  Validation errors exit with status 2 and a JSON
error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ObspartError
from .estimator import KfConfig, kalman_score
from .graphkit import graph_of, modularity, spectral_partition
from .maximize import ROUNDING, SolverConfig
from .measures import METRICS, GramianSetFunction, Metric, measure
from .oracle import brute_partition, brute_placement, check_submodular_monotone
from .partition import Partition, build_p2_objective, load_partition, solve_partition
from .placement import MODES, bound_check, budgets_from_total, solve_placement
from .sysmodel import (
    INFINITE,
    LtiSystem,
    contribution_gramians,
    full_gramian,
    load_system,
    lyapunov_gramian,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _horizon(text: str):
    if text in (INFINITE, "inf"):
        return INFINITE
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be a positive integer or 'infinite', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("horizon must be >= 1")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _add_common(p: argparse.ArgumentParser, *, system: bool = True) -> None:
    if system:
        p.add_argument("--system", required=True, help="system JSON file")
    p.add_argument("--out", help="report path (default stdout)")
    p.add_argument("--emit-csv", nargs="?", const="", default=None, metavar="PATH",
                   help="also write the plottable series as CSV (default: next to --out)")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default $OBSPART_THREADS or 1)")
    p.add_argument("--timing", action="store_true", help="include wall-clock times in the report")


def _add_metric(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", choices=METRICS, default="logdet")
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--rank-tol", type=float, default=1e-9)
    p.add_argument("--horizon", type=_horizon, default=1000, help="Gramian horizon N or 'infinite'")


def _add_solver(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--solver", choices=("greedy", "continuous"), default=default)
    p.add_argument("--steps", type=_positive_int, default=10)
    p.add_argument("--samples", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", choices=ROUNDING, default=None)
    p.add_argument("--lazy", action="store_true")


def _add_placement(p: argparse.ArgumentParser) -> None:
    p.add_argument("--partition", help="partition JSON ({\"blocks\": [[...]]}); default: one block")
    p.add_argument("--sensors", type=int, help="total sensor count, split across blocks")
    p.add_argument("--budgets", type=_int_list, help="explicit per-block budgets, e.g. 2,1,0")
    p.add_argument("--mode", choices=MODES, default="global")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obspart", description="Observability-driven partitioning and sensor placement.")
    parser.add_argument("--version", action="version", version=f"obspart {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sysinfo", help="dimensions, stability and graph summary")
    _add_common(p)

    p = sub.add_parser("gramian", help="observability Gramian and its measures")
    _add_common(p)
    _add_metric(p)
    p.add_argument("--selection", type=_int_list, help="output rows to include (default all)")
    p.add_argument("--matrix", action="store_true", help="include the Gramian entries")

    p = sub.add_parser("partition", help="split states into kappa subsystems")
    _add_common(p)
    _add_metric(p)
    _add_solver(p, "continuous")
    p.add_argument("--kappa", type=_positive_int, required=True)

    p = sub.add_parser("place", help="sensor placement over a partition")
    _add_common(p)
    _add_metric(p)
    _add_solver(p, "greedy")
    _add_placement(p)

    p = sub.add_parser("baseline-spectral", help="spectral k-means partition of the interaction graph")
    _add_common(p)
    p.add_argument("--kappa", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("modularity", help="modularity of a partition")
    _add_common(p)
    p.add_argument("--partition", required=True)

    p = sub.add_parser("verify-kf", help="Kalman-filter error of a sensor set")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sensors-file", help="placement report or {\"selected\": [...]}")
    group.add_argument("--sensor-list", type=_int_list, help="comma-separated sensor indices")
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--horizon", type=_positive_int, default=1000, help="simulation steps N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qn", type=float, default=1e-4)
    p.add_argument("--rn", type=float, default=1e-4)
    p.add_argument("--p0", type=float, default=1e-1)

    p = sub.add_parser("oracle", help="brute-force references and property checks")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    q = osub.add_parser("partition")
    _add_common(q)
    _add_metric(q)
    q.add_argument("--kappa", type=_positive_int, required=True)
    q = osub.add_parser("place")
    _add_common(q)
    _add_metric(q)
    _add_placement(q)
    q = osub.add_parser("check")
    _add_common(q)
    _add_metric(q)
    q.add_argument("--kappa", type=_positive_int, default=None, help="check the extended objective for kappa blocks")

    p = sub.add_parser("sweep-kappa", help="partition objective and modularity across kappa")
    _add_common(p)
    _add_metric(p)
    _add_solver(p, "continuous")
    p.add_argument("--from", dest="kappa_from", type=_positive_int, required=True)
    p.add_argument("--to", dest="kappa_to", type=_positive_int, required=True)
    p.add_argument("--sensors", type=int, help="also place this many sensors per kappa")
    p.add_argument("--mode", choices=MODES, default="global")
    return parser


# ---------------------------------------------------------------- helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("OBSPART_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"OBSPART_THREADS must be a positive integer, got {env!r}")
        if value < 1:
            raise UsageError(f"OBSPART_THREADS must be a positive integer, got {env!r}")
        return value
    return 1


def _metric(args) -> Metric:
    return Metric(args.metric, args.epsilon, args.rank_tol)


def _metric_config(args) -> dict:
    return {"metric": args.metric, "epsilon": args.epsilon, "rank_tol": args.rank_tol, "horizon": args.horizon}


def _solver_config(args, workers: int) -> SolverConfig:
    return SolverConfig(args.steps, args.samples, args.seed, args.rounding, args.lazy, workers)


def _contribs(system: LtiSystem, args):
    return contribution_gramians(system, args.horizon)


def _partition_for(args, system: LtiSystem) -> Partition:
    if getattr(args, "partition", None):
        return load_partition(args.partition, system.n_y)
    return Partition.single(system.n_y)


def _budgets(args, part: Partition) -> tuple[list[int], int | None]:
    if args.sensors is not None and args.budgets is not None:
        raise UsageError("--sensors and --budgets are mutually exclusive")
    if args.budgets is not None:
        return list(args.budgets), None
    if args.sensors is not None:
        if args.sensors > part.n:
            raise UsageError(f"--sensors {args.sensors} exceeds the number of measurable states n_y={part.n}")
        if args.sensors < 0:
            raise UsageError("--sensors must be nonnegative")
        return list(budgets_from_total(part, args.sensors)), None
    return [len(b) for b in part.blocks], None


def _sensor_set(args) -> list[int]:
    if args.sensor_list is not None:
        return args.sensor_list
    try:
        data = json.loads(Path(args.sensors_file).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read sensors file {args.sensors_file}: {exc}")
    if isinstance(data, list):
        return [int(v) for v in data]
    for path in (("selected",), ("sensors",), ("outputs", "placement", "selected")):
        node = data
        for key in path:
            node = node.get(key) if isinstance(node, dict) else None
        if isinstance(node, list):
            return [int(v) for v in node]
    raise UsageError("sensors file needs a 'selected' list")


def _write_csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _clean(v) for k, v in row.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _cmd_sysinfo(args, system, workers):
    out = {
        "name": system.name,
        "n_x": system.n_x,
        "n_y": system.n_y,
        "state_labels": list(system.state_labels),
        "spectral_radius": system.spectral_radius,
        "stable": system.spectral_radius < 1.0 - 1e-9,
        "has_adjacency": system.adjacency is not None,
        "has_reactions": system.reactions is not None,
    }
    if system.adjacency is not None or system.reactions is not None:
        g = graph_of(system)
        out["edges"] = g.m
        out["isolated_nodes"] = np.flatnonzero(g.degrees == 0).tolist()
    return {}, out, None


def _cmd_gramian(args, system, workers):
    if args.horizon == INFINITE and args.selection is None:
        W = lyapunov_gramian(system).W
    else:
        W = full_gramian(_contribs(system, args), args.selection).W
    m = _metric(args)
    out = {
        "selection": list(range(system.n_y)) if args.selection is None else sorted(set(args.selection)),
        "trace": measure(W, Metric("trace")),
        "logdet": measure(W, Metric("logdet", args.epsilon)),
        "rank": measure(W, Metric("rank", rank_rel_tol=args.rank_tol)),
        "value": measure(W, m),
    }
    if args.matrix:
        out["W"] = W.tolist()
    return {**_metric_config(args), "matrix": args.matrix}, out, None


def _partition_outputs(system, part, report, timing):
    return {"partition": part.to_dict(list(system.state_labels)), **report.to_dict(timing=timing)}


def _cmd_partition(args, system, workers):
    cfg = _solver_config(args, workers)
    part, report = solve_partition(system, args.kappa, _metric(args), cfg, args.solver, horizon=args.horizon)
    config = {**_metric_config(args), **cfg.to_dict(), "solver": args.solver, "kappa": args.kappa}
    rows = [{"iteration": i + 1, "objective": v, "gain": g, "evaluations": e}
            for i, (v, g, e) in enumerate(zip(report.trace.objective, report.trace.gains, report.trace.evaluations))]
    return config, _partition_outputs(system, part, report, args.timing), (rows, ["iteration", "objective", "gain", "evaluations"])


def _cmd_place(args, system, workers):
    part = _partition_for(args, system)
    budgets, total = _budgets(args, part)
    m = _metric(args)
    cfg = _solver_config(args, workers)
    contribs = _contribs(system, args)
    started = time.perf_counter()
    sensors, trace = solve_placement(contribs, part, budgets, args.mode, m, args.solver, cfg, total=total)
    wall = time.perf_counter() - started
    diag = bound_check(contribs, part, sensors.selected, m)
    config = {**_metric_config(args), **cfg.to_dict(), "solver": args.solver, "mode": args.mode,
              "sensors": args.sensors, "budgets": budgets, "partition": part.to_dict()}
    out = {"placement": sensors.to_dict(list(system.state_labels)), "bound": diag.to_dict(),
           "trace": trace.to_dict(timing=args.timing)}
    if args.timing:
        out["wall"] = wall
    rows = [{"r": i + 1, "objective": v, "gain": g} for i, (v, g) in enumerate(zip(trace.objective, trace.gains))]
    return config, out, (rows, ["r", "objective", "gain"])


def _cmd_baseline(args, system, workers):
    g = graph_of(system)
    part = spectral_partition(g, args.kappa, args.seed)
    out = {"partition": part.to_dict(list(system.state_labels)), "modularity": modularity(g, part) if g.m else None}
    return {"kappa": args.kappa, "seed": args.seed}, out, None


def _cmd_modularity(args, system, workers):
    g = graph_of(system)
    part = load_partition(args.partition, g.n)
    q = modularity(g, part)
    return {"partition": part.to_dict()}, {"modularity": q, "kappa": part.kappa}, None


def _cmd_verify_kf(args, system, workers):
    R = _sensor_set(args)
    cfg = KfConfig(args.qn, args.rn, args.p0, args.trials, args.horizon, args.seed)
    res = kalman_score(system, R, cfg)
    out = {"sensors": sorted(set(R)), **res.to_dict()}
    rows = [{"trial": t, "relative_error": e} for t, e in enumerate(res.per_trial)]
    return cfg.to_dict(), out, (rows, ["trial", "relative_error"])


def _cmd_oracle(args, system, workers):
    m = _metric(args)
    contribs = _contribs(system, args)
    config = {**_metric_config(args), "oracle": args.oracle_command}
    if args.oracle_command == "partition":
        part, value = brute_partition(contribs, args.kappa, m)
        config["kappa"] = args.kappa
        return config, {"partition": part.to_dict(list(system.state_labels)), "total": value}, None
    if args.oracle_command == "place":
        part = _partition_for(args, system)
        budgets, total = _budgets(args, part)
        sensors, value = brute_placement(contribs, part, budgets, args.mode, m, total=total)
        config.update(mode=args.mode, budgets=budgets, sensors=args.sensors, partition=part.to_dict())
        return config, {"placement": sensors.to_dict(list(system.state_labels)), "value": value}, None
    if args.kappa is None:
        f, n = GramianSetFunction(contribs, m), contribs.n_y
    else:
        f = build_p2_objective(contribs, args.kappa, m)
        n = f.n
    found = check_submodular_monotone(f, n)
    config["kappa"] = args.kappa
    out = {"ground_size": n, "violations": len(found),
           "witnesses": [{"kind": w.kind, "A": list(w.A), "B": list(w.B), "s": w.s, "amount": w.amount}
                         for w in found[:20]]}
    return config, out, None


def _cmd_sweep(args, system, workers):
    if args.kappa_to < args.kappa_from:
        raise UsageError("--to must be >= --from")
    m = _metric(args)
    cfg = _solver_config(args, workers)
    contribs = _contribs(system, args)
    graph = None
    if system.adjacency is not None or system.reactions is not None:
        graph = graph_of(system)
        if graph.m == 0 or graph.n != system.n_y:
            graph = None
    rows = []
    for kappa in range(args.kappa_from, args.kappa_to + 1):
        part, report = solve_partition(contribs, kappa, m, cfg, args.solver, graph=graph)
        row = {"kappa": kappa, "objective": report.total, "modularity": report.modularity,
               "blocks": json.dumps([list(b) for b in part.blocks])}
        if graph is not None:
            row["spectral_modularity"] = modularity(graph, spectral_partition(graph, kappa, args.seed))
        if args.sensors is not None:
            budgets = budgets_from_total(part, args.sensors)
            sensors, _ = solve_placement(contribs, part, budgets, args.mode, m, "greedy", cfg)
            row["placement_value"] = sensors.value
            row["placement_value_raw"] = sensors.raw_value
        rows.append(row)
    header = ["kappa", "objective", "modularity", "spectral_modularity", "placement_value", "placement_value_raw", "blocks"]
    header = [h for h in header if any(h in r for r in rows)]
    config = {**_metric_config(args), **cfg.to_dict(), "solver": args.solver, "from": args.kappa_from,
              "to": args.kappa_to, "sensors": args.sensors, "mode": args.mode}
    return config, {"sweep": rows}, (rows, header)


COMMANDS = {
    "sysinfo": _cmd_sysinfo,
    "gramian": _cmd_gramian,
    "partition": _cmd_partition,
    "place": _cmd_place,
    "baseline-spectral": _cmd_baseline,
    "modularity": _cmd_modularity,
    "verify-kf": _cmd_verify_kf,
    "oracle": _cmd_oracle,
    "sweep-kappa": _cmd_sweep,
}


def _error(kind: str, message: str, stderr, **extra) -> int:
    stderr.write(dumps({"error": {"type": kind, "message": message, **extra}}))
    return 2


def run(argv: Sequence[str] | None = None, *, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the command and write its report; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.emit_csv == "" and not args.out:
            raise UsageError("--emit-csv needs a path when the report goes to stdout")
        workers = _threads(args)
        system = load_system(args.system)
        config, outputs, series = COMMANDS[args.command](args, system, workers)
    except UsageError as exc:
        return _error("usage", str(exc), stderr)
    except ObspartError as exc:
        return _error(type(exc).__name__, str(exc), stderr, field=getattr(exc, "field", None))
    except (ValueError, IndexError) as exc:
        return _error("validation", str(exc), stderr)

    command = args.command if args.command != "oracle" else f"oracle {args.oracle_command}"
    report = {
        "command": command,
        "config": config,
        "outputs": outputs,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "system": {"name": system.name, "n_x": system.n_x, "n_y": system.n_y},
    }
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    if args.emit_csv is not None and series is not None:
        rows, header = series
        target = args.emit_csv or str(Path(args.out).with_suffix(".csv"))
        Path(target).write_text(_write_csv(rows, header), encoding="utf-8")
    return 0


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
