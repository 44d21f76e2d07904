"""Command line driver: ``netdesign generate | toy | solve | benchmark``.

Exit codes: 0 solved (or generated), 2 not solved within limits, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .bnb import EventLog, solve
from .instances import (InstanceSpec, build_instance, load_instance, resample_scenarios, save_instance,
                        spec_meta)
from .network import NetworkInstance
from .problem import PenaltyConfig
from .synthetic import random_instance
from .tntp import read_network, read_trips

log = logging.getLogger("netdesign")

EXIT_SOLVED, EXIT_ERROR, EXIT_UNSOLVED = 0, 1, 2


@dataclass
class RunConfig:
    instance: str | None = None
    mode: str = "ifw"
    scenarios: int | None = None
    gap: float = 0.05
    violation: float = 0.01
    time_limit: float = 600.0
    node_limit: int | None = None
    seed: int = 0
    threads: int = 1
    out_dir: str | None = None
    result: str | None = None
    events: str | None = None
    mu: float = 1000.0
    p: float = 1.5
    bridge_steps: int = 2
    dual_rule: str = "lp"
    multi_cut: bool = False
    penalty_relaxation: str = "reduced"

    def validate(self) -> None:
        if self.mode not in ("ifw", "penalty", "benders"):
            raise ValueError(f"mode must be ifw, penalty or benders, got {self.mode!r}")
        if not 0 < self.gap < 1:
            raise ValueError("gap target must lie in (0, 1)")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.threads < 1:
            raise ValueError("thread count must be at least 1")
        if self.scenarios is not None and self.scenarios < 0:
            raise ValueError("scenario count must be nonnegative")


def _config_from(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by ``--config`` JSON, overridden by explicit flags."""
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def prepare_instance(inst: NetworkInstance, cfg: RunConfig) -> NetworkInstance:
    if cfg.scenarios is None:
        return inst
    return resample_scenarios(inst, cfg.scenarios, cfg.seed)


def run_solve(inst: NetworkInstance, cfg: RunConfig):
    """Solve ``inst`` per ``cfg``; returns ``(BnbResult, record)`` with a timing-free record."""
    inst = prepare_instance(inst, cfg)
    result = solve(inst, cfg.mode, gap=cfg.gap, time_limit=cfg.time_limit, node_limit=cfg.node_limit,
                   penalty=PenaltyConfig(cfg.mu, cfg.p), violation_target=cfg.violation,
                   bridge_steps=cfg.bridge_steps, dual_rule=cfg.dual_rule, multi_cut=cfg.multi_cut,
                   penalty_relaxation=cfg.penalty_relaxation, events=EventLog())
    record = result.record()
    record.update({
        "instance": cfg.instance,
        "scenarios": len(inst.scenarios),
        "gap_target": cfg.gap,
        "violation_target": cfg.violation,
        "time_limit": cfg.time_limit,
        "seed": cfg.seed,
    })
    return result, record


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, indent=2) + "\n"


def cmd_generate(args) -> int:
    net = read_network(args.net)
    trips = read_trips(args.trips)
    spec = InstanceSpec(removal_fraction=args.fraction, scenario_count=args.scenarios,
                        scenario_low=args.low, scenario_high=args.high, seed=args.seed,
                        toll_factor=args.toll_factor, distance_factor=args.distance_factor)
    inst = build_instance(net, trips, spec)
    meta = spec_meta(spec)
    meta.update({"net": Path(args.net).name, "trips": Path(args.trips).name})
    save_instance(inst, args.output, meta)
    price = float(inst.prices[0]) if inst.num_removable else 0.0
    print(f"|V|={inst.num_nodes} |E|={inst.num_edges} |R|={inst.num_removable} "
          f"|Z|={len(inst.destinations)} total_demand={inst.demand.sum():.6g} r_e={price:.6g} "
          f"scenarios={len(inst.scenarios)} -> {args.output}")
    return EXIT_SOLVED


def cmd_toy(args) -> int:
    inst = random_instance(args.seed, num_nodes=args.nodes, extra_edges=args.extra_edges,
                           removable=args.removable, pairs=args.pairs, scenarios=args.scenarios)
    save_instance(inst, args.output, {"toy_seed": args.seed})
    print(f"|V|={inst.num_nodes} |E|={inst.num_edges} |R|={inst.num_removable} "
          f"|Z|={len(inst.destinations)} scenarios={len(inst.scenarios)} -> {args.output}")
    return EXIT_SOLVED


def _output_paths(cfg: RunConfig) -> tuple[Path | None, Path | None]:
    result, events = cfg.result, cfg.events
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(cfg.instance).stem if cfg.instance else "run"
        result = result or out / f"{stem}_{cfg.mode}_result.json"
        events = events or out / f"{stem}_{cfg.mode}_events.csv"
    return (Path(result) if result else None), (Path(events) if events else None)


def cmd_solve(args) -> int:
    cfg = _config_from(args)
    if not cfg.instance:
        raise ValueError("an instance file is required (--instance or config 'instance')")
    inst = load_instance(cfg.instance)
    result, record = run_solve(inst, cfg)
    result_path, events_path = _output_paths(cfg)
    text = dumps_record(record)
    if result_path:
        result_path.write_text(text)
    if events_path:
        result.events.write_csv(events_path)
    print(text, end="")
    print(f"wall_time_s={result.wall_time:.3f} solved={record['solved']}")
    return EXIT_SOLVED if record["solved"] else EXIT_UNSOLVED


def _matrix_runs(matrix: dict) -> list[dict]:
    instances = matrix.get("instances") or []
    modes = matrix.get("modes") or ["ifw", "penalty", "benders"]
    scenarios = matrix.get("scenarios") or [None]
    if not instances:
        raise ValueError("benchmark matrix lists no instances")
    base = {k: v for k, v in matrix.items() if k not in ("instances", "modes", "scenarios", "output")}
    runs = []
    for inst in instances:
        for s in scenarios:
            for mode in modes:
                runs.append({"instance": inst, "mode": mode, "scenarios": s, **base})
    return runs


def _instance_label(spec) -> str:
    if isinstance(spec, str):
        return spec
    return "toy:" + json.dumps(spec.get("toy", spec), sort_keys=True, separators=(",", ":"))


def _load_matrix_instance(spec) -> NetworkInstance:
    if isinstance(spec, str):
        return load_instance(spec)
    toy = dict(spec.get("toy", spec))
    seed = toy.pop("seed")
    return random_instance(seed, **toy)


def benchmark_run(run: dict) -> dict:
    """One matrix cell; failures are caught and recorded."""
    label = _instance_label(run["instance"])
    row = {"instance": label, "mode": run["mode"], "scenarios": run.get("scenarios"),
           "solved": False, "time_s": None, "objective": None, "gap": None, "status": "error", "error": ""}
    try:
        inst = _load_matrix_instance(run["instance"])
        keys = {f.name for f in fields(RunConfig)}
        cfg = RunConfig(**{k: v for k, v in run.items() if k in keys and k != "instance"})
        cfg.instance = label
        cfg.validate()
        t0 = time.perf_counter()
        result, record = run_solve(inst, cfg)
        elapsed = time.perf_counter() - t0
        row.update(scenarios=record["scenarios"], solved=record["solved"],
                   time_s=elapsed if record["solved"] else None, objective=record["objective"],
                   gap=record["gap"], status=record["status"])
    except Exception as exc:  # recorded, the matrix goes on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cumulative_solved(rows: list[dict]) -> list[dict]:
    """Step curve per (mode, scenarios): instances solved by each solve time."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["mode"], r["scenarios"]), [])
        if r["solved"]:
            groups[(r["mode"], r["scenarios"])].append(float(r["time_s"]))
    out = []
    for (mode, s), times in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        for k, t in enumerate(sorted(times), start=1):
            out.append({"mode": mode, "scenarios": s, "time_s": t, "solved": k})
    return out


def summarize(rows: list[dict]) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for r in rows:
        key = (r["mode"], r["scenarios"])
        counts[key] = counts.get(key, 0) + int(bool(r["solved"]))
    return counts


BENCH_FIELDS = ["instance", "mode", "scenarios", "solved", "time_s", "objective", "gap", "status", "error"]
CUMULATIVE_FIELDS = ["mode", "scenarios", "time_s", "solved"]


def write_csv(path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in header})


def read_benchmark_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "instance": r["instance"], "mode": r["mode"],
                "scenarios": int(r["scenarios"]) if r["scenarios"] else None,
                "solved": r["solved"] == "True",
                "time_s": float(r["time_s"]) if r["time_s"] else None,
                "objective": float(r["objective"]) if r["objective"] else None,
                "gap": float(r["gap"]) if r["gap"] else None,
                "status": r["status"], "error": r["error"],
            })
    return rows


def run_benchmark(matrix: dict, threads: int = 1) -> list[dict]:
    runs = _matrix_runs(matrix)
    if threads <= 1:
        return [benchmark_run(r) for r in runs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(benchmark_run, runs))


def cmd_benchmark(args) -> int:
    with open(args.matrix) as fh:
        matrix = json.load(fh)
    threads = args.threads or int(matrix.get("threads", 1))
    rows = run_benchmark(matrix, threads)
    out = Path(args.output or matrix.get("output") or Path(args.matrix).with_suffix(""))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(f"{out}_runs.csv", rows, BENCH_FIELDS)
    write_csv(f"{out}_cumulative.csv", cumulative_solved(rows), CUMULATIVE_FIELDS)
    for (mode, s), n in sorted(summarize(rows).items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        total = sum(1 for r in rows if r["mode"] == mode and r["scenarios"] == s)
        print(f"{mode:8s} scenarios={s} solved {n}/{total}")
    print(f"wrote {out}_runs.csv and {out}_cumulative.csv")
    return EXIT_SOLVED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netdesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build an instance JSON from TNTP files")
    g.add_argument("--net", required=True)
    g.add_argument("--trips", required=True)
    g.add_argument("--fraction", type=float, default=0.02)
    g.add_argument("--scenarios", type=int, default=0)
    g.add_argument("--low", type=float, default=1.0)
    g.add_argument("--high", type=float, default=1.1)
    g.add_argument("--toll-factor", type=float, default=0.0)
    g.add_argument("--distance-factor", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("toy", help="write a small random instance JSON")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--nodes", type=int, default=8)
    t.add_argument("--extra-edges", type=int, default=10)
    t.add_argument("--removable", type=int, default=4)
    t.add_argument("--pairs", type=int, default=4)
    t.add_argument("--scenarios", type=int, default=0)
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_toy)

    s = sub.add_parser("solve", help="solve an instance by branch-and-bound")
    s.add_argument("--config", help="JSON run configuration; flags override it")
    s.add_argument("--instance")
    s.add_argument("--mode", choices=["ifw", "penalty", "benders"])
    s.add_argument("--scenarios", type=int, help="resample this many demand scenarios (0: nominal)")
    s.add_argument("--gap", type=float)
    s.add_argument("--violation", type=float)
    s.add_argument("--time-limit", type=float)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out-dir")
    s.add_argument("--result", help="result JSON path")
    s.add_argument("--events", help="event CSV path")
    s.add_argument("--mu", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--bridge-steps", type=int)
    s.add_argument("--dual-rule", choices=["lp", "unit"])
    s.add_argument("--multi-cut", action="store_true", default=None,
                   help="one Benders epigraph variable per scenario")
    s.add_argument("--penalty-relaxation", choices=["reduced", "joint"])
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("benchmark", help="run a matrix of instances x modes x scenario counts")
    b.add_argument("--matrix", required=True)
    b.add_argument("--threads", type=int)
    b.add_argument("-o", "--output", help="output prefix for the CSV files")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
