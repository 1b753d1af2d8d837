"""Command line: ``vorhc run|sweep|bench``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_scenario
from .errors import ConfigError
from .experiments import bench_agents, format_table, noise_sweep, with_settings
from .export import export_run
from .metrics import compute_metrics
from .scenarios import ScenarioId, make_scenario
from .simulation import simulate

EXIT_CONFIG = 2
EXIT_IO = 3


def resolve_scenario(name: str):
    if name in {s.value for s in ScenarioId if s is not ScenarioId.Custom}:
        return make_scenario(name)
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"{name!r} is neither a scenario id nor an existing file")
    return load_scenario(path)


def apply_overrides(sc, args):
    planner = sc.planner
    changes = {}
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.delta is not None:
        changes["delta_1"] = changes["delta_2"] = args.delta
    if changes:
        planner = replace(planner, **changes)
    kw = {"planner": planner}
    if getattr(args, "t_run", None) is not None:
        kw["t_run"] = args.t_run
    return replace(sc, **kw)


def _common(p):
    p.add_argument("--horizon", type=int, help="prediction horizon in steps")
    p.add_argument("--dt", type=float, help="sampling time in seconds")
    p.add_argument("--delta", type=float, help="per-normal violation threshold")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vorhc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and export it")
    run.add_argument("--scenario", required=True, help="scenario id or YAML file")
    run.add_argument("--seed", type=int)
    run.add_argument("--noise-scale", type=float)
    run.add_argument("--method", choices=("chance", "deterministic"))
    run.add_argument("--t-run", type=float)
    _common(run)

    sweep = sub.add_parser("sweep", help="noise-level comparison against the zero-back-off baseline")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--trials", type=int, default=20)
    sweep.add_argument("--scales", type=float, nargs="+", default=[0.25, 1.0, 4.0])
    sweep.add_argument("--t-run", type=float)
    _common(sweep)

    bench = sub.add_parser("bench", help="planning time against agent count")
    bench.add_argument("--max-agents", type=int, default=16)
    bench.add_argument("--trials", type=int, default=1)
    bench.add_argument("--t-run", type=float, default=4.0)
    _common(bench)
    return parser


def _write_csv(path: Path, rows: list[dict]):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_run(args) -> int:
    sc = apply_overrides(resolve_scenario(args.scenario), args)
    sc = with_settings(sc, scale=args.noise_scale, method=args.method, seed=args.seed)
    log = simulate(sc)
    metrics = compute_metrics(log, sc.goal_tolerance)
    export_run(log, metrics, args.out, sc)
    print(f"min distance {metrics.min_pairwise_distance:.4f} m, max goal error "
          f"{max(metrics.goal_errors):.4f} m, success {metrics.success}, "
          f"median solve {metrics.median_solve_time * 1e3:.2f} ms")
    return 0


def cmd_sweep(args) -> int:
    sc = apply_overrides(resolve_scenario(args.scenario), args)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = noise_sweep(sc, scales=args.scales, trials=args.trials,
                        progress=lambda c, k: print(f"  scale {c.scale:g} {c.method}: {k}/{args.trials}",
                                                    file=sys.stderr))
    rows = [c.row() for c in cells]
    _write_csv(out / "sweep.csv", rows)
    per_run = [{"scale": c.scale, "method": c.method, "seed": s, "min_distance": r.min_pairwise_distance,
                "success": r.success, "collision_free": r.collision_free, "max_goal_error": max(r.goal_errors)}
               for c in cells for s, r in zip(c.seeds, c.runs)]
    _write_csv(out / "runs.csv", per_run)
    print(format_table(rows))
    return 0


def cmd_bench(args) -> int:
    if args.max_agents < 2 or args.trials < 1:
        raise ConfigError("--max-agents must be >= 2 and --trials >= 1")
    base = apply_overrides(make_scenario(ScenarioId.OriginSwap6), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = bench_agents(range(2, args.max_agents + 1), trials=args.trials, t_run=args.t_run, base=base,
                        progress=lambda r: print(f"  {r.n_agents} agents: median {r.median * 1e3:.2f} ms",
                                                 file=sys.stderr))
    table = [r.row() for r in rows]
    _write_csv(out / "bench.csv", table)
    (out / "bench.json").write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    print(format_table(table))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
