"""Write a run to disk: trajectories, pair distances, metrics and the resolved config.

Everything except ``timing.csv`` is a pure function of (config, seed), so two
runs of the same scenario produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import dump_scenario, scenario_to_dict
from .metrics import RunMetrics, pair_indices, pairwise_distances

TRAJECTORY_HEADER = ["step", "time", "agent", "px", "py", "vx", "vy", "ux", "uy", "status"]
DISTANCE_HEADER = ["step", "time", "pair", "distance"]


def _f(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header, rows):
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def trajectory_rows(log):
    n_steps = len(log.times) - 1
    for s, t in enumerate(log.times):
        for i in range(log.positions.shape[1]):
            p, v = log.positions[s, i], log.velocities[s, i]
            if s < n_steps:
                u = log.inputs[s, i]
                tail = [_f(u[0]), _f(u[1]), log.statuses[s][i]]
            else:
                tail = ["", "", ""]
            yield [s, _f(t), i, _f(p[0]), _f(p[1]), _f(v[0]), _f(v[1]), *tail]


def distance_rows(log):
    n = log.positions.shape[1]
    if n < 2:
        return
    dist = pairwise_distances(log.positions)
    iu, ju = pair_indices(n)
    names = [f"{i}-{j}" for i, j in zip(iu, ju)]
    for s, t in enumerate(log.times):
        for k, name in enumerate(names):
            yield [s, _f(t), name, _f(dist[s, k])]


def metrics_document(metrics: RunMetrics, scenario=None, meta=None) -> dict:
    doc = {
        "min_pairwise_distance": metrics.min_pairwise_distance,
        "min_clearance": metrics.min_clearance,
        "success": metrics.success,
        "collision_free": metrics.collision_free,
        "goal_tolerance": metrics.goal_tolerance,
        "goal_errors": metrics.goal_errors,
        "n_steps": metrics.n_steps,
    }
    if meta:
        doc["run"] = {k: meta[k] for k in sorted(meta)}
    if scenario is not None:
        doc["seed"] = int(scenario.seed)
        doc["config"] = scenario_to_dict(scenario)
    return doc


def export_run(log, metrics: RunMetrics, out_dir, scenario=None) -> dict[str, Path]:
    """Write the run files into ``out_dir`` (created if missing); returns their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out}: {exc.strerror}") from exc
    paths = {
        "trajectories": out / "trajectories.csv",
        "distances": out / "distances.csv",
        "metrics": out / "metrics.json",
        "timing": out / "timing.csv",
    }
    _write_rows(paths["trajectories"], TRAJECTORY_HEADER, trajectory_rows(log))
    _write_rows(paths["distances"], DISTANCE_HEADER, distance_rows(log))
    doc = metrics_document(metrics, scenario, getattr(log, "meta", None))
    paths["metrics"].write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    times = np.asarray(log.solve_times, dtype=float)
    _write_rows(paths["timing"], ["step", "agent", "solve_time"],
                ([s, i, _f(times[s, i])] for s in range(times.shape[0]) for i in range(times.shape[1])))
    if scenario is not None:
        paths["config"] = out / "config.snapshot"
        paths["config"].write_text(dump_scenario(scenario), encoding="utf-8")
    return paths


def read_trajectories(path):
    """Parse ``trajectories.csv`` back into (times, positions (S+1, n, 2))."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros(0), np.zeros((0, 0, 2))
    steps = max(int(r["step"]) for r in rows) + 1
    n = max(int(r["agent"]) for r in rows) + 1
    times = np.zeros(steps)
    pos = np.zeros((steps, n, 2))
    for r in rows:
        s, i = int(r["step"]), int(r["agent"])
        times[s] = float(r["time"])
        pos[s, i] = float(r["px"]), float(r["py"])
    return times, pos
