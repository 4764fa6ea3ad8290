"""Parameter sweeps over seeds and algorithms, with CSV and plot-data output."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ao import ALGORITHMS, solve_seed
from .config import ConfigError, SystemConfig

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("param", "value", "algo", "seed", "sum_rate", "feasible", "iters", "status")
TIMING_COLUMNS = ("param", "value", "algo", "seed", "seconds")
SUMMARY_COLUMNS = ("param", "value", "algo", "mean", "std", "n", "feasible_fraction")

_CONFIG_FIELDS = {f.name for f in fields(SystemConfig)}


@dataclass
class SweepSpec:
    base: SystemConfig
    param: str
    values: list
    algorithms: list = field(default_factory=lambda: ["sca"])
    seeds: list = field(default_factory=list)
    out_dir: Path | None = None
    workers: int = 1
    codebook_size: int = 100
    tag: str | None = None

    def __post_init__(self):
        if self.param not in _CONFIG_FIELDS:
            raise ConfigError(f"cannot sweep {self.param!r}: not a SystemConfig field")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")

    def config_for(self, value) -> SystemConfig:
        changes = {self.param: value}
        if self.param in ("atoms_x", "atoms_z"):
            other = self.base.atoms_z if self.param == "atoms_x" else self.base.atoms_x
            changes["atoms_per_layer"] = value * other
        return self.base.replace(**changes)


def _run_cell(job):
    param, value, cfg, algo, seed, codebook_size = job
    row = {"param": param, "value": value, "algo": algo, "seed": seed}
    try:
        rec = solve_seed(cfg, algo, seed, codebook_size)
    except Exception as exc:  # recorded per row; the sweep keeps going
        log.warning("run failed (%s=%s, %s, seed %s): %s", param, value, algo, seed, exc)
        row.update(sum_rate=float("nan"), feasible=0, iters=0, status=f"error: {exc}")
        return row, 0.0
    row.update(sum_rate=rec.sum_rate, feasible=int(rec.feasible), iters=rec.iterations,
               status=rec.status)
    return row, rec.seconds


def _sort_key(row):
    return (row["value"], ALGORITHMS.index(row["algo"]), row["seed"])


def run_sweep(spec: SweepSpec):
    """Run every (value, algorithm, seed) cell; returns (rows, summary)."""
    jobs = []
    for value in spec.values:
        try:
            cfg = spec.config_for(value)
        except ConfigError as exc:
            cfg = exc
        for algo in spec.algorithms:
            for seed in spec.seeds:
                jobs.append((spec.param, value, cfg, algo, seed, spec.codebook_size))
    results = []
    runnable = [j for j in jobs if isinstance(j[2], SystemConfig)]
    for j in jobs:
        if not isinstance(j[2], SystemConfig):
            results.append(({"param": j[0], "value": j[1], "algo": j[3], "seed": j[4],
                             "sum_rate": float("nan"), "feasible": 0, "iters": 0,
                             "status": f"error: {j[2]}"}, 0.0))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results += list(pool.map(_run_cell, runnable))
    else:
        results += [_run_cell(j) for j in runnable]
    results.sort(key=lambda rs: _sort_key(rs[0]))
    rows = [r for r, _ in results]
    timings = [{**{k: r[k] for k in TIMING_COLUMNS[:-1]}, "seconds": s} for r, s in results]
    summary = aggregate(rows)
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = spec.tag or f"sweep_{spec.param}"
        write_csv(out / f"{tag}.csv", rows, RESULT_COLUMNS)
        write_csv(out / f"{tag}_summary.csv", summary, SUMMARY_COLUMNS)
        write_csv(out / f"{tag}_timing.csv", timings, TIMING_COLUMNS)
        emit_plot_data(summary, tag, out)
    return rows, summary


def aggregate(rows):
    """Mean, sample std (0 for a single run) and count of completed runs per (value, algo)."""
    groups = defaultdict(list)
    for row in rows:
        groups[(row["value"], row["algo"])].append(row)
    summary = []
    for (value, algo), members in sorted(groups.items(),
                                         key=lambda kv: (kv[0][0], ALGORITHMS.index(kv[0][1]))):
        rates = np.array([m["sum_rate"] for m in members if np.isfinite(m["sum_rate"])])
        n = len(rates)
        summary.append({
            "param": members[0]["param"], "value": value, "algo": algo,
            "mean": float(rates.mean()) if n else float("nan"),
            "std": float(rates.std(ddof=1)) if n > 1 else 0.0,
            "n": n,
            "feasible_fraction": float(np.mean([m["feasible"] for m in members])),
        })
    return summary


def _fmt(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(summary, tag: str, out_dir) -> list:
    """One whitespace-separated ``x mean std n`` file per algorithm."""
    if not summary:
        raise ValueError("no aggregated rows to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_algo = defaultdict(list)
    for row in summary:
        by_algo[row["algo"]].append(row)
    paths = []
    for algo, rows in by_algo.items():
        path = out_dir / f"{tag}_{algo}.dat"
        lines = ["x mean std n"]
        lines += [f"{_fmt(r['value'])} {_fmt(r['mean'])} {_fmt(r['std'])} {r['n']}"
                  for r in sorted(rows, key=lambda r: r["value"])]
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def parse_seeds(text: str) -> list:
    """``"0-19"`` or ``"1,4,7"`` (ranges and lists may be mixed)."""
    seeds = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def parse_values(text: str) -> list:
    import ast

    values = [ast.literal_eval(v.strip()) for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("empty value list")
    return values
