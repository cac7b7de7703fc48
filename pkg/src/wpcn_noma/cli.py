"""Experiment runner: scenario files, named sweeps, CSV rows and summary tables."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import math
import os
import statistics
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import maxmin, maxsum, oracle
from .model import PHYSICAL_KEYS, PhysicalConfig, build_network, physical_from_mapping
from .solver_core import DEFAULT_OPTIONS, SolverOptions
from .throughput import Scheme, Status, jain_index

log = logging.getLogger("wpcn_noma")

CSV_HEADER = ["preset", "seed", "K", "T", "d_er_ap", "s_th_db", "solver", "objective", "min_rate",
              "sum_rate", "jain", "status", "iters", "wall_ms"]

SOLVERS = {
    "maxsum-lcd": lambda inst, o: maxsum.solve_maxsum_lcd(inst, o),
    "maxsum-lcd-tau": lambda inst, o: maxsum.solve_tau_only_lcd(inst, o),
    "maxsum-sicd": lambda inst, o: maxsum.solve_maxsum_sicd(inst, o),
    "maxsum-sicd-dual": lambda inst, o: maxsum.solve_maxsum_sicd_dual(inst, o),
    "maxmin-lcd": lambda inst, o: maxmin.solve_maxmin(inst, Scheme.LCD, o),
    "maxmin-sicd": lambda inst, o: maxmin.solve_maxmin(inst, Scheme.SICD, o),
}
# oracle rows mirror whichever optimizers run beside them
ORACLE_TARGETS = {
    "maxsum-lcd": (oracle.Objective.MAX_SUM, Scheme.LCD),
    "maxsum-sicd": (oracle.Objective.MAX_SUM, Scheme.SICD),
    "maxmin-lcd": (oracle.Objective.MAX_MIN, Scheme.LCD),
    "maxmin-sicd": (oracle.Objective.MAX_MIN, Scheme.SICD),
}
KNOWN_SOLVERS = set(SOLVERS) | {"oracle"}

DEFAULT_D = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0]
DEFAULT_S_TH = [float(v) for v in range(-10, 1)]


@dataclass(frozen=True)
class ScenarioConfig:
    physical: PhysicalConfig = PhysicalConfig()
    k_list: tuple = (2, 5, 10)
    t_list: tuple = (2,)
    d_list: tuple = tuple(DEFAULT_D)
    s_th_list: tuple = tuple(DEFAULT_S_TH)
    seeds: tuple = tuple(range(10))
    solvers: tuple = ("maxsum-lcd", "maxsum-sicd", "maxmin-lcd", "maxmin-sicd")
    opts: SolverOptions = DEFAULT_OPTIONS
    name: str = "run"
    oracle_step: float = 1e-3

    def __post_init__(self):
        for label in ("k_list", "t_list", "d_list", "s_th_list", "seeds", "solvers"):
            if not getattr(self, label):
                raise ValueError(f"{label} must not be empty")
        unknown = sorted(set(self.solvers) - KNOWN_SOLVERS)
        if unknown:
            raise ValueError(f"unknown solver(s) {unknown}; known: {sorted(KNOWN_SOLVERS)}")
        if any(not 2 <= k <= 20 for k in self.k_list):
            raise ValueError(f"K must lie in 2..20, got {self.k_list}")
        if any(not 1 <= t <= 10 for t in self.t_list):
            raise ValueError(f"T must lie in 1..10, got {self.t_list}")
        if any(d < 0 for d in self.d_list):
            raise ValueError("distances must be nonnegative")

    def cells(self):
        return itertools.product(self.seeds, self.k_list, self.t_list, self.d_list, self.s_th_list)


# ------------------------------------------------------------------- parsing

SCENARIO_KEYS = {"k", "t", "d_er_ap", "s_th_db", "seeds", "solvers", "tol_obj", "tol_con",
                 "max_iter", "name", "oracle_step"}


def _lines(text, source):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ValueError(f"{source}:{lineno}: empty key or value")
        if key not in SCENARIO_KEYS and key not in PHYSICAL_KEYS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = (value, lineno)
    return out


def _threshold(text):
    return None if text.strip().lower() in ("none", "off") else float(text)


def _as_list(value, conv, source, lineno, key):
    try:
        return tuple(conv(v.strip()) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise ValueError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc


def parse_scenario(text: str, source: str = "<string>", overrides: dict | None = None
                   ) -> ScenarioConfig:
    """Build a ScenarioConfig from ``key = value`` / ``key = v1,v2,...`` text."""
    entries = _lines(text, source)
    for key, value in (overrides or {}).items():
        if key not in SCENARIO_KEYS and key not in PHYSICAL_KEYS:
            raise ValueError(f"unknown override {key!r}")
        entries[key] = (str(value), 0)
    phys = {k: v for k, (v, _) in entries.items() if k in PHYSICAL_KEYS and k != "s_th_db"}
    kwargs = {"physical": physical_from_mapping(phys, source)}
    conv = {"k": ("k_list", int), "t": ("t_list", int), "d_er_ap": ("d_list", float),
            "s_th_db": ("s_th_list", _threshold), "seeds": ("seeds", int), "solvers": ("solvers", str)}
    for key, (field_name, fn) in conv.items():
        if key in entries:
            value, lineno = entries[key]
            kwargs[field_name] = _as_list(value, fn, source, lineno, key)
    opt_kwargs = {}
    for key, fn in (("tol_obj", float), ("tol_con", float), ("max_iter", int)):
        if key in entries:
            value, lineno = entries[key]
            try:
                opt_kwargs[key] = fn(value)
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc
    if opt_kwargs:
        kwargs["opts"] = SolverOptions(**opt_kwargs)
    if "name" in entries:
        kwargs["name"] = entries["name"][0]
    if "oracle_step" in entries:
        kwargs["oracle_step"] = float(entries["oracle_step"][0])
    return ScenarioConfig(**kwargs)


def load_scenario(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path), overrides)


# ------------------------------------------------------------------- presets

_D_SWEEP = (20.0, 40.0, 60.0, 80.0, 100.0, 120.0)

PRESETS = {
    "fig2": dict(k_list=(5,), t_list=(2,), d_list=_D_SWEEP,
                 solvers=("maxsum-lcd", "maxsum-lcd-tau")),
    "fig3": dict(k_list=(2, 5, 10), t_list=(2,), d_list=_D_SWEEP,
                 solvers=("maxsum-lcd", "maxsum-sicd")),
    "fig4": dict(k_list=(5,), t_list=(1, 2, 3, 4), d_list=_D_SWEEP,
                 solvers=("maxsum-lcd", "maxsum-sicd")),
    "fig5": dict(k_list=(5, 10), t_list=(2,), d_list=(100.0,), s_th_list=tuple(DEFAULT_S_TH),
                 solvers=("maxsum-lcd", "maxsum-sicd")),
    "fig6": dict(k_list=(2, 5), t_list=(2,), d_list=_D_SWEEP,
                 solvers=("maxmin-lcd", "maxmin-sicd")),
    "fig7": dict(k_list=(2,), t_list=(1,), d_list=(40.0, 80.0),
                 solvers=("maxmin-lcd", "maxmin-sicd", "maxsum-sicd", "oracle")),
    "fig8": dict(k_list=(5,), t_list=(2,), d_list=_D_SWEEP,
                 solvers=("maxsum-sicd", "maxmin-sicd")),
    "fig9": dict(k_list=(5,), t_list=(2,), d_list=_D_SWEEP,
                 solvers=("maxsum-sicd", "maxmin-sicd")),
    "fig10": dict(k_list=(5, 10, 20), t_list=(2,), d_list=(60.0,),
                  solvers=("maxsum-sicd", "maxmin-sicd")),
}


def preset_config(name: str, seeds: int = 10, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name], seeds=tuple(range(seeds)), name=name)
    kwargs.setdefault("s_th_list", (-10.0,))  # loosest threshold keeps LCD feasible up to K=10
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


# ------------------------------------------------------------------- sweeping

@dataclass(frozen=True)
class Record:
    preset: str
    seed: int
    k: int
    t: int
    d_er_ap: float
    s_th_db: float | None
    solver: str
    objective: float
    min_rate: float
    sum_rate: float
    jain: float
    status: str
    iters: int
    wall_ms: float
    user_rates: tuple = field(default=(), compare=False)
    error: str | None = field(default=None, compare=False)

    def key(self):
        s = -math.inf if self.s_th_db is None else self.s_th_db
        return (self.preset, self.seed, self.k, self.t, self.d_er_ap, s, self.solver)


def _record(cfg, cell, solver, sol, wall, error=None):
    seed, k, t, d, s_th = cell
    if sol is None or not sol.feasible or sol.rates is None:
        status = "Error" if error else (sol.status.value if sol is not None else "Error")
        nan = float("nan")
        return Record(cfg.name, seed, k, t, d, s_th, solver, nan, nan, nan, nan, status, 0,
                      wall * 1e3, (), error)
    totals = sol.user_totals
    try:
        jain = jain_index(totals)
    except ValueError:
        jain = float("nan")
    obj = float(sol.objective) if sol.objective is not None else float("nan")
    return Record(cfg.name, seed, k, t, d, s_th, solver, obj, sol.min_rate, sol.sum_rate, jain,
                  sol.status.value, int(sol.iterations), wall * 1e3, tuple(map(float, totals)))


def run_cell(cfg: ScenarioConfig, cell) -> list[Record]:
    seed, k, t, d, s_th = cell
    phys = cfg.physical.replace(s_th_db=s_th)
    inst = build_network(phys, k, t, d, seed)
    out = []
    for name in cfg.solvers:
        if name == "oracle":
            continue
        start = time.perf_counter()
        try:
            sol = SOLVERS[name](inst, cfg.opts)
            out.append(_record(cfg, cell, name, sol, time.perf_counter() - start))
        except Exception as exc:  # recorded, turns the exit code nonzero
            log.exception("solver %s failed on %s", name, cell)
            out.append(_record(cfg, cell, name, None, time.perf_counter() - start, repr(exc)))
    if "oracle" in cfg.solvers:
        targets = [s for s in cfg.solvers if s in ORACLE_TARGETS] or list(ORACLE_TARGETS)
        for name in targets:
            objective, scheme = ORACLE_TARGETS[name]
            spec = oracle.GridSpec(cfg.oracle_step, cfg.oracle_step, objective, scheme)
            start = time.perf_counter()
            label = f"oracle-{name}"
            try:
                sol = oracle.grid_search(inst, spec)
                out.append(_record(cfg, cell, label, sol, time.perf_counter() - start))
            except Exception as exc:
                log.exception("oracle %s failed on %s", name, cell)
                out.append(_record(cfg, cell, label, None, time.perf_counter() - start, repr(exc)))
    return out


def _run_cell_packed(args):
    return run_cell(*args)


def run_sweep(cfg: ScenarioConfig, workers: int | None = None) -> list[Record]:
    """Run every (seed, K, T, d, S_th) cell; records come back sorted by key columns."""
    cells = list(cfg.cells())
    workers = workers or 1
    records: list[Record] = []
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_run_cell_packed, [(cfg, c) for c in cells]):
                records.extend(chunk)
    else:
        for cell in cells:
            records.extend(run_cell(cfg, cell))
    return sorted(records, key=Record.key)


# ------------------------------------------------------------------- reporting

def _fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def csv_rows(records, timing=True):
    for r in sorted(records, key=Record.key):
        yield [r.preset, str(r.seed), str(r.k), str(r.t), _fmt(r.d_er_ap), _fmt(r.s_th_db),
               r.solver, _fmt(r.objective), _fmt(r.min_rate), _fmt(r.sum_rate), _fmt(r.jain),
               r.status, str(r.iters), _fmt(r.wall_ms) if timing else "0"]


def summary_table(records) -> str:
    """Seed-averaged objective (mean and sample std) per preset and sweep cell."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.preset, r.k, r.t, r.d_er_ap,
                -math.inf if r.s_th_db is None else r.s_th_db, r.solver)].append(r)
    head = ["preset", "K", "T", "d_er_ap", "s_th_db", "solver", "runs", "feasible",
            "objective", "std", "min_rate", "sum_rate", "jain"]
    rows = [head]
    for key in sorted(groups):
        rs = groups[key]
        ok = [r for r in rs if not math.isnan(r.objective)]
        mean = lambda xs: statistics.fmean(xs) if xs else float("nan")
        std = statistics.stdev([r.objective for r in ok]) if len(ok) > 1 else float("nan")
        preset, k, t, d, s, solver = key
        rows.append([preset, str(k), str(t), _fmt(d), _fmt(None if s == -math.inf else s), solver,
                     str(len(rs)), str(len(ok)), _fmt(mean([r.objective for r in ok])), _fmt(std),
                     _fmt(mean([r.min_rate for r in ok])), _fmt(mean([r.sum_rate for r in ok])),
                     _fmt(mean([r.jain for r in ok if not math.isnan(r.jain)]))])
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows) + "\n"


def emit_report(records, out_dir, timing=True) -> tuple[Path, Path]:
    """Write results.csv and summary.txt under ``out_dir``.

    ``timing=False`` writes wall_ms as 0 so repeated runs give byte-identical files.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(csv_rows(records, timing))
    txt_path = out_dir / "summary.txt"
    txt_path.write_text(summary_table(records))
    return csv_path, txt_path


# ------------------------------------------------------------------------ main

def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wpcn-noma", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a scenario file"),
                           ("oracle", "run a scenario file with the grid oracle added")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
        sp.add_argument("--out", default="results")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, repeatable")
        sp.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    sp = sub.add_parser("preset", help="run a named sweep")
    sp.add_argument("name", choices=sorted(PRESETS))
    sp.add_argument("--out", default="results")
    sp.add_argument("--seeds", type=int, default=10)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "preset":
            cfg = preset_config(args.name, args.seeds)
        else:
            cfg = load_scenario(args.config, _overrides(args.set))
            if args.command == "oracle" and "oracle" not in cfg.solvers:
                cfg = dataclasses.replace(cfg, solvers=cfg.solvers + ("oracle",))
        records = run_sweep(cfg, args.workers)
        csv_path, txt_path = emit_report(records, args.out, timing=not args.no_timing)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(txt_path.read_text())
    print(f"wrote {csv_path} and {txt_path}")
    return 1 if any(r.status == "Error" for r in records) else 0


if __name__ == "__main__":
    sys.exit(main())
