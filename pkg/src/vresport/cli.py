"""Scenario runner: ``vresport run`` and ``vresport compare``.

Config (TOML; paths relative to the config file)::

    [data]
    plants = "plants.csv"
    outputs = "outputs.csv"
    demand = "demand.csv"        # optional
    window_days = 3
    prune_threshold = 0.99

    [finance]
    discount_rate = 0.08
    lifetime_years = { wind = 25, pv = 25 }

    [risk]
    beta = 0.05
    omega = 0.0
    M = 3000
    seed = 0

    [sweep]
    points = 51

    [scenario.cost_flat]
    kind = "Cost_Flat"           # any per-scenario key overrides the above
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .analysis import cv_ratio, diversity, min_cv_index, normalize_to_risk, sharpe
from .errors import ConfigError, DegeneratePortfolioError, InfeasibleRiskError, VresportError
from .ingest import build_demandgen, load_dataset, prune_correlated
from .models import KINDS, Finance, ScenarioConfig, frontier_sweep
from .sampling import lhs_sample

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("vresport")

FRONTIER_COLUMNS = ["sigma_cap", "achieved_sd_per_cap", "cf", "cost_per_mwh", "installed_mw",
                    "mean_output_mw", "status"]
WEIGHT_COLUMNS = ["point_index", "plant_id", "capacity_mw", "share"]
ANALYSIS_COLUMNS = ["point_index", "cv", "sharpe", "gd_km", "ed", "hhi", "inv_hhi", "scale_factor",
                    "cost_per_demand_mwh", "var_q_mw", "cvar_q_mw", "mean_excess_pct"]
SCENARIO_KEYS = {"kind", "points", "beta", "omega", "M", "pv_cost_multiplier", "fixed_generation"}

EXIT_OK, EXIT_SOLVE, EXIT_CONFIG = 0, 1, 2


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.10g" % (0.0 if x == 0.0 else x)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def read_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    data = cfg.get("data")
    if not data or "plants" not in data or "outputs" not in data:
        raise ConfigError("[data] needs 'plants' and 'outputs'")
    for key in ("plants", "outputs", "demand"):
        if key in data:
            p = Path(data[key])
            data[key] = p if p.is_absolute() else (path.parent / p)
            if not data[key].exists():
                raise ConfigError(f"[data] {key}: file not found: {data[key]}")
    if not cfg.get("scenario"):
        raise ConfigError("config lists no [scenario.<name>] sections")
    return cfg


def build_scenarios(cfg: dict, points: int | None = None) -> dict:
    fin = cfg.get("finance", {})
    finance = Finance(discount_rate=float(fin.get("discount_rate", 0.08)),
                      lifetime_years=dict(fin.get("lifetime_years", {"wind": 25, "pv": 25})))
    risk = cfg.get("risk", {})
    sweep = cfg.get("sweep", {})
    out = {}
    for name, sec in cfg["scenario"].items():
        unknown = set(sec) - SCENARIO_KEYS
        if unknown:
            raise ConfigError(f"[scenario.{name}]: unknown keys {sorted(unknown)}")
        if "kind" not in sec:
            raise ConfigError(f"[scenario.{name}]: missing 'kind' (one of {', '.join(KINDS)})")
        merged = {**risk, **sec}
        try:
            out[name] = ScenarioConfig(
                kind=sec["kind"],
                n_frontier_points=int(points or sec.get("points", sweep.get("points", 51))),
                beta=float(merged.get("beta", 0.05)),
                omega=float(merged.get("omega", 0.0)),
                M=int(merged.get("M", 3000)),
                finance=finance,
                pv_cost_multiplier=sec.get("pv_cost_multiplier"),
                fixed_generation=sec.get("fixed_generation"),
            )
        except ConfigError as exc:
            raise ConfigError(f"[scenario.{name}]: {exc}") from exc
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _analysis_row(pt, plants, demand_mw, q):
    row = {k: math.nan for k in ANALYSIS_COLUMNS}
    row["point_index"] = pt.index
    if not pt.ok:
        return row
    try:
        row["cv"] = cv_ratio(pt)
        row["sharpe"] = sharpe(pt)
        dv = diversity(pt, plants)
        row.update(gd_km=dv.gd, ed=dv.ed, hhi=dv.hhi, inv_hhi=dv.inv_hhi)
    except DegeneratePortfolioError:
        return row
    if demand_mw is not None:
        try:
            rr = normalize_to_risk(pt, plants, demand_mw, q=q)
            row.update(scale_factor=rr.scale_factor, cost_per_demand_mwh=rr.cost_per_demand_mwh,
                       var_q_mw=rr.var_q, cvar_q_mw=rr.cvar_q,
                       mean_excess_pct=100.0 * rr.mean_excess_fraction)
        except InfeasibleRiskError as exc:
            log.warning("point %d: %s", pt.index, exc)
    return row


def write_scenario(out_dir: Path, points, plants, demand_mw, q) -> tuple[list, dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "frontier.csv", FRONTIER_COLUMNS, [
        [fmt(p.sigma_cap), fmt(p.achieved_sd), fmt(p.cf), fmt(p.cost_per_mwh), fmt(p.installed),
         fmt(p.mean_output), p.status] for p in points])
    _write_csv(out_dir / "weights.csv", WEIGHT_COLUMNS, [
        [p.index, pid, fmt(cap), fmt(share)]
        for p in points for pid, cap, share in zip(p.ids, p.capacities, p.shares)])
    rows = [_analysis_row(p, plants, demand_mw, q) for p in points]
    _write_csv(out_dir / "analysis.csv", ANALYSIS_COLUMNS,
               [[r["point_index"]] + [fmt(r[k]) for k in ANALYSIS_COLUMNS[1:]] for r in rows])
    files = [str(out_dir / f) for f in ("frontier.csv", "weights.csv", "analysis.csv")]
    return files, _summary(points, plants)


def _round(x):
    return float(fmt(x)) if x is not None else None


def _summary(points, plants) -> dict:
    ok = [p for p in points if p.ok]
    s = {"n_points": len(points),
         "sigma_range": [_round(points[0].sigma_cap), _round(points[-1].sigma_cap)],
         "min_cost": None, "min_sd": None, "min_cv_index": None, "diversity_at_min_cost": None}
    if not ok:
        return s
    costs = [p.cost_per_mwh for p in ok]
    cheapest = ok[int(np.nanargmin(costs))]
    s["min_cost"] = _round(cheapest.cost_per_mwh)
    s["min_sd"] = _round(min(p.achieved_sd for p in ok))
    try:
        s["min_cv_index"] = points[min_cv_index(points)].index
        s["diversity_at_min_cost"] = {k: _round(v) for k, v in asdict(diversity(cheapest, plants)).items()}
    except DegeneratePortfolioError:
        pass
    return s


def run(config_path, out_dir, seed=None, points=None, threads=1) -> int:
    t_start = time.perf_counter()
    cfg = read_config(config_path)
    scenarios = build_scenarios(cfg, points)
    data = cfg["data"]
    risk = cfg.get("risk", {})
    seed = int(seed if seed is not None else risk.get("seed", 0))
    window = data.get("window_days", 3)
    ds = load_dataset(data["plants"], data["outputs"], data.get("demand"),
                      window_days=None if window in (0, None, "none") else int(window))
    plants = prune_correlated(ds.plants, float(data.get("prune_threshold", 0.99)))
    dropped = sorted(set(ds.ids) - {p.id for p in plants})
    if dropped:
        log.info("pruned %d correlated plants: %s", len(dropped), ", ".join(dropped))
    dg = build_demandgen(ds.demand) if ds.demand is not None else None
    demand_mw = ds.demand.mw() if ds.demand is not None else None
    for name, sc in scenarios.items():
        if sc.observed and dg is None:
            raise ConfigError(f"[scenario.{name}]: {sc.kind} needs [data] demand")
        if sc.family == "CVaR" and sc.M > ds.n_steps:
            raise ConfigError(f"[scenario.{name}]: M={sc.M} exceeds the {ds.n_steps} available hours")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    calendar = ds.calendar()
    summary, outputs, timings, failures = {}, [], {}, {}
    for name in sorted(scenarios):
        sc = scenarios[name]
        plan = lhs_sample(ds.n_steps, calendar, M=sc.M, seed=seed) if sc.family == "CVaR" else None
        t0 = time.perf_counter()
        try:
            pts = frontier_sweep(sc, plants, dg, plan, threads=threads)
        except VresportError as exc:
            failures[name] = str(exc)
            log.error("%s: %s", name, exc)
            continue
        timings[name] = time.perf_counter() - t0
        bad = [p.index for p in pts if not p.ok]
        if bad:
            failures[name] = {"points": bad, "statuses": [pts[i].status for i in bad]}
        files, summary[name] = write_scenario(out / name, pts, plants, demand_mw, sc.beta)
        if plan is not None:
            plan.save(out / name / "sample_plan.csv")
            files.append(str(out / name / "sample_plan.csv"))
        outputs.extend(files)
        summary[name]["kind"] = sc.kind
        log.info("%s: %d points in %.1fs", name, len(pts), timings[name])

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    inputs = {k: str(data[k]) for k in ("plants", "outputs", "demand") if k in data}
    manifest = {
        "scenarios": sorted(scenarios),
        "inputs": inputs,
        "digests": {k: sha256(v) for k, v in inputs.items()},
        "config_digest": sha256(config_path),
        "seed": seed,
        "threads": threads,
        "universe": [p.id for p in plants],
        "pruned": dropped,
        "outputs": outputs + [str(out / "summary.json")],
        "timings_s": timings,
        "wall_s": time.perf_counter() - t_start,
        "failures": failures,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_SOLVE if failures else EXIT_OK


def compare(run_dirs, out_file) -> int:
    """Stack every scenario frontier of several runs into one CSV."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    universe = None
    rows = []
    for d in map(Path, run_dirs):
        try:
            manifest = json.loads((d / "manifest.json").read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"{d}: not a completed run (no manifest.json)") from exc
        if universe is None:
            universe = manifest["universe"]
        elif manifest["universe"] != universe:
            raise ConfigError(f"{d}: plant universe differs from {run_dirs[0]}")
        for name in manifest["scenarios"]:
            path = d / name / "frontier.csv"
            if not path.exists():
                continue
            with open(path, newline="") as fh:
                for i, r in enumerate(csv.DictReader(fh)):
                    sd, cf = float(r["achieved_sd_per_cap"]), float(r["cf"])
                    cv = sd / cf if cf > 0 else math.nan
                    rows.append([str(d), name, i] + [r[c] for c in FRONTIER_COLUMNS] + [fmt(cv)])
    _write_csv(out_file, ["run", "scenario", "point_index"] + FRONTIER_COLUMNS + ["cv"], rows)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vresport", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve every scenario of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--points", type=int)
    r.add_argument("--threads", type=int, default=1)
    c = sub.add_parser("compare", help="merge frontiers of completed runs")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            return run(args.config, args.out, args.seed, args.points, args.threads)
        return compare(args.run_dirs, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VresportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
