"""Command-line front end: ingest CSV feeds, run the pipelines, emit files.

Subcommands: denoise, estimate-sigma, cluster, predict, table1.  Input
is a per-slice record CSV (road_id, day, slice, velocity); outputs are
CSV and JSON files under --out-dir.  Every emitted file is a pure
function of (input, configuration, seed): iteration follows sorted
road-day keys and floats are written with round-trip precision.

A note on time units: ingested series carry the wall-clock slice length
(5 minutes) as metadata, but the noise balance and the solver operate
in slice units (h = 1), where the discrete noise-strength definition
and the per-day estimates line up exactly.  All pipeline math below
therefore runs on unit-spaced copies of the series.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .cluster import DEFAULT_DC_PERCENTILE, cluster
from .forecast import compare_pipelines
from .noise import DEFAULT_SIGMA_GRID, estimate_sigma
from .series import DEFAULT_SLICES, DEFAULT_SLICE_MINUTES, VelocitySeries, nearest_interpolate
from .solver import SolverConfig, denoise_values, sweep_config
from .synth import run_table1, table1_csv

log = logging.getLogger("tvroad")

LENGTH_COLUMN = "road_length_m"


@dataclass(frozen=True)
class RecordRow:
    """One ingested record: a velocity for one slice of one road-day."""

    road_id: str
    day: str
    slice: int
    velocity: float


@dataclass(frozen=True)
class RunConfig:
    """Run-wide settings; round-trips losslessly through key=value text.

    epsilon / max_iters / rel_tol are the reference solver profile used
    for one-off denoise calls; sweep_epsilon is the heavier smoothing
    the sigma sweep and the prediction pipeline run with, where the
    near-exact profile would spend its whole iteration budget chattering
    around the kink of the absolute value.
    """

    epsilon: float = 1e-6
    max_iters: int = 5000
    rel_tol: float = 1e-4
    sweep_epsilon: float = 0.1
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    dc_percentile: float = DEFAULT_DC_PERCENTILE
    k: int | None = None
    min_records: int = 150
    min_records_cluster: int = 120
    min_road_length_m: float = 100.0
    out_dir: str = "out"
    seed: int = 0
    table1_trials: int = 100

    def __post_init__(self):
        for name in ("epsilon", "max_iters", "rel_tol", "sweep_epsilon", "dc_percentile",
                     "min_records", "min_records_cluster", "min_road_length_m",
                     "table1_trials"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be a positive cluster count")
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(config: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]
    return "\n".join(lines) + "\n"


_CONFIG_PARSERS = {
    "epsilon": float, "max_iters": int, "rel_tol": float, "sweep_epsilon": float,
    "sigma_grid": lambda s: tuple(float(x) for x in s.split(",")),
    "dc_percentile": float, "k": lambda s: int(s) if s else None,
    "min_records": int, "min_records_cluster": int, "min_road_length_m": float,
    "out_dir": str, "seed": int, "table1_trials": int,
}


def config_from_text(text: str) -> RunConfig:
    """Parse the flat key=value form (# comments and blank lines ok)."""
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _CONFIG_PARSERS[key](value.strip())
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {exc}") from exc
    return RunConfig(**updates)


def ingest(path, *, min_records: int = 150, min_length_m: float | None = None):
    """Read a record CSV into a {(road_id, day): VelocitySeries} map.

    Required columns: road_id, day (ISO date), slice (1..288), velocity
    (nonnegative km/h).  Extra columns are ignored, except an optional
    road_length_m column used to drop roads shorter than min_length_m.
    Duplicate (road_id, day, slice) keys are a hard error; malformed
    rows report their line number; road-days with fewer than min_records
    observed slices are skipped with a log line.  Remaining gaps are
    filled by nearest-in-time interpolation.
    """
    groups: dict[tuple[str, str], dict[int, float]] = {}
    lengths: dict[tuple[str, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        required = ["road_id", "day", "slice", "velocity"]
        if header[: len(required)] != required:
            raise ValueError(f"{path}: header must start with {','.join(required)}")
        col = {name: i for i, name in enumerate(header)}
        length_col = col.get(LENGTH_COLUMN)

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                road_id = row[col["road_id"]].strip()
                day = row[col["day"]].strip()
                slice_no = int(row[col["slice"]])
                velocity = float(row[col["velocity"]])
                if not road_id:
                    raise ValueError("empty road_id")
                datetime.date.fromisoformat(day)
                if not (1 <= slice_no <= DEFAULT_SLICES):
                    raise ValueError(f"slice {slice_no} outside 1..{DEFAULT_SLICES}")
                if not (np.isfinite(velocity) and velocity >= 0):
                    raise ValueError(f"velocity {velocity} not a nonnegative finite number")
                length = None
                if length_col is not None and length_col < len(row) and row[length_col].strip():
                    length = float(row[length_col])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None

            key = (road_id, day)
            slices = groups.setdefault(key, {})
            if slice_no in slices:
                raise ValueError(
                    f"{path}: line {lineno}: duplicate record for "
                    f"road_id={road_id} day={day} slice={slice_no}"
                )
            slices[slice_no] = velocity
            if length is not None:
                lengths[key] = length

    result = {}
    for key in sorted(groups):
        road_id, day = key
        slices = groups[key]
        if min_length_m is not None and key in lengths and lengths[key] < min_length_m:
            log.info("%s/%s: skipped, road length %.0f m below %.0f m",
                     road_id, day, lengths[key], min_length_m)
            continue
        if len(slices) < min_records:
            log.info("%s/%s: skipped, %d records below the minimum of %d",
                     road_id, day, len(slices), min_records)
            continue
        result[key] = nearest_interpolate(
            slices.items(), DEFAULT_SLICES, road_id=road_id, day=day, h=DEFAULT_SLICE_MINUTES
        )
    return result


def _unit_spaced(series: VelocitySeries) -> VelocitySeries:
    """Copy of a series with h = 1 for the pipeline math."""
    return VelocitySeries(road_id=series.road_id, day=series.day, values=series.values,
                          h=1.0, observed_mask=series.observed_mask)


def _pipeline_solver(config: RunConfig) -> SolverConfig:
    return SolverConfig(sigma=0.0, epsilon=config.sweep_epsilon,
                        max_iters=config.max_iters, rel_tol=config.rel_tol)


def _key_name(key: tuple[str, str]) -> str:
    return f"{key[0]}/{key[1]}"


def _write_text(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _write_json(out_dir: Path, name: str, payload) -> None:
    _write_text(out_dir, name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _estimate_for(series: VelocitySeries, config: RunConfig):
    return estimate_sigma(series.values, sigma_grid=config.sigma_grid,
                          solver=_pipeline_solver(config), h=1.0)


def cmd_denoise(config: RunConfig, args) -> int:
    data = ingest(args.input, min_records=config.min_records,
                  min_length_m=config.min_road_length_m)
    out_rows = ["road_id,day,slice,velocity,denoised_velocity"]
    diagnostics = {}
    failures = 0
    for key in sorted(data):
        series = data[key]
        try:
            if args.sigma is not None:
                sigma, estimate = float(args.sigma), None
            else:
                estimate = _estimate_for(series, config)
                sigma = estimate.sigma_best
            result = denoise_values(series.values,
                                    sweep_config(_pipeline_solver(config), sigma), h=1.0)
        except Exception as exc:
            failures += 1
            log.error("%s: denoise failed: %s", _key_name(key), exc)
            continue
        for i in range(series.n_slices):
            out_rows.append(f"{key[0]},{key[1]},{i + 1},"
                            f"{float(series.values[i])!r},{float(result.denoised[i])!r}")
        diagnostics[_key_name(key)] = {
            "sigma": sigma,
            "sigma_flags": list(estimate.flags) if estimate is not None else [],
            "iterations": result.iterations,
            "converged": result.converged,
            "stalled": result.stalled,
            "final_tv": result.final_tv,
            "constraint_residual": result.constraint_residual,
        }
    out_dir = Path(config.out_dir)
    _write_text(out_dir, "denoised.csv", "\n".join(out_rows) + "\n")
    _write_json(out_dir, "denoise_diagnostics.json", diagnostics)
    return _exit_code(len(diagnostics), failures)


def cmd_estimate(config: RunConfig, args) -> int:
    data = ingest(args.input, min_records=config.min_records,
                  min_length_m=config.min_road_length_m)
    report = {}
    failures = 0
    for key in sorted(data):
        try:
            est = _estimate_for(data[key], config)
        except Exception as exc:
            failures += 1
            log.error("%s: sigma estimate failed: %s", _key_name(key), exc)
            continue
        report[_key_name(key)] = {
            "sigma1": est.sigma1,
            "sigma2": est.sigma2,
            "sigma_best": est.sigma_best,
            "tv_lower": est.tv_lower,
            "tv_curve": [list(p) for p in est.tv_curve],
            "delta_curve": [list(p) for p in est.delta_curve],
            "flags": list(est.flags),
        }
    _write_json(Path(config.out_dir), "sigma_estimates.json", report)
    return _exit_code(len(report), failures)


def cmd_cluster(config: RunConfig, args) -> int:
    data = ingest(args.input, min_records=config.min_records_cluster,
                  min_length_m=config.min_road_length_m)
    keys, profiles = [], []
    failures = 0
    for key in sorted(data):
        series = data[key]
        try:
            if args.no_denoise:
                profile = series.values
            else:
                est = _estimate_for(series, config)
                profile = denoise_values(
                    series.values,
                    sweep_config(_pipeline_solver(config), est.sigma_best), h=1.0
                ).denoised
        except Exception as exc:
            failures += 1
            log.error("%s: profile preparation failed: %s", _key_name(key), exc)
            continue
        keys.append(key)
        profiles.append(profile)
    if len(keys) < 2:
        log.error("clustering needs at least 2 road-days, have %d", len(keys))
        return 1
    result = cluster(np.array(profiles), dc_percentile=config.dc_percentile, k=config.k)

    names = [_key_name(k) for k in keys]
    graph = ["road_id,rho,delta,gamma"]
    assigns = ["road_id,cluster,is_core"]
    embed = ["road_id,x,y"]
    for i, name in enumerate(names):
        graph.append(f"{name},{float(result.rho[i])!r},"
                     f"{float(result.delta[i])!r},{float(result.gamma[i])!r}")
        assigns.append(f"{name},{int(result.assignment[i])},{str(bool(result.is_core[i])).lower()}")
        embed.append(f"{name},{float(result.embedding[i, 0])!r},{float(result.embedding[i, 1])!r}")
    out_dir = Path(config.out_dir)
    _write_text(out_dir, "decision_graph.csv", "\n".join(graph) + "\n")
    _write_text(out_dir, "assignments.csv", "\n".join(assigns) + "\n")
    _write_text(out_dir, "embedding.csv", "\n".join(embed) + "\n")
    _write_json(out_dir, "cluster_summary.json", {
        "k": result.k,
        "d_c": result.d_c,
        "centers": [names[i] for i in result.centers],
        "flags": list(result.flags),
    })
    return _exit_code(len(keys), failures)


def cmd_predict(config: RunConfig, args) -> int:
    data = ingest(args.input, min_records=config.min_records,
                  min_length_m=config.min_road_length_m)
    by_road: dict[str, list] = {}
    for road_id, day in sorted(data):
        by_road.setdefault(road_id, []).append(data[(road_id, day)])

    rows = ["road_id,day,slice,velocity,prediction_raw,prediction_denoised"]
    metrics = {}
    failures = 0
    for road_id in sorted(by_road):
        days = by_road[road_id]
        if len(days) < 2:
            failures += 1
            log.error("%s: need at least 2 days (history plus target), have %d",
                      road_id, len(days))
            continue
        history = [_unit_spaced(d) for d in days[:-1]]
        target = _unit_spaced(days[-1])
        try:
            comparison = compare_pipelines(
                history, target,
                sigma=None if args.sigma is None else float(args.sigma),
                solver=_pipeline_solver(config),
                sigma_grid=config.sigma_grid,
                dc_percentile=config.dc_percentile,
                k=config.k,
                include_denoised=not args.no_denoise,
            )
        except Exception as exc:
            failures += 1
            log.error("%s: prediction failed: %s", road_id, exc)
            continue
        raw, den = comparison.raw, comparison.denoised
        for i, slice_no in enumerate(raw.slices):
            den_cell = "" if den is None else repr(float(den.predictions[i]))
            rows.append(f"{road_id},{target.day},{int(slice_no)},"
                        f"{float(target.values[slice_no - 1])!r},"
                        f"{float(raw.predictions[i])!r},{den_cell}")
        entry = {
            "sigma": comparison.sigma,
            "d_c": comparison.d_c,
            "raw": {"rmae": raw.rmae, "mape": raw.mape,
                    "mape_retained_count": raw.mape_retained_count},
        }
        if den is not None:
            entry["denoised"] = {"rmae": den.rmae, "mape": den.mape,
                                 "mape_retained_count": den.mape_retained_count}
        metrics[road_id] = entry
    out_dir = Path(config.out_dir)
    _write_text(out_dir, "predictions.csv", "\n".join(rows) + "\n")
    _write_json(out_dir, "prediction_metrics.json", metrics)
    return _exit_code(len(metrics), failures)


def cmd_table1(config: RunConfig, args) -> int:
    rows = run_table1(trials=config.table1_trials, base_seed=config.seed)
    _write_text(Path(config.out_dir), "table1.csv", table1_csv(rows))
    return 0


def _exit_code(successes: int, failures: int) -> int:
    """Nonzero only when nothing succeeded."""
    if successes == 0:
        log.error("no road-day processed successfully (%d failed)", failures)
        return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", help="record CSV path")
    shared.add_argument("--out-dir", help="output directory")
    shared.add_argument("--config", help="key=value configuration file")
    shared.add_argument("--sigma", type=float, help="fixed noise strength override")
    shared.add_argument("--grid", help="sigma sweep grid, comma-separated")
    shared.add_argument("--k", type=int, help="fixed cluster count")
    shared.add_argument("--dc-percentile", type=float, dest="dc_percentile",
                        help="cutoff-distance percentile")
    shared.add_argument("--seed", type=int, help="base seed for seeded runs")
    shared.add_argument("--no-denoise", action="store_true",
                        help="run on raw series only, skipping the denoised variant")

    parser = argparse.ArgumentParser(prog="tvroad",
                                     description="Traffic-velocity denoising toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("denoise", parents=[shared], help="denoise each road-day")
    sub.add_parser("estimate-sigma", parents=[shared], help="noise-strength estimates")
    sub.add_parser("cluster", parents=[shared], help="density-peaks clustering of profiles")
    sub.add_parser("predict", parents=[shared], help="history-matching prediction")
    sub.add_parser("table1", parents=[shared], help="noise-estimator benchmark table")
    return parser


def _resolve_config(args) -> RunConfig:
    config = RunConfig()
    if args.config:
        config = config_from_text(Path(args.config).read_text(encoding="utf-8"))
    overrides = {}
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.grid is not None:
        overrides["sigma_grid"] = tuple(float(x) for x in args.grid.split(","))
    if args.k is not None:
        overrides["k"] = args.k
    if args.dc_percentile is not None:
        overrides["dc_percentile"] = args.dc_percentile
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(config, **overrides) if overrides else config


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    config = _resolve_config(args)
    commands = {
        "denoise": cmd_denoise,
        "estimate-sigma": cmd_estimate,
        "cluster": cmd_cluster,
        "predict": cmd_predict,
        "table1": cmd_table1,
    }
    if args.command != "table1" and not args.input:
        log.error("--input is required for %s", args.command)
        return 2
    try:
        return commands[args.command](config, args)
    except Exception as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
