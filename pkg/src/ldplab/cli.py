"""Experiment orchestration: config validation, subcommands, manifests.

Subcommands: simulate | cgf | rate | diagnose | report.  A single YAML
config drives everything; unknown keys are rejected so typos cannot
silently disable a check.  Every output directory gets a manifest with the
config hash, seed, and timings, sufficient to reproduce the run bitwise.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .grid import ConfigurationError, GridConfig, required_pad
from .kernels import KernelError, kernel_by_name
from .ldp import (build_cgf_table, extrapolate_cgf, legendre_transform,
                  make_test_function)
from .montecarlo import EnsembleConfig, estimate_cgf, run_ensemble
from .functionals import TimePoints
from .noise import EmbeddingError
from .solver import EquationSpec, NumericalError, sigma_by_name
from . import diagnostics as diag

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_DIAGNOSTICS = 3

_SCHEMA = {
    "equation": {"kind", "sigma", "c_h", "c_w1", "c_w2"},
    "noise": {"kernel"},
    "grid": {"dx", "dt", "T", "R_max", "pad"},
    "ensemble": {"n_paths", "seed", "R_ladder", "batch_count", "batch_size"},
    "experiment": {"times", "lambda_grid", "x_grid", "g_presets",
                   "diagnostics", "tail_r", "cov_thetas", "cov_L", "cov_R",
                   "shift_b", "shift_a", "subadd_pairs", "subadd_alpha",
                   "subadd_beta", "increment_gaps", "increment_t0",
                   "increment_R", "diag_n_paths"},
    "output": {"directory", "formats"},
}


def _validate_keys(cfg):
    for section, content in cfg.items():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section {section!r}")
        if not isinstance(content, dict):
            raise ConfigurationError(f"section {section!r} must be a mapping")
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    f"unknown key {section}.{key}; allowed: "
                    f"{sorted(_SCHEMA[section])}"
                )
        if section == "equation" and "sigma" in content:
            for key in content["sigma"]:
                if key not in {"name", "params"}:
                    raise ConfigurationError(f"unknown key equation.sigma.{key}")


def load_config(path):
    with open(path) as f:
        cfg = yaml.safe_load(f)
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a mapping")
    _validate_keys(cfg)
    return cfg


def _build(cfg, seed_override=None, threads=1):
    eq_c = cfg.get("equation", {})
    sig_c = eq_c.get("sigma", {"name": "const", "params": {"c": 1.0}})
    sigma = sigma_by_name(sig_c.get("name", "const"), sig_c.get("params"))
    eq = EquationSpec(kind=eq_c.get("kind", "heat"), sigma=sigma,
                      c_h=float(eq_c.get("c_h", 0.0)),
                      c_w1=float(eq_c.get("c_w1", 0.0)),
                      c_w2=float(eq_c.get("c_w2", 0.0)))
    kernel = kernel_by_name(cfg.get("noise", {}).get("kernel", "white"))
    g_c = cfg.get("grid", {})
    T = float(g_c.get("T", 1.0))
    pad = g_c.get("pad", "auto")
    if pad == "auto":
        pad = required_pad(eq.kind, T, kernel.corr_length)
    grid = GridConfig(dx=float(g_c.get("dx", 0.05)),
                      dt=float(g_c.get("dt", 0.002)), T=T,
                      R_max=float(g_c.get("R_max", 64.0)), pad=float(pad))
    grid.check_pad(eq.kind, kernel.corr_length)
    e_c = cfg.get("ensemble", {})
    ens = EnsembleConfig(
        n_paths=int(e_c.get("n_paths", 1000)),
        seed=int(seed_override if seed_override is not None
                 else e_c.get("seed", 0)),
        R_ladder=tuple(float(r) for r in e_c.get("R_ladder", [8, 16, 32, 64])),
        batch_count=int(e_c.get("batch_count", 16)),
        batch_size=int(e_c.get("batch_size", 256)),
        n_threads=threads,
    )
    return eq, kernel, grid, ens


def _axis(spec, default):
    spec = spec or default
    return np.linspace(float(spec["min"]), float(spec["max"]),
                       int(spec["count"]))


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_manifest(outdir, cfg, seed, timings, extra=None):
    manifest = {
        "config_hash": _config_hash(cfg),
        "seed": seed,
        "version": __version__,
        "timings_seconds": timings,
    }
    manifest.update(extra or {})
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                     default=float))


def _samples_path(outdir):
    return outdir / "samples.csv"


def _run_samples(cfg, outdir, seed, threads, timings):
    eq, kernel, grid, ens = _build(cfg, seed, threads)
    times = TimePoints(cfg.get("experiment", {}).get("times", [grid.T]), grid.T)
    t0 = time.perf_counter()
    tensor = run_ensemble(eq, grid, kernel, times, ens)
    timings["simulate"] = time.perf_counter() - t0
    snap_errors = [grid.snap_time(t)[1] for t in times.times]
    return eq, kernel, grid, ens, times, tensor, snap_errors


def _write_samples_csv(path, tensor, ladder, times):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["path_id", "R", "t_index", "F_value"])
        n, nR, k = tensor.shape
        for p in range(n):
            for j in range(nR):
                for i in range(k):
                    w.writerow([p, ladder[j], i, repr(tensor[p, j, i])])


def _read_samples_csv(path, ladder, k, n_paths):
    tensor = np.empty((n_paths, len(ladder), k))
    idx = {float(R): j for j, R in enumerate(ladder)}
    with open(path) as f:
        r = csv.reader(f)
        next(r)
        for row in r:
            tensor[int(row[0]), idx[float(row[1])], int(row[2])] = float(row[3])
    return tensor


def cmd_simulate(cfg, outdir, seed, threads, fmt):
    timings = {}
    eq, kernel, grid, ens, times, tensor, snap_errors = _run_samples(
        cfg, outdir, seed, threads, timings)
    _write_samples_csv(_samples_path(outdir), tensor, ens.R_ladder, times.times)
    _write_manifest(outdir, cfg, ens.seed, timings,
                    {"snap_errors": snap_errors, "n_paths": ens.n_paths,
                     "R_ladder": list(ens.R_ladder)})
    return EXIT_OK


def _cgf_tables(cfg, outdir, seed, threads, timings):
    eq, kernel, grid, ens, times, tensor, snap_errors = _run_samples(
        cfg, outdir, seed, threads, timings)
    lam = _axis(cfg.get("experiment", {}).get("lambda_grid"),
                {"min": -1.0, "max": 1.0, "count": 41})
    t0 = time.perf_counter()
    t_ref = max(times.times)
    by_R = {}
    for j, R in enumerate(ens.R_ladder):
        c_hat = diag.qv_bound(eq, kernel, t_ref, R).c_hat
        samples = tensor[:, j, :] if times.k > 1 else tensor[:, j, 0]
        lam_grid = [(lv,) * times.k for lv in lam] if times.k > 1 \
            else [(lv,) for lv in lam]
        by_R[R] = estimate_cgf(samples, lam_grid, R, c_hat=c_hat,
                               batch_count=ens.batch_count)
    table = extrapolate_cgf(build_cgf_table(by_R))
    timings["cgf"] = time.perf_counter() - t0
    return eq, kernel, grid, ens, table, snap_errors


def _write_cgf_csv(outdir, table):
    with open(outdir / "cgf.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["R", "lambda", "value", "ci", "ess", "trusted"])
        for j, R in enumerate(table.R_values):
            for i in range(table.lambdas.shape[0]):
                w.writerow([R, table.lambdas[i, 0], table.values[i, j],
                            table.ci[i, j], table.ess[i, j],
                            int(table.trusted[i, j])])
    with open(outdir / "cgf_extrapolated.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lambda", "value", "residual", "fallback", "trusted"])
        for i in range(table.lambdas.shape[0]):
            w.writerow([table.lambdas[i, 0], table.extrapolated[i],
                        table.extrap_residual[i], int(table.extrap_fallback[i]),
                        int(table.extrap_trusted[i])])


def cmd_cgf(cfg, outdir, seed, threads, fmt):
    timings = {}
    eq, kernel, grid, ens, table, snap_errors = _cgf_tables(
        cfg, outdir, seed, threads, timings)
    _write_cgf_csv(outdir, table)
    _write_manifest(outdir, cfg, ens.seed, timings,
                    {"snap_errors": snap_errors,
                     "n_trusted_lambda": int(np.sum(table.extrap_trusted))})
    return EXIT_OK


def cmd_rate(cfg, outdir, seed, threads, fmt):
    timings = {}
    eq, kernel, grid, ens, table, snap_errors = _cgf_tables(
        cfg, outdir, seed, threads, timings)
    _write_cgf_csv(outdir, table)
    xs = _axis(cfg.get("experiment", {}).get("x_grid"),
               {"min": -2.0, "max": 2.0, "count": 81})
    t0 = time.perf_counter()
    rate = legendre_transform(table.lambdas, table.extrapolated, xs,
                              trusted=table.extrap_trusted)
    timings["rate"] = time.perf_counter() - t0
    with open(outdir / "rate.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "I", "boundary_flag"])
        for i in range(xs.size):
            w.writerow([xs[i], rate.values[i], int(rate.boundary[i])])
    _write_manifest(outdir, cfg, ens.seed, timings,
                    {"snap_errors": snap_errors,
                     "n_boundary_flagged": int(np.sum(rate.boundary))})
    return EXIT_OK


def cmd_diagnose(cfg, outdir, seed, threads, fmt):
    timings = {}
    eq, kernel, grid, ens = _build(cfg, seed, threads)
    exp = cfg.get("experiment", {})
    toggles = exp.get("diagnostics",
                      {"tails": True, "shift": True, "increments": True})
    t_ref = max(exp.get("times", [grid.T]))
    n_diag = int(exp.get("diag_n_paths", max(ens.n_paths, 10_000)))
    report = diag.DiagnosticsReport(seed=ens.seed,
                                    config_label=_config_hash(cfg))
    t0 = time.perf_counter()
    if toggles.get("tails"):
        R = float(exp.get("increment_R", min(32.0, grid.R_max)))
        from .montecarlo import run_window_samples
        S = run_window_samples(eq, grid, kernel, ens.seed, n_diag,
                               [(t_ref, 0.0, R)], n_threads=threads)[:, 0]
        c_hat = diag.qv_bound(eq, kernel, t_ref, R).c_hat
        r_grid = exp.get("tail_r", [0.25, 0.5, 0.75, 1.0, 1.5])
        report.add(diag.tail_bound_check(S, r_grid, c_hat, R))
    if toggles.get("covariance"):
        report.add(diag.covariance_decay_probe(
            eq, kernel, grid, t_ref, float(exp.get("cov_L", 8.0)),
            float(exp.get("cov_R", 8.0)), exp.get("cov_thetas", [2, 4, 8]),
            n_diag, ens.seed))
    if toggles.get("shift"):
        b = float(exp.get("shift_b", 8.0))
        a_list = exp.get("shift_a", [b, 2 * b])
        n_ks = min(n_diag, 5000)
        report.add(diag.shift_invariance_test(eq, kernel, grid, t_ref, b,
                                              a_list, n_ks, ens.seed))
    if toggles.get("subadditivity"):
        g = make_test_function("negsqrt")
        pairs = [tuple(p) for p in exp.get("subadd_pairs",
                                           [(8, 8), (16, 16), (8, 24)])]
        report.add(diag.subadditivity_check(
            eq, kernel, grid, g, pairs, float(exp.get("subadd_alpha", 0.75)),
            float(exp.get("subadd_beta", 0.2)), t_ref, n_diag, ens.seed,
            eta_eff=kernel.eta_eff))
    if toggles.get("increments"):
        report.add(diag.increment_scaling_check(
            eq, kernel, grid, float(exp.get("increment_R", 32.0)),
            float(exp.get("increment_t0", 0.5)),
            exp.get("increment_gaps", [0.05, 0.1, 0.2, 0.4]),
            n_diag, ens.seed))
    if toggles.get("holder"):
        report.add(diag.holder_tail_check(
            eq, kernel, grid, float(exp.get("increment_R", 32.0)), 0.25,
            [1.0, 2.0, 4.0], n_diag, ens.seed))
    timings["diagnose"] = time.perf_counter() - t0
    (outdir / "diagnostics.json").write_text(report.to_json())
    (outdir / "diagnostics_summary.csv").write_text(report.summary_csv())
    _write_manifest(outdir, cfg, ens.seed, timings,
                    {"diagnostics_passed": report.passed})
    return EXIT_OK if report.passed else EXIT_DIAGNOSTICS


def cmd_report(cfg, outdir, seed, threads, fmt):
    collected = {}
    for name in ("manifest.json", "diagnostics.json"):
        p = outdir / name
        if p.exists():
            collected[name] = json.loads(p.read_text())
    for name in ("cgf_extrapolated.csv", "rate.csv", "samples.csv"):
        p = outdir / name
        if p.exists():
            collected[name] = {"rows": sum(1 for _ in open(p)) - 1}
    (outdir / "report.json").write_text(json.dumps(collected, indent=2))
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "cgf": cmd_cgf, "rate": cmd_rate,
             "diagnose": cmd_diagnose, "report": cmd_report}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ldplab",
        description="Spatial-average large-deviation laboratory for 1D "
                    "stochastic heat and wave equations")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="ldplab_out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, outdir, args.seed, args.threads,
                                       args.format)
    except (ConfigurationError, KernelError, yaml.YAMLError, OSError,
            ValueError) as exc:
        if isinstance(exc, (NumericalError, EmbeddingError, diag.DomainError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
