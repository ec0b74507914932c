"""Config-driven experiment runner.

Exit codes: 0 success, 2 invalid configuration (with field-path
diagnostics), 3 coverage failure after bounded retries. Every run emits its
CSVs plus run_manifest.json; identical (config, seed) produce byte-identical
data files regardless of worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import csvio
from .config import (
    ConfigError,
    EXPERIMENT_KINDS,
    ballisticity_params,
    build_env_spec,
    build_rate_model,
    load_toml,
    validate_config,
)
from .deviation import submartingale_deviation_fit
from .environments import asep_evolve, asep_sample_initial, zr_evolve, zr_sample_initial
from .estimators import (
    BoxFunctional,
    DecouplingParams,
    Estimate,
    RealizationFactory,
    _extreme_displacements,
    ballisticity_curve,
    decoupling_gap,
    estimate_speed_bracket,
    is_threatened,
    is_trapped,
    lln_curve,
    replica_map,
    verify_threat_dichotomy,
)
from .boxes import Region
from .noise import SpaceTimeWindow
from .walker import CoverageError, StartPoint, run_walk
import math


def _emit_ph_rows(curve, path):
    rows = [(p.H, p.v, p.estimate.p_hat, p.estimate.ci_low, p.estimate.ci_high, p.estimate.n, p.estimate.seed) for p in curve]
    csvio.write_csv(path, ["H", "v", "p_hat", "ci_low", "ci_high", "n", "seed"], rows)


def cmd_simulate_env(cfg, factory, seed, workers, outdir):
    sec = cfg.get("simulate_env", {})
    horizon = float(sec.get("horizon_seconds", 10.0))
    x_min = int(sec.get("x_min_site", -20))
    x_max = int(sec.get("x_max_site", 20))
    spec = factory.env_spec
    window = SpaceTimeWindow(x_min, x_max, 0.0, horizon)
    if spec.kind == "constant":
        raise ConfigError([("simulate_env", "constant environments have no trajectory to export")])
    buf = spec.buffer_width
    if buf is None:
        from .environments import default_buffer_width

        buf = default_buffer_width(horizon, spec.params)
    dom = (x_min - buf, x_max + buf)
    if spec.kind == "zero_range":
        init = zr_sample_initial(spec.zr, dom, seed, 0)
        traj = zr_evolve(init, spec.zr, horizon, window, seed, 0)
    else:
        init = asep_sample_initial(spec.asep, dom, seed, 0)
        traj = asep_evolve(init, spec.asep, horizon, window, seed, 0, collect_tracks=False).trajectory
    out = Path(outdir) / "trajectory.csv"
    csvio.write_csv(out, ["time", "site", "old_occ", "new_occ", "class"], csvio.trajectory_rows(traj))
    return [out]


def cmd_walk(cfg, factory, seed, workers, outdir):
    sec = cfg.get("walk", {})
    horizon = float(sec.get("horizon_seconds", 50.0))
    x0 = int(sec.get("start_site", 0))
    t0 = float(sec.get("start_time_seconds", 0.0))
    pos_cp = None
    widen = 0
    from .walker import cone_bounds

    for _ in range(4):
        c_lo, c_hi = cone_bounds(x0, x0, horizon, factory.rate_model, widen)
        real = factory.make(0, c_lo, c_hi + 1, t0 + horizon)
        try:
            path = run_walk(StartPoint(x0, t0), horizon, real.env, real.noise, real.rate_model)
            break
        except CoverageError:
            widen = 2 * (widen + 64)
    else:
        raise CoverageError("walk cone failed to stabilize after retries")
    out = Path(outdir) / "walk.csv"
    csvio.write_csv(out, ["t", "x"], csvio.walk_rows(path))
    return [out]


def cmd_estimate_ph(cfg, factory, seed, workers, outdir):
    sec = cfg["estimate_ph"]
    h = float(sec["horizon_seconds"])
    speeds = [float(v) for v in sec["speeds_sites_per_second"]]
    n = int(sec["samples"])
    maxd, mind = _extreme_displacements(factory, h, n, threads=workers)
    rows = []
    for v in speeds:
        est = Estimate.from_counts(int(np.sum(maxd >= v * h)), n, seed)
        rows.append((h, v, est.p_hat, est.ci_low, est.ci_high, n, seed))
    out = Path(outdir) / "p_h.csv"
    csvio.write_csv(out, ["H", "v", "p_hat", "ci_low", "ci_high", "n", "seed"], rows)
    return [out]


def cmd_speed_bracket(cfg, factory, seed, workers, outdir):
    sec = cfg["speed_bracket"]
    horizons = [float(h) for h in sec["horizons_seconds"]]
    grid = sec.get("v_grid_sites_per_second")
    if grid is None:
        lo, hi, step = (
            float(sec["v_grid_start"]),
            float(sec["v_grid_stop"]),
            float(sec["v_grid_step"]),
        )
        grid = list(np.arange(lo, hi + step / 2, step))
    n = int(sec["samples"])
    rep = estimate_speed_bracket(horizons, grid, n, factory, threads=workers)
    ph = Path(outdir) / "p_h.csv"
    _emit_ph_rows(rep.p_curve, ph)
    pt = Path(outdir) / "p_tilde_h.csv"
    _emit_ph_rows(rep.ptilde_curve, pt)
    br = Path(outdir) / "bracket.csv"
    rows = [
        (h, rep.per_h[h][0], rep.per_h[h][1], rep.status)
        for h in horizons
    ]
    csvio.write_csv(br, ["H", "v_minus_hat", "v_plus_hat", "status"], rows)
    return [ph, pt, br]


def cmd_decoupling(cfg, factory, seed, workers, outdir):
    sec = cfg["decoupling"]
    params = DecouplingParams(
        float(sec["v_circ_sites_per_second"]),
        float(sec["kappa_circ"]),
        float(sec["c_circ"]),
        float(sec["c2"]),
        float(sec["c3"]),
        float(sec["gamma_circ"]),
    )
    s = float(sec["s_seconds"])
    d_v = float(sec["d_v_seconds"])
    width = float(sec.get("support_width_sites", 10.0))
    threshold = float(sec.get("occupation_threshold", width / 4.0))
    n = int(sec["samples"])
    t_eval = float(sec.get("t_eval_seconds", d_v + 2 * s))
    rows = []
    for d_h in sec["d_h_sites"]:
        d_h = float(d_h)
        b1 = Region(-math.inf, 0.0, 0.0, t_eval)
        b2 = Region(d_h, math.inf, 0.0, t_eval)
        f1 = BoxFunctional("occupation", Region(-width, 0.0, 0.0, t_eval), threshold, t_eval=t_eval)
        f2 = BoxFunctional("occupation", Region(d_h, d_h + width, 0.0, t_eval), threshold, t_eval=t_eval)
        out = decoupling_gap(factory, b1, b2, f1, f2, n, params, threads=workers)
        rows.append((out.dist_h, d_v, s, out.gap_hat, out.stderr, out.bound))
    path = Path(outdir) / "decoupling.csv"
    csvio.write_csv(path, ["d_h", "d_v", "s", "gap_hat", "stderr", "bound"], rows)
    return [path]


def cmd_traps(cfg, factory, seed, workers, outdir):
    sec = cfg["traps"]
    k = float(sec["K_seconds"])
    r = int(sec["r"])
    v_plus = float(sec["v_plus_sites_per_second"])
    v_minus = float(sec["v_minus_sites_per_second"])
    theta = float(sec.get("theta_sites_per_second", (v_plus - v_minus) / 6.0))
    n = int(sec["samples"])
    from .walker import cone_bounds

    def one(replica):
        span = r * k * max(abs(v_plus), 1.0) + 2 * theta * k + 4
        c_lo, c_hi = cone_bounds(-int(span) - 2, int(span) + 2, r * k, factory.rate_model)
        real = factory.make(replica, c_lo, c_hi + 1, r * k)
        trapped = is_trapped((0.0, 0.0), k, theta, v_minus, real)
        threatened, first_j = is_threatened((0.0, 0.0), k, r, v_plus, theta, v_minus, real)
        outcome = verify_threat_dichotomy(StartPoint(0, 0.0), k, r, v_plus, theta, real, v_minus)
        return trapped, threatened, first_j, outcome

    rows = []
    for replica, (trapped, threatened, first_j, outcome) in enumerate(replica_map(one, n, workers)):
        rows.append((replica, int(trapped), int(threatened), -1 if first_j is None else first_j, outcome))
    path = Path(outdir) / "traps.csv"
    csvio.write_csv(path, ["replica", "trapped", "threatened", "first_j", "outcome"], rows)
    return [path]


def cmd_ballisticity(cfg, factory, seed, workers, outdir):
    sec = cfg["ballisticity"]
    rows = ballisticity_curve(
        factory,
        float(sec["v_star_sites_per_second"]),
        [float(t) for t in sec["t_grid_seconds"]],
        int(sec["samples"]),
        params=ballisticity_params(sec),
        threads=workers,
    )
    path = Path(outdir) / "ballisticity.csv"
    csvio.write_csv(path, ["t", "p_hat", "bound"], [(r.t, r.p_hat, r.bound) for r in rows])
    return [path]


def cmd_lln(cfg, factory, seed, workers, outdir):
    sec = cfg["lln"]
    rows, v_hat = lln_curve(
        factory,
        [float(t) for t in sec["t_grid_seconds"]],
        int(sec["samples"]),
        epsilon=float(sec.get("epsilon_sites_per_second", 0.1)),
        threads=workers,
    )
    path = Path(outdir) / "lln.csv"
    csvio.write_csv(
        path, ["t", "mean_speed", "sd", "dev_prob"], [(r.t, r.mean_speed, r.sd, r.dev_prob) for r in rows]
    )
    return [path]


def cmd_deviation(cfg, factory, seed, workers, outdir):
    sec = cfg["deviation"]
    fit = submartingale_deviation_fit(
        factory,
        float(sec["u_drift_sites_per_second"]),
        float(sec["epsilon_sites_per_second"]),
        [float(t) for t in sec["t_grid_seconds"]],
        int(sec["samples"]),
        probe_occupations=range(len(factory.rate_model.alpha)),
        threads=workers,
    )
    path = Path(outdir) / "deviation.csv"
    rows = [
        (float(t), e.p_hat, e.ci_low, e.ci_high, e.n)
        for t, e in zip(fit.t_grid, fit.p_hats)
    ]
    csvio.write_csv(path, ["t", "p_hat", "ci_low", "ci_high", "n"], rows)
    return [path]


COMMANDS = {
    "simulate-env": cmd_simulate_env,
    "walk": cmd_walk,
    "estimate-ph": cmd_estimate_ph,
    "speed-bracket": cmd_speed_bracket,
    "decoupling": cmd_decoupling,
    "traps": cmd_traps,
    "ballisticity": cmd_ballisticity,
    "lln": cmd_lln,
    "deviation": cmd_deviation,
}


def run(config_path, seed=None, workers=None, outdir=None, strict_scales=False, kind=None) -> int:
    """Execute the experiment described by the config; returns an exit code."""
    started = time.time()
    config_text = Path(config_path).read_text()
    try:
        cfg = load_toml(config_path)
    except Exception as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2
    report = validate_config(cfg, strict_scales=strict_scales)
    if not report.ok:
        for path, msg in report.failures:
            print(f"invalid config at {path}: {msg}", file=sys.stderr)
        return 2
    kind = kind or cfg["experiment"]["kind"]
    if seed is None:
        seed = int(cfg["run"]["seed"])
    if workers is None:
        workers = int(os.environ.get("RWDRE_THREADS", cfg["run"].get("workers", 1)))
    if outdir is None:
        outdir = cfg["run"].get("output_dir", "out")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        rate_model = build_rate_model(cfg)
        env_spec = build_env_spec(cfg)
        factory = RealizationFactory(seed, rate_model, env_spec)
        files = COMMANDS[kind](cfg, factory, seed, workers, outdir)
    except ConfigError as exc:
        for path, msg in exc.failures:
            print(f"invalid config at {path}: {msg}", file=sys.stderr)
        return 2
    except CoverageError as exc:
        print(f"coverage failure: {exc}", file=sys.stderr)
        return 3
    csvio.write_manifest(outdir, config_text, seed, files, started)
    for f in files:
        print(f"wrote {f}")
    return 0


def validate(config_path, strict_scales=False) -> int:
    """Dry-run validation; prints a report, never simulates."""
    try:
        cfg = load_toml(config_path)
    except Exception as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2
    report = validate_config(cfg, strict_scales=strict_scales)
    if report.ok:
        print("configuration valid")
        return 0
    for path, msg in report.failures:
        print(f"invalid config at {path}: {msg}")
    return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rwdre", description="random walks in dynamic random environments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*EXPERIMENT_KINDS, "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, default=None, metavar="N")
        p.add_argument("--replicas", type=int, default=None, metavar="N", help="worker count cap")
        p.add_argument("--out", default=None, metavar="DIR")
        p.add_argument("--strict-scales", action="store_true")
    args = parser.parse_args(argv)
    if args.command == "validate":
        return validate(args.config, strict_scales=args.strict_scales)
    return run(
        args.config,
        seed=args.seed,
        workers=args.replicas,
        outdir=args.out,
        strict_scales=args.strict_scales,
        kind=args.command,
    )


if __name__ == "__main__":
    sys.exit(main())
