"""Command line entry point: ``plasma2d <subcommand> [options]``.

Every subcommand accepts --seed, --out, --workers and --config.  The config file
is INI: a [common] section and one section per subcommand whose keys are the
long option names with dashes replaced by underscores.  A manifest.json from an
earlier run is also accepted and replays that run.  Flags override file values.
Each run writes manifest.json with the resolved configuration, and every payload
carries the seed, the configuration hash and the package version.

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from plasma2d import __version__
from plasma2d.io import append_csv_row, atomic_write_text, csv_text, read_csv_rows, stamp, write_json

COMMON = [
    ("seed", int, 0, "random seed"),
    ("out", str, "out", "output directory"),
    ("workers", int, 1, "worker threads (affects wall time only)"),
]

SCHEMAS = {
    "energy-check": [
        ("points", str, None, "CSV file with header sign,x,y"),
        ("n_random", int, None, "number of random configs instead of --points"),
        ("max_n", int, 10, "largest N for random configs"),
        ("tol", float, 1e-3, "refinement tolerance on the normalised field energy"),
        ("max_cells", int, 1_000_000, "cell budget"),
        ("min_cell_rel", float, 1e-3, "forced refinement size relative to min r"),
        ("half_width", float, None, "quadrature box half-width (default 2(diam+1))"),
    ],
    "sample": [
        ("N", int, 8, "pairs"),
        ("beta", float, 1.0, "inverse temperature"),
        ("n_samples", int, 1000, "recorded samples"),
        ("burn_in", int, 10_000, "discarded steps"),
        ("thin", int, 100, "steps between samples"),
        ("proposal_scale", float, None, "single-move half-side (default 0.25/sqrt N)"),
        ("move_mix", str, "0.6,0.3,0.1", "single,dipole,resample probabilities"),
        ("cross_weight", float, 1.0, "weight of the +/- cross sum"),
        ("bins", int, 4, "bins per side for the uniformity trace"),
    ],
    "zn": [
        ("N", int, 1, "pairs"),
        ("beta", float, 1.0, "inverse temperature"),
        ("n_samples", int, 100_000, "Monte Carlo samples"),
        ("method", str, "importance", "importance or direct"),
        ("cross_weight", float, 1.0, "weight of the +/- cross sum"),
        ("dipole", int, 0, "1 to estimate the dipole-only integral instead"),
    ],
    "digraph": [
        ("enumerate", int, 0, "1 to emit the exact counts table"),
        ("M", str, "4", "comma-separated M values (enumeration) or point count (sweep)"),
        ("n_configs", int, 1000, "random configurations in the structural sweep"),
    ],
    "profile": [
        ("N", int, 64, "pairs"),
        ("beta", float, 1.0, "inverse temperature"),
        ("R", str, "2,4", "comma-separated window sides"),
        ("n_samples", int, 200, "configurations"),
        ("n_tags", int, 64, "uniform tags per configuration"),
        ("burn_in", int, 50_000, "discarded steps"),
        ("thin", int, 2_000, "steps between configurations"),
        ("iid", int, 0, "1 for i.i.d. uniform configurations instead of a chain"),
    ],
    "gmc": [
        ("beta", float, 0.8, "chaos parameter"),
        ("r", float, 8.0, "disk radius"),
        ("eps", float, None, "circle-average radius (default half the grid spacing)"),
        ("grid_n", int, 32, "grid points per side"),
        ("n_draws", int, 1000, "field draws"),
        ("k", str, "1", "comma-separated moment orders"),
        ("n_angle", int, 64, "angular Gauss order"),
    ],
    "tail": [
        ("table", str, None, "moment table CSV (k,log_moment,std_err)"),
        ("synthetic", str, None, "built-in table: klogk"),
        ("k_max", int, 6, "rows of the synthetic table"),
        ("x", str, None, "comma-separated x values"),
        ("x_min", float, 2.0, "scan start"),
        ("x_max", float, 20.0, "scan end"),
        ("n_x", int, 10, "scan points (log spaced)"),
    ],
}


class UsageError(ValueError):
    pass


def _ints(s: str) -> list[int]:
    return [int(v) for v in str(s).split(",") if v.strip()]


def _floats(s: str) -> list[float]:
    return [float(v) for v in str(s).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plasma2d", description="2D two-component plasma toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="INI configuration file")
        for key, typ, _, hlp in COMMON + schema:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=hlp)
    return p


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    schema = COMMON + SCHEMAS[command]
    out = {key: default for key, _, default, _ in schema}
    if args.config and args.config.endswith(".json"):
        # replay a previous run from its manifest
        try:
            saved = json.loads(Path(args.config).read_text())["config"]
        except (OSError, KeyError, ValueError) as e:
            raise UsageError(f"cannot read manifest {args.config}: {e}") from None
        if saved.get("command") != command:
            raise UsageError(f"manifest is for {saved.get('command')!r}, not {command!r}")
        out.update({k: v for k, v in saved.items() if k in out})
    elif args.config:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        types = {key: typ for key, typ, _, _ in schema}
        for section in ("common", command):
            if cp.has_section(section):
                for key, val in cp.items(section):
                    if key not in types:
                        raise UsageError(f"unknown key {key!r} in section [{section}]")
                    out[key] = types[key](val)
    for key, *_ in schema:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    out["command"] = command
    return out


def _beta_plasma(beta: float) -> None:
    if not 0 <= beta < 2:
        raise UsageError(f"beta={beta} violates the stability range β < 2 (need 0 <= β < 2)")


def _outdir(cfg) -> Path:
    d = Path(cfg["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- subcommands ------------------------------------------------------------------

def cmd_energy_check(cfg: dict) -> dict:
    from plasma2d.energy import QuadBudget, energy_identity_check
    from plasma2d.geometry import SignedConfig

    budget = QuadBudget(tol=cfg["tol"], max_cells=cfg["max_cells"],
                        min_cell_rel=cfg["min_cell_rel"], half_width=cfg["half_width"])
    if cfg["points"]:
        try:
            configs = [SignedConfig.from_csv(Path(cfg["points"]).read_text())]
        except (OSError, ValueError) as e:
            raise UsageError(f"bad points file: {e}") from None
        if len(configs[0]) == 0:
            raise UsageError("points file contains no points")
    elif cfg["n_random"]:
        rng = np.random.default_rng(cfg["seed"])
        configs = [SignedConfig.random_uniform(int(rng.integers(1, cfg["max_n"] + 1)), rng=rng)
                   for _ in range(cfg["n_random"])]
    else:
        raise UsageError("give --points FILE or --n-random K")
    results = []
    for c in configs:
        b = energy_identity_check(c, budget)
        d = json.loads(b.to_json())
        d["N"] = c.n_pos
        d["passes"] = b.passes
        results.append(d)
    payload = {"meta": stamp(cfg), "results": results}
    write_json(_outdir(cfg) / "energy_check.json", payload)
    return {"outputs": ["energy_check.json"], "summary": {"n": len(results),
            "all_pass": all(r["passes"] for r in results)}}


def cmd_sample(cfg: dict) -> dict:
    from plasma2d.empirical import bin_points, uniformity_distance
    from plasma2d.sampler import SimParams, run_chain

    _beta_plasma(cfg["beta"])
    params = SimParams(N=cfg["N"], beta=cfg["beta"], proposal_scale=cfg["proposal_scale"],
                       move_mix=tuple(_floats(cfg["move_mix"])), seed=cfg["seed"],
                       burn_in=cfg["burn_in"], thin=cfg["thin"], cross_weight=cfg["cross_weight"])
    k = cfg["bins"]
    obs = {f"tv_plus_k{k}": lambda s: uniformity_distance(bin_points(s.pos, k)),
           f"tv_minus_k{k}": lambda s: uniformity_distance(bin_points(s.neg, k))}
    rec = run_chain(params, cfg["n_samples"], obs)
    out = _outdir(cfg)
    meta = stamp(cfg)
    atomic_write_text(out / "trace.csv", "".join(f"# {k_}={v}\n" for k_, v in sorted(meta.items()))
                      + rec.to_csv())
    write_json(out / "acceptance.json", {"meta": meta, "acceptance": rec.acceptance})
    # the chain's wall time goes with the other timings, outside the payloads
    run_meta = {k: v for k, v in rec.metadata().items() if k != "wall_time"}
    write_json(out / "run_meta.json", {"meta": meta, **run_meta})
    return {"outputs": ["trace.csv", "acceptance.json", "run_meta.json"], "summary": rec.acceptance,
            "timing": {"chain_wall_time": rec.wall_time}}


def cmd_zn(cfg: dict) -> dict:
    from plasma2d.partition import estimate_dipole_integral, estimate_log_Z, log_K

    _beta_plasma(cfg["beta"])
    if cfg["dipole"]:
        est = estimate_dipole_integral(cfg["N"], cfg["beta"], cfg["n_samples"], cfg["seed"],
                                       cfg["workers"])
    else:
        est = estimate_log_Z(cfg["N"], cfg["beta"], cfg["n_samples"], cfg["method"], cfg["seed"],
                             cfg["cross_weight"], cfg["workers"])
    d = est.to_dict()
    d["log_K"] = log_K(est.N, est.beta, est.log_Z)
    d["quantity"] = "dipole_integral" if cfg["dipole"] else "partition_function"
    payload = {"meta": stamp(cfg), "estimate": d}
    out = _outdir(cfg)
    write_json(out / "zn.json", payload)
    append_csv_row(out / "zn_ledger.csv",
                   ["N", "beta", "method", "log_Z", "std_err", "n_samples", "seed"],
                   [est.N, est.beta, est.method, est.log_Z, est.std_err, est.n_samples, est.seed])
    print(json.dumps(d, sort_keys=True))
    return {"outputs": ["zn.json"], "summary": d}


def cmd_digraph(cfg: dict) -> dict:
    from plasma2d.digraph import build_nn_digraph, count_table

    out = _outdir(cfg)
    meta = stamp(cfg)
    Ms = _ints(cfg["M"])
    if cfg["enumerate"]:
        for M in Ms:
            if M < 2:
                raise UsageError("M must be at least 2")
        try:
            rows = count_table(Ms)
        except ValueError as e:
            raise UsageError(str(e)) from None
        text = csv_text(["M", "K", "exact", "bound", "ratio"],
                        [[r["M"], r["K"], r["exact"], r["bound"], r["ratio"]] for r in rows], meta)
        atomic_write_text(out / "digraph_counts.csv", text)
        return {"outputs": ["digraph_counts.csv"], "summary": rows}
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for i in range(cfg["n_configs"]):
        M = Ms[i % len(Ms)]
        g = build_nn_digraph(rng.random((M, 2)), check=False)
        rows.append([i, M, g.K, len(g.cycles), len(g.violations())])
    atomic_write_text(out / "digraph_sweep.csv",
                      csv_text(["config", "M", "K", "n_cycles", "violations"], rows, meta))
    return {"outputs": ["digraph_sweep.csv"],
            "summary": {"violations": int(sum(r[-1] for r in rows))}}


def cmd_profile(cfg: dict) -> dict:
    from plasma2d.empirical import averaged_window_profile, iid_trace
    from plasma2d.sampler import SimParams, run_chain

    _beta_plasma(cfg["beta"])
    if cfg["iid"]:
        trace = iid_trace(cfg["N"], cfg["n_samples"], cfg["seed"])
    else:
        params = SimParams(N=cfg["N"], beta=cfg["beta"], seed=cfg["seed"],
                           burn_in=cfg["burn_in"], thin=cfg["thin"])
        trace = run_chain(params, cfg["n_samples"], keep_configs=True).configs
    rows = []
    for R in _floats(cfg["R"]):
        p = averaged_window_profile(trace, cfg["N"], R, cfg["n_tags"], cfg["seed"])
        rows.append(list(p.csv_row().values()))
    header = ["R", "mean_intensity_plus", "mean_intensity_minus", "mean_abs_discrepancy",
              "mean_logr_density", "n_samples"]
    atomic_write_text(_outdir(cfg) / "profile.csv", csv_text(header, rows, stamp(cfg)))
    return {"outputs": ["profile.csv"], "summary": rows}


def cmd_gmc(cfg: dict) -> dict:
    from plasma2d.gmc import GffKernelParams, chaos_moments

    beta = cfg["beta"]
    if not 0 < beta < math.sqrt(2):
        raise UsageError(f"beta={beta} violates β² < 2 (need 0 < β < √2)")
    eps = cfg["eps"] if cfg["eps"] is not None else 0.5 / cfg["grid_n"]
    try:
        params = GffKernelParams(cfg["r"], eps, cfg["n_angle"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    ks = _ints(cfg["k"])
    m = chaos_moments(params, beta, ks, cfg["grid_n"], cfg["n_draws"], cfg["seed"], cfg["workers"])
    rows = [[k, math.log(v), se / v] for k, (v, se) in sorted(m.items())]
    meta = stamp(cfg)
    out = _outdir(cfg)
    atomic_write_text(out / "moments.csv", csv_text(["k", "log_moment", "std_err"], rows, meta))
    write_json(out / "gmc.json", {"meta": meta, "eps": eps,
                                  "moments": {str(k): {"mean": v, "std_err": se}
                                              for k, (v, se) in sorted(m.items())}})
    return {"outputs": ["moments.csv", "gmc.json"], "summary": rows}


def cmd_tail(cfg: dict) -> dict:
    from plasma2d.gmc import MomentTable, synthetic_klogk_table, tail_scan

    if cfg["synthetic"]:
        if cfg["synthetic"] != "klogk":
            raise UsageError("only --synthetic klogk is built in")
        table = synthetic_klogk_table(cfg["k_max"])
    elif cfg["table"]:
        try:
            rows = read_csv_rows(cfg["table"])
            table = MomentTable.from_rows([(int(r["k"]), float(r["log_moment"]), float(r["std_err"]))
                                           for r in rows])
        except (OSError, KeyError, ValueError) as e:
            raise UsageError(f"bad moment table: {e}") from None
    else:
        raise UsageError("give --table FILE or --synthetic klogk")
    if cfg["x"]:
        xs = _floats(cfg["x"])
    else:
        xs = np.geomspace(cfg["x_min"], cfg["x_max"], cfg["n_x"]).tolist()
    if any(x <= 0 for x in xs):
        raise UsageError("x values must be positive")
    scan = tail_scan(table, xs)
    atomic_write_text(_outdir(cfg) / "tail.csv",
                      csv_text(["x", "k_star", "log_prob_bound"], [list(s) for s in scan], stamp(cfg)))
    return {"outputs": ["tail.csv"], "summary": scan}


COMMANDS = {
    "energy-check": cmd_energy_check,
    "sample": cmd_sample,
    "zn": cmd_zn,
    "digraph": cmd_digraph,
    "profile": cmd_profile,
    "gmc": cmd_gmc,
    "tail": cmd_tail,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        t0 = time.perf_counter()
        result = COMMANDS[args.command](cfg)
    except ArithmeticError as e:
        print(f"plasma2d {args.command}: numerical failure: {e}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as e:
        print(f"plasma2d {args.command}: error: {e}", file=sys.stderr)
        return 2
    manifest = {"command": args.command, "config": cfg, **stamp(cfg),
                "outputs": result["outputs"]}
    out = Path(cfg["out"])
    write_json(out / "manifest.json", manifest)
    write_json(out / f"timing_{args.command}.json",
               {"wall_time": time.perf_counter() - t0, **result.get("timing", {})})
    return 0


if __name__ == "__main__":
    sys.exit(main())
