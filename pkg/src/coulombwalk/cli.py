"""Command-line front door.

Subcommands wrap the owning modules: sample (path dump), energy (functionals
of a stored path), mcmc (one chain), estimate-z (the three estimators),
verify-bounds (closed-form tables), sweep (configured experiments).

Exit codes: 0 success, 1 validation error, 2 experiment-cell failure,
3 internal-consistency error. Numeric output is printed with 17 significant
digits so bit-reproducibility can be checked from the outside. The --threads
and --out flags may also be set via COULOMBWALK_THREADS / COULOMBWALK_OUT.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from importlib import resources

from . import bounds
from .core import (
    ConsistencyError,
    DegeneratePathError,
    DomainError,
    ModelParams,
    ParameterError,
    SeedSpec,
)
from .estimators import default_beta_grid, estimate_record, z_girsanov, z_naive, z_thermo
from .harness import ExperimentConfig, run_experiment
from .mcmc import McmcConfig, run_chain
from .paths import dump_path_csv, load_path_csv, sample_path
from . import functionals as fn
from ._kernels import set_workers

THREADS_ENV = "COULOMBWALK_THREADS"
OUT_ENV = "COULOMBWALK_OUT"


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit_table(rows: list[dict], fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(rows, indent=1, default=_fmt) + "\n")
        return
    if not rows:
        return
    columns = list(rows[0].keys())
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join("" if row.get(c) is None else _fmt(row.get(c)) for c in columns) + "\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="coulombwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, beta=False, mu=False):
        p.add_argument("--T", type=float, default=1.0, help="time horizon")
        p.add_argument("--n", type=int, default=64, help="number of grid steps")
        if beta:
            p.add_argument("--beta", type=float, default=0.0, help="penalization strength")
        if mu:
            p.add_argument("--mu", type=float, default=1.0, help="drift magnitude along e1")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--stream", type=int, default=0, help="stream index")
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=None, help="worker threads")

    p = sub.add_parser("sample", help="draw one path and dump it as CSV")
    common(p, mu=True)
    p.set_defaults(mu=0.0)

    p = sub.add_parser("energy", help="functionals of a stored path")
    p.add_argument("--input", default=None, help="path CSV (i,t,x,y,z)")
    p.add_argument("--fixture", choices=("straight-line",), default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("mcmc", help="run one penalized-measure chain")
    common(p, beta=True)
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--moves-per-sweep", type=int, default=1)
    p.add_argument("--ar-step", type=float, default=0.3)
    p.add_argument("--block-len", type=int, default=8)
    p.add_argument("--no-adapt", action="store_true")
    p.add_argument("--trace", default=None, help="per-sweep trace CSV file")

    p = sub.add_parser("estimate-z", help="partition-function estimators")
    common(p, beta=True, mu=True)
    p.add_argument("--method", choices=("all", "naive", "girsanov", "thermo"), default="all")
    p.add_argument("--m", type=int, default=10_000, help="Monte Carlo sample count")
    p.add_argument("--sweeps", type=int, default=4000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--grid-nodes", type=int, default=6, help="thermo beta-grid nodes")
    p.set_defaults(format="json")

    p = sub.add_parser("verify-bounds", help="closed-form kernel and bound tables")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--u", default="0.1,1,2,4,10", help="comma-separated kernel arguments")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("sweep", help="run a configured experiment")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON file")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--threads", type=int, default=None)
    return parser


def _resolve_threads(args) -> None:
    threads = getattr(args, "threads", None)
    if threads is None and os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    if threads is not None:
        if threads < 1:
            raise ParameterError(f"--threads must be >= 1, got {threads}")
        set_workers(threads)


def _resolve_out(args):
    out = getattr(args, "out", None)
    if out is None and os.environ.get(OUT_ENV):
        out = os.environ[OUT_ENV]
    return out


def _open_out(out_path, stdout):
    if out_path is None:
        return stdout, False
    return open(out_path, "w"), True


def _cmd_sample(args, stdout) -> int:
    params = ModelParams(beta=0.0, horizon_T=args.T, n_steps=args.n, drift_mu=args.mu)
    path = sample_path(params, SeedSpec(args.seed, args.stream))
    out, close = _open_out(_resolve_out(args), stdout)
    try:
        if args.format == "json":
            times = path.grid.nodes()
            rows = [
                {"i": i, "t": times[i], "x": path.positions[i, 0],
                 "y": path.positions[i, 1], "z": path.positions[i, 2]}
                for i in range(path.grid.n_nodes)
            ]
            out.write(json.dumps(rows, default=_fmt) + "\n")
        else:
            dump_path_csv(path, out)
    finally:
        if close:
            out.close()
    return 0


def _load_fixture_path():
    ref = resources.files("coulombwalk") / "fixtures" / "straight_line_n2.csv"
    return load_path_csv(io.StringIO(ref.read_text()))


def _cmd_energy(args, stdout) -> int:
    if (args.input is None) == (args.fixture is None):
        raise ParameterError("energy needs exactly one of --input or --fixture")
    if args.fixture:
        path = _load_fixture_path()
    else:
        with open(args.input) as fh:
            path = load_path_csv(fh)
    coulomb, clamped = fn.coulomb_energy_diagnostics(path)
    holder = fn.holder_check(path)
    row = {
        "n": path.n_steps,
        "T": path.grid.horizon_T,
        "coulomb": coulomb,
        "rg_pairwise": fn.radius_gyration_pairwise(path),
        "rg_centered": fn.radius_gyration_centered(path),
        "endpoint_x1": float(path.positions[-1, 0]),
        "log_gibbs_weight": -args.beta * coulomb,
        "holder_product": holder.product,
        "clamped_pairs": clamped,
    }
    out, close = _open_out(_resolve_out(args), stdout)
    try:
        _emit_table([row], args.format, out)
    finally:
        if close:
            out.close()
    return 0


def _cmd_mcmc(args, stdout) -> int:
    params = ModelParams(beta=args.beta, horizon_T=args.T, n_steps=args.n)
    cfg = McmcConfig(
        n_sweeps=args.sweeps,
        burn_in=args.burn_in,
        thinning=args.thin,
        seed=SeedSpec(args.seed, args.stream),
        ar_step_s=args.ar_step,
        block_len=args.block_len,
        adapt=not args.no_adapt,
        moves_per_sweep=args.moves_per_sweep,
    )
    trace = open(args.trace, "w") if args.trace else None
    try:
        output = run_chain(params, cfg, trace=trace)
    finally:
        if trace:
            trace.close()
    fs = output.functionals
    stats = output.stats
    row = {
        "T": args.T, "n": args.n, "beta": args.beta,
        "retained": len(fs),
        "mean_coulomb": float(fs.coulomb.mean()),
        "mean_rg": float(fs.rg.mean()),
        "mean_endpoint_x1": float(fs.endpoint_x1.mean()),
        "iact_sweeps": stats.iact,
        "ess": stats.ess,
        "accept_pivot": stats.acceptance["pivot"],
        "accept_global_ar": stats.acceptance["global_ar"],
        "accept_block": stats.acceptance["block"],
        "clamp_events": stats.clamp_events,
        "final_ar_step_s": stats.final_ar_step_s,
    }
    out, close = _open_out(_resolve_out(args), stdout)
    try:
        _emit_table([row], args.format, out)
    finally:
        if close:
            out.close()
    return 0


def _cmd_estimate_z(args, stdout) -> int:
    params = ModelParams(beta=args.beta, horizon_T=args.T, n_steps=args.n)
    seed = SeedSpec(args.seed, args.stream)
    records = []
    if args.method in ("all", "naive"):
        records.append(estimate_record(z_naive(params, args.m, seed), params))
    if args.method in ("all", "girsanov"):
        est = z_girsanov(params, args.m, seed.stream(args.stream + 1), mu=args.mu)
        records.append(estimate_record(est, params, mu=args.mu))
    if args.method in ("all", "thermo"):
        cfg = McmcConfig(
            n_sweeps=args.sweeps, burn_in=args.burn_in,
            seed=seed.stream(args.stream + 100),
        )
        thermo = z_thermo(params, default_beta_grid(args.beta, args.grid_nodes), cfg)
        records.append(
            estimate_record(
                thermo.estimate, params,
                trapezoid_bias_bound=thermo.trapezoid_bias_bound,
            )
        )
    out, close = _open_out(_resolve_out(args), stdout)
    try:
        _emit_table(records, args.format, out)
    finally:
        if close:
            out.close()
    return 0


def _cmd_verify_bounds(args, stdout) -> int:
    T, beta = args.T, args.beta
    c1 = args.c1 if args.c1 is not None else bounds.C1_DEFAULT
    c2 = args.c2 if args.c2 is not None else (bounds.default_c2(beta) if beta > 0 else None)
    rows = []

    def add(quantity, value, note=""):
        rows.append({"quantity": quantity, "T": T, "beta": beta, "value": value, "note": note})

    window = bounds.scaling_window(T, beta, c1=c1, c2=c2)
    add("window_low", window.low, f"c1={_fmt(c1)}")
    add("window_high", window.high, f"c2={_fmt(window.c2)}")
    add("window_valid", float(window.valid), "T > e^2")
    for u_str in str(args.u).split(","):
        u = float(u_str)
        kernel = bounds.drift_kernel(u)
        rows.append(
            {"quantity": f"drift_kernel(u={u_str})", "T": T, "beta": beta,
             "value": kernel, "note": f"bound {_fmt(bounds.drift_kernel_bound(u))}"}
        )
    energy = bounds.drifted_energy(T)
    add("drifted_energy_exact", energy.exact, "2*int (T-u) k(u) du")
    add("drifted_energy_time_form", energy.time_integral_form, "T*int k(u) du")
    for name, producer in (
        ("drifted_energy_closed_bound", lambda: bounds.drifted_energy_closed_bound(T, doubled=True)),
        ("drifted_energy_log_bound", lambda: bounds.drifted_energy_log_bound(T)),
        ("small_radius_weight_bound", lambda: bounds.small_radius_weight_bound(T, beta, c1)),
        ("large_radius_prob_bound", lambda: bounds.large_radius_prob_bound(T, window.c2)),
        ("partition_lower_literal", lambda: bounds.partition_lower_bound(T, beta)),
        ("partition_lower_doubled", lambda: bounds.partition_lower_bound(T, beta, doubled=True)),
        ("tilted_small_radius_bound", lambda: bounds.tilted_small_radius_bound(T, beta, c1)),
        ("tilted_large_radius_bound", lambda: bounds.tilted_large_radius_bound(T, beta, window.c2)),
        ("partition_small_beta", lambda: bounds.partition_small_beta(T, beta)),
    ):
        try:
            add(name, producer())
        except DomainError as exc:
            rows.append({"quantity": name, "T": T, "beta": beta, "value": None, "note": str(exc)})
    out, close = _open_out(_resolve_out(args), stdout)
    try:
        _emit_table(rows, args.format, out)
    finally:
        if close:
            out.close()
    return 0


def _cmd_sweep(args, stdout) -> int:
    with open(args.config) as fh:
        cfg = ExperimentConfig.from_json(fh.read())
    out_dir = _resolve_out(args) or cfg.out_dir
    report = run_experiment(cfg)
    if out_dir:
        written = report.write(out_dir, cfg.out_format)
        stdout.write("\n".join(str(p) for p in written) + "\n")
    else:
        stdout.write(report.to_json_bytes().decode() + "\n")
    return 2 if report.failures else 0


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve_threads(args)
        handler = {
            "sample": _cmd_sample,
            "energy": _cmd_energy,
            "mcmc": _cmd_mcmc,
            "estimate-z": _cmd_estimate_z,
            "verify-bounds": _cmd_verify_bounds,
            "sweep": _cmd_sweep,
        }[args.command]
        return handler(args, stdout)
    except (_CliError, ParameterError, DomainError, DegeneratePathError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return 1
    except ConsistencyError as exc:
        stderr.write(f"internal consistency error: {exc}\n")
        return 3
    except OSError as exc:
        stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
