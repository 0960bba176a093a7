"""Command-line front end.

Subcommands: table1, sweep, scale, counterexample, eval, simulate.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import experiments
from .errors import CollisionError, ConfigError, NumericsError
from .h2 import synthesize
from .search import classify, reproduce_counterexample
from .sim import DisturbanceSpec, SimConfig, simulate
from .traffic import (
    Formation,
    HdvParams,
    LinearHdvCoeffs,
    PerformanceWeights,
    build_reduced,
    linearize,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output path (CSV or JSON, command dependent)")
    common.add_argument("--threads", type=int, help="parallel workers for grid cells")
    common.add_argument("--seed", type=int, help="seed for stochastic disturbances")
    return common


def _ovm_flags(parser: argparse.ArgumentParser, with_driver: bool = True) -> None:
    if with_driver:
        parser.add_argument("--alpha", type=float, default=0.6)
        parser.add_argument("--beta", type=float, default=0.9)
        parser.add_argument("--s-star", type=float, default=20.0)
    parser.add_argument("--v-max", type=float, default=30.0)
    parser.add_argument("--s-st", type=float, default=5.0)
    parser.add_argument("--s-go", type=float, default=35.0)


def _weight_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma-s", type=float, default=0.01)
    parser.add_argument("--gamma-v", type=float, default=0.05)
    parser.add_argument("--gamma-u", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avformation",
        description="Optimal formation of autonomous vehicles in ring-road mixed traffic",
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("table1", parents=[common],
                   help="brute-force optimum for the three published parameter rows")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="formation search over an (alpha, beta, s*) grid")
    p_sweep.add_argument("--n", type=int)
    p_sweep.add_argument("--k", type=int)
    p_sweep.add_argument("--alpha-count", type=int)
    p_sweep.add_argument("--beta-count", type=int)
    p_sweep.add_argument("--s-star-count", type=int)

    p_scale = sub.add_parser("scale", parents=[common],
                             help="platoon vs uniform across ring sizes")
    p_scale.add_argument("--n-list", default="8,12,16,20,24")
    p_scale.add_argument("--k", type=int, default=4)
    _ovm_flags(p_scale)
    _weight_flags(p_scale)

    p_ce = sub.add_parser("counterexample", parents=[common],
                          help="reproduce the submodularity counterexample")
    p_ce.add_argument("--n", type=int, help="ring-size override")

    p_eval = sub.add_parser("eval", parents=[common],
                            help="evaluate one formation and export the gain")
    p_eval.add_argument("--n", type=int, required=True)
    p_eval.add_argument("--members", required=True, help="formation label, e.g. 1-4-7-10")
    p_eval.add_argument("--alpha1", type=float, help="linearized coefficients given directly")
    p_eval.add_argument("--alpha2", type=float)
    p_eval.add_argument("--alpha3", type=float)
    _ovm_flags(p_eval)
    _weight_flags(p_eval)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="nonlinear ring-road simulation with synthesized control")
    p_sim.add_argument("--n", type=int, default=12)
    p_sim.add_argument("--members", default="1-4-7-10")
    p_sim.add_argument("--dt", type=float, default=0.01)
    p_sim.add_argument("--horizon", type=float, default=100.0)
    p_sim.add_argument("--disturbance", choices=list(("impulse", "brake-pulse", "band-limited-noise")),
                       default="brake-pulse")
    p_sim.add_argument("--target", type=int, help="disturbed vehicle (default: first HDV)")
    p_sim.add_argument("--magnitude", type=float, default=1.0)
    p_sim.add_argument("--duration", type=float, default=1.0)
    p_sim.add_argument("--linearized", action="store_true")
    p_sim.add_argument("--gains", help="JSON gain file from `eval` (default: synthesize)")
    _ovm_flags(p_sim)
    _weight_flags(p_sim)
    return parser


def _weights(args) -> PerformanceWeights:
    return PerformanceWeights(args.gamma_s, args.gamma_v, args.gamma_u)


def _hdv(args) -> HdvParams:
    return HdvParams(args.alpha, args.beta, args.v_max, args.s_st, args.s_go)


def cmd_table1(args) -> int:
    rows = experiments.run_table1()
    print("alpha  beta  s*    best formation   class     J")
    lines = []
    for row in rows:
        line = (f"{row.alpha:<5g} {row.beta:<5g} {row.s_star:<5g} "
                f"{row.best.label():<16} {row.best_class:<9} {experiments.fmt(row.best_j)}")
        print(line)
        lines.append(row)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("alpha,beta,s_star,best_formation,best_class,best_J,"
                     "worst_formation,worst_class,worst_J\n")
            for row in lines:
                fh.write(",".join([
                    experiments.fmt(row.alpha), experiments.fmt(row.beta),
                    experiments.fmt(row.s_star), row.best.label(), row.best_class,
                    experiments.fmt(row.best_j), row.worst.label(), row.worst_class,
                    experiments.fmt(row.worst_j),
                ]) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        cfg = experiments.load_config(args.config)
    else:
        cfg = experiments.ExperimentConfig()
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.k is not None:
        overrides["k"] = args.k
    if args.alpha_count is not None:
        overrides["alpha_grid"] = experiments.closed_grid(0.1, 1.5, args.alpha_count)
    if args.beta_count is not None:
        overrides["beta_grid"] = experiments.closed_grid(0.1, 1.5, args.beta_count)
    if args.s_star_count is not None:
        overrides["s_star_grid"] = experiments.interior_grid(5.0, 35.0, args.s_star_count)
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    records = experiments.run_sweep(cfg)
    out = cfg.out or "sweep.csv"
    experiments.write_sweep_csv(records, out)
    errors = sum(1 for r in records if r.error is not None)
    print(f"wrote {len(records)} records to {out} ({errors} error cells)")
    return EXIT_OK


def cmd_scale(args) -> int:
    try:
        n_list = [int(tok) for tok in args.n_list.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"bad --n-list: {exc}") from exc
    rows = experiments.run_scale(n_list, args.k, _hdv(args), args.s_star, _weights(args))
    print("n     J_platoon      J_uniform      gap")
    for row in rows:
        print(f"{row.n:<5d} {experiments.fmt(row.j_platoon):<14} "
              f"{experiments.fmt(row.j_uniform):<14} {experiments.fmt(row.gap)}")
    if args.out:
        experiments.write_scale_csv(rows, args.out)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    report = reproduce_counterexample(args.n)
    sub = report.report
    print(f"ring size n = {report.n}"
          + (f" (scanned: {', '.join(f'n={n} dev={d:.4f}' for n, d in report.scan)})"
             if report.scan else ""))
    print(f"J(S1)        = {sub.j_s1:.4f}   (S1 = {sub.s1.label()})")
    print(f"J(S1 + e)    = {sub.j_s1_with_e:.4f}")
    print(f"J(S2)        = {sub.j_s2:.4f}   (S2 = {sub.s2.label()})")
    print(f"J(S2 + e)    = {sub.j_s2_with_e:.4f}   (e = {sub.element})")
    print(f"marginal gain small set = {sub.gain_small:.4f}")
    print(f"marginal gain large set = {sub.gain_large:.4f}")
    print(f"submodularity inequality holds: {sub.holds}")
    print(f"published values matched within {report.max_deviation:.4f} "
          f"({'ok' if report.values_match else 'MISMATCH'})")
    return EXIT_OK


def cmd_eval(args) -> int:
    formation = Formation.from_label(args.n, args.members)
    weights = _weights(args)
    direct = (args.alpha1, args.alpha2, args.alpha3)
    if any(v is not None for v in direct):
        if any(v is None for v in direct):
            raise ConfigError("provide all of --alpha1/--alpha2/--alpha3 or none")
        coeffs = LinearHdvCoeffs(args.alpha1, args.alpha2, args.alpha3)
    else:
        coeffs = linearize(_hdv(args), args.s_star)
    rr = build_reduced(coeffs, formation, weights)
    synthesis = synthesize(rr)
    j_value = -synthesis.value
    payload = {
        "n": args.n,
        "members": list(formation.members),
        "class": classify(formation).value,
        "J": j_value,
        "P_trace": float(np.trace(synthesis.P)),
        "K": synthesis.K.tolist(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"J = {experiments.fmt(j_value)}  ({classify(formation).value}); "
              f"gain written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    formation = Formation.from_label(args.n, args.members)
    hdv = _hdv(args)
    weights = _weights(args)
    if args.gains:
        try:
            payload = json.loads(open(args.gains).read())
            gain = np.asarray(payload["K"], dtype=float)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read gains from {args.gains}: {exc}") from exc
    else:
        rr = build_reduced(linearize(hdv, args.s_star), formation, weights)
        gain = synthesize(rr).K
    target = args.target
    if target is None:
        hdv_indices = [i for i in range(1, args.n + 1) if i not in formation.members]
        target = hdv_indices[0] if hdv_indices else 1
    disturbance = DisturbanceSpec(
        kind=args.disturbance,
        target=target,
        magnitude=args.magnitude,
        duration=args.duration,
        seed=args.seed if args.seed is not None else 0,
    )
    cfg = SimConfig(
        formation=formation,
        hdv=hdv,
        s_star=args.s_star,
        weights=weights,
        gain=gain,
        dt=args.dt,
        horizon=args.horizon,
        disturbance=disturbance,
        linearized=args.linearized,
    )
    trajectory = simulate(cfg)
    out = args.out or "trajectory.csv"
    trajectory.to_csv(out)
    dev = float(abs(trajectory.velocity_error).max())
    print(f"simulated {args.horizon} s ({trajectory.t.shape[0]} samples), "
          f"peak velocity deviation {dev:.4f} m/s; wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "table1": cmd_table1,
    "sweep": cmd_sweep,
    "scale": cmd_scale,
    "counterexample": cmd_counterexample,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericsError, CollisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
