"""Command-line entry point: ``asynccache {gen,offline,online,sim,trace}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .dual import solve_via_decomposition
from .model import Instance, build_timeline
from .offline import interpret_schedule, solve_offline
from .online import Eta0Policy, run_online
from .sim import SimConfig, run_trials, summary_csv, trial_instance, trials_csv


def _write(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _add_system_args(p):
    p.add_argument("--K", type=int, default=6, help="users")
    p.add_argument("--N", type=int, default=6, help="files")
    p.add_argument("--M", type=float, default=2, help="cache size in files")
    p.add_argument("--F", type=int, default=20, help="parts per file (ignored for centralized)")
    p.add_argument("--r", type=int, default=1, help="packets per part")
    p.add_argument("--placement", choices=("centralized", "decentralized", "virtual"), default="decentralized")
    p.add_argument("--seed", type=int, default=0, help="64-bit master seed")


def cmd_gen(args) -> int:
    cfg = SimConfig(K=args.K, N=args.N, M=args.M, F=args.F, r=args.r, placement=args.placement,
                    seed=args.seed)
    lam = args.lam if args.lam is not None else 1.0 / (cfg.F * args.gap)
    inst = trial_instance(cfg, lam, np.random.default_rng(np.random.SeedSequence([args.seed, 0])))
    if args.field != inst.config.field_order:
        inst = Instance(dataclasses.replace(inst.config, field_order=args.field), inst.placement, inst.requests)
    _write(json.dumps(inst.to_json(), indent=1) + "\n", args.out)
    return 0


def cmd_offline(args) -> int:
    inst = Instance.load(args.instance)
    tl = build_timeline(inst)
    if args.dual:
        res = solve_via_decomposition(inst, iters=args.iters, alpha=args.alpha, timeline=tl)
        point = res.as_vars()
        print(f"status={res.status} objective={res.objective:.6f} averaged={res.averaged:.6f} "
              f"dual_bound={res.dual_value:.6f} iterations={res.iterations} source={res.y_source}")
    else:
        point = solve_offline(inst, timeline=tl)
        print(f"status={point.status} objective={point.objective:.6f}")
    if not point.feasible:
        return 1
    sched = interpret_schedule(point, tl)
    sched.validate(inst.r)
    if args.schedule:
        _write(sched.dumps() + "\n", args.schedule)
    if args.summary:
        _write(sched.summary_csv(point.objective), args.summary)
    return 0


def cmd_online(args) -> int:
    inst = Instance.load(args.instance)
    if args.field is not None and args.field != inst.config.field_order:
        inst = Instance(dataclasses.replace(inst.config, field_order=args.field), inst.placement, inst.requests)
    if args.eta0 is not None:
        policy = Eta0Policy(args.eta0)
    else:
        policy = Eta0Policy(args.eta0_a, args.eta0_b)
    res = run_online(inst, policy, seed=args.seed, gap=args.gap, coded=not args.uncoded,
                     emergency=args.emergency)
    line = f"status={res.status} packets={res.packets_sent} uncoded_load={inst.uncoded_load()}"
    if res.failed:
        line += f" missed_user={res.failed[0]} at={res.failed[1]}"
    else:
        line += f" all_decoded={int(res.all_decoded)}"
    print(line)
    if args.log:
        _write(res.log_json() + "\n", args.log)
    if args.decode:
        _write(res.decode_csv(), args.decode)
    return 0 if res.satisfied else 1


def cmd_sim(args) -> int:
    if args.lambdas is not None:
        lambdas = args.lambdas
    else:
        F = args.F
        if args.placement == "centralized":
            F = SimConfig(K=args.K, N=args.N, M=args.M, placement="centralized").F
        lambdas = tuple(1.0 / (F * g) for g in args.gaps)
    cfg = SimConfig(K=args.K, N=args.N, M=args.M, F=args.F, r=args.r, placement=args.placement,
                    lambdas=lambdas, trials=args.trials, seed=args.seed, decode=args.decode,
                    emergency=not args.no_emergency)

    def progress(g, k, t):
        if args.verbose:
            print(f"lambda={cfg.lambdas[g]:g} trial={k} offline={t.offline_status}", file=sys.stderr)

    summaries, trials = run_trials(cfg, on_trial=progress)
    _write(summary_csv(summaries), args.out)
    if args.trials_out:
        _write(trials_csv(trials, cfg.trials), args.trials_out)
    return 0


def cmd_trace(args) -> int:
    inst = Instance.load(args.instance)
    res = solve_via_decomposition(inst, iters=args.iters, alpha=args.alpha,
                                  rel_tol=args.rel_tol, patience=args.patience)
    _write(res.trace_csv(), args.out)
    return 0 if res.feasible else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asynccache", description="Deadline-aware coded caching schedulers.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit a random instance as JSON")
    _add_system_args(p)
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--lam", type=float, help="arrival parameter lambda (arrivals per slot = lambda*F)")
    rate.add_argument("--gap", type=float, default=1.0, help="mean slots between arrivals, 1/(F*lambda)")
    p.add_argument("--field", type=int, choices=(256, 65536), default=256)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("offline", help="solve the offline scheduling LP")
    p.add_argument("instance")
    p.add_argument("--dual", action="store_true", help="use the min-cost-flow decomposition")
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--alpha", type=float, default=0.5, help="step size n**-alpha")
    p.add_argument("--schedule", help="write the slot schedule as JSON")
    p.add_argument("--summary", help="write per-interval utilisation CSV")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="run the online recursive-LP scheduler")
    p.add_argument("instance")
    p.add_argument("--eta0", type=float, help="constant threshold (overrides --eta0-a/--eta0-b)")
    p.add_argument("--eta0-a", type=float, default=0.4)
    p.add_argument("--eta0-b", type=float, default=0.5)
    p.add_argument("--gap", type=float, default=1.0, help="mean slots between arrivals for the threshold")
    p.add_argument("--field", type=int, choices=(256, 65536))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--uncoded", action="store_true", help="plain XORs, one packet per member")
    p.add_argument("--emergency", action="store_true", help="let urgent users bypass the threshold")
    p.add_argument("--log", help="write the transmitted packets as JSON")
    p.add_argument("--decode", help="write the per-user decoding report CSV")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("sim", help="Monte-Carlo trials over a grid of arrival rates")
    _add_system_args(p)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--lambdas", type=_floats, help="lambda values, e.g. '0.2,0.1'")
    p.add_argument("--gaps", type=_floats, default=(0.25, 0.5, 1.0, 2.0),
                   help="grid given as 1/(F*lambda) when --lambdas is absent")
    p.add_argument("--decode", action="store_true", help="also decode payloads in the online runs")
    p.add_argument("--no-emergency", action="store_true")
    p.add_argument("--out", default="-")
    p.add_argument("--trials-out", help="per-trial CSV")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("trace", help="dual decomposition convergence CSV")
    p.add_argument("instance")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--rel-tol", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
