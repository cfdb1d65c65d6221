"""Command-line interface: instance generation, solvers, baselines and sweeps."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .dist import SCHEMES, DistConfig, overhead_count, run_distributed
from .harness import ExperimentConfig, exhaustive_search, power_grid_oracle, run_sweep, summary_csv
from .model import BeamformerSet, complex_to_pairs, generate_channel_set
from .outage import closed_form_outage, empirical_outage, tighten_rates
from .sca import SCAConfig, mrt_init, run_sca, zf_init
from .solver import SolverConfig
from .utility import UtilitySpec, utility_value
from .validation import check_beamformers, check_channel_set


def _floats(text: str) -> tuple:
    """Parse ``a1,a2,...`` (commas and/or spaces)."""
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(kkt_tol=args.solver_tol, max_centerings=args.solver_max_centerings)


def _spec(args, K: int) -> UtilitySpec:
    if args.alpha:
        return UtilitySpec(beta=args.beta, alpha=args.alpha)
    return UtilitySpec.uniform(K, args.beta)


def _open_out(path):
    return nullcontext(sys.stdout) if path in (None, "-") else open(path, "w", newline="")


def _solution_json(bf: BeamformerSet, R, cs) -> dict:
    return {
        "w": complex_to_pairs(bf.vectors),
        "R": [float(r) for r in R],
        "outage": [closed_form_outage(bf, R[i], i, cs) for i in range(cs.K)],
        "power": [float(p) for p in bf.power()],
    }


def _init(args, cs):
    if args.init == "zf":
        bf = zf_init(cs, blend=True)
        if bf is None:
            raise SystemExit("error: zero-forcing initialization is infeasible for this instance")
        return bf
    return mrt_init(cs)


def cmd_gen(args):
    sigma2 = 10 ** (-args.snr_db / 10) if args.sigma2 is None else args.sigma2
    cs = generate_channel_set(args.K, args.Nt, eta=args.eta, rank=args.rank, seed=args.seed,
                              sigma2=sigma2, P=args.P, eps=args.eps, delta=args.delta)
    if args.out in (None, "-"):
        json.dump(cs.to_dict(), sys.stdout)
        sys.stdout.write("\n")
    else:
        cs.save(args.out)
    return 0


def cmd_validate(args):
    cs = check_channel_set(args.channels)
    d = json.loads(Path(args.beamformers).read_text())
    bf = check_beamformers(BeamformerSet.from_dict(d), cs, vector=True)
    R = np.asarray(d["R"], float) if "R" in d else tighten_rates(bf, cs)
    emp = empirical_outage(bf, R, cs, args.n, args.seed)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "closed", "empirical", "gap", "n", "seed"])
        for i in range(cs.K):
            c = closed_form_outage(bf, R[i], i, cs)
            w.writerow([i + 1, repr(c), repr(float(emp[i])), repr(abs(c - float(emp[i]))),
                        args.n, args.seed])
    return 0


def cmd_solve(args):
    cs = check_channel_set(args.channels)
    spec = _spec(args, cs.K)
    cfg = SCAConfig(stop_rel=args.stop_rel, max_iters=args.max_iters, seed=args.seed,
                    solver=_solver_cfg(args), verbosity=args.verbose)
    tr = run_sca(cs, spec, _init(args, cs), cfg)
    label = args.instance or Path(args.channels).stem
    with _open_out(args.trace) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance", "iter", "utility"] + [f"R_{i + 1}" for i in range(cs.K)]
                   + ["anchor_gap_x", "anchor_gap_y", "kkt"])
        for r in tr.records:
            w.writerow([label, r["n"], repr(r["utility"])] + [repr(float(v)) for v in r["rates"]]
                       + [repr(float(r["gap_x"])), repr(float(r["gap_y"])), repr(float(r["kkt"]))])
    sol = _solution_json(tr.beamformers, tr.rates, cs)
    sol.update(utility=tr.utility, iterations=tr.iterations, randomized=tr.randomized,
               stationarity=tr.stationarity())
    if args.out:
        Path(args.out).write_text(json.dumps(sol, indent=2))
    else:
        print(json.dumps({k: sol[k] for k in ("utility", "R", "outage", "iterations")}),
              file=sys.stderr)
    return 0


def cmd_solve_dist(args):
    cs = check_channel_set(args.channels)
    spec = _spec(args, cs.K)
    order = tuple(int(v) - 1 for v in args.order) if args.order else None
    cfg = DistConfig(stop_rel=args.stop_rel, max_rounds=args.max_rounds, seed=args.seed,
                     order=order, solver=_solver_cfg(args), verbosity=args.verbose)
    tr = run_distributed(cs, spec, _init(args, cs), cfg)
    with _open_out(args.trace) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "node", "utility"] + [f"R_{i + 1}" for i in range(cs.K)])
        for r in tr.records:
            w.writerow([r["n"], r["i"] + 1, repr(r["utility"])]
                       + [repr(float(v)) for v in r["rates"]])
    if args.messages:
        with open(args.messages, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "sender"] + [f"x_{k + 1}" for k in range(cs.K)])
            for m in tr.messages:
                w.writerow([m.round, m.sender + 1] + [repr(v) for v in m.payload])
    if args.out:
        sol = _solution_json(tr.beamformers, tr.rates, cs)
        sol.update(utility=tr.utility, rounds=tr.rounds, failed=tr.failed)
        Path(args.out).write_text(json.dumps(sol, indent=2))
    ov = tr.overhead
    print(f"rounds={ov['rounds']} simulated={ov['simulated']} initial={ov['initial']} "
          + " ".join(f"{s}={ov[s]}" for s in SCHEMES), file=sys.stderr)
    return 0


def cmd_sweep(args):
    cfg = ExperimentConfig.from_json(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.n_jobs:
        cfg.n_jobs = args.n_jobs
    rows = run_sweep(cfg)
    sys.stdout.write(summary_csv(rows))
    return 0


def cmd_baseline(args):
    cs = check_channel_set(args.channels)
    spec = _spec(args, cs.K)
    if args.method in ("mrt", "zf"):
        bf = mrt_init(cs) if args.method == "mrt" else zf_init(cs, blend=False)
        if bf is None:
            raise SystemExit("error: zero-forcing is infeasible for this instance")
        R = tighten_rates(bf, cs)
        U = float(utility_value(spec, R))
    else:
        res = exhaustive_search(cs, spec, args.M) if args.method == "exhaustive" \
            else power_grid_oracle(cs, spec, args.grid)
        bf, R, U = res.beamformers, res.rates, res.utility
    sol = _solution_json(bf, R, cs)
    sol.update(method=args.method, utility=U)
    text = json.dumps(sol, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_overhead(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["K", "Nt", "N"] + list(SCHEMES))
    for K in args.K:
        for Nt in args.Nt:
            for N in args.N:
                w.writerow([K, Nt, N] + [overhead_count(K, Nt, N, s) for s in SCHEMES])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="outage-cbf", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance as JSON")
    g.add_argument("--K", type=int, required=True)
    g.add_argument("--Nt", type=int, required=True)
    g.add_argument("--eta", type=float, default=0.5)
    g.add_argument("--rank", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--snr-db", type=float, default=10.0, help="1/sigma^2 in dB")
    g.add_argument("--sigma2", type=float, help="noise power (overrides --snr-db)")
    g.add_argument("--P", type=float, default=1.0)
    g.add_argument("--eps", type=float, default=0.1)
    g.add_argument("--delta", type=float, default=1e-5)
    g.add_argument("-o", "--out")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="closed-form vs Monte-Carlo outage of a solution")
    v.add_argument("channels")
    v.add_argument("beamformers", help="JSON with 'w' (and optionally 'R')")
    v.add_argument("--n", type=int, default=200_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("-o", "--out")
    v.set_defaults(func=cmd_validate)

    def solver_args(s):
        s.add_argument("channels")
        s.add_argument("--beta", type=float, default=0.0)
        s.add_argument("--alpha", type=_floats, help="weights a1,a2,... (default equal)")
        s.add_argument("--init", choices=("mrt", "zf"), default="mrt")
        s.add_argument("--stop-rel", type=float, default=0.01)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--trace", help="trace CSV path (default stdout)")
        s.add_argument("-o", "--out", help="solution JSON path")
        s.add_argument("--solver-tol", type=float, default=1e-8)
        s.add_argument("--solver-max-centerings", type=int, default=60)

    s = sub.add_parser("solve", help="centralized SCA")
    solver_args(s)
    s.add_argument("--max-iters", type=int, default=50)
    s.add_argument("--instance", help="label for the trace's instance column")
    s.set_defaults(func=cmd_solve)

    d = sub.add_parser("solve-dist", help="distributed round-robin SCA")
    solver_args(d)
    d.add_argument("--max-rounds", type=int, default=30)
    d.add_argument("--order", type=int, nargs="+", help="node order, 1-based (extension)")
    d.add_argument("--messages", help="message-log CSV path")
    d.set_defaults(func=cmd_solve_dist)

    w = sub.add_parser("sweep", help="run an experiment sweep from a JSON config")
    w.add_argument("--config", required=True)
    w.add_argument("--out-dir")
    w.add_argument("--n-jobs", type=int)
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("baseline", help="MRT, ZF, exhaustive search or power-grid oracle")
    b.add_argument("channels")
    b.add_argument("--method", choices=("mrt", "zf", "exhaustive", "oracle"), required=True)
    b.add_argument("--beta", type=float, default=0.0)
    b.add_argument("--alpha", type=_floats, help="weights a1,a2,... (default equal)")
    b.add_argument("--M", type=int, default=64, help="grid levels for exhaustive search")
    b.add_argument("--grid", type=int, default=200, help="points per axis for the oracle")
    b.add_argument("-o", "--out")
    b.set_defaults(func=cmd_baseline)

    o = sub.add_parser("overhead", help="message overhead of the three coordination schemes")
    o.add_argument("--K", type=int, nargs="+", default=[2, 4, 6])
    o.add_argument("--Nt", type=int, nargs="+", default=[4, 8, 12])
    o.add_argument("--N", type=int, nargs="+", default=[10])
    o.set_defaults(func=cmd_overhead)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
