"""Command-line front door: solve, simulate, compare, sweep, thresholds.

Outputs are JSON (solutions, policies) and CSV (comparison tables, sweeps);
plotting is left to external tools.  Exit codes: 2 config error, 3 infeasible
budget, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import benchmarks as bm
from . import evaluation, sim
from .model import NetworkSpec, SpecError, load_config, spec_from_dict
from .reavi import FixedPointError, SolverTolerances
from .solver import BracketError, InfeasibleError, Solution, lambda_upper, solve

POLICY_NAMES = ("optimal",) + bm.BENCHMARK_NAMES


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (FixedPointError, BracketError) as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 4
    except (SpecError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ageroute",
        description="Age-optimal joint sampling and routing: solver, evaluator, simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="instance JSON file")
        p.add_argument("--out", help="output file (JSON or CSV depending on command)")
        p.add_argument("--tol-lambda", type=float, help="bisection tolerance on lam")
        p.add_argument("--tol-c", type=float, help="bisection tolerance on c")
        p.add_argument("--tol-fp", type=float, help="fixed-point tolerance on h")
        p.add_argument("--tol-quad", type=float, help="quadrature relative tolerance")

    p_solve = sub.add_parser("solve", help="compute the optimal policy")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="Monte Carlo run of one policy")
    common(p_sim)
    p_sim.add_argument("--policy", default="optimal", choices=POLICY_NAMES)
    p_sim.add_argument("--epochs", type=int, default=100_000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--record", action="store_true", help="dump the per-epoch trace as CSV")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="optimal vs benchmarks, analytic and simulated")
    common(p_cmp)
    p_cmp.add_argument("--policies", default=",".join(POLICY_NAMES))
    p_cmp.add_argument("--epochs", type=int, default=200_000)
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="re-solve along one scalar parameter")
    common(p_sweep)
    p_sweep.add_argument("--var", required=True,
                         help="route<K>.mean|std|p|G (K = config position, 1-based), or E_max, C_s")
    p_sweep.add_argument("--range", required=True, dest="sweep_range", help="lo:hi")
    p_sweep.add_argument("--steps", type=int, required=True)
    p_sweep.add_argument("--policies", default="optimal")
    p_sweep.add_argument("--epochs", type=int, default=0, help="also simulate (0: analytic only)")
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.set_defaults(func=cmd_sweep)

    p_thr = sub.add_parser("thresholds", help="dump the optimal policy thresholds as JSON")
    common(p_thr)
    p_thr.set_defaults(func=cmd_thresholds)
    return parser


def _tolerances(args, spec: NetworkSpec) -> SolverTolerances:
    tol = SolverTolerances.for_bound(lambda_upper(spec))
    if args.tol_lambda:
        tol.eps_lambda = args.tol_lambda
    if args.tol_c:
        tol.eps_c = args.tol_c
    if args.tol_fp:
        tol.eps_fp = args.tol_fp
    if args.tol_quad:
        tol.quad_rel_tol = args.tol_quad
    return tol


def _print_solution(sol: Solution) -> None:
    print(f"lam* = {sol.lam:.6g}   c* = {sol.c:.6g}   mix_prob = {sol.mix_prob:.4g}")
    print(f"lam upper bound = {sol.lam_upper:.6g}")
    for l, rule in sorted(sol.policy_plus.rules.items()):
        print(f"availability {l}:")
        edges = [0.0, *rule.taus, math.inf]
        for k, rid in enumerate(rule.rids):
            hi = "inf" if edges[k + 1] == math.inf else f"{edges[k + 1]:.6g}"
            print(
                f"  y in [{edges[k]:.6g}, {hi}) -> route {rid}, "
                f"wait level {max(rule.betas[k], 0.0):.6g}"
            )


def cmd_solve(args) -> int:
    spec = load_config(args.config)
    sol = solve(spec, _tolerances(args, spec))
    _print_solution(sol)
    if not spec.unconstrained:
        for row in sol.trace:
            print(f"  trace c={row['c']:.6g} lam={row['lam']:.6g} energy={row['energy']:.6g}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(sol.to_dict(), fh, indent=2)
        print(f"solution written to {args.out}")
    return 0


def _named_policies(names, spec, tol):
    """Materialize (name, policy, analytic_age) for the requested names."""
    out = []
    for name in names:
        if name == "optimal":
            sol = solve(spec, tol)
            if sol.mix_prob < 1.0:
                out.append((name, sol.policy(np.random.default_rng(0)), sol.lam, sol))
            else:
                out.append((name, sol.policy_plus, sol.lam, sol))
        else:
            pol, analytic = bm.build_benchmark(name, spec)
            out.append((name, pol, analytic, None))
    return out


def cmd_simulate(args) -> int:
    spec = load_config(args.config)
    tol = _tolerances(args, spec)
    (_, pol, analytic, _sol), = _named_policies([args.policy], spec, tol)
    trace = sim.simulate(pol, spec, args.epochs, args.seed, record=args.record)
    print(
        f"{args.policy}: simulated aoi = {trace.aoi:.6g} +- {trace.aoi_ci:.3g}, "
        f"energy = {trace.energy_rate:.6g} +- {trace.energy_ci:.3g} "
        f"({trace.epochs} epochs, {trace.batches} batches)"
    )
    if analytic is not None:
        print(f"analytic long-run aoi = {analytic:.6g}")
    if args.out:
        if args.record and trace.records is not None:
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["S", "D", "route", "Z", "Y", "l_idx"])
                rec = trace.records
                for i in range(trace.epochs):
                    w.writerow([rec["S"][i], rec["D"][i], rec["route"][i],
                                rec["Z"][i], rec["Y"][i], rec["l_idx"][i]])
        else:
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["aoi", "aoi_ci", "energy", "energy_ci", "epochs", "seed"])
                w.writerow([trace.aoi, trace.aoi_ci, trace.energy_rate,
                            trace.energy_ci, trace.epochs, args.seed])
        print(f"written to {args.out}")
    return 0


def cmd_compare(args) -> int:
    spec = load_config(args.config)
    tol = _tolerances(args, spec)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    for n in names:
        if n not in POLICY_NAMES:
            raise SpecError(f"unknown policy {n!r}; choose from {POLICY_NAMES}")
    materialized = _named_policies(names, spec, tol)
    rows = sim.compare(spec, [(n, p) for n, p, _, _ in materialized], args.epochs, args.seed)
    table = []
    for (name, pol, analytic, _), row in zip(materialized, rows):
        energy = evaluation.renewal_rates(pol, spec).energy_rate
        table.append([name, analytic, row.aoi, row.aoi_ci, energy,
                      row.energy_rate, row.energy_ci])
    header = ["policy", "analytic_aoi", "sim_aoi", "sim_aoi_ci",
              "analytic_energy", "sim_energy", "sim_energy_ci"]
    _emit_table(header, table, args.out)
    return 0


def cmd_thresholds(args) -> int:
    spec = load_config(args.config)
    sol = solve(spec, _tolerances(args, spec))
    payload = {
        "lam": sol.lam,
        "c": sol.c,
        "mix_prob": sol.mix_prob,
        "policy_plus": sol.policy_plus.to_dict(),
        "policy_minus": sol.policy_minus.to_dict(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"policy written to {args.out}")
    else:
        print(text)
    return 0


def _set_sweep_value(config: dict, var: str, value: float) -> dict:
    """Return a copy of the raw config with one or more scalar fields replaced.

    `var` may be comma-separated (e.g. "route2.p,route3.p") to move several
    fields in lockstep, as the availability sweeps do.
    """
    if "," in var:
        cfg = config
        for v in var.split(","):
            cfg = _set_sweep_value(cfg, v.strip(), value)
        return cfg
    cfg = json.loads(json.dumps(config))
    if var in ("E_max", "C_s"):
        cfg[var] = value
        return cfg
    if not var.startswith("route"):
        raise SpecError(f"unknown sweep variable {var!r}")
    head, _, field = var.partition(".")
    try:
        idx = int(head[5:]) - 1
        route = cfg["routes"][idx]
    except (ValueError, IndexError) as exc:
        raise SpecError(f"bad sweep variable {var!r}") from exc
    if field in ("p", "G"):
        route[field] = value
        return cfg
    if field not in ("mean", "std"):
        raise SpecError(f"sweep field must be mean, std, p or G, got {field!r}")
    if "mean" not in route or "std" not in route:
        # Natural parameterization: convert to moments first.
        marginal = spec_from_dict({"routes": [dict(route, p=1.0)]}).routes[0].delay
        route.pop("log_mean", None)
        route.pop("log_sd", None)
        route.pop("shape", None)
        route.pop("scale", None)
        route.pop("value", None)
        route["mean"] = marginal.mean
        route["std"] = math.sqrt(marginal.variance)
    route[field] = value
    return cfg


def cmd_sweep(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    lo, _, hi = args.sweep_range.partition(":")
    lo, hi = float(lo), float(hi)
    if args.steps < 2:
        raise SpecError("sweep needs steps >= 2")
    points = [lo + (hi - lo) * k / (args.steps - 1) for k in range(args.steps)]
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    for n in names:
        if n not in POLICY_NAMES:
            raise SpecError(f"unknown policy {n!r}; choose from {POLICY_NAMES}")

    header = [args.var]
    for n in names:
        header.append(f"{n}_aoi")
        if n == "optimal":
            header.append("optimal_energy")
        if args.epochs:
            header.extend([f"{n}_sim_aoi", f"{n}_sim_ci"])
    header.append("warning")

    table = []
    for x in points:
        row: list = [x]
        warning = ""
        try:
            spec = spec_from_dict(_set_sweep_value(raw, args.var, x))
            tol = _tolerances(args, spec)
            materialized = _named_policies(names, spec, tol)
            sim_rows = {}
            if args.epochs:
                for r in sim.compare(spec, [(n, p) for n, p, _, _ in materialized],
                                     args.epochs, args.seed):
                    sim_rows[r.name] = r
            for name, pol, analytic, _sol in materialized:
                row.append(analytic)
                if name == "optimal":
                    row.append(evaluation.renewal_rates(pol, spec).energy_rate)
                if args.epochs:
                    r = sim_rows[name]
                    row.extend([r.aoi, r.aoi_ci])
        except (SpecError, InfeasibleError, FixedPointError, BracketError) as exc:
            warning = f"{type(exc).__name__}: {exc}"
            row += [""] * (len(header) - 1 - len(row))
            print(f"warning at {args.var}={x:g}: {warning}", file=sys.stderr)
        row.append(warning)
        table.append(row)
    _emit_table(header, table, args.out)
    return 0


def _emit_table(header, rows, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        print(f"written to {out}")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
