"""Command-line experiment runner.

Subcommands: `run` executes a sweep from a config file (flags override the
file), `compare` reports SA-vs-QA crossover times from result CSVs, `gap`
scans the minimum spectral gap, and `stationary` checks the fixed points of
the open-system and classical master equations.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .bath import BathSpec
from .config import ExperimentConfig, apply_overrides, load_config
from .evolver import evolve_lindblad_frozen, master_equation_rhs
from .observables import gibbs_populations
from .runner import (
    compare_report,
    read_results,
    run_sweep,
    write_compare_report,
)
from .sa import (
    equilibrium_distribution,
    rate_matrix,
    relax_fixed_temperature,
    stationary_distribution,
)
from .spin_core import ModelParams, build_sector, eig_sorted, h_total, minimum_gap


def _add_run_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="run an annealing sweep")
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--engine", choices=("closed", "lindblad", "sa"))
    p.add_argument("--n-spins", dest="n_spins", type=int)
    p.add_argument("--p", dest="p", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--t-f", dest="t_f", help="comma-separated t_f list")
    p.add_argument("--t-f-range", dest="t_f_range", help="start:stop:per_decade")
    p.add_argument("--beta", help="inverse bath temperature; accepts inf or a comma list")
    p.add_argument("--eta-g2", dest="eta_g2", help="coupling eta*g^2 (g=1); comma list allowed")
    p.add_argument("--omega-c", dest="omega_c", type=float)
    p.add_argument("--lamb-shift", dest="lamb_shift", choices=("on", "off"))
    p.add_argument("--T0", dest="t0_temperature", type=float)
    p.add_argument("--Tf", dest="tf_temperature", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--bin-tol", dest="bin_tol", type=float)
    p.add_argument("--samples", dest="n_samples", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        key: getattr(args, key)
        for key in (
            "engine", "n_spins", "p", "gamma", "t_f", "t_f_range", "beta",
            "eta_g2", "omega_c", "lamb_shift", "t0_temperature", "tf_temperature",
            "dt", "bin_tol", "n_samples", "out", "workers", "seed",
        )
        if getattr(args, key, None) is not None
    }
    cfg = apply_overrides(cfg, overrides)
    results = run_sweep(cfg, quiet=args.quiet)
    failed = [r for r in results if r.status != "ok"]
    print(f"wrote {cfg.out}: {len(results)} rows, {len(failed)} failed")
    for res in failed:
        print(f"  t_f={res.t_f:g}: {res.status}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_compare(args: argparse.Namespace) -> int:
    results = []
    for path in args.tables:
        results.extend(read_results(path))
    reports = compare_report(results)
    if not reports:
        print("no (QA, SA) pairs with matching n_spins, p found", file=sys.stderr)
        return 1
    for rep in reports:
        star = "none in range" if rep.t_f_star is None else f"{rep.t_f_star:g}"
        print(
            f"N={rep.n_spins} p={rep.p}  {rep.sa_label} vs {rep.qa_label}: "
            f"t_f* = {star}  (qa tail slope "
            f"{'n/a' if rep.qa_slope is None else f'{rep.qa_slope:+.3f}'}, "
            f"sa tail slope "
            f"{'n/a' if rep.sa_slope is None else f'{rep.sa_slope:+.3f}'})"
        )
        if rep.floored_points:
            print(f"  note: {rep.floored_points} points floored at 1e-14 for the log fit")
        if rep.grid_mismatch:
            print("  note: t_f grids differ; curves were log-log interpolated")
    if args.out:
        write_compare_report(args.out, reports)
        print(f"wrote {args.out}")
    return 0


def _cmd_gap(args: argparse.Namespace) -> int:
    grid = np.linspace(0.0, 1.0, args.grid_points)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        fh.write("n_spins,p,s_star,gap\n")
        writer = csv.writer(fh, lineterminator="\n")
        for n in args.n_spins:
            sector = build_sector(n)
            gap, s_star = minimum_gap(sector, ModelParams(p=args.p, gamma=args.gamma), grid)
            writer.writerow([n, args.p, format(s_star, ".17g"), format(gap, ".17g")])
            print(f"N={n} p={args.p}: gap {gap:.6e} at s*={s_star:.4f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_stationary(args: argparse.Namespace) -> int:
    if args.engine == "sa":
        equil = equilibrium_distribution(args.n_spins, args.p, args.temperature)
        brute = stationary_distribution(args.n_spins, args.p, args.temperature)
        tv = 0.5 * float(np.abs(equil - brute).sum())
        gen = rate_matrix(args.n_spins, args.p, args.temperature)
        flow_norm = float(np.abs(gen @ equil).max())
        rates_fwd = gen[np.arange(1, args.n_spins + 1), np.arange(args.n_spins)]
        rates_bwd = gen[np.arange(args.n_spins), np.arange(1, args.n_spins + 1)]
        db = float(np.abs(equil[:-1] * rates_fwd - equil[1:] * rates_bwd).max())
        relaxed = relax_fixed_temperature(
            args.n_spins, args.p, args.temperature, args.t_relax,
            min(args.dt, 0.1 / args.n_spins),
        )
        tv_flow = 0.5 * float(np.abs(relaxed - brute).sum())
        print(f"sa N={args.n_spins} p={args.p} T={args.temperature}:")
        print(f"  TV(Boltzmann, null space)   = {tv:.3e}")
        print(f"  |G pi|_max at Boltzmann     = {flow_norm:.3e}")
        print(f"  detailed balance residual   = {db:.3e}")
        print(f"  TV(flow at t={args.t_relax:g}, null space) = {tv_flow:.3e}")
        ok = tv < args.tv_tol and db < 1e-10 and tv_flow < args.tv_tol
        return 0 if ok else 1

    beta = math.inf if args.beta.lower() in ("inf", "infinity") else float(args.beta)
    sector = build_sector(args.n_spins)
    params = ModelParams(p=args.p, gamma=args.gamma)
    bath = BathSpec(eta=args.eta_g2, beta=beta, omega_c=args.omega_c,
                    lamb_shift_enabled=args.lamb_shift != "off")
    energies, basis = eig_sorted(h_total(sector, params, args.s))
    target = gibbs_populations(energies, beta)
    rho_target = basis @ np.diag(target).astype(complex) @ basis.T
    rhs_norm = float(np.linalg.norm(
        master_equation_rhs(sector, params, args.s, bath, rho_target, args.bin_tol), 2))
    traj = evolve_lindblad_frozen(
        sector, params, args.s, bath, args.t_relax, args.dt, args.bin_tol)
    pops = np.real(np.diag(basis.T @ traj.final_state @ basis))
    tv = 0.5 * float(np.abs(pops - target).sum())
    label = "ground projector" if math.isinf(beta) else "Gibbs state"
    print(f"lindblad N={args.n_spins} p={args.p} s={args.s} beta={beta} "
          f"eta_g2={args.eta_g2}:")
    print(f"  |RHS| at {label}       = {rhs_norm:.3e}")
    print(f"  TV(relaxed, target) after t={args.t_relax:g} = {tv:.3e}")
    ok = rhs_norm < args.rhs_tol and tv < args.tv_tol
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pspin-anneal",
        description="Quantum and simulated annealing of the ferromagnetic p-spin model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_parser(sub)

    p = sub.add_parser("compare", help="SA vs QA crossover report")
    p.add_argument("tables", nargs="+", type=Path, help="result CSV files")
    p.add_argument("--out", type=Path, help="write the report as CSV")

    p = sub.add_parser("gap", help="minimum spectral gap scan")
    p.add_argument("--p", dest="p", type=int, required=True)
    p.add_argument("--n-spins", dest="n_spins", required=True,
                   type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=2001)
    p.add_argument("--out", type=str, default="gap.csv")

    p = sub.add_parser("stationary", help="fixed-point diagnostics")
    p.add_argument("--engine", choices=("lindblad", "sa"), required=True)
    p.add_argument("--n-spins", dest="n_spins", type=int, required=True)
    p.add_argument("--p", dest="p", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--beta", default="10")
    p.add_argument("--eta-g2", dest="eta_g2", type=float, default=1e-2)
    p.add_argument("--omega-c", dest="omega_c", type=float, default=10.0)
    p.add_argument("--lamb-shift", dest="lamb_shift", choices=("on", "off"), default="on")
    p.add_argument("--bin-tol", dest="bin_tol", type=float, default=1e-9)
    p.add_argument("--t-relax", dest="t_relax", type=float, default=500.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--temperature", type=float, default=0.5, help="SA temperature")
    p.add_argument("--rhs-tol", dest="rhs_tol", type=float, default=1e-8)
    p.add_argument("--tv-tol", dest="tv_tol", type=float, default=1e-3)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "gap":
        return _cmd_gap(args)
    return _cmd_stationary(args)


if __name__ == "__main__":
    sys.exit(main())
