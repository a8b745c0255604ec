"""Sweep execution and result persistence.

Each run is independent; the sweep dispatches them to a process pool and
merges rows in canonical (parameter tuple, t_f) order, so two executions of
the same config produce bit-identical CSV bodies.  Rows are also appended to
a .partial file as they complete, which makes interrupted sweeps recoverable.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bath import BathSpec, QuadratureError, get_lamb_table
from .config import ExperimentConfig, RunTask
from .evolver import EvolutionError, evolve_closed, evolve_lindblad
from .observables import (
    LOG_FLOOR,
    AnnealResult,
    fit_loglog_slope,
    ground_state_fidelity,
    residual_energy,
)
from .sa import SaEvolutionError, SaSchedule, evolve_sa
from .spin_core import AnnealSchedule, ModelParams, build_sector

CSV_HEADER = (
    "engine,n_spins,p,gamma,t_f,beta,eta_g2,omega_c,lamb_shift,"
    "T0,Tf,dt,bin_tol,residual_energy,fidelity,status"
)

# close to the largest coupling where the weak-coupling master equation is
# still trustworthy; flagged in the output metadata
VALIDITY_EDGE_ETA_G2 = 0.1


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def result_to_row(res: AnnealResult) -> list[str]:
    return [
        res.engine, _fmt(res.n_spins), _fmt(res.p), _fmt(res.gamma), _fmt(res.t_f),
        _fmt(res.beta), _fmt(res.eta_g2), _fmt(res.omega_c), _fmt(res.lamb_shift),
        _fmt(res.t0_temperature), _fmt(res.tf_temperature), _fmt(res.dt),
        _fmt(res.bin_tol), _fmt(res.residual_energy), _fmt(res.fidelity), res.status,
    ]


def _parse_opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def row_to_result(row: dict[str, str]) -> AnnealResult:
    lamb = row["lamb_shift"]
    return AnnealResult(
        engine=row["engine"],
        n_spins=int(row["n_spins"]),
        p=int(row["p"]),
        gamma=float(row["gamma"]),
        t_f=float(row["t_f"]),
        beta=_parse_opt_float(row["beta"]),
        eta_g2=_parse_opt_float(row["eta_g2"]),
        omega_c=_parse_opt_float(row["omega_c"]),
        lamb_shift=None if lamb == "" else lamb == "on",
        t0_temperature=_parse_opt_float(row["T0"]),
        tf_temperature=_parse_opt_float(row["Tf"]),
        dt=_parse_opt_float(row["dt"]),
        bin_tol=_parse_opt_float(row["bin_tol"]),
        residual_energy=_parse_opt_float(row["residual_energy"]),
        fidelity=_parse_opt_float(row["fidelity"]),
        status=row["status"],
    )


def read_results(path: str | Path) -> list[AnnealResult]:
    """Read a results CSV, skipping '#' metadata lines."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty results file")
    if lines[0].strip() != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header {lines[0].strip()!r}")
    reader = csv.DictReader(io.StringIO("".join(lines)))
    return [row_to_result(row) for row in reader]


def run_task(task: RunTask) -> AnnealResult:
    """Execute one annealing run, mapping integrator aborts to failed rows."""
    common = dict(
        engine=task.engine, n_spins=task.n_spins, p=task.p, gamma=task.gamma,
        t_f=task.t_f, beta=task.beta, eta_g2=task.eta_g2, omega_c=task.omega_c,
        lamb_shift=task.lamb_shift, t0_temperature=task.t0_temperature,
        tf_temperature=task.tf_temperature, dt=task.dt, bin_tol=task.bin_tol,
    )
    try:
        if task.engine == "closed":
            sector = build_sector(task.n_spins)
            params = ModelParams(p=task.p, gamma=task.gamma)
            traj = evolve_closed(
                sector, params, AnnealSchedule(task.t_f), task.dt,
                n_samples=task.n_samples,
            )
            state = traj.final_state
            return AnnealResult(
                residual_energy=residual_energy(state, sector, params),
                fidelity=ground_state_fidelity(state, sector, params),
                diagnostics=traj.diagnostics, **common,
            )
        if task.engine == "lindblad":
            sector = build_sector(task.n_spins)
            params = ModelParams(p=task.p, gamma=task.gamma)
            bath = BathSpec(
                eta=task.eta_g2, g=1.0, beta=task.beta, omega_c=task.omega_c,
                nu=task.nu, lamb_shift_enabled=task.lamb_shift,
            )
            traj = evolve_lindblad(
                sector, params, AnnealSchedule(task.t_f), bath, task.dt,
                task.bin_tol, n_samples=task.n_samples,
            )
            state = traj.final_state
            return AnnealResult(
                residual_energy=residual_energy(state, sector, params),
                fidelity=ground_state_fidelity(state, sector, params),
                diagnostics=traj.diagnostics, **common,
            )
        if task.engine == "sa":
            schedule = SaSchedule(
                t_f=task.t_f, tf_temperature=task.tf_temperature,
                t0_temperature=task.t0_temperature,
            )
            dist, eps = evolve_sa(schedule, task.n_spins, task.p, task.dt,
                                  n_samples=task.n_samples)
            fid = float(dist[-1])
            if task.p % 2 == 0:
                fid += float(dist[0])  # degenerate m = -1 partner
            return AnnealResult(
                residual_energy=eps, fidelity=fid,
                diagnostics={"engine": "sa", "dt": task.dt}, **common,
            )
        raise ValueError(f"unknown engine {task.engine!r}")
    except (EvolutionError, SaEvolutionError, QuadratureError) as exc:
        return AnnealResult(
            residual_energy=None, fidelity=None,
            status=f"error: {exc}", diagnostics={"error": str(exc)}, **common,
        )


def _sort_key(res: AnnealResult):
    def none_last(x):
        return (x is None, x if x is not None else 0.0)

    return (
        res.engine, res.n_spins, res.p, res.gamma, none_last(res.beta),
        none_last(res.eta_g2), none_last(res.tf_temperature), res.t_f,
    )


def _metadata_lines(config: ExperimentConfig, timestamp: str) -> list[str]:
    lines = [
        f"# pspin-anneal {__version__} sweep",
        f"# created: {timestamp}",
        f"# engine: {config.engine}  n_spins: {config.n_spins}  p: {config.p}",
    ]
    if config.engine == "lindblad" and any(
        g >= VALIDITY_EDGE_ETA_G2 for g in config.eta_g2
    ):
        edge = [g for g in config.eta_g2 if g >= VALIDITY_EDGE_ETA_G2]
        lines.append(
            f"# note: eta_g2 {edge} lie near the weak-coupling validity edge "
            "of the master equation"
        )
    return lines


def write_results(
    path: str | Path, results: list[AnnealResult], config: ExperimentConfig | None = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now(timezone.utc).isoformat()
    with open(path, "w", newline="") as fh:
        if config is not None:
            for line in _metadata_lines(config, timestamp):
                fh.write(line + "\n")
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for res in sorted(results, key=_sort_key):
            writer.writerow(result_to_row(res))


def _default_workers() -> int:
    try:
        import psutil

        cores = psutil.cpu_count(logical=False)
    except ImportError:  # pragma: no cover
        cores = None
    return cores or os.cpu_count() or 1


def run_sweep(config: ExperimentConfig, *, quiet: bool = False) -> list[AnnealResult]:
    """Run every task in the config and persist the result table.

    Lamb-shift tables are warmed in the parent so forked workers inherit
    them.  Failed runs become failed rows; the sweep continues.
    """
    tasks = config.tasks()
    workers = config.workers if config.workers else _default_workers()
    workers = min(workers, len(tasks))
    if config.engine == "lindblad" and config.lamb_shift:
        for beta in config.beta:
            for eta_g2 in config.eta_g2:
                if eta_g2 > 0:
                    spec = BathSpec(eta=eta_g2, beta=beta, omega_c=config.omega_c,
                                    nu=config.nu)
                    get_lamb_table(spec, 2.02 * config.n_spins * max(config.gamma, 1.0))

    out_path = Path(config.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    partial_path = out_path.with_suffix(out_path.suffix + ".partial")
    results: list[AnnealResult] = []
    with open(partial_path, "w", newline="") as partial:
        partial.write(CSV_HEADER + "\n")
        writer = csv.writer(partial, lineterminator="\n")

        def record(res: AnnealResult) -> None:
            results.append(res)
            writer.writerow(result_to_row(res))
            partial.flush()
            if not quiet:
                eps = "failed" if res.status != "ok" else f"{res.residual_energy:.6e}"
                print(f"  [{len(results)}/{len(tasks)}] t_f={res.t_f:g} -> {eps}")

        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for res in pool.map(run_task, tasks):
                    record(res)
        else:
            for task in tasks:
                record(run_task(task))

    write_results(out_path, results, config)
    partial_path.unlink()
    return results


@dataclass
class CrossoverReport:
    """Smallest grid t_f where one engine's curve drops below another's."""

    qa_label: str
    sa_label: str
    n_spins: int
    p: int
    t_f_star: float | None
    qa_slope: float | None
    qa_slope_stderr: float | None
    sa_slope: float | None
    sa_slope_stderr: float | None
    floored_points: int = 0
    grid_mismatch: bool = False


def _group_results(results: list[AnnealResult]) -> dict[tuple, list[AnnealResult]]:
    groups: dict[tuple, list[AnnealResult]] = {}
    for res in results:
        if res.status != "ok":
            continue
        key = (
            res.engine, res.n_spins, res.p, res.gamma, res.beta, res.eta_g2,
            res.omega_c, res.lamb_shift, res.t0_temperature, res.tf_temperature,
        )
        groups.setdefault(key, []).append(res)
    for rows in groups.values():
        rows.sort(key=lambda r: r.t_f)
    return groups


def _group_label(key: tuple) -> str:
    engine = key[0]
    if engine == "sa":
        return f"sa(T0={key[8]:g},Tf={key[9]:g})"
    if engine == "closed":
        return "closed"
    return f"lindblad(beta={key[4]:g},eta_g2={key[5]:g})"


def _curve(rows: list[AnnealResult]) -> tuple[np.ndarray, np.ndarray, int]:
    t = np.array([r.t_f for r in rows])
    eps = np.array([r.residual_energy for r in rows])
    floored = int(np.sum(eps < LOG_FLOOR))
    return t, np.maximum(eps, LOG_FLOOR), floored


def _interp_loglog(t: np.ndarray, eps: np.ndarray, t_query: np.ndarray) -> np.ndarray:
    return np.exp(np.interp(np.log(t_query), np.log(t), np.log(eps)))


def _tail_slope(t: np.ndarray, eps: np.ndarray) -> tuple[float | None, float | None]:
    window = (t.max() / 10, t.max())
    try:
        slope, err = fit_loglog_slope(list(zip(t, eps)), window)
        return slope, err
    except ValueError:
        return None, None


def compare_report(results: list[AnnealResult]) -> list[CrossoverReport]:
    """Pair every SA curve with every QA curve sharing (N, p, gamma).

    The two curves are log-log interpolated onto the union of their grids
    over the overlapping t_f range; t_f* is the smallest union grid point
    where SA lies strictly below QA.
    """
    groups = _group_results(results)
    sa_keys = [k for k in groups if k[0] == "sa"]
    qa_keys = [k for k in groups if k[0] in ("closed", "lindblad")]
    reports: list[CrossoverReport] = []
    for sk in sa_keys:
        for qk in qa_keys:
            if (sk[1], sk[2], sk[3]) != (qk[1], qk[2], qk[3]):
                continue
            t_sa, eps_sa, fl_sa = _curve(groups[sk])
            t_qa, eps_qa, fl_qa = _curve(groups[qk])
            mismatch = t_sa.size != t_qa.size or not np.array_equal(t_sa, t_qa)
            lo = max(t_sa.min(), t_qa.min())
            hi = min(t_sa.max(), t_qa.max())
            t_star: float | None = None
            if lo <= hi:
                union = np.unique(np.concatenate([t_sa, t_qa]))
                union = union[(union >= lo) & (union <= hi)]
                sa_u = _interp_loglog(t_sa, eps_sa, union)
                qa_u = _interp_loglog(t_qa, eps_qa, union)
                below = np.flatnonzero(sa_u < qa_u)
                if below.size:
                    t_star = float(union[below[0]])
            qa_slope, qa_err = _tail_slope(t_qa, eps_qa)
            sa_slope, sa_err = _tail_slope(t_sa, eps_sa)
            reports.append(CrossoverReport(
                qa_label=_group_label(qk), sa_label=_group_label(sk),
                n_spins=sk[1], p=sk[2], t_f_star=t_star,
                qa_slope=qa_slope, qa_slope_stderr=qa_err,
                sa_slope=sa_slope, sa_slope_stderr=sa_err,
                floored_points=fl_sa + fl_qa, grid_mismatch=mismatch,
            ))
    return reports


def write_compare_report(path: str | Path, reports: list[CrossoverReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "qa_config", "sa_config", "n_spins", "p", "t_f_star",
            "qa_slope", "qa_slope_stderr", "sa_slope", "sa_slope_stderr",
            "floored_points", "grid_mismatch",
        ])
        for rep in reports:
            writer.writerow([
                rep.qa_label, rep.sa_label, rep.n_spins, rep.p,
                "none in range" if rep.t_f_star is None else _fmt(rep.t_f_star),
                _fmt(rep.qa_slope), _fmt(rep.qa_slope_stderr),
                _fmt(rep.sa_slope), _fmt(rep.sa_slope_stderr),
                rep.floored_points, "yes" if rep.grid_mismatch else "no",
            ])
