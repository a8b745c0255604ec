import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from pspin_anneal.cli import main
from pspin_anneal.config import (
    ExperimentConfig,
    apply_overrides,
    config_from_mapping,
    load_config,
    log_grid,
)
from pspin_anneal.observables import AnnealResult
from pspin_anneal.runner import (
    CSV_HEADER,
    compare_report,
    read_results,
    run_sweep,
    write_results,
)


def make_config(tmp_path, **kw):
    cfg = ExperimentConfig(
        engine="closed", n_spins=3, p=3, t_f=[0.5, 1.0, 2.0],
        out=str(tmp_path / "out.csv"),
    )
    for key, val in kw.items():
        setattr(cfg, key, val)
    return cfg


class TestConfig:
    def test_log_grid_density(self):
        grid = log_grid(1.0, 1000.0, 24)
        assert len(grid) == 73
        assert grid[0] == pytest.approx(1.0)
        assert grid[-1] == pytest.approx(1000.0)
        ratios = np.diff(np.log10(grid))
        assert np.allclose(ratios, ratios[0])

    def test_yaml_round_trip(self, tmp_path):
        text = """
engine: lindblad
model: {n_spins: 6, p: 5, gamma: 1.0}
schedule:
  t_f_range: {start: 1, stop: 100, per_decade: 4}
bath: {beta: inf, eta_g2: [1.0e-4, 1.0e-2], omega_c: 8.0, lamb_shift: off}
numerics: {dt: 0.005, bin_tol: 1.0e-10, samples: 50}
output: {csv: sweep.csv}
workers: 2
"""
        path = tmp_path / "cfg.yaml"
        path.write_text(text)
        cfg = load_config(path)
        assert cfg.engine == "lindblad"
        assert cfg.n_spins == 6
        assert len(cfg.t_f) == 9
        assert math.isinf(cfg.beta[0])
        assert cfg.eta_g2 == [1e-4, 1e-2]
        assert cfg.lamb_shift is False
        assert cfg.dt == 0.005
        assert cfg.workers == 2

    def test_flags_override_file_values(self):
        cfg = config_from_mapping({"engine": "closed", "model": {"n_spins": 4, "p": 2}})
        out = apply_overrides(cfg, {
            "engine": "lindblad", "beta": "inf", "eta_g2": "1e-3,1e-2",
            "t_f": "1,2,5", "lamb_shift": "off", "n_spins": "6",
        })
        assert out.engine == "lindblad"
        assert math.isinf(out.beta[0])
        assert out.eta_g2 == [1e-3, 1e-2]
        assert out.t_f == [1.0, 2.0, 5.0]
        assert out.lamb_shift is False
        assert out.n_spins == 6
        assert cfg.engine == "closed"  # original untouched

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            make_config(Path("."), engine="quantum").validate()
        with pytest.raises(ValueError):
            make_config(Path("."), t_f=[]).validate()
        with pytest.raises(ValueError):
            make_config(Path("."), t_f=[2.0, 1.0]).validate()
        with pytest.raises(ValueError):
            make_config(Path("."), engine="sa", tf_temperature=3.0).validate()
        with pytest.raises(ValueError):
            apply_overrides(ExperimentConfig(), {"unknown_flag": 1})

    def test_task_expansion_grid(self):
        cfg = make_config(Path("."), engine="lindblad",
                          beta=[2.0, 10.0], eta_g2=[0.0, 1e-2])
        tasks = cfg.tasks()
        assert len(tasks) == 2 * 2 * 3
        assert {t.beta for t in tasks} == {2.0, 10.0}


class TestCsvFormat:
    def test_header_is_pinned(self):
        assert CSV_HEADER == (
            "engine,n_spins,p,gamma,t_f,beta,eta_g2,omega_c,lamb_shift,"
            "T0,Tf,dt,bin_tol,residual_energy,fidelity,status"
        )

    def test_float_formatting_round_trips(self, tmp_path):
        res = AnnealResult(
            engine="lindblad", n_spins=8, p=5, gamma=1.0, t_f=math.pi,
            residual_energy=1 / 3, fidelity=0.1234567890123456789,
            beta=math.inf, eta_g2=1e-2, omega_c=10.0, lamb_shift=True,
            dt=0.005, bin_tol=1e-9,
        )
        path = tmp_path / "row.csv"
        write_results(path, [res])
        back = read_results(path)[0]
        assert back.t_f == res.t_f
        assert back.residual_energy == res.residual_energy
        assert back.fidelity == res.fidelity
        assert math.isinf(back.beta)
        assert back.lamb_shift is True
        assert back.tf_temperature is None

    def test_metadata_flags_validity_edge(self, tmp_path):
        cfg = make_config(tmp_path, engine="lindblad", eta_g2=[1e-2, 1e-1],
                          beta=[10.0], t_f=[1.0])
        res = AnnealResult(
            engine="lindblad", n_spins=3, p=3, gamma=1.0, t_f=1.0,
            residual_energy=0.5, fidelity=0.5, beta=10.0, eta_g2=0.1,
        )
        write_results(tmp_path / "m.csv", [res], cfg)
        text = (tmp_path / "m.csv").read_text()
        assert "validity edge" in text

    def test_reader_rejects_wrong_schema(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_results(path)


class TestRunSweep:
    def test_bodies_bit_identical_across_runs(self, tmp_path):
        cfg = make_config(tmp_path)
        run_sweep(cfg, quiet=True)
        first = [ln for ln in (tmp_path / "out.csv").read_text().splitlines()
                 if not ln.startswith("#")]
        cfg2 = make_config(tmp_path)
        cfg2.out = str(tmp_path / "out2.csv")
        run_sweep(cfg2, quiet=True)
        second = [ln for ln in (tmp_path / "out2.csv").read_text().splitlines()
                  if not ln.startswith("#")]
        assert first == second
        assert first[0] == CSV_HEADER

    def test_closed_limit_agreement(self, tmp_path):
        closed = make_config(tmp_path, t_f=[2.0], dt=1e-3)
        closed_rows = run_sweep(closed, quiet=True)
        lind = make_config(tmp_path, engine="lindblad", t_f=[2.0], dt=1e-3,
                           beta=[2.0], eta_g2=[0.0])
        lind.out = str(tmp_path / "lind.csv")
        lind_rows = run_sweep(lind, quiet=True)
        assert abs(closed_rows[0].residual_energy - lind_rows[0].residual_energy) < 1e-6

    def test_failed_rows_recorded_and_sweep_continues(self, tmp_path):
        cfg = make_config(tmp_path, engine="lindblad", n_spins=6, p=5,
                          t_f=[30.0], beta=[2.0], eta_g2=[0.0, 60.0],
                          lamb_shift=False)
        results = run_sweep(cfg, quiet=True)
        assert len(results) == 2
        statuses = {r.eta_g2: r.status for r in results}
        assert statuses[0.0] == "ok"
        assert statuses[60.0].startswith("error")
        rows = read_results(tmp_path / "out.csv")
        failed = [r for r in rows if r.status != "ok"]
        assert len(failed) == 1
        assert failed[0].residual_energy is None

    def test_worker_pool_path(self, tmp_path):
        cfg = make_config(tmp_path, workers=2)
        results = run_sweep(cfg, quiet=True)
        assert [r.t_f for r in results] == [0.5, 1.0, 2.0]


def synthetic_results(t_grid, eps_fn, engine, **meta):
    rows = []
    for t in t_grid:
        rows.append(AnnealResult(
            engine=engine, n_spins=8, p=5, gamma=1.0, t_f=float(t),
            residual_energy=float(eps_fn(t)), fidelity=0.5, **meta,
        ))
    return rows


class TestCompareReport:
    def test_synthetic_crossover_location(self):
        # QA ~ 9/t^2 and SA ~ 50 e^-t cross where 50 e^-t t^2 = 9
        grid = np.geomspace(1.0, 20.0, 25)
        qa = synthetic_results(grid, lambda t: 9.0 / t**2, "lindblad",
                               beta=10.0, eta_g2=1e-2, omega_c=10.0, lamb_shift=True)
        sa = synthetic_results(grid, lambda t: 50.0 * math.exp(-t), "sa",
                               t0_temperature=2.0, tf_temperature=0.1)
        reports = compare_report(qa + sa)
        assert len(reports) == 1
        t_true = brentq(lambda t: 50 * math.exp(-t) - 9 / t**2, 2.0, 10.0)
        step = (20.0 / 1.0) ** (1 / 24)
        assert reports[0].t_f_star is not None
        assert t_true / step <= reports[0].t_f_star <= t_true * step
        assert reports[0].qa_slope == pytest.approx(-2.0, abs=1e-6)

    def test_no_intersection_reported_as_none(self):
        grid = np.geomspace(1.0, 20.0, 10)
        qa = synthetic_results(grid, lambda t: 9.0 / t**2, "closed")
        sa = synthetic_results(grid, lambda t: 10.0, "sa",
                               t0_temperature=2.0, tf_temperature=0.1)
        reports = compare_report(qa + sa)
        assert len(reports) == 1
        assert reports[0].t_f_star is None

    def test_mismatched_grids_interpolated(self):
        qa = synthetic_results(np.geomspace(1, 16, 9), lambda t: 9.0 / t**2, "closed")
        sa = synthetic_results(np.geomspace(1.3, 20, 11), lambda t: 50 * math.exp(-t),
                               "sa", t0_temperature=2.0, tf_temperature=0.1)
        reports = compare_report(qa + sa)
        t_true = brentq(lambda t: 50 * math.exp(-t) - 9 / t**2, 2.0, 10.0)
        assert reports[0].t_f_star == pytest.approx(t_true, rel=0.25)

    def test_pairs_require_matching_model(self):
        qa = synthetic_results(np.geomspace(1, 10, 5), lambda t: 1 / t, "closed")
        sa = synthetic_results(np.geomspace(1, 10, 5), lambda t: 1 / t, "sa",
                               t0_temperature=2.0, tf_temperature=0.1)
        for row in sa:
            row.p = 7
        assert compare_report(qa + sa) == []


class TestCli:
    def test_run_and_compare_end_to_end(self, tmp_path, capsys):
        out_qa = tmp_path / "qa.csv"
        rc = main([
            "run", "--engine", "closed", "--n-spins", "3", "--p", "3",
            "--t-f", "0.5,1,2", "--out", str(out_qa), "--quiet",
        ])
        assert rc == 0
        out_sa = tmp_path / "sa.csv"
        rc = main([
            "run", "--engine", "sa", "--n-spins", "3", "--p", "3",
            "--t-f", "0.5,1,2", "--Tf", "0.1", "--out", str(out_sa), "--quiet",
        ])
        assert rc == 0
        report = tmp_path / "report.csv"
        rc = main(["compare", str(out_qa), str(out_sa), "--out", str(report)])
        assert rc == 0
        assert report.exists()
        assert "t_f*" in capsys.readouterr().out

    def test_run_exit_code_on_failed_rows(self, tmp_path):
        rc = main([
            "run", "--engine", "lindblad", "--n-spins", "6", "--p", "5",
            "--t-f", "30", "--beta", "2", "--eta-g2", "60", "--lamb-shift", "off",
            "--out", str(tmp_path / "bad.csv"), "--quiet",
        ])
        assert rc == 1

    def test_gap_subcommand_schema(self, tmp_path):
        out = tmp_path / "gap.csv"
        rc = main(["gap", "--p", "3", "--n-spins", "4,6", "--grid-points", "301",
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n_spins,p,s_star,gap"
        assert len(lines) == 3

    def test_stationary_sa(self, capsys):
        rc = main(["stationary", "--engine", "sa", "--n-spins", "6", "--p", "3",
                   "--temperature", "0.8", "--t-relax", "200"])
        assert rc == 0
        assert "detailed balance" in capsys.readouterr().out

    def test_stationary_lindblad(self, capsys):
        rc = main([
            "stationary", "--engine", "lindblad", "--n-spins", "3", "--p", "3",
            "--s", "0.4", "--beta", "1", "--eta-g2", "0.05", "--t-relax", "300",
        ])
        assert rc == 0
        assert "Gibbs" in capsys.readouterr().out

    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "pspin_anneal.cli", "run", "--engine", "sa",
             "--n-spins", "4", "--p", "3", "--t-f", "1", "--Tf", "0.2",
             "--out", str(tmp_path / "cli.csv"), "--quiet"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "cli.csv").exists()
