import math

import numpy as np
import pytest

from pspin_anneal.observables import (
    AnnealResult,
    fit_loglog_slope,
    gibbs_populations,
    ground_state_fidelity,
    residual_energy,
)
from pspin_anneal.spin_core import ModelParams, build_sector


class TestResidualEnergy:
    def test_ground_projector_is_zero(self):
        sec = build_sector(6)
        prm = ModelParams(p=3)
        rho = np.zeros((7, 7), dtype=complex)
        rho[0, 0] = 1.0
        assert residual_energy(rho, sec, prm) == pytest.approx(0.0, abs=1e-15)

    def test_maximally_mixed_two_spins(self):
        # diagonal entries (-2, 0, -2) average to -4/3; (-4/3 + 2)/2 = 1/3
        sec = build_sector(2)
        prm = ModelParams(p=2)
        rho = np.eye(3, dtype=complex) / 3
        assert residual_energy(rho, sec, prm) == pytest.approx(1 / 3, rel=1e-14)

    @pytest.mark.parametrize("n,p", [(4, 3), (8, 5), (7, 7)])
    def test_uniform_superposition_odd_p(self, n, p):
        # odd moments of the symmetric binomial magnetization vanish
        sec = build_sector(n)
        amps = np.array([math.sqrt(math.comb(n, k)) for k in range(n + 1)]) / 2 ** (n / 2)
        assert residual_energy(amps.astype(complex), sec, ModelParams(p=p)) == (
            pytest.approx(1.0, abs=1e-12)
        )

    def test_phase_and_gauge_invariance(self):
        sec = build_sector(5)
        prm = ModelParams(p=3)
        rng = np.random.default_rng(0)
        psi = rng.normal(size=6) + 1j * rng.normal(size=6)
        psi /= np.linalg.norm(psi)
        base = residual_energy(psi, sec, prm)
        assert residual_energy(np.exp(1j * 0.73) * psi, sec, prm) == pytest.approx(base)
        assert residual_energy(-psi, sec, prm) == pytest.approx(base)

    def test_dimension_mismatch(self):
        sec = build_sector(4)
        with pytest.raises(ValueError):
            residual_energy(np.ones(3), sec, ModelParams(p=2))


class TestFidelity:
    def test_odd_p_targets_single_state(self):
        sec = build_sector(4)
        psi = np.zeros(5, dtype=complex)
        psi[0] = 1.0
        assert ground_state_fidelity(psi, sec, ModelParams(p=3)) == pytest.approx(1.0)

    def test_even_p_counts_degenerate_pair(self):
        sec = build_sector(4)
        psi = np.zeros(5, dtype=complex)
        psi[0] = psi[-1] = 1 / math.sqrt(2)
        assert ground_state_fidelity(psi, sec, ModelParams(p=2)) == pytest.approx(1.0)
        rho = np.diag([0.5, 0, 0, 0, 0.5]).astype(complex)
        assert ground_state_fidelity(rho, sec, ModelParams(p=2)) == pytest.approx(1.0)


class TestGibbsPopulations:
    def test_infinite_temperature_uniform(self):
        pops = gibbs_populations(np.array([0.0, 1.0, 5.0]), 0.0)
        assert np.allclose(pops, 1 / 3)

    def test_zero_temperature_ground_only(self):
        pops = gibbs_populations(np.array([-2.0, 0.3, 1.0]), math.inf)
        assert np.allclose(pops, [1.0, 0.0, 0.0])

    def test_two_level_partition_function(self):
        pops = gibbs_populations(np.array([0.0, 1.0]), 1.0)
        z = 1 + math.exp(-1)
        assert pops[0] == pytest.approx(1 / z, rel=1e-14)       # 0.731058578630
        assert pops[1] == pytest.approx(math.exp(-1) / z, rel=1e-14)  # 0.268941421370

    def test_overflow_safe_and_normalized(self):
        pops = gibbs_populations(np.array([-1000.0, 0.0, 1000.0]), 5.0)
        assert abs(pops.sum() - 1.0) < 1e-12
        spectrum = np.sort(np.random.default_rng(1).normal(size=9))
        pops = gibbs_populations(spectrum, 2.0)
        assert abs(pops.sum() - 1.0) < 1e-12
        assert np.all(np.diff(pops) <= 0)

    def test_rejects_negative_beta(self):
        with pytest.raises(ValueError):
            gibbs_populations(np.array([0.0, 1.0]), -1.0)


class TestSlopeFit:
    def test_pure_power_law(self):
        points = [(t, 3.7 / t**2) for t in np.geomspace(1, 100, 12)]
        slope, err = fit_loglog_slope(points, (1, 100))
        assert slope == pytest.approx(-2.0, abs=1e-12)
        assert err < 1e-12

    def test_exponential_slope_depends_on_window(self):
        # on an exponential curve the apparent log-log slope keeps steepening,
        # which is the diagnostic signature of the intermediate regime
        points = [(t, 5.0 * math.exp(-t / 3)) for t in np.geomspace(1, 60, 24)]
        early, _ = fit_loglog_slope(points, (1, 6))
        late, _ = fit_loglog_slope(points, (20, 60))
        assert late < 3 * early < 0

    def test_rescaling_invariance(self):
        points = [(t, 0.2 * t**-1.5) for t in np.geomspace(2, 40, 9)]
        slope_a, _ = fit_loglog_slope(points, (2, 40))
        scaled = [(t, 100 * e) for t, e in points]
        slope_b, _ = fit_loglog_slope(scaled, (2, 40))
        assert slope_a == pytest.approx(slope_b, abs=1e-13)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([(1.0, 1.0), (2.0, 0.5)], (1, 2))

    def test_nonpositive_residual(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([(1.0, 1.0), (2.0, 0.0), (3.0, 0.1)], (1, 3))


class TestAnnealResult:
    def test_ok_row_bounds(self):
        with pytest.raises(ValueError):
            AnnealResult(
                engine="closed", n_spins=2, p=2, gamma=1.0, t_f=1.0,
                residual_energy=-1.0, fidelity=0.5,
            )
        with pytest.raises(ValueError):
            AnnealResult(
                engine="closed", n_spins=2, p=2, gamma=1.0, t_f=1.0,
                residual_energy=0.1, fidelity=1.5,
            )

    def test_failed_row_allows_missing_values(self):
        res = AnnealResult(
            engine="lindblad", n_spins=2, p=2, gamma=1.0, t_f=1.0,
            residual_energy=None, fidelity=None, status="error: aborted",
        )
        assert res.status.startswith("error")
