import math

import numpy as np
import pytest

from pspin_anneal.spin_core import (
    AnnealSchedule,
    ModelParams,
    build_sector,
    eig_sorted,
    full_space_oracle,
    h_pspin,
    h_total,
    h_transverse,
    minimum_gap,
    parity_even_basis,
    pspin_diagonal,
)


def ladder_sy(sector):
    """S^y from the raising/lowering ladder, built independently of s_x."""
    n = sector.n_spins
    spin = n / 2
    m = spin - np.arange(n + 1)
    raising = np.zeros((n + 1, n + 1))
    raising[np.arange(n), np.arange(1, n + 1)] = np.sqrt(
        spin * (spin + 1) - m[1:] * (m[1:] + 1)
    )
    return (raising - raising.T) / 2j


class TestBuildSector:
    def test_single_spin(self):
        sec = build_sector(1)
        assert np.array_equal(sec.s_z, np.diag([0.5, -0.5]))
        assert np.allclose(sec.s_x, [[0, 0.5], [0.5, 0]])

    def test_two_spins(self):
        sec = build_sector(2)
        assert np.array_equal(sec.s_z, np.diag([1.0, 0.0, -1.0]))
        off = math.sqrt(2) / 2
        assert np.allclose(sec.s_x, [[0, off, 0], [off, 0, off], [0, off, 0]])

    def test_m_values_descending(self):
        sec = build_sector(5)
        assert sec.m_values[0] == 1.0 and sec.m_values[-1] == -1.0
        assert np.all(np.diff(sec.m_values) < 0)
        assert np.all(np.diff(np.diag(sec.s_z)) < 0)

    @pytest.mark.parametrize("n", [1, 2, 3, 8, 16])
    def test_commutator_algebra(self, n):
        sec = build_sector(n)
        sy = ladder_sy(sec)
        comm = sec.s_x @ sy - sy @ sec.s_x
        assert np.abs(comm - 1j * sec.s_z).max() < 1e-12

    def test_rejects_zero_spins(self):
        with pytest.raises(ValueError):
            build_sector(0)

    def test_arrays_read_only(self):
        sec = build_sector(4)
        with pytest.raises(ValueError):
            sec.s_x[0, 0] = 1.0


class TestHamiltonians:
    def test_pspin_endpoint_entries(self):
        sec = build_sector(8)
        diag = np.diag(h_pspin(sec, ModelParams(p=5)))
        assert diag[0] == -8.0
        assert diag[-1] == 8.0

    def test_pspin_direct_substitution(self):
        sec = build_sector(4)
        diag = np.diag(h_pspin(sec, ModelParams(p=2)))
        # m = 1/2 sits at index 1 (m descending from 1)
        assert diag[1] == pytest.approx(-4 * 0.25, abs=0)

    @pytest.mark.parametrize("n,p", [(3, 2), (5, 3), (8, 5), (6, 4)])
    def test_ground_energy_exactly_minus_n(self, n, p):
        sec = build_sector(n)
        diag = pspin_diagonal(sec, ModelParams(p=p))
        assert diag.min() == -float(n)
        degeneracy = int(np.sum(diag == -float(n)))
        assert degeneracy == (2 if p % 2 == 0 else 1)

    def test_transverse_single_spin_eigenvalues(self):
        sec = build_sector(1)
        vals = np.linalg.eigvalsh(h_transverse(sec, ModelParams(p=1)))
        assert np.allclose(vals, [-1.0, 1.0])

    def test_transverse_ground_state_is_binomial(self):
        sec = build_sector(8)
        vals, vecs = eig_sorted(h_transverse(sec, ModelParams(p=2)))
        assert vals[0] == pytest.approx(-8.0, abs=1e-12)
        expected = np.array([math.sqrt(math.comb(8, k)) for k in range(9)]) / 2**4
        assert np.allclose(vecs[:, 0], expected, atol=1e-12)
        assert np.all(vecs[:, 0] > 0)

    def test_total_endpoints_exact(self):
        sec = build_sector(5)
        prm = ModelParams(p=3)
        assert np.array_equal(h_total(sec, prm, 0.0), h_transverse(sec, prm))
        assert np.array_equal(h_total(sec, prm, 1.0), h_pspin(sec, prm))

    def test_total_midpoint_spectrum_closed_form(self):
        # 3x3 at s = 1/2 splits into the antisymmetric eigenvalue -1 and a
        # 2x2 block with eigenvalues (-1 +- sqrt(5))/2
        sec = build_sector(2)
        vals = np.linalg.eigvalsh(h_total(sec, ModelParams(p=2), 0.5))
        expected = sorted([-(1 + math.sqrt(5)) / 2, -1.0, (math.sqrt(5) - 1) / 2])
        assert np.allclose(vals, expected, atol=1e-12)

    def test_total_rejects_s_outside_range(self):
        sec = build_sector(2)
        for s in (-0.01, 1.01):
            with pytest.raises(ValueError):
                h_total(sec, ModelParams(p=2), s)

    def test_total_symmetric(self):
        sec = build_sector(7)
        h = h_total(sec, ModelParams(p=3), 0.37)
        assert np.array_equal(h, h.T)


class TestEigSorted:
    def test_permuted_diagonal(self):
        vals, vecs = eig_sorted(np.diag([3.0, 1.0, 2.0]))
        assert np.allclose(vals, [1, 2, 3])
        assert np.allclose(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])

    def test_diagonal_pspin_matches_sorted_diagonal(self):
        sec = build_sector(6)
        h = h_pspin(sec, ModelParams(p=3))
        vals, _ = eig_sorted(h)
        assert np.allclose(vals, np.sort(np.diag(h)))

    def test_reconstruction_random_symmetric(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = rng.normal(size=(5, 5))
            h = a + a.T
            vals, vecs = eig_sorted(h)
            assert np.all(np.diff(vals) >= 0)
            assert np.abs(vecs @ np.diag(vals) @ vecs.T - h).max() < 1e-10
            assert np.abs(vecs.T @ vecs - np.eye(5)).max() < 1e-12

    def test_gauge_largest_component_positive(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(6, 6))
        _, vecs = eig_sorted(a + a.T)
        lead = np.argmax(np.abs(vecs), axis=0)
        assert np.all(vecs[lead, np.arange(6)] > 0)

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError):
            eig_sorted(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestMinimumGap:
    def test_single_spin_closed_form(self):
        # 2x2 gap 2 sqrt(s^2 + (1-s)^2) is minimized at s = 1/2
        sec = build_sector(1)
        gap, s_star = minimum_gap(sec, ModelParams(p=1), np.linspace(0, 1, 2001))
        assert gap == pytest.approx(math.sqrt(2), abs=1e-5)
        assert s_star == pytest.approx(0.5, abs=1e-3)

    def test_gap_positive_along_schedule(self):
        grid = np.linspace(0, 1, 201)
        for n, p in [(6, 3), (6, 2), (9, 5)]:
            gap, _ = minimum_gap(build_sector(n), ModelParams(p=p), grid)
            assert gap > 0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            minimum_gap(build_sector(2), ModelParams(p=2), np.array([]))

    def test_even_parity_basis_orthonormal(self):
        for n in (4, 5):
            basis = parity_even_basis(n)
            assert np.allclose(basis.T @ basis, np.eye(basis.shape[1]))
            # columns invariant under index reversal
            assert np.allclose(basis[::-1], basis)


class TestFullSpaceOracle:
    @pytest.mark.parametrize("s", [0.0, 0.3, 0.7, 1.0])
    def test_two_spin_inclusion(self, s):
        prm = ModelParams(p=2)
        full = np.linalg.eigvalsh(full_space_oracle(2, prm, s))
        restricted = np.linalg.eigvalsh(h_total(build_sector(2), prm, s))
        for val in restricted:
            assert np.min(np.abs(full - val)) < 1e-10 * max(1, abs(val))

    def test_all_up_ground_state(self):
        prm = ModelParams(p=3)
        full = np.linalg.eigvalsh(full_space_oracle(3, prm, 1.0))
        restricted = np.linalg.eigvalsh(h_total(build_sector(3), prm, 1.0))
        assert full[0] == pytest.approx(-3.0, abs=1e-12)
        assert restricted[0] == pytest.approx(-3.0, abs=1e-12)

    def test_ferromagnetic_ground_state_in_max_spin_sector(self):
        prm = ModelParams(p=5)
        full = np.linalg.eigvalsh(full_space_oracle(4, prm, 0.5))
        restricted = np.linalg.eigvalsh(h_total(build_sector(4), prm, 0.5))
        assert abs(full[0] - restricted[0]) < 1e-10

    def test_memory_guard(self):
        with pytest.raises(ValueError):
            full_space_oracle(13, ModelParams(p=2), 0.5)


class TestSchedule:
    def test_linear_endpoints(self):
        sch = AnnealSchedule(t_f=12.5)
        assert sch.s(0.0) == 0.0
        assert sch.s(12.5) == 1.0
        ts = np.linspace(0, 12.5, 50)
        ss = [sch.s(t) for t in ts]
        assert all(b >= a for a, b in zip(ss, ss[1:]))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            AnnealSchedule(t_f=-1.0)
        with pytest.raises(ValueError):
            AnnealSchedule(t_f=1.0, kind="quadratic")
        with pytest.raises(ValueError):
            AnnealSchedule(t_f=1.0).s(2.0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ModelParams(p=0)
        with pytest.raises(ValueError):
            ModelParams(p=2, gamma=0.0)
