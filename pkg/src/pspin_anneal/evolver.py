"""Time evolution engines.

Closed-system annealing propagates the state vector under the interpolated
Hamiltonian; the open system integrates the adiabatic Lindblad equation,
with jump operators rebuilt in the instantaneous energy eigenbasis at every
integrator stage.  Both use fixed-step RK4 so runs are reproducible.

The collective coupling operator is A = sum_i sigma^z_i = 2 S^z.  For each
binned Bohr frequency the jump operator gathers the matrix elements of A
between eigenstates separated by that frequency; gamma(omega > 0) multiplies
the de-exciting operators, which is the pairing that makes the frozen-H
Gibbs state stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .bath import BathSpec, LambShiftTable, gamma_of_omega, get_lamb_table
from .spin_core import (
    AnnealSchedule,
    ModelParams,
    SpinSector,
    _eigh_gauged,
    h_transverse,
    pspin_diagonal,
)
from .observables import ground_manifold_indices

N_SAMPLES_DEFAULT = 200

NORM_DRIFT_LIMIT = 1e-6
TRACE_DRIFT_LIMIT = 1e-6
NEGATIVITY_LIMIT = -1e-6


class EvolutionError(RuntimeError):
    """Integration aborted: the step size or binning cannot hold the invariants."""


@dataclass
class Trajectory:
    """Sampled evolution record: 200 uniform samples plus the final point."""

    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    fidelity: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class LindbladDecomposition:
    """Frequency-resolved pieces of the coupling operator at one instant.

    `ops[k]` holds, in the energy eigenbasis given by `basis`, the matrix
    elements of A between eigenstates whose energy difference falls in the
    bin centered at `frequencies[k]`; summed over bins they reproduce A.
    """

    energies: np.ndarray
    basis: np.ndarray
    frequencies: np.ndarray
    ops: np.ndarray
    rates: np.ndarray
    lamb: np.ndarray


def initial_state(sector: SpinSector) -> np.ndarray:
    """Uniform superposition (the transverse-field ground state) in the Dicke basis."""
    n = sector.n_spins
    amps = np.array([math.sqrt(math.comb(n, k)) for k in range(n + 1)])
    return (amps / 2 ** (n / 2)).astype(complex)


def _step_counts(t_f: float, dt_max: float, n_samples: int) -> tuple[int, int]:
    """Number of RK4 steps, rounded up so samples align with step boundaries."""
    n_steps = max(n_samples, math.ceil(t_f / dt_max - 1e-12))
    per_sample = math.ceil(n_steps / n_samples)
    return per_sample * n_samples, per_sample


def evolve_closed(
    sector: SpinSector,
    params: ModelParams,
    schedule: AnnealSchedule,
    dt: float,
    *,
    n_samples: int = N_SAMPLES_DEFAULT,
) -> Trajectory:
    """Integrate the Schrodinger equation along the annealing schedule.

    The state is renormalized after every step; the accumulated drift is
    recorded and the run aborts if it exceeds 1e-6.
    """
    t_f = schedule.t_f
    if dt > t_f / 100:
        raise ValueError(f"dt={dt} violates dt <= t_f/100 = {t_f / 100}")
    n_steps, per_sample = _step_counts(t_f, dt, n_samples)
    h = t_f / n_steps

    h0 = h_transverse(sector, params)
    hp = pspin_diagonal(sector, params)
    gs_idx = ground_manifold_indices(sector, params)
    dim = sector.dim

    def rhs(t: float, psi: np.ndarray) -> np.ndarray:
        s = t / t_f
        return -1j * ((1.0 - s) * (h0 @ psi) + s * (hp * psi))

    times = np.linspace(0.0, t_f, n_samples + 1)
    states = np.empty((n_samples + 1, dim), dtype=complex)
    energy = np.empty(n_samples + 1)
    fidelity = np.empty(n_samples + 1)
    trace = np.empty(n_samples + 1)

    psi = initial_state(sector)
    drift = 0.0

    def record(k: int, t: float) -> None:
        s = t / t_f
        states[k] = psi
        energy[k] = float(np.real(np.vdot(psi, (1.0 - s) * (h0 @ psi) + s * (hp * psi))))
        fidelity[k] = float(np.sum(np.abs(psi[gs_idx]) ** 2))
        trace[k] = float(np.real(np.vdot(psi, psi)))

    record(0, 0.0)
    t = 0.0
    for step in range(n_steps):
        k1 = rhs(t, psi)
        k2 = rhs(t + h / 2, psi + (h / 2) * k1)
        k3 = rhs(t + h / 2, psi + (h / 2) * k2)
        k4 = rhs(t + h, psi + h * k3)
        psi = psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (step + 1) * h
        norm_sq = np.real(np.vdot(psi, psi))
        norm = math.sqrt(norm_sq) if norm_sq > 0 else math.nan
        drift += abs(norm - 1.0)
        if not drift <= NORM_DRIFT_LIMIT:  # catches NaN as well
            raise EvolutionError(
                f"norm drift {drift:.3e} exceeds {NORM_DRIFT_LIMIT} at t={t:.4g} "
                f"(dt={h:.3e}; reduce the step size)"
            )
        psi /= norm
        if (step + 1) % per_sample == 0:
            record((step + 1) // per_sample, t)

    return Trajectory(
        times=times, states=states, energy=energy, fidelity=fidelity,
        trace=trace, min_eigenvalue=np.full(n_samples + 1, np.nan),
        diagnostics={"engine": "closed", "dt": h, "n_steps": n_steps, "norm_drift": drift},
    )


def _bin_frequencies(values: np.ndarray, bin_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Group a 1-d frequency multiset into bins of width <= bin_tol between neighbors.

    Returns (labels, centers); centers are per-bin means.  The input's exact
    antisymmetry makes the binning symmetric, so mirrored bins have exactly
    opposite centers.
    """
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    starts = np.empty(values.size, dtype=bool)
    starts[0] = True
    np.greater(np.diff(sorted_vals), bin_tol, out=starts[1:])
    ids_sorted = np.cumsum(starts) - 1
    labels = np.empty(values.size, dtype=np.intp)
    labels[order] = ids_sorted
    counts = np.bincount(ids_sorted)
    centers = np.bincount(ids_sorted, weights=sorted_vals) / counts
    return labels, centers


class _StageOperators:
    """Eigenbasis data for one Hamiltonian instant, shared by RK4 stages.

    Jump operators, rates, the damping operator Q = sum_w gamma_w L_w+ L_w
    and the effective Hamiltonian (including the Lamb shift) are assembled
    once per stage; the per-call work reduces to a handful of GEMMs.
    """

    __slots__ = ("energies", "basis", "frequencies", "_dim", "_jump_c",
                 "_jump_t_flat_c", "_heff_c", "_q_c", "_basis_c")

    def __init__(
        self,
        h: np.ndarray,
        a_diag: np.ndarray,
        bath: BathSpec,
        bin_tol: float,
        lamb_table: LambShiftTable | None,
    ):
        eps, v = _eigh_gauged(h)
        dim = eps.size
        a_eig = v.T @ (a_diag[:, None] * v)
        bohr = eps[None, :] - eps[:, None]  # omega_ab = eps_b - eps_a: jump b -> a
        labels, centers = _bin_frequencies(bohr.ravel(), bin_tol)
        ops = np.zeros((centers.size, dim, dim))
        rows, cols = np.indices((dim, dim))
        ops[labels.reshape(dim, dim), rows, cols] = a_eig
        rates = np.atleast_1d(gamma_of_omega(centers, bath))

        flat = ops.reshape(-1, dim)  # rows indexed by (bin, bra)
        weighted_flat = np.repeat(rates, dim)[:, None] * flat
        q = weighted_flat.T @ flat
        heff = np.diag(eps).astype(float)
        if lamb_table is not None:
            lamb = np.atleast_1d(lamb_table.interp(centers))
            heff += (np.repeat(lamb, dim)[:, None] * flat).T @ flat

        self.energies = eps
        self.basis = v
        self.frequencies = centers
        self._dim = dim
        self._jump_c = (rates[:, None, None] * ops).astype(complex)
        self._jump_t_flat_c = ops.transpose(0, 2, 1).reshape(-1, dim).astype(complex)
        self._heff_c = heff.astype(complex)
        self._q_c = q.astype(complex)
        self._basis_c = v.astype(complex)

    def rhs_eigenbasis(self, rho_e: np.ndarray) -> np.ndarray:
        """Full master-equation right-hand side for rho in this eigenbasis."""
        dim = self._dim
        heff = self._heff_c
        q = self._q_c
        # sum_w gamma_w L_w rho L_w+ via one batched GEMM and one flat GEMM
        m = self._jump_c @ rho_e
        sandwich = m.transpose(1, 0, 2).reshape(dim, -1) @ self._jump_t_flat_c
        comm = heff @ rho_e - rho_e @ heff
        return -1j * comm + sandwich - 0.5 * (q @ rho_e + rho_e @ q)

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        v = self._basis_c
        return v @ self.rhs_eigenbasis(v.T @ rho @ v) @ v.T


def build_decomposition(
    h_eig: tuple[np.ndarray, np.ndarray],
    sector: SpinSector,
    bath: BathSpec,
    bin_tol: float,
) -> LindbladDecomposition:
    """Bin the Bohr frequencies of an eigendecomposition and split A over them."""
    eps, v = h_eig
    dim = eps.size
    a_diag = 2.0 * np.diag(sector.s_z)
    a_eig = v.T @ (a_diag[:, None] * v)
    bohr = eps[None, :] - eps[:, None]
    labels, centers = _bin_frequencies(bohr.ravel(), bin_tol)
    ops = np.zeros((centers.size, dim, dim))
    rows, cols = np.indices((dim, dim))
    ops[labels.reshape(dim, dim), rows, cols] = a_eig
    rates = np.atleast_1d(gamma_of_omega(centers, bath))
    if bath.lamb_shift_enabled and bath.eta_g2 > 0:
        table = get_lamb_table(bath, max(1.0, float(np.abs(centers).max())))
        lamb = np.atleast_1d(table(centers))
    else:
        lamb = np.zeros_like(centers)
    return LindbladDecomposition(
        energies=eps, basis=v, frequencies=centers, ops=ops, rates=rates, lamb=lamb
    )


def dissipator_apply(decomp: LindbladDecomposition, rho: np.ndarray) -> np.ndarray:
    """Davies dissipator sum_w gamma(w) [L_w rho L_w+ - {L_w+ L_w, rho}/2].

    `rho` is given in the same basis the decomposition was built from (the
    Dicke basis); the output is Hermitian and traceless.
    """
    v = decomp.basis
    rho_e = v.T @ np.asarray(rho, dtype=complex) @ v
    k_ops = decomp.ops
    weighted = decomp.rates[:, None, None] * k_ops
    sandwich = np.tensordot(weighted @ rho_e, k_ops, axes=([0, 2], [0, 2]))
    q = np.tensordot(weighted, k_ops, axes=([0, 1], [0, 1]))
    out_e = sandwich - 0.5 * (q @ rho_e + rho_e @ q)
    return v @ out_e @ v.T


def lamb_shift_h(decomp: LindbladDecomposition) -> np.ndarray:
    """Lamb-shift Hamiltonian sum_w S(w) L_w+ L_w, in the Dicke basis."""
    k_ops = decomp.ops
    hls_e = np.tensordot(decomp.lamb[:, None, None] * k_ops, k_ops, axes=([0, 1], [0, 1]))
    return decomp.basis @ hls_e @ decomp.basis.T


def master_equation_rhs(
    sector: SpinSector,
    params: ModelParams,
    s: float,
    bath: BathSpec,
    rho: np.ndarray,
    bin_tol: float = 1e-9,
) -> np.ndarray:
    """Right-hand side of the full master equation at interpolation point s.

    Convenience entry point for fixed-point diagnostics.
    """
    h = (1.0 - s) * h_transverse(sector, params)
    h[np.diag_indices_from(h)] += s * pspin_diagonal(sector, params)
    table = _make_lamb_table(sector, params, bath)
    stage = _StageOperators(h, 2.0 * np.diag(sector.s_z), bath, bin_tol, table)
    v = stage.basis
    return v @ stage.rhs_eigenbasis(v.T @ np.asarray(rho, dtype=complex) @ v) @ v.T


def _make_lamb_table(
    sector: SpinSector, params: ModelParams, bath: BathSpec
) -> LambShiftTable | None:
    if not bath.lamb_shift_enabled or bath.eta_g2 == 0:
        return None
    # Bohr frequencies never exceed the worst endpoint spectral spread
    spread = 2.0 * sector.n_spins * max(params.gamma, 1.0)
    return get_lamb_table(bath, 1.01 * spread)


def _integrate_master(
    sector: SpinSector,
    params: ModelParams,
    bath: BathSpec,
    rho0: np.ndarray,
    t_total: float,
    n_steps: int,
    per_sample: int,
    bin_tol: float,
    s_of_t: Callable[[float], float],
    frozen_s: float | None,
    engine_tag: str,
) -> Trajectory:
    h0 = h_transverse(sector, params)
    hp = pspin_diagonal(sector, params)
    a_diag = 2.0 * np.diag(sector.s_z)
    gs_idx = ground_manifold_indices(sector, params)
    lamb_table = _make_lamb_table(sector, params, bath)
    dim = sector.dim
    h_step = t_total / n_steps
    n_samples = n_steps // per_sample

    h_buf = np.empty_like(h0)
    diag_idx = np.arange(dim)

    def hamiltonian(s: float) -> np.ndarray:
        np.multiply(h0, 1.0 - s, out=h_buf)
        h_buf[diag_idx, diag_idx] += s * hp
        return h_buf

    # stage operators are keyed by the half-step index 2t/h so the k4 stage
    # of one step is reused as k1 of the next
    stage_cache: dict[int, _StageOperators] = {}

    def stage_at(half_idx: int) -> _StageOperators:
        key = 0 if frozen_s is not None else half_idx
        ops = stage_cache.get(key)
        if ops is None:
            s = frozen_s if frozen_s is not None else s_of_t(half_idx * h_step / 2)
            ops = _StageOperators(hamiltonian(s), a_diag, bath, bin_tol, lamb_table)
            if len(stage_cache) > 4:
                for stale in sorted(stage_cache)[:-2]:
                    del stage_cache[stale]
            stage_cache[key] = ops
        return ops

    unitary_only = bath.eta_g2 == 0

    def rhs(half_idx: int, rho: np.ndarray) -> np.ndarray:
        if unitary_only:
            s = frozen_s if frozen_s is not None else s_of_t(half_idx * h_step / 2)
            h = hamiltonian(s)
            return -1j * (h @ rho - rho @ h)
        return stage_at(half_idx).rhs(rho)

    times = np.linspace(0.0, t_total, n_samples + 1)
    states = np.empty((n_samples + 1, dim, dim), dtype=complex)
    energy = np.empty(n_samples + 1)
    fidelity = np.empty(n_samples + 1)
    trace = np.empty(n_samples + 1)
    min_eig = np.empty(n_samples + 1)
    max_trace_err = 0.0
    max_herm_err = 0.0
    min_eig_overall = np.inf

    rho = np.array(rho0, dtype=complex)

    def record(k: int, t: float) -> None:
        nonlocal max_trace_err, max_herm_err, min_eig_overall
        s = frozen_s if frozen_s is not None else s_of_t(t)
        states[k] = rho
        tr = float(np.real(np.trace(rho)))
        trace[k] = tr
        # inverted comparison so non-finite values abort too
        if not abs(tr - 1.0) <= TRACE_DRIFT_LIMIT or not np.isfinite(rho).all():
            raise EvolutionError(
                f"trace drift {abs(tr - 1.0):.3e} exceeds {TRACE_DRIFT_LIMIT} at "
                f"t={t:.4g} (dt={h_step:.3e}; reduce the step size)"
            )
        energy[k] = float(np.real(np.trace(hamiltonian(s) @ rho)))
        fidelity[k] = float(np.real(np.sum(np.diag(rho)[gs_idx])))
        herm = float(np.abs(rho - rho.conj().T).max())
        lam_min = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        min_eig[k] = lam_min
        max_trace_err = max(max_trace_err, abs(tr - 1.0))
        max_herm_err = max(max_herm_err, herm)
        min_eig_overall = min(min_eig_overall, lam_min)
        if not lam_min >= NEGATIVITY_LIMIT:
            raise EvolutionError(
                f"negativity {lam_min:.3e} below {NEGATIVITY_LIMIT} at t={t:.4g} "
                f"(dt={h_step:.3e}; reduce the step size or loosen bin_tol)"
            )

    record(0, 0.0)
    for step in range(n_steps):
        j = 2 * step
        k1 = rhs(j, rho)
        k2 = rhs(j + 1, rho + (h_step / 2) * k1)
        k3 = rhs(j + 1, rho + (h_step / 2) * k2)
        k4 = rhs(j + 2, rho + h_step * k3)
        rho = rho + (h_step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (step + 1) % per_sample == 0:
            record((step + 1) // per_sample, (step + 1) * h_step)

    return Trajectory(
        times=times, states=states, energy=energy, fidelity=fidelity,
        trace=trace, min_eigenvalue=min_eig,
        diagnostics={
            "engine": engine_tag,
            "dt": h_step,
            "n_steps": n_steps,
            "max_trace_error": max_trace_err,
            "max_hermiticity_error": max_herm_err,
            "min_eigenvalue": min_eig_overall,
        },
    )


def evolve_lindblad(
    sector: SpinSector,
    params: ModelParams,
    schedule: AnnealSchedule,
    bath: BathSpec,
    dt: float,
    bin_tol: float = 1e-9,
    *,
    n_samples: int = N_SAMPLES_DEFAULT,
) -> Trajectory:
    """Anneal the open system from the transverse-field ground state.

    The eigendecomposition and the frequency-binned jump operators are
    rebuilt at every RK4 stage time.  Trace and positivity are monitored at
    each sample and violations abort the run.
    """
    t_f = schedule.t_f
    dt_cap = min(t_f / 2000, 0.01)
    if dt > dt_cap * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates dt <= min(t_f/2000, 0.01) = {dt_cap}")
    n_steps, per_sample = _step_counts(t_f, dt, n_samples)
    psi0 = initial_state(sector)
    rho0 = np.outer(psi0, psi0.conj())
    return _integrate_master(
        sector, params, bath, rho0, t_f, n_steps, per_sample, bin_tol,
        s_of_t=lambda t: t / t_f, frozen_s=None, engine_tag="lindblad",
    )


def evolve_lindblad_frozen(
    sector: SpinSector,
    params: ModelParams,
    s: float,
    bath: BathSpec,
    t_total: float,
    dt: float,
    bin_tol: float = 1e-9,
    *,
    rho0: np.ndarray | None = None,
    n_samples: int = N_SAMPLES_DEFAULT,
) -> Trajectory:
    """Relax under the master equation at a fixed interpolation point s.

    Used for fixed-point diagnostics; jump operators are built once.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    if t_total <= 0:
        raise ValueError(f"t_total must be positive, got {t_total}")
    n_steps, per_sample = _step_counts(t_total, dt, n_samples)
    if rho0 is None:
        psi0 = initial_state(sector)
        rho0 = np.outer(psi0, psi0.conj())
    return _integrate_master(
        sector, params, bath, rho0, t_total, n_steps, per_sample, bin_tol,
        s_of_t=lambda t: s, frozen_s=s, engine_tag="lindblad-frozen",
    )
