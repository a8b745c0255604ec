"""Scalar diagnostics: residual energy, fidelity, Gibbs populations, slope fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .spin_core import ModelParams, SpinSector, pspin_diagonal

# residual energies below this are indistinguishable from zero on log axes;
# consumers flag floored values instead of dropping them
LOG_FLOOR = 1e-14


@dataclass
class AnnealResult:
    """One annealing outcome plus the parameters that produced it."""

    engine: str
    n_spins: int
    p: int
    gamma: float
    t_f: float
    residual_energy: float | None
    fidelity: float | None
    beta: float | None = None
    eta_g2: float | None = None
    omega_c: float | None = None
    lamb_shift: bool | None = None
    t0_temperature: float | None = None
    tf_temperature: float | None = None
    dt: float | None = None
    bin_tol: float | None = None
    status: str = "ok"
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status == "ok":
            if self.residual_energy is None or self.residual_energy < -1e-9:
                raise ValueError(f"residual energy {self.residual_energy} out of range")
            if self.fidelity is None or not -1e-9 <= self.fidelity <= 1 + 1e-9:
                raise ValueError(f"fidelity {self.fidelity} out of range")


def _pspin_expectation(state: np.ndarray, diag: np.ndarray) -> float:
    state = np.asarray(state)
    if state.ndim == 1:
        if state.shape[0] != diag.shape[0]:
            raise ValueError(f"state dimension {state.shape[0]} != sector {diag.shape[0]}")
        return float(np.real(np.vdot(state, diag * state)) / np.real(np.vdot(state, state)))
    if state.ndim == 2 and state.shape[0] == state.shape[1]:
        if state.shape[0] != diag.shape[0]:
            raise ValueError(f"state dimension {state.shape[0]} != sector {diag.shape[0]}")
        return float(np.real(np.trace(diag[:, None] * state)))
    raise ValueError(f"state must be a vector or square matrix, got shape {state.shape}")


def residual_energy(state, sector: SpinSector, params: ModelParams) -> float:
    """Per-spin excess of the final p-spin energy over the ground energy -N.

    Accepts a state vector (expectation value) or a density matrix (trace).
    """
    diag = pspin_diagonal(sector, params)
    return (_pspin_expectation(state, diag) + sector.n_spins) / sector.n_spins


def ground_manifold_indices(sector: SpinSector, params: ModelParams) -> np.ndarray:
    """Basis indices of the target ground manifold of the p-spin Hamiltonian.

    For odd p this is the single m = 1 state; for even p the degenerate
    m = +-1 pair, whose total population is the reported fidelity.
    """
    diag = pspin_diagonal(sector, params)
    return np.flatnonzero(diag == -float(sector.n_spins))


def ground_state_fidelity(state, sector: SpinSector, params: ModelParams) -> float:
    """Population on the ground manifold of the p-spin Hamiltonian."""
    idx = ground_manifold_indices(sector, params)
    state = np.asarray(state)
    if state.ndim == 1:
        return float(np.sum(np.abs(state[idx]) ** 2) / np.real(np.vdot(state, state)))
    return float(np.real(np.sum(np.diag(state)[idx])))


def gibbs_populations(spectrum: np.ndarray, beta: float) -> np.ndarray:
    """Boltzmann weights e^{-beta E_i} / Z, overflow-safe via max-shift.

    beta = inf concentrates all weight on the minimum-energy level(s),
    split equally over exact ties; beta = 0 is uniform.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    energies = np.asarray(spectrum, dtype=float)
    if math.isinf(beta):
        ground = energies == energies.min()
        return ground / ground.sum()
    weights = np.exp(-beta * (energies - energies.min()))
    return weights / weights.sum()


def fit_loglog_slope(
    points: list[tuple[float, float]], window: tuple[float, float]
) -> tuple[float, float]:
    """Least-squares slope of log(eps) vs log(t_f) inside the t_f window.

    Returns (slope, standard error).  Requires at least three in-window
    points with positive residual energies.
    """
    lo, hi = window
    sel = [(t, e) for t, e in points if lo <= t <= hi]
    if len(sel) < 3:
        raise ValueError(f"need >= 3 points in window [{lo}, {hi}], found {len(sel)}")
    if any(e <= 0 for _, e in sel):
        raise ValueError("nonpositive residual energy in fit window")
    x = np.log(np.array([t for t, _ in sel]))
    y = np.log(np.array([e for _, e in sel]))
    xm = x - x.mean()
    sxx = float(np.dot(xm, xm))
    if sxx == 0:
        raise ValueError("degenerate fit window: all t_f equal")
    slope = float(np.dot(xm, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = len(sel) - 2
    stderr = float(np.sqrt(np.dot(resid, resid) / dof / sxx)) if dof > 0 else 0.0
    return slope, stderr
