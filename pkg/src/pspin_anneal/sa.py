"""Classical simulated annealing of the p-spin model.

The magnetization distribution evolves under a single-flip master equation
with heat-bath rates; the generator has zero column sums by construction,
so probability is conserved exactly.  Magnetization levels are indexed by
the number of up spins j = 0..N, i.e. m_j = -1 + 2j/N ascending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

N_SAMPLES_DEFAULT = 200


class SaEvolutionError(RuntimeError):
    """Probability left the simplex beyond tolerance; the step size is too large."""


@dataclass(frozen=True)
class SaSchedule:
    """Linear cooling T(t) = T0 (1 - t/t_f) + Tf."""

    t_f: float
    tf_temperature: float
    t0_temperature: float = 2.0

    def __post_init__(self) -> None:
        if self.t_f <= 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if self.tf_temperature < 0:
            raise ValueError(f"Tf must be >= 0, got {self.tf_temperature}")
        if self.t0_temperature <= self.tf_temperature:
            raise ValueError(
                f"need T0 > Tf, got T0={self.t0_temperature}, Tf={self.tf_temperature}"
            )

    def temperature(self, t: float) -> float:
        return self.t0_temperature * (1.0 - t / self.t_f) + self.tf_temperature


def magnetizations(n_spins: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(n_spins + 1) / n_spins


def classical_energy(m, n_spins: int, p: int):
    """Classical p-spin energy H_c(m) = -N m^p."""
    m_arr = np.asarray(m, dtype=float)
    if np.any(np.abs(m_arr) > 1 + 1e-12):
        raise ValueError("magnetization outside [-1, 1]")
    out = -n_spins * m_arr**p
    return float(out) if out.ndim == 0 else out


def heat_bath_rate(delta_e, beta: float):
    """Single-flip acceptance W = 1 / (1 + e^{beta dE}).

    dE is the energy of the destination minus the origin; only this sign
    convention makes the Boltzmann distribution stationary.  beta = inf
    gives the zero-temperature branch (1, 1/2, 0).
    """
    de = np.asarray(delta_e, dtype=float)
    if math.isinf(beta):
        out = np.where(de < 0, 1.0, np.where(de == 0, 0.5, 0.0))
    else:
        # tanh form is overflow-safe for large |beta dE|
        out = 0.5 * (1.0 - np.tanh(0.5 * beta * de))
    return float(out) if out.ndim == 0 else out


def rate_matrix(n_spins: int, p: int, temperature: float) -> np.ndarray:
    """Single-flip generator G with dP/dt = G P and zero column sums.

    Off-diagonal entries carry the total flip rates (N/2)(1 -+ m) W; the
    boundary levels only have inward transitions because their multiplicity
    factors vanish.
    """
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    beta = math.inf if temperature == 0 else 1.0 / temperature
    energies = classical_energy(magnetizations(n_spins), n_spins, p)
    j = np.arange(n_spins)
    up_rate = (n_spins - j) * heat_bath_rate(energies[1:] - energies[:-1], beta)
    down_rate = (j + 1) * heat_bath_rate(energies[:-1] - energies[1:], beta)
    gen = np.diag(up_rate, -1) + np.diag(down_rate, 1)
    gen[np.diag_indices_from(gen)] -= gen.sum(axis=0)
    return gen


def glauber_rhs(probs: np.ndarray, temperature: float, n_spins: int, p: int) -> np.ndarray:
    """Time derivative of the magnetization distribution at fixed temperature."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (n_spins + 1,):
        raise ValueError(f"expected {n_spins + 1} probabilities, got shape {probs.shape}")
    return rate_matrix(n_spins, p, temperature) @ probs


def equilibrium_distribution(n_spins: int, p: int, temperature: float) -> np.ndarray:
    """Degeneracy-weighted Boltzmann distribution binom(N, j) e^{-H_c/T} / Z."""
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    energies = classical_energy(magnetizations(n_spins), n_spins, p)
    log_binom = np.array(
        [math.lgamma(n_spins + 1) - math.lgamma(j + 1) - math.lgamma(n_spins - j + 1)
         for j in range(n_spins + 1)]
    )
    if temperature == 0:
        ground = energies == energies.min()
        return ground / ground.sum()
    logw = log_binom - energies / temperature
    w = np.exp(logw - logw.max())
    return w / w.sum()


def stationary_distribution(n_spins: int, p: int, temperature: float) -> np.ndarray:
    """Stationary vector of the rate matrix via its null space (brute force)."""
    kernel = null_space(rate_matrix(n_spins, p, temperature))
    if kernel.shape[1] != 1:
        raise RuntimeError(f"rate matrix null space has dimension {kernel.shape[1]}")
    vec = kernel[:, 0]
    vec = vec / vec.sum()
    if np.any(vec < -1e-10):
        raise RuntimeError("stationary vector has negative entries")
    return np.clip(vec, 0.0, None) / np.clip(vec, 0.0, None).sum()


def relax_fixed_temperature(
    n_spins: int,
    p: int,
    temperature: float,
    t_total: float,
    dt: float,
    probs0: np.ndarray | None = None,
) -> np.ndarray:
    """Isothermal master-equation flow; returns the distribution at t_total.

    Starts from the T = 2 equilibrium unless probs0 is given.  Used for
    fixed-point diagnostics against the null-space stationary vector.
    """
    if dt > 0.1 / n_spins * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates dt <= 0.1/N = {0.1 / n_spins}")
    gen = rate_matrix(n_spins, p, temperature)
    probs = equilibrium_distribution(n_spins, p, 2.0) if probs0 is None else np.array(probs0)
    n_steps = math.ceil(t_total / dt)
    h = t_total / n_steps
    for _ in range(n_steps):
        k1 = gen @ probs
        k2 = gen @ (probs + (h / 2) * k1)
        k3 = gen @ (probs + (h / 2) * k2)
        k4 = gen @ (probs + h * k3)
        probs = probs + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return probs


def evolve_sa(
    schedule: SaSchedule,
    n_spins: int,
    p: int,
    dt: float,
    *,
    n_samples: int = N_SAMPLES_DEFAULT,
) -> tuple[np.ndarray, float]:
    """Cool the distribution from T0 equilibrium; return (final P, residual energy).

    Integrates the master equation with fixed-step RK4 under the linear
    temperature ramp.  Negative probabilities beyond -1e-9 abort the run.
    """
    t_f = schedule.t_f
    dt_cap = min(t_f / 2000, 0.1 / n_spins)
    if dt > dt_cap * (1 + 1e-12):
        raise ValueError(f"dt={dt} violates dt <= min(t_f/2000, 0.1/N) = {dt_cap}")
    n_steps = max(n_samples, math.ceil(t_f / dt - 1e-12))
    per_sample = math.ceil(n_steps / n_samples)
    n_steps = per_sample * n_samples
    h = t_f / n_steps

    energies = classical_energy(magnetizations(n_spins), n_spins, p)
    probs = equilibrium_distribution(n_spins, p, schedule.t0_temperature)

    def rhs(t: float, dist: np.ndarray) -> np.ndarray:
        return rate_matrix(n_spins, p, schedule.temperature(t)) @ dist

    for step in range(n_steps):
        t = step * h
        k1 = rhs(t, probs)
        k2 = rhs(t + h / 2, probs + (h / 2) * k1)
        k3 = rhs(t + h / 2, probs + (h / 2) * k2)
        k4 = rhs(t + h, probs + h * k3)
        probs = probs + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (step + 1) % per_sample == 0:
            low = float(probs.min())
            if low < -1e-9:
                raise SaEvolutionError(
                    f"probability {low:.3e} below -1e-9 at t={t + h:.4g} "
                    f"(dt={h:.3e}; reduce the step size)"
                )
            total = float(probs.sum())
            if abs(total - 1.0) > 1e-10:
                raise SaEvolutionError(
                    f"probability sum drift {abs(total - 1.0):.3e} at t={t + h:.4g}"
                )

    probs = np.where((probs > -1e-12) & (probs < 0.0), 0.0, probs)
    residual = (float(energies @ probs) + n_spins) / n_spins
    return probs, residual
