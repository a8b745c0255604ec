"""Collective-spin workspace for the ferromagnetic p-spin model.

All operators live in the maximum-total-spin sector (dimension N+1), which is
preserved by the transverse-field, the p-body interaction and the collective
bath coupling.  Basis states are ordered by descending magnetization, so the
all-up state (m = 1) is the first basis vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FULL_SPACE_LIMIT = 12  # 2^N memory guard for the brute-force oracle


@dataclass(frozen=True)
class ModelParams:
    """Interaction exponent p and transverse-field strength (the energy unit)."""

    p: int
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear annealing schedule s(t) = t / t_f, with t_f in units hbar/Gamma."""

    t_f: float
    kind: str = "linear"

    def __post_init__(self) -> None:
        if self.t_f <= 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if self.kind != "linear":
            raise ValueError(f"unsupported schedule kind {self.kind!r}")

    def s(self, t: float) -> float:
        if t < 0 or t > self.t_f * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, t_f={self.t_f}]")
        return min(t / self.t_f, 1.0)


@dataclass(frozen=True)
class SpinSector:
    """Dense collective operators in the S = N/2 sector.

    m_values holds the magnetizations (N - 2k)/N for k = 0..N, descending
    from 1 to -1.  s_z is diagonal with entries N*m/2; s_x carries the
    standard angular-momentum ladder elements on the two off-diagonals.
    Arrays are read-only; sectors are safe to share between workers.
    """

    n_spins: int
    dim: int
    m_values: np.ndarray = field(repr=False)
    s_x: np.ndarray = field(repr=False)
    s_z: np.ndarray = field(repr=False)


def build_sector(n_spins: int) -> SpinSector:
    """Build the (N+1)-dimensional collective-spin workspace."""
    if n_spins < 1:
        raise ValueError(f"n_spins must be >= 1, got {n_spins}")
    n = int(n_spins)
    spin = n / 2.0
    # m_tilde = N*m/2 runs N/2, N/2 - 1, ..., -N/2 along the basis order
    m_tilde = spin - np.arange(n + 1)
    m_values = m_tilde / spin
    s_z = np.diag(m_tilde)
    # <m_tilde + 1 | S^+ | m_tilde> = sqrt(S(S+1) - m_tilde (m_tilde + 1))
    ladder = np.sqrt(spin * (spin + 1) - m_tilde[1:] * (m_tilde[1:] + 1))
    s_x = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    s_x[idx, idx + 1] = 0.5 * ladder
    s_x[idx + 1, idx] = 0.5 * ladder
    for arr in (m_values, s_x, s_z):
        arr.setflags(write=False)
    return SpinSector(n_spins=n, dim=n + 1, m_values=m_values, s_x=s_x, s_z=s_z)


def pspin_diagonal(sector: SpinSector, params: ModelParams) -> np.ndarray:
    """Diagonal of the p-body Hamiltonian, entries -N * m^p."""
    return -sector.n_spins * sector.m_values**params.p


def h_pspin(sector: SpinSector, params: ModelParams) -> np.ndarray:
    """p-body interaction Hamiltonian, diagonal in the magnetization basis."""
    return np.diag(pspin_diagonal(sector, params))


def h_transverse(sector: SpinSector, params: ModelParams) -> np.ndarray:
    """Transverse-field Hamiltonian -Gamma * sum_i sigma^x_i = -2 Gamma S^x."""
    return -2.0 * params.gamma * sector.s_x


def h_total(sector: SpinSector, params: ModelParams, s: float) -> np.ndarray:
    """Interpolated Hamiltonian (1-s) H_transverse + s H_pspin."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    return (1.0 - s) * h_transverse(sector, params) + s * h_pspin(sector, params)


def _eigh_gauged(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """eigh plus the sign gauge, without input validation (trusted callers)."""
    vals, vecs = np.linalg.eigh(h)
    # np.argmax returns the first occurrence, which implements the tie rule
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def eig_sorted(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix, ascending eigenvalues.

    Eigenvector signs are fixed so the largest-magnitude component of each
    column is positive (ties broken by lowest index), giving a deterministic
    gauge for downstream Lindblad operators.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.abs(h).max()))
    if np.abs(h - h.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return _eigh_gauged(h)


def parity_even_basis(n_spins: int) -> np.ndarray:
    """Orthonormal basis of the spin-flip-even subspace, as columns.

    The global flip acts on the collective basis as the index reversal
    m -> -m; even combinations are (|m> + |-m>)/sqrt(2) plus the m = 0
    state when N is even.
    """
    dim = n_spins + 1
    n_pairs = dim // 2
    cols = n_pairs + (dim % 2)
    basis = np.zeros((dim, cols))
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for k in range(n_pairs):
        basis[k, k] = inv_sqrt2
        basis[dim - 1 - k, k] = inv_sqrt2
    if dim % 2:
        basis[n_pairs, n_pairs] = 1.0
    return basis


def minimum_gap(
    sector: SpinSector, params: ModelParams, grid: np.ndarray
) -> tuple[float, float]:
    """Scan the gap above the tracked ground state over the grid.

    Returns (min gap, location s*).  For odd p this is E_1(s) - E_0(s) in
    the full collective sector.  For even p the Hamiltonian commutes with
    the global spin flip and the anneal stays in the flip-even subspace of
    the initial state, so the gap is taken there; the full-sector E_1 - E_0
    would instead collapse onto the exponentially small (exactly zero at
    s = 1) parity splitting of the broken phase, which no dynamics sees.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty s grid")
    h0 = h_transverse(sector, params)
    hp_diag = pspin_diagonal(sector, params)
    even_basis = None
    if params.p % 2 == 0:
        even_basis = parity_even_basis(sector.n_spins)
        if even_basis.shape[1] < 2:
            raise ValueError(
                f"flip-even subspace of N={sector.n_spins} is too small for a gap"
            )
    best_gap = np.inf
    best_s = grid[0]
    for s in grid:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"grid value s={s} outside [0, 1]")
        h = (1.0 - s) * h0
        h[np.diag_indices_from(h)] += s * hp_diag
        if even_basis is not None:
            h = even_basis.T @ h @ even_basis
        vals = np.linalg.eigvalsh(h)
        gap = vals[1] - vals[0]
        if gap < best_gap:
            best_gap = gap
            best_s = s
    return float(best_gap), float(best_s)


def full_space_oracle(n_spins: int, params: ModelParams, s: float) -> np.ndarray:
    """Interpolated Hamiltonian on the full 2^N space, for validation only.

    Built from explicit single-spin tensor products, independently of the
    collective-sector construction.
    """
    if n_spins > FULL_SPACE_LIMIT:
        raise ValueError(
            f"n_spins={n_spins} exceeds the full-space limit {FULL_SPACE_LIMIT}"
        )
    if n_spins < 1:
        raise ValueError(f"n_spins must be >= 1, got {n_spins}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    n = int(n_spins)
    dim = 2**n
    states = np.arange(dim)
    # sum_i sigma^z_i is diagonal: N minus twice the number of set bits
    popcount = np.array([bin(b).count("1") for b in states])
    sz_total = n - 2 * popcount
    hp = -n * (sz_total / n) ** params.p
    sx_total = np.zeros((dim, dim))
    for site in range(n):
        flipped = states ^ (1 << site)
        sx_total[states, flipped] += 1.0
    h = (1.0 - s) * (-params.gamma) * sx_total
    h[np.diag_indices_from(h)] += s * hp
    return h
