"""Ohmic phonon bath: spectral density, rate spectrum and Lamb-shift kernel.

The bath enters the master equation through two real functions of the Bohr
frequency: the rate gamma(omega), which obeys the KMS condition
gamma(-omega) = exp(-beta*omega) * gamma(omega), and the Lamb-shift kernel
S(omega), the principal-value Hilbert transform of gamma / 2pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    """Raised when the principal-value quadrature misses its error budget."""


@dataclass(frozen=True)
class BathSpec:
    """Environment parameters; energies in units of the transverse field.

    The coupling enters only through eta * g**2.  beta may be math.inf
    (zero temperature), in which case gamma vanishes for omega <= 0.
    """

    eta: float
    beta: float
    g: float = 1.0
    omega_c: float = 10.0
    nu: float = 1.0
    lamb_shift_enabled: bool = True

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive or inf, got {self.beta}")
        if self.omega_c <= 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    @property
    def eta_g2(self) -> float:
        return self.eta * self.g**2


def ohmic_j(omega, spec: BathSpec):
    """Spectral density J(omega) = eta * omega^nu / omega_c^(nu-1) * exp(-omega/omega_c)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("ohmic_j is defined for omega >= 0; pass |omega|")
    out = spec.eta * w**spec.nu / spec.omega_c ** (spec.nu - 1) * np.exp(-w / spec.omega_c)
    return out if out.ndim else float(out)


def gamma_of_omega(omega, spec: BathSpec):
    """Rate spectrum gamma(omega), vectorized over omega.

    gamma(omega) = 2 pi g^2 J(|omega|) / (1 - exp(-beta |omega|)) for
    omega > 0 and the detailed-balance counterpart e^{-beta|omega|} branch
    for omega < 0.  At omega = 0 the nu = 1 limit 2 pi eta g^2 / beta is
    used; at beta = inf only omega > 0 contributes.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    pref = TWO_PI * spec.g**2
    if spec.eta == 0 or spec.g == 0:
        out = np.zeros_like(w)
    elif math.isinf(spec.beta):
        aw = np.abs(w)
        j = spec.eta * aw**spec.nu / spec.omega_c ** (spec.nu - 1) * np.exp(-aw / spec.omega_c)
        out = np.where(w > 0, pref * j, 0.0)
    elif spec.nu == 1.0:
        # for nu = 1 both signs collapse to the single smooth expression
        # eta * exp(-|w|/wc) * w / (1 - e^{-beta w}), with value 1/beta at 0
        x = np.clip(spec.beta * w, -700.0, None)
        denom = -np.expm1(-x)
        small = np.abs(x) < 1e-8
        occupancy = np.where(
            small, (1.0 + 0.5 * x) / spec.beta, w / np.where(small, 1.0, denom)
        )
        out = pref * spec.eta * np.exp(-np.abs(w) / spec.omega_c) * occupancy
    else:
        aw = np.abs(w)
        j = spec.eta * aw**spec.nu / spec.omega_c ** (spec.nu - 1) * np.exp(-aw / spec.omega_c)
        out = np.zeros_like(w)
        pos = w > 0
        neg = w < 0
        out[pos] = pref * j[pos] / (-np.expm1(-spec.beta * aw[pos]))
        out[neg] = pref * j[neg] / np.expm1(np.minimum(spec.beta * aw[neg], 700.0))
    return float(out[0]) if scalar else out


def _gamma_scalar(w: float, spec: BathSpec) -> float:
    # pure-scalar twin of gamma_of_omega; quad evaluates the integrand
    # pointwise and the ndarray wrapping costs dominate otherwise
    if spec.eta == 0.0 or spec.g == 0.0:
        return 0.0
    aw = abs(w)
    if w == 0.0:
        if math.isinf(spec.beta) or spec.nu != 1.0:
            return 0.0
        return TWO_PI * spec.g**2 * spec.eta / spec.beta
    j = spec.eta * aw**spec.nu / spec.omega_c ** (spec.nu - 1) * math.exp(-aw / spec.omega_c)
    pref = TWO_PI * spec.g**2
    if math.isinf(spec.beta):
        return pref * j if w > 0 else 0.0
    if w > 0:
        return pref * j / (-math.expm1(-spec.beta * aw))
    x = spec.beta * aw
    if x > 690.0:  # expm1 overflow; the rate underflows to zero
        return pref * j * math.exp(-x)
    return pref * j / math.expm1(x)


def _gamma_derivative(omega: float, spec: BathSpec) -> float:
    h = 1e-5 * max(1.0, abs(omega))
    return (_gamma_scalar(omega + h, spec) - _gamma_scalar(omega - h, spec)) / (2 * h)


def lamb_kernel(
    omega: float,
    spec: BathSpec,
    *,
    excision: float = 1e-6,
    window_scale: float = 20.0,
    quad_tol: float = 1e-10,
) -> float:
    """Lamb-shift kernel S(omega) = (1/2pi) PV int gamma(w') / (omega - w') dw'.

    The principal value is taken over w' in [-W, W] with
    W = window_scale * max(omega_c, 1/beta, |omega|), excising a symmetric
    interval of half-width `excision` around the pole and restoring its
    leading (odd-symmetry) contribution -excision * gamma'(omega) / pi.
    Raises QuadratureError if the estimated error exceeds
    1e-6 * max(1, |S|).
    """
    if not spec.lamb_shift_enabled:
        raise ValueError("lamb_kernel called with lamb_shift_enabled=False")
    if spec.eta == 0 or spec.g == 0:
        return 0.0
    scales = [spec.omega_c, abs(omega)]
    if not math.isinf(spec.beta):
        scales.append(1.0 / spec.beta)
    window = window_scale * max(scales)

    def integrand(w: float) -> float:
        return _gamma_scalar(w, spec) / (omega - w)

    def breakpoints(lo: float, hi: float) -> list[float]:
        # geometric refinement walking away from the pole keeps the adaptive
        # quadrature cheap on the 1/(omega - w') flank
        pts = {0.0} if lo < 0.0 < hi else set()
        offset = excision * 10.0
        while offset < (hi - lo):
            for cand in (omega - offset, omega + offset):
                if lo < cand < hi:
                    pts.add(cand)
            offset *= 10.0
        return sorted(pts)

    total = 0.0
    err = 0.0
    segments = [(-window, omega - excision), (omega + excision, window)]
    for lo, hi in segments:
        if hi <= lo:
            continue
        pts = breakpoints(lo, hi)
        val, est = quad(
            integrand, lo, hi, points=pts or None, limit=300,
            epsabs=quad_tol, epsrel=quad_tol,
        )
        total += val
        err += est
    # excised window: gamma(w') ~ gamma(omega) + gamma'(omega)(w' - omega);
    # the constant term has vanishing principal value
    correction = -2.0 * excision * _gamma_derivative(omega, spec)
    s_val = (total + correction) / TWO_PI
    if err / TWO_PI > 1e-6 * max(1.0, abs(s_val)):
        raise QuadratureError(
            f"PV quadrature error {err / TWO_PI:.3e} exceeds budget at omega={omega}"
        )
    return s_val


class LambShiftTable:
    """Cubic-spline cache of S(omega) over a symmetric frequency range.

    The spline is built at unit coupling (eta = g = 1) and rescaled by
    eta * g^2 on evaluation, since S is linear in the coupling; rebuilding
    the principal-value integral at every integrator stage would dominate
    the run time.
    """

    def __init__(self, spec: BathSpec, omega_max: float, *, n_nodes: int = 160):
        if omega_max <= 0:
            raise ValueError("omega_max must be positive")
        self.spec = spec
        self.omega_max = omega_max
        self._spline = _unit_spline(spec.beta, spec.omega_c, spec.nu, omega_max, n_nodes)
        self._dense_x: np.ndarray | None = None
        self._dense_y: np.ndarray | None = None

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        if np.any(np.abs(w) > self.omega_max * (1 + 1e-9)):
            raise ValueError("omega outside the tabulated range")
        out = self.spec.eta_g2 * self._spline(w)
        return float(out) if out.ndim == 0 else out

    def interp(self, omega: np.ndarray) -> np.ndarray:
        """Linear interpolation on a dense pre-evaluated grid.

        About an order of magnitude faster than the spline call; meant for
        integrator inner loops, where its ~1e-6 relative error is far below
        the step error.
        """
        if self._dense_x is None:
            n_dense = 1 << 17  # even count => symmetric grid containing 0
            x = np.linspace(-self.omega_max, self.omega_max, n_dense + 1)
            self._dense_x = x
            self._dense_y = self._spline(x)
        return self.spec.eta_g2 * np.interp(omega, self._dense_x, self._dense_y)


_SPLINE_CACHE: dict[tuple[float, float, float, float, int], CubicSpline] = {}


def _unit_spline(
    beta: float, omega_c: float, nu: float, omega_max: float, n_nodes: int
) -> CubicSpline:
    key = (beta, omega_c, nu, omega_max, n_nodes)
    spline = _SPLINE_CACHE.get(key)
    if spline is None:
        unit = BathSpec(eta=1.0, beta=beta, g=1.0, omega_c=omega_c, nu=nu)
        # log-dense nodes resolve the omega*log|omega| cusp left by the
        # spectral-density kink at omega = 0; linear spacing takes over
        # above omega = 1 where the kernel is smooth but still curved
        lo = min(1e-6, omega_max * 1e-6)
        knee = min(1.0, omega_max / 2)
        pos = np.unique(np.concatenate([
            np.geomspace(lo, knee, n_nodes // 2),
            np.linspace(knee, omega_max, max(n_nodes, int(4 * omega_max)) + 1),
        ]))
        nodes = np.concatenate([-pos[::-1], [0.0], pos])
        values = np.array([lamb_kernel(w, unit) for w in nodes])
        spline = CubicSpline(nodes, values)
        _SPLINE_CACHE[key] = spline
    return spline


def get_lamb_table(spec: BathSpec, omega_max: float) -> LambShiftTable:
    """Table lookup with range bucketing so equivalent baths share splines."""
    bucket = 2.0 ** math.ceil(math.log2(max(omega_max, 1.0)))
    return LambShiftTable(spec, bucket)
