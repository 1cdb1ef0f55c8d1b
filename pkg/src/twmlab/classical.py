"""Deterministic classical three-wave mixing.

Equations of motion for the complex amplitudes (g t dimensionless):

    d alpha1/dt = -i g conj(alpha2) alpha3
    d alpha2/dt = -i g conj(alpha1) alpha3
    d alpha3/dt = -i g alpha1 alpha2

The degenerate model follows from g -> sqrt(2) g', alpha3 -> sqrt(2) alpha3'
with alpha1 = alpha2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .special import (
    CubicRoots,
    UnphysicalInvariants,
    complete_K,
    cubic_roots_sorted,
    elliptic_F,
    jacobi_sn,
)

DEFAULT_TOL = 1e-10


class StepFailure(RuntimeError):
    """The adaptive integrator could not reach the requested final time."""


@dataclass(frozen=True)
class ClassicalState:
    alpha1: complex
    alpha2: complex
    alpha3: complex

    @classmethod
    def from_polar(cls, r: Sequence[float], phi: Sequence[float] = (0.0, 0.0, 0.0)) -> "ClassicalState":
        return cls(*(rk * np.exp(1j * pk) for rk, pk in zip(r, phi)))

    @classmethod
    def from_array(cls, a) -> "ClassicalState":
        return cls(complex(a[0]), complex(a[1]), complex(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.alpha3], dtype=complex)

    @property
    def intensities(self) -> np.ndarray:
        return np.abs(self.as_array()) ** 2

    @property
    def theta(self) -> float:
        """Phase mismatch phi1 + phi2 - phi3; NaN if a mode is empty."""
        a = self.as_array()
        if np.any(a == 0):
            return float("nan")
        return float(np.angle(a[0] * a[1] * np.conj(a[2])))


def derivatives(s: ClassicalState, g: float = 1.0) -> ClassicalState:
    a1, a2, a3 = s.alpha1, s.alpha2, s.alpha3
    return ClassicalState(
        -1j * g * a2.conjugate() * a3,
        -1j * g * a1.conjugate() * a3,
        -1j * g * a1 * a2,
    )


def polar_rates(r1: float, r2: float, r3: float, theta: float, g: float = 1.0) -> tuple[float, ...]:
    """(dr1, dr2, dr3, dtheta)/dt in amplitude-phase form; singular at r_k = 0."""
    s, c = math.sin(theta), math.cos(theta)
    return (
        -g * r2 * r3 * s,
        -g * r1 * r3 * s,
        g * r1 * r2 * s,
        g * (r1 * r2 / r3 - r1 * r3 / r2 - r2 * r3 / r1) * c,
    )


@dataclass(frozen=True)
class MotionInvariants:
    E1: float
    E2: float
    K: float


def invariants(s: ClassicalState) -> MotionInvariants:
    a1, a2, a3 = s.alpha1, s.alpha2, s.alpha3
    n3 = abs(a3) ** 2
    return MotionInvariants(
        abs(a1) ** 2 + n3,
        abs(a2) ** 2 + n3,
        (a1 * a2 * a3.conjugate()).real,
    )


def _invariant_arrays(alpha: np.ndarray):
    """E1, E2, K for amplitude arrays with the mode on the last axis."""
    n = np.abs(alpha) ** 2
    return (
        n[..., 0] + n[..., 2],
        n[..., 1] + n[..., 2],
        (alpha[..., 0] * alpha[..., 1] * np.conj(alpha[..., 2])).real,
    )


def invariant_drift(alpha: np.ndarray) -> np.ndarray:
    """Max drift of (E1, E2, K) along axis 0, relative to the energy scale.

    K carries intensity^{3/2}, so it is scaled by E^{3/2}.
    """
    E1, E2, K = _invariant_arrays(alpha)
    scale = np.maximum(np.maximum(E1[0], E2[0]), 1e-300)
    dE = np.maximum(np.abs(E1 - E1[0]).max(axis=0), np.abs(E2 - E2[0]).max(axis=0)) / scale
    dK = np.abs(K - K[0]).max(axis=0) / scale ** 1.5
    return np.maximum(dE, dK)


@dataclass
class Trajectory:
    times: np.ndarray
    alpha: np.ndarray  # (n_times, 3) complex
    invariant_drift: float
    g: float = 1.0

    @property
    def n(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2

    @property
    def states(self) -> list[ClassicalState]:
        return [ClassicalState.from_array(a) for a in self.alpha]


def _rhs_nondegenerate(g):
    def rhs(t, y):
        a = y.reshape(3, -1)
        out = np.empty_like(a)
        out[0] = -1j * g * np.conj(a[1]) * a[2]
        out[1] = -1j * g * np.conj(a[0]) * a[2]
        out[2] = -1j * g * a[0] * a[1]
        return out.ravel()
    return rhs


def _rhs_degenerate(g_prime):
    def rhs(t, y):
        a = y.reshape(2, -1)
        out = np.empty_like(a)
        out[0] = -2j * g_prime * np.conj(a[0]) * a[1]
        out[1] = -1j * g_prime * a[0] * a[0]
        return out.ravel()
    return rhs


def integrate_batch(
    alpha0: np.ndarray,
    t_grid: Sequence[float],
    g: float = 1.0,
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
    degenerate: bool = False,
) -> np.ndarray:
    """Propagate a batch of initial conditions together.

    ``alpha0`` has shape (n_traj, n_modes); the result has shape
    (n_times, n_traj, n_modes).  DOP853 with dense output evaluated on
    ``t_grid`` (which must start at the initial time).
    """
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    alpha0 = np.atleast_2d(np.asarray(alpha0, dtype=complex))
    n_traj, n_modes = alpha0.shape
    t_grid = np.asarray(t_grid, dtype=float)
    scale = max(1.0, float(np.abs(alpha0).max()))
    if atol is None:
        atol = tol * 1e-10 * scale
    rhs = _rhs_degenerate(g) if degenerate else _rhs_nondegenerate(g)
    y0 = alpha0.T.ravel()
    if t_grid[-1] == t_grid[0]:
        return np.broadcast_to(alpha0, (t_grid.size, n_traj, n_modes)).copy()
    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), y0, method="DOP853",
                    t_eval=t_grid, rtol=tol, atol=atol)
    if not sol.success:
        raise StepFailure(sol.message)
    return sol.y.reshape(n_modes, n_traj, -1).transpose(2, 1, 0)


def integrate(
    s0: ClassicalState,
    g: float = 1.0,
    t_grid: Sequence[float] = (0.0, 1.0),
    tol: float = DEFAULT_TOL,
    atol: float | None = None,
) -> Trajectory:
    """Adaptive Runge-Kutta solution of the non-degenerate equations."""
    t_grid = np.asarray(t_grid, dtype=float)
    alpha = integrate_batch(s0.as_array()[None, :], t_grid, g, tol, atol)[:, 0, :]
    return Trajectory(t_grid, alpha, float(invariant_drift(alpha)), g)


def integrate_degenerate(
    alpha1: complex,
    alpha3: complex,
    g_prime: float = 1.0 / math.sqrt(2.0),
    t_grid: Sequence[float] = (0.0, 1.0),
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Degenerate-model amplitudes (n_times, 2) for (alpha1', alpha3')."""
    return integrate_batch(np.array([[alpha1, alpha3]]), t_grid, g_prime, tol, degenerate=True)[:, 0, :]


def degenerate_to_nondegenerate(alpha1: complex, alpha3: complex, g_prime: float):
    """Map degenerate data onto the equivalent non-degenerate problem."""
    return ClassicalState(alpha1, alpha1, math.sqrt(2.0) * alpha3), math.sqrt(2.0) * g_prime


def n3_roots(s0: ClassicalState) -> CubicRoots:
    inv = invariants(s0)
    return cubic_roots_sorted(inv.E1, inv.E2, inv.K)


def n3_period(s0: ClassicalState, g: float = 1.0) -> float:
    """Oscillation period of n3(t): sn^2 repeats after 2K(k) in its argument."""
    roots = n3_roots(s0)
    if roots.degenerate:
        return math.inf
    return 2.0 * complete_K(roots.modulus) / (g * math.sqrt(roots.a - roots.c))


def exact_n3(s0: ClassicalState, g: float = 1.0, t=0.0):
    """Closed-form n3(t) = c + (b - c) sn^2(sqrt(a - c) g t + phi0, k).

    phi0 = +F(z, k) when n3 grows at t = 0 and -F(z, k) when it falls;
    the sign follows dn3/dt = 2 g Im(alpha1 alpha2 conj(alpha3)).
    """
    roots = n3_roots(s0)
    t_arr = np.asarray(t, dtype=float)
    if roots.degenerate:
        out = np.full(t_arr.shape, roots.c)
        return float(out) if out.ndim == 0 else out
    a, b, c = roots.a, roots.b, roots.c
    k = roots.modulus
    n30 = abs(s0.alpha3) ** 2
    ratio = min(1.0, max(0.0, (n30 - c) / (b - c)))
    z = math.asin(math.sqrt(ratio))
    if k == 1.0 and z >= 0.5 * math.pi:
        # sitting on the separatrix maximum: the unstable equilibrium
        out = np.full(t_arr.shape, b)
        return float(out) if out.ndim == 0 else out
    phi0 = elliptic_F(z, k)
    rate = 2.0 * g * (s0.alpha1 * s0.alpha2 * s0.alpha3.conjugate()).imag
    if rate < 0:
        phi0 = -phi0
    out = c + (b - c) * jacobi_sn(math.sqrt(a - c) * g * t_arr + phi0, k) ** 2
    return out


def tanh2_solution(r: float, g: float, t):
    """n3(t) = r^2 tanh^2(r g t) for inputs (r, r, 0)."""
    return r * r * np.tanh(r * g * np.asarray(t)) ** 2


def sech2_pulse(r: float, g: float, t, delay: float = 0.0):
    """Sub-frequency pulse r^2 sech^2(r g (t - delay)) leaving the state (0, 0, r).

    The sum-frequency intensity along the same orbit is r^2 minus this pulse.
    """
    return r * r / np.cosh(r * g * (np.asarray(t) - delay)) ** 2


def sech2_delay(r: float, g: float, eps: float) -> float:
    """Time at which the pulse peaks for a real seed eps on alpha1 and alpha2.

    A real seed projects eps/sqrt(2) onto the unstable direction
    (1 - i)/sqrt(2) of the fixed point (0, 0, r).
    """
    return math.acosh(math.sqrt(2.0) * r / eps) / (r * g)


def netr_amplitude(r1: float, r2: float) -> float:
    """Sum-frequency amplitude with 1/r3^2 = 1/r1^2 + 1/r2^2."""
    if not (r1 > 0 and r2 > 0):
        raise ValueError("netr_amplitude needs r1, r2 > 0")
    if math.isinf(r1):
        return float(r2)
    if math.isinf(r2):
        return float(r1)
    return r1 * r2 / math.hypot(r1, r2)


def netr_solution(r1: float, r2: float, r3: float, g: float = 1.0, t=0.0) -> np.ndarray:
    """alpha_k(t) = r_k exp(-i r1 r2 r3 g t / r_k^2); shape (..., 3)."""
    expected = netr_amplitude(r1, r2)
    if abs(r3 - expected) > 1e-9 * expected:
        raise ValueError(f"r3={r3} violates the no-energy-transfer condition (expected {expected})")
    t_arr = np.asarray(t, dtype=float)
    prod = r1 * r2 * r3
    r = np.array([r1, r2, r3])
    return r * np.exp(-1j * (prod / r ** 2) * g * t_arr[..., None])


__all__ = [
    "ClassicalState",
    "MotionInvariants",
    "Trajectory",
    "StepFailure",
    "UnphysicalInvariants",
    "derivatives",
    "polar_rates",
    "invariants",
    "invariant_drift",
    "integrate",
    "integrate_batch",
    "integrate_degenerate",
    "degenerate_to_nondegenerate",
    "n3_roots",
    "n3_period",
    "exact_n3",
    "tanh2_solution",
    "sech2_pulse",
    "sech2_delay",
    "netr_amplitude",
    "netr_solution",
]
