"""Short-time expansions, first-minimum extraction and scaling-law fits."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .quantum import DEFAULT_EPS_TRUNC, NONDEGENERATE, ModelKind, observable_series

POWER_LAW = "power_law"
INVERSE_POLYNOMIAL = "inverse_polynomial"


class NoMinimumError(ValueError):
    """The series has no interior local minimum in the sampled window."""


class DegenerateDesign(ValueError):
    """The abscissae do not determine the fit."""


def short_time_fano(r1, r2, r3, theta, gt):
    """Low-order expansion of (F1, F2, F3) about gt = 0.

    For theta = 0 the cubic terms vanish and F3 is given to fourth order.
    """
    gt = np.asarray(gt, dtype=float)
    s = math.sin(theta)
    cubic = r1 * r2 * r3 * s * gt ** 3
    f12 = 1.0 + 2.0 * r3 * r3 * gt ** 2 + (8.0 / 3.0) * cubic
    if theta == 0.0:
        c4 = r3**2 - 7 * r1**2 * r2**2 + 4 * r1**2 * r3**2 + 4 * r2**2 * r3**2
        f3 = 1.0 + c4 * gt ** 4 / 3.0
    else:
        f3 = 1.0 - (4.0 / 3.0) * cubic
    if gt.ndim == 0:
        return float(f12), float(f12), float(f3)
    return f12, f12.copy(), f3


@dataclass(frozen=True)
class MinimumRecord:
    x: float  # sweep coordinate (initial amplitude)
    t_min: float
    f_min: float
    n3_at_min: float = float("nan")


def _quadratic_vertex(t: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float, float]:
    """Vertex of the parabola through points i-1, i, i+1 of a uniform grid.

    Returns (t*, y*, d) with d the offset in grid steps.
    """
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    h = t[i + 1] - t[i]
    den = y0 - 2.0 * y1 + y2
    d = 0.0 if den == 0 else 0.5 * (y0 - y2) / den
    return t[i] + d * h, y1 - 0.25 * (y0 - y2) * d, d


def _interp3(y: np.ndarray, i: int, d: float) -> float:
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    return y1 + 0.5 * d * (y2 - y0) + 0.5 * d * d * (y0 - 2.0 * y1 + y2)


def locate_first_minimum(times, values) -> tuple[float, float, int, float]:
    """First interior local minimum: discrete scan, then a parabolic vertex.

    Leading NaN samples (e.g. a Fano factor of an empty mode at t = 0) are
    skipped.  Returns (t_min, f_min, index, offset).
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(values, dtype=float)
    finite = np.isfinite(f)
    if not finite.any():
        raise NoMinimumError("series has no finite values")
    start = int(np.argmax(finite))
    for i in range(start + 1, f.size - 1):
        if not (finite[i - 1] and finite[i + 1]):
            continue
        if f[i] < f[i - 1] and f[i] <= f[i + 1]:
            t_min, f_min, d = _quadratic_vertex(t, f, i)
            return t_min, f_min, i, d
    raise NoMinimumError("no local minimum inside the sampled window")


def first_minimum(series, mode: int = 3, x: float = float("nan")) -> MinimumRecord:
    """First minimum of a mode's Fano factor in an ObservableSeries."""
    t = series.times
    f = series.fano_of(mode)
    t_min, f_min, i, d = locate_first_minimum(t, f)
    n3 = _interp3(series.mean(3), i, d) if 3 in series.modes else float("nan")
    return MinimumRecord(float(x), float(t_min), float(f_min), float(n3))


@dataclass
class FitResult:
    model: str
    coeffs: dict
    error: float
    n_points: int
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coeffs
        if self.model == POWER_LAW:
            return c["a"] * x ** c["b"]
        return (c["a"] * x * x + c["b"] * x + c["c"]) / (x * x)

    def as_dict(self) -> dict:
        return {"model": self.model, "coeffs": dict(self.coeffs), "error": self.error,
                "n_points": self.n_points, **self.meta}


def _residual_std(residuals: np.ndarray, n_params: int) -> float:
    dof = residuals.size - n_params
    if dof <= 0:
        return 0.0
    return float(math.sqrt(float(residuals @ residuals) / dof))


def _check_design(xs: np.ndarray, ys: np.ndarray, min_points: int):
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be one-dimensional and equally long")
    if xs.size < min_points:
        raise ValueError(f"need at least {min_points} points")
    if np.ptp(xs) == 0:
        raise DegenerateDesign("all abscissae are equal")


def fit_power_law(xs, ys) -> FitResult:
    """Least-squares a x^b: log-domain regression, then refinement in y."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    _check_design(xs, ys, 3)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive data")
    b0, log_a0 = np.polyfit(np.log(xs), np.log(ys), 1)
    (a, b), _ = curve_fit(lambda x, a, b: a * x ** b, xs, ys, p0=(math.exp(log_a0), b0))
    res = ys - a * xs ** b
    return FitResult(POWER_LAW, {"a": float(a), "b": float(b)}, _residual_std(res, 2), xs.size)


def fit_inverse_polynomial(xs, ys, weighting: str = "y") -> FitResult:
    """Linear least squares for (a x^2 + b x + c) / x^2.

    ``weighting="y"`` minimises residuals of y itself (basis 1, 1/x, 1/x^2);
    ``"yx2"`` minimises residuals of y x^2 against (x^2, x, 1), which favours
    the large-x points.
    """
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    _check_design(xs, ys, 4)
    if np.any(xs <= 0):
        raise ValueError("inverse polynomial fit needs positive abscissae")
    if weighting == "y":
        design, target = np.column_stack([np.ones_like(xs), 1 / xs, 1 / xs**2]), ys
    elif weighting == "yx2":
        design, target = np.column_stack([xs**2, xs, np.ones_like(xs)]), ys * xs**2
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateDesign("fewer than three distinct abscissae")
    (a, b, c), *_ = np.linalg.lstsq(design, target, rcond=None)
    res = ys - (a * xs**2 + b * xs + c) / xs**2
    return FitResult(INVERSE_POLYNOMIAL, {"a": float(a), "b": float(b), "c": float(c)},
                     _residual_std(res, 3), xs.size, {"weighting": weighting})


OUT_OF_NETR = "zero"
IN_NETR = "netr"


@dataclass(frozen=True)
class SweepSpec:
    model: ModelKind
    amplitudes: tuple[float, ...]
    regime: str = OUT_OF_NETR
    points: int = 301
    eps_trunc: float = DEFAULT_EPS_TRUNC

    def __post_init__(self):
        if self.regime not in (OUT_OF_NETR, IN_NETR):
            raise ValueError(f"unknown regime {self.regime!r}")
        if any(r <= 0 for r in self.amplitudes):
            raise ValueError("sweep amplitudes must be positive")

    def initial(self, r: float) -> tuple[float, ...]:
        if self.model.tag == NONDEGENERATE:
            return (r, r, r / math.sqrt(2.0) if self.regime == IN_NETR else 0.0)
        return (r, r / 2.0 if self.regime == IN_NETR else 0.0)

    def window(self, r: float) -> float:
        # the first minimum arrives near gt ~ 1/r; generous margin for small r
        return (3.0 / r + 0.5) / self.model.coupling


def _sweep_point(args) -> MinimumRecord:
    spec, r = args
    horizon = spec.window(r)
    for _ in range(4):
        times = np.linspace(0.0, horizon, spec.points)
        series = observable_series(spec.model, spec.initial(r), times, spec.eps_trunc)
        try:
            return first_minimum(series, 3, x=r)
        except NoMinimumError:
            horizon *= 2.0
    raise NoMinimumError(f"no Fano minimum found for r = {r}")


def sweep_minima(spec: SweepSpec, workers: int = 1) -> list[MinimumRecord]:
    """First F3 minimum for each amplitude of the sweep, in grid order."""
    tasks = [(spec, float(r)) for r in spec.amplitudes]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
