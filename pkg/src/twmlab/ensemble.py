"""Classical-trajectory Monte Carlo for photon-number noise.

Each trajectory starts from coherent amplitudes blurred by independent
Gaussian noise on both quadratures, is propagated with the classical
equations of motion, and the ensemble moments give classical Fano factors.

Trajectories are processed in fixed-size chunks (vectorised through one ODE
solve per chunk).  Chunk moments are merged in index order, so results do not
depend on the number of workers.  Standard errors are delete-one-chunk
jackknife estimates.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classical import (
    DEFAULT_TOL,
    ClassicalState,
    StepFailure,
    integrate_batch,
    invariant_drift,
    netr_amplitude,
)
from .special import RandomStream, stream_normals

DEFAULT_CHUNK = 500
MAX_CLOUD_POINTS = 10_000


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float = 0.25

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _blur(centers: np.ndarray, noise: NoiseModel, stream: RandomStream) -> np.ndarray:
    z = stream.normals(2 * centers.size) * noise.sigma
    return centers + z[0::2] + 1j * z[1::2]


def sample_initial(r: Sequence[complex], noise: NoiseModel, stream: RandomStream) -> ClassicalState:
    """alpha_k = r_k + x_k + i y_k with x_k, y_k ~ N(0, sigma2)."""
    centers = np.asarray(r, dtype=complex)
    if centers.size != 3:
        raise ValueError("sample_initial needs three amplitudes")
    return ClassicalState.from_array(_blur(centers, noise, stream))


def sample_batch(centers: Sequence[complex], noise: NoiseModel, seed: int, start: int, stop: int) -> np.ndarray:
    """Initial amplitudes for trajectory indices start..stop-1, shape (n, n_modes)."""
    centers = np.asarray(centers, dtype=complex)
    z = stream_normals(seed, range(start, stop), 2 * centers.size) * noise.sigma
    return centers + z[:, 0::2] + 1j * z[:, 1::2]


def classical_fano(samples, axis: int = 0):
    """Variance / mean with the unbiased (n - 1) variance estimator."""
    x = np.asarray(samples, dtype=float)
    if x.shape[axis] < 2:
        raise ValueError("classical_fano needs at least two samples")
    mean = x.mean(axis=axis)
    if np.any(mean == 0):
        raise ZeroDivisionError("Fano factor undefined for zero mean")
    return x.var(axis=axis, ddof=1) / mean


@dataclass
class _Moments:
    """Count, mean and sum of squared deviations (Chan/Welford form)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        # x: (n_samples, ...)
        mean = x.mean(axis=0)
        return cls(x.shape[0], mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return _Moments(n, mean, m2)

    def remove(self, part: "_Moments") -> "_Moments":
        """Inverse of merge: the moments of this set without ``part``."""
        n = self.count - part.count
        mean = (self.count * self.mean - part.count * part.mean) / n
        delta = part.mean - mean
        m2 = self.m2 - part.m2 - delta * delta * (part.count * n / self.count)
        return _Moments(n, mean, np.maximum(m2, 0.0))

    @property
    def fano(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.m2 / (self.count - 1)) / self.mean


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean_n: np.ndarray  # (n_times, n_modes)
    var_n: np.ndarray  # unbiased
    n_traj: int
    seed: int
    modes: tuple[int, ...]
    fano_replicates: np.ndarray  # (n_chunks, n_times, n_modes), delete-one-chunk
    max_invariant_drift: float
    clouds: dict = field(default_factory=dict)  # snapshot time -> (n_points, n_modes)

    @property
    def fano_cl(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.var_n / self.mean_n

    @property
    def fano_stderr(self) -> np.ndarray:
        return jackknife_stderr(self.fano_replicates)

    def column(self, mode: int) -> int:
        return self.modes.index(mode)


def jackknife_stderr(replicates: np.ndarray) -> np.ndarray:
    """Delete-one-group jackknife standard error along axis 0."""
    g = replicates.shape[0]
    if g < 2:
        return np.full(replicates.shape[1:], np.nan)
    return np.sqrt((g - 1) / g * ((replicates - replicates.mean(axis=0)) ** 2).sum(axis=0))


def _chunk_task(args):
    centers, noise, seed, start, stop, t_grid, g, tol, degenerate, keep_cloud = args
    alpha0 = sample_batch(centers, noise, seed, start, stop)
    try:
        alpha = integrate_batch(alpha0, t_grid, g, tol, degenerate=degenerate)
    except StepFailure:
        # locate the offending trajectory for the error message
        for i in range(alpha0.shape[0]):
            try:
                integrate_batch(alpha0[i:i + 1], t_grid, g, tol, degenerate=degenerate)
            except StepFailure as exc:
                raise StepFailure(f"trajectory {start + i}: {exc}") from exc
        raise
    n = np.abs(alpha) ** 2  # (nt, ntraj, nmodes)
    mom = _Moments.of(np.moveaxis(n, 1, 0))
    drift = 0.0
    if not degenerate:
        drift = float(invariant_drift(alpha).max())
    cloud = alpha[:, :keep_cloud, :] if keep_cloud > 0 else None
    return mom, drift, cloud


def run_ensemble(
    r: Sequence[complex],
    n_traj: int,
    t_grid: Sequence[float],
    g: float = 1.0,
    noise: NoiseModel = NoiseModel(),
    seed: int = 0,
    degenerate: bool = False,
    snapshots: Sequence[float] = (),
    cloud_points: int = MAX_CLOUD_POINTS,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
    tol: float = DEFAULT_TOL,
) -> EnsembleStats:
    """Propagate ``n_traj`` blurred trajectories and collect moments.

    ``r`` holds the (possibly complex) centre amplitudes: three for the
    non-degenerate model, (alpha1', alpha3') with coupling g' when
    ``degenerate``.  Clouds of up to ``cloud_points`` amplitudes are stored at
    each snapshot time.
    """
    centers = np.asarray(r, dtype=complex)
    modes = (1, 3) if degenerate else (1, 2, 3)
    if centers.size != len(modes):
        raise ValueError(f"expected {len(modes)} amplitudes, got {centers.size}")
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    snapshots = np.asarray(sorted(set(float(s) for s in snapshots)), dtype=float)
    full_grid = np.union1d(t_grid, snapshots)
    if full_grid[0] > 0:
        full_grid = np.concatenate([[0.0], full_grid])
    if full_grid[0] < 0:
        raise ValueError("times must be non-negative")
    cloud_points = min(int(cloud_points), MAX_CLOUD_POINTS, n_traj) if snapshots.size else 0

    bounds = [(s, min(s + chunk, n_traj)) for s in range(0, n_traj, chunk)]
    tasks = [
        (centers, noise, int(seed), s, e, full_grid, g, tol, degenerate, max(0, min(e, cloud_points) - s))
        for s, e in bounds
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    else:
        results = [_chunk_task(t) for t in tasks]

    parts = [res[0] for res in results]
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    if len(parts) > 1:
        replicates = np.array([total.remove(p).fano for p in parts])
    else:
        replicates = total.fano[None]

    rows = np.searchsorted(full_grid, t_grid)
    clouds = {}
    if cloud_points:
        stacked = np.concatenate([res[2] for res in results if res[2] is not None], axis=1)
        for s in snapshots:
            clouds[float(s)] = stacked[np.searchsorted(full_grid, s)]
    return EnsembleStats(
        times=t_grid,
        mean_n=total.mean[rows],
        var_n=total.m2[rows] / (total.count - 1),
        n_traj=n_traj,
        seed=int(seed),
        modes=modes,
        fano_replicates=replicates[:, rows],
        max_invariant_drift=max(res[1] for res in results),
        clouds=clouds,
    )


def plateau_time(r: Sequence[complex], g: float = 1.0) -> float:
    """Run length gt_max = 40 / (g max r_k) used for plateau estimates."""
    return 40.0 / (g * float(np.max(np.abs(r))))


@dataclass(frozen=True)
class Plateau:
    value: float
    stderr: float
    early: float  # mean over the first quarter of the averaging window
    late: float  # mean over the last quarter
    shift_stderr: float
    stationary: bool


def plateau(stats: EnsembleStats, mode: int, fraction: float = 0.25) -> Plateau:
    """Mean Fano factor over the final ``fraction`` of the run.

    The window counts as stationary when its first- and last-quarter means
    differ by less than two standard errors.
    """
    col = stats.column(mode)
    nt = stats.times.size
    lo = int(math.floor(nt * (1.0 - fraction)))
    idx = np.arange(lo, nt)
    if idx.size < 4:
        raise ValueError("too few time points in the plateau window")
    q = max(1, idx.size // 4)
    early_idx, late_idx = idx[:q], idx[-q:]

    f = stats.fano_cl[:, col]
    rep = stats.fano_replicates[:, :, col]
    value = float(f[idx].mean())
    stderr = float(jackknife_stderr(rep[:, idx].mean(axis=1)))
    shift = rep[:, late_idx].mean(axis=1) - rep[:, early_idx].mean(axis=1)
    shift_se = float(jackknife_stderr(shift))
    early, late = float(f[early_idx].mean()), float(f[late_idx].mean())
    return Plateau(value, stderr, early, late, shift_se, abs(late - early) < 2.0 * shift_se)


@dataclass(frozen=True)
class NetrPrediction:
    r1: float
    r2: float
    r3: float
    F1: float
    F2: float
    F3: float
    Omega_bar: float
    A: float


def _aux_A(r1: float, r2: float) -> float:
    x, y = r1 * r1, r2 * r2
    # summed in an order that is symmetric under x <-> y, so exchange is exact
    return x * y / (8.0 * ((x * x + y * y) + x * y) ** 2)


def netr_analytic(r1: float, r2: float) -> NetrPrediction:
    """Stationary classical Fano factors for inputs in the no-energy-transfer regime."""
    if not (r1 > 0 and r2 > 0):
        raise ValueError("netr_analytic needs r1, r2 > 0")
    x, y = r1 * r1, r2 * r2
    A = _aux_A(r1, r2)
    r3 = netr_amplitude(r1, r2)

    def excess(u, v):
        return A * ((8 * u * u + 5 * v * v) + 5 * (x * y))

    return NetrPrediction(
        r1=float(r1),
        r2=float(r2),
        r3=r3,
        F1=1.0 + excess(x, y),
        F2=1.0 + excess(y, x),
        F3=1.0 - 3.0 * A * (x + y) ** 2,
        Omega_bar=math.sqrt(x + y - r3 * r3),
        A=A,
    )


def netr_fano_ratio(rho: float) -> tuple[float, float, float]:
    """(F3, F1, F2) as functions of rho = r1^2 / r2^2 >= 1."""
    rho = float(rho)
    if not rho >= 1.0:
        raise ValueError("rho must be >= 1 (label the stronger sub-frequency mode as 1)")
    if math.isinf(rho):
        return 1.0, 1.0, 1.0
    d = 8.0 * (1.0 + rho + rho * rho) ** 2
    f3 = 1.0 - 3.0 * rho * (1.0 + rho) ** 2 / d
    f1 = 1.0 + rho * (8.0 * rho * rho + 5.0 * rho + 5.0) / d
    f2 = 1.0 + rho * (5.0 * rho * rho + 5.0 * rho + 8.0) / d
    return f3, f1, f2


def netr_moments(r1: float, r2: float) -> dict[str, float]:
    """Linearised mean quadratic moments of the oscillation parameters."""
    x, y = r1 * r1, r2 * r2
    A = _aux_A(r1, r2)
    return {
        "b2": 2 * A / (x + y) * (2 * x**4 + x**3 * y + 2 * x**2 * y**2 + x * y**3 + 2 * y**4),
        "c1_minus_b2": 2 * A / y * (4 * x**4 + 10 * x**3 * y + 11 * x**2 * y**2 + 7 * x * y**3 + 2 * y**4),
        "c2_minus_b2": 2 * A / x * (2 * x**4 + 7 * x**3 * y + 11 * x**2 * y**2 + 10 * x * y**3 + 4 * y**4),
        "a2": 2 * A * (4 * x**3 + 7 * x**2 * y + 7 * x * y**2 + 4 * y**3),
    }


def oscillation_parameters(alpha: np.ndarray, r1: float, r2: float) -> dict[str, np.ndarray]:
    """Per-sample b, c1, c2, a^2 and Omega from blurred NETR amplitudes (n, 3)."""
    n = np.abs(alpha) ** 2
    E1, E2 = n[:, 0] + n[:, 2], n[:, 1] + n[:, 2]
    K = (alpha[:, 0] * alpha[:, 1] * np.conj(alpha[:, 2])).real
    w = E1 * E1 - E1 * E2 + E2 * E2
    m = (E1 + E2 - np.sqrt(w)) / 3.0  # maximum of the cubic inside [0, min E]
    r3 = netr_amplitude(r1, r2)
    n30 = r3 * r3
    omega2 = np.sqrt(w)
    return {
        "b": m - n30,
        "c1": E1 - r1 * r1 - n30,
        "c2": E2 - r2 * r2 - n30,
        "a2": (m * (E1 - m) * (E2 - m) - K * K) / omega2,
        "Omega": np.sqrt(omega2),
    }


@dataclass
class MomentCheck:
    r1: float
    r2: float
    n_traj: int
    seed: int
    predicted: dict
    estimated: dict
    stderr: dict
    b_mean: float
    b_stderr: float
    b_spread: float

    def z_scores(self) -> dict:
        return {k: (self.estimated[k] - self.predicted[k]) / self.stderr[k] for k in self.predicted}

    def relative_deviation(self) -> dict:
        return {k: self.estimated[k] / self.predicted[k] - 1.0 for k in self.predicted}

    def as_dict(self) -> dict:
        return {
            "r1": self.r1, "r2": self.r2, "n_traj": self.n_traj, "seed": self.seed,
            "predicted": self.predicted, "estimated": self.estimated, "stderr": self.stderr,
            "z": self.z_scores(), "relative_deviation": self.relative_deviation(),
            "b_mean": self.b_mean, "b_stderr": self.b_stderr, "b_spread": self.b_spread,
        }


def netr_moment_check(
    r1: float, r2: float, n_traj: int = 100_000, seed: int = 0, noise: NoiseModel = NoiseModel()
) -> MomentCheck:
    """Monte Carlo of the invariants-derived moments against their closed forms."""
    r3 = netr_amplitude(r1, r2)
    alpha = sample_batch((r1, r2, r3), noise, seed, 0, n_traj)
    p = oscillation_parameters(alpha, r1, r2)
    samples = {
        "b2": p["b"] ** 2,
        "c1_minus_b2": (p["c1"] - p["b"]) ** 2,
        "c2_minus_b2": (p["c2"] - p["b"]) ** 2,
        "a2": p["a2"],
    }
    root_n = math.sqrt(n_traj)
    return MomentCheck(
        r1=float(r1),
        r2=float(r2),
        n_traj=n_traj,
        seed=seed,
        predicted=netr_moments(r1, r2),
        estimated={k: float(v.mean()) for k, v in samples.items()},
        stderr={k: float(v.std(ddof=1) / root_n) for k, v in samples.items()},
        b_mean=float(p["b"].mean()),
        b_stderr=float(p["b"].std(ddof=1) / root_n),
        b_spread=float(p["b"].std(ddof=1)),
    )
