"""Exact quantum dynamics of three-wave mixing by block diagonalisation.

The interaction Hamiltonians

    H  = g  (a1 a2 a3^+ + a1^+ a2^+ a3)        non-degenerate
    H' = g' (a1^2 a3^+ + a1^+2 a3)              degenerate (SHG)

conserve (n1 + n3, n2 + n3) and n1 + 2 n3 respectively, so the Fock space
splits into finite invariant blocks.  Inside each block the basis is labelled
by n3 = j and the Hamiltonian is a real symmetric tridiagonal matrix with zero
diagonal.  A coherent input is regrouped into blocks, each block is
diagonalised once, and evolution to any time is a phase rotation.

Time is dimensionless (g_ref t) and hbar = 1.  Mode numbering keeps 3 for the
sum-frequency mode in both models.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln
from scipy.stats import poisson

NONDEGENERATE = "nondegenerate"
DEGENERATE = "degenerate"

DEFAULT_EPS_TRUNC = 1e-10
DEFAULT_MAX_DIM = 5_000_000
# reductions are chunked by block index, never by worker, so sums are
# bit-identical for any worker count
_CHUNK_BLOCKS = 512


class BudgetError(RuntimeError):
    """The retained Fock basis would exceed the configured dimension cap."""


class CutoffError(ValueError):
    """A requested photon-number cutoff is smaller than the retained support."""


@dataclass(frozen=True)
class ModelKind:
    tag: str = NONDEGENERATE
    coupling: float = 1.0

    def __post_init__(self):
        if self.tag not in (NONDEGENERATE, DEGENERATE):
            raise ValueError(f"unknown model tag {self.tag!r}")
        if not self.coupling > 0:
            raise ValueError("coupling must be positive")

    @classmethod
    def nondegenerate(cls, g: float = 1.0) -> "ModelKind":
        return cls(NONDEGENERATE, g)

    @classmethod
    def degenerate(cls, g_prime: float = 1.0 / math.sqrt(2.0)) -> "ModelKind":
        """Degenerate model; the default g' = g/sqrt(2) synchronises it with g = 1."""
        return cls(DEGENERATE, g_prime)

    @property
    def modes(self) -> tuple[int, ...]:
        return (1, 2, 3) if self.tag == NONDEGENERATE else (1, 3)

    def check_mode(self, mode: int) -> int:
        if mode not in self.modes:
            raise ValueError(f"mode {mode} does not exist in the {self.tag} model")
        return mode


def _occupation_affine(model: ModelKind, label: tuple[int, ...], mode: int) -> tuple[int, int]:
    """(offset, slope) such that n_mode = offset + slope * j inside a block."""
    if model.tag == NONDEGENERATE:
        n13, n23 = label
        return {1: (n13, -1), 2: (n23, -1), 3: (0, 1)}[mode]
    (n,) = label
    return {1: (n, -2), 3: (0, 1)}[mode]


def block_dim(model: ModelKind, label: tuple[int, ...]) -> int:
    if model.tag == NONDEGENERATE:
        return min(label) + 1
    return label[0] // 2 + 1


def block_offdiag(model: ModelKind, label: tuple[int, ...]) -> np.ndarray:
    """Couplings <j+1|H|j> between n3 = j and n3 = j + 1."""
    j = np.arange(block_dim(model, label) - 1, dtype=float)
    if model.tag == NONDEGENERATE:
        n13, n23 = label
        return model.coupling * np.sqrt((n13 - j) * (n23 - j) * (j + 1.0))
    (n,) = label
    return model.coupling * np.sqrt((n - 2 * j) * (n - 2 * j - 1.0) * (j + 1.0))


@dataclass
class FockBlock:
    label: tuple[int, ...]
    dim: int
    offdiag: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


def _eigensystem(offdiag: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 1:
        return np.zeros(1), np.ones((1, 1))
    return eigh_tridiagonal(np.zeros(dim), offdiag, lapack_driver="stemr")


def build_block(model: ModelKind, label: Sequence[int]) -> FockBlock:
    """Invariant block with its tridiagonal Hamiltonian and eigensystem."""
    label = tuple(int(x) for x in label)
    expected = 2 if model.tag == NONDEGENERATE else 1
    if len(label) != expected or min(label) < 0:
        raise ValueError(f"invalid block label {label} for {model.tag} model")
    dim = block_dim(model, label)
    off = block_offdiag(model, label)
    vals, vecs = _eigensystem(off, dim)
    return FockBlock(label, dim, off, vals, vecs)


@dataclass
class QuantumState:
    """Block-sparse pure state.  ``blocks[label][j]`` is the amplitude of n3 = j."""

    model: ModelKind
    blocks: dict[tuple[int, ...], np.ndarray]
    truncation_weight: float = 0.0
    eps_trunc: float = DEFAULT_EPS_TRUNC
    time: float = 0.0

    @property
    def norm2(self) -> float:
        return math.fsum(float(np.vdot(v, v).real) for v in self.blocks.values())

    @property
    def total_dim(self) -> int:
        return sum(v.size for v in self.blocks.values())

    def occupation_range(self, mode: int) -> int:
        """Largest occupation of ``mode`` over the retained basis states."""
        self.model.check_mode(mode)
        top = 0
        for label, vec in self.blocks.items():
            off, slope = _occupation_affine(self.model, label, mode)
            top = max(top, off, off + slope * (vec.size - 1))
        return int(top)


def _log_coherent(amplitude: complex, nmax: int) -> tuple[np.ndarray, float]:
    """log|<n|alpha>| for n = 0..nmax and the phase arg(alpha)."""
    r = abs(amplitude)
    n = np.arange(nmax + 1)
    if r == 0.0:
        out = np.full(nmax + 1, -np.inf)
        out[0] = 0.0
        return out, 0.0
    return -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1.0), float(np.angle(amplitude))


def _mode_cutoff(amplitude: complex, tail: float) -> int:
    mu = abs(amplitude) ** 2
    if mu == 0.0:
        return 0
    return int(poisson.isf(tail, mu)) + 1


def coherent_state(
    model: ModelKind,
    amplitudes: Sequence[complex],
    eps_trunc: float = DEFAULT_EPS_TRUNC,
    max_dim: int = DEFAULT_MAX_DIM,
) -> QuantumState:
    """Product coherent state regrouped into invariant blocks.

    Half of ``eps_trunc`` is spent on per-mode Poisson tails and half on
    dropping blocks whose joint weight is below (eps_trunc/2)/candidates.
    """
    if not 0.0 < eps_trunc <= 1e-6:
        raise ValueError("eps_trunc must lie in (0, 1e-6]")
    amps = [complex(a) for a in amplitudes]
    if len(amps) != len(model.modes):
        raise ValueError(f"{model.tag} model needs {len(model.modes)} amplitudes")
    if not all(math.isfinite(a.real) and math.isfinite(a.imag) for a in amps):
        raise ValueError("amplitudes must be finite")

    tail = 0.5 * eps_trunc / len(amps)
    cut = [_mode_cutoff(a, tail) for a in amps]
    logs, phases = zip(*(_log_coherent(a, c) for a, c in zip(amps, cut)))
    probs = [np.exp(2.0 * lg) for lg in logs]

    if model.tag == NONDEGENERATE:
        p1, p2, p3 = probs
        c1, c2, c3 = cut
        weight = np.zeros((c1 + c3 + 1, c2 + c3 + 1))
        outer12 = np.outer(p1, p2)
        for j in range(c3 + 1):
            if p3[j] > 0:
                weight[j:j + c1 + 1, j:j + c2 + 1] += p3[j] * outer12
    else:
        p1, p3 = probs
        c1, c3 = cut
        weight = np.zeros(c1 + 2 * c3 + 1)
        for j in range(c3 + 1):
            if p3[j] > 0:
                weight[2 * j:2 * j + c1 + 1] += p3[j] * p1

    candidates = int(np.count_nonzero(weight))
    keep = np.argwhere(weight > 0.5 * eps_trunc / candidates)
    kept = math.fsum(weight[tuple(idx)] for idx in keep)

    total = sum(block_dim(model, tuple(int(x) for x in idx)) for idx in keep)
    if total > max_dim:
        raise BudgetError(f"retained basis has {total} states, cap is {max_dim}")

    blocks: dict[tuple[int, ...], np.ndarray] = {}
    for idx in keep:
        label = tuple(int(x) for x in idx)
        j = np.arange(block_dim(model, label))
        occ = [off + slope * j for off, slope in
               (_occupation_affine(model, label, m) for m in model.modes)]
        logamp = np.full(j.size, -np.inf)
        inside = np.ones(j.size, dtype=bool)
        for n, c in zip(occ, cut):
            inside &= n <= c
        logamp[inside] = sum(lg[n[inside]] for lg, n in zip(logs, occ))
        phase = sum(ph * n for ph, n in zip(phases, occ))
        vec = np.exp(logamp) * np.exp(1j * phase)
        blocks[label] = vec
    return QuantumState(model, blocks, max(0.0, 1.0 - kept), eps_trunc)


def evolve(state: QuantumState, t: float) -> QuantumState:
    """Exact evolution by phase rotation in each block's eigenbasis."""
    if t == 0:
        return QuantumState(state.model, {k: v.copy() for k, v in state.blocks.items()},
                            state.truncation_weight, state.eps_trunc, state.time)
    out = {}
    for label, vec in state.blocks.items():
        vals, vecs = _eigensystem(block_offdiag(state.model, label), vec.size)
        out[label] = vecs @ (np.exp(-1j * vals * t) * (vecs.T @ vec))
    return QuantumState(state.model, out, state.truncation_weight, state.eps_trunc,
                        state.time + t)


class Moments(NamedTuple):
    mean: float
    variance: float
    fano: float


def _raw_sums(state: QuantumState, mode: int) -> tuple[float, float, float]:
    s0 = s1 = s2 = 0.0
    for label, vec in state.blocks.items():
        off, slope = _occupation_affine(state.model, label, mode)
        n = off + slope * np.arange(vec.size)
        p = (vec.conj() * vec).real
        s0 += p.sum()
        s1 += n @ p
        s2 += (n * n) @ p
    return s0, s1, s2


def photon_moments(state: QuantumState, mode: int) -> Moments:
    """Mean, variance and Fano factor of n_mode, renormalised by the retained norm.

    The Fano factor of an empty mode is reported as NaN.
    """
    state.model.check_mode(mode)
    s0, s1, s2 = _raw_sums(state, mode)
    if s0 < 0.999:
        raise ValueError(f"state norm^2 {s0} too small for moment evaluation")
    mean = s1 / s0
    var = max(s2 / s0 - mean * mean, 0.0)
    fano = var / mean if mean > 0 else float("nan")
    return Moments(mean, var, fano)


def number_distribution(state: QuantumState, mode: int) -> np.ndarray:
    """P(n_mode = n); sums to the retained norm^2."""
    state.model.check_mode(mode)
    probs = np.zeros(state.occupation_range(mode) + 1)
    for label, vec in state.blocks.items():
        off, slope = _occupation_affine(state.model, label, mode)
        n = off + slope * np.arange(vec.size)
        np.add.at(probs, n, (vec.conj() * vec).real)
    return probs


def _dense(state: QuantumState) -> np.ndarray:
    """Scatter the block amplitudes into a dense array psi[n1, (n2,) n3]."""
    modes = state.model.modes
    shape = tuple(state.occupation_range(m) + 1 for m in modes)
    if math.prod(shape) > 4 * DEFAULT_MAX_DIM:
        raise BudgetError(f"dense representation {shape} too large")
    psi = np.zeros(shape, dtype=complex)
    for label, vec in state.blocks.items():
        j = np.arange(vec.size)
        idx = []
        for m in modes:
            off, slope = _occupation_affine(state.model, label, m)
            idx.append(off + slope * j)
        psi[tuple(idx)] = vec
    return psi


def reduced_density(state: QuantumState, mode: int, n_max: int | None = None) -> np.ndarray:
    """Single-mode reduced density matrix rho[m, n] (trace = norm^2)."""
    state.model.check_mode(mode)
    top = state.occupation_range(mode)
    if n_max is None:
        n_max = top
    elif n_max < top:
        raise CutoffError(f"mode {mode} occupies up to n={top}, cutoff is {n_max}")
    psi = _dense(state)
    axis = state.model.modes.index(mode)
    psi = np.moveaxis(psi, axis, 0).reshape(psi.shape[axis], -1)
    rho = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    rho[: top + 1, : top + 1] = psi @ psi.conj().T
    return rho


def default_q_grid(radius: float, points: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Square window of half-width max(4, radius + 4) centred at the origin."""
    half = max(4.0, radius + 4.0)
    axis = np.linspace(-half, half, points)
    return axis, axis.copy()


def _coherent_overlaps(alpha: np.ndarray, n_max: int) -> np.ndarray:
    """<n|alpha> for each alpha (rows) and n = 0..n_max (columns), log domain."""
    n = np.arange(n_max + 1)
    r = np.abs(alpha)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(r)
        log_mag = -0.5 * r * r + n * logr - 0.5 * gammaln(n + 1.0)
    log_mag = np.where((r == 0) & (n == 0), -0.5 * r * r, log_mag)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha)[:, None])


def husimi_from_density(rho: np.ndarray, re_axis: np.ndarray, im_axis: np.ndarray) -> np.ndarray:
    """Q(alpha) = <alpha|rho|alpha>/pi on the grid; result indexed [im, re]."""
    alpha = (re_axis[None, :] + 1j * im_axis[:, None]).ravel()
    out = np.empty(alpha.size)
    n_max = rho.shape[0] - 1
    for start in range(0, alpha.size, 4096):
        v = _coherent_overlaps(alpha[start:start + 4096], n_max)
        out[start:start + 4096] = np.einsum("pm,mn,pn->p", v.conj(), rho, v).real
    return (out / math.pi).reshape(im_axis.size, re_axis.size)


def husimi_marginal(state: QuantumState, mode: int, re_axis=None, im_axis=None) -> np.ndarray:
    """Marginal single-mode Husimi function on a rectangular grid, indexed [im, re]."""
    rho = reduced_density(state, mode)
    if re_axis is None or im_axis is None:
        n = np.arange(rho.shape[0])
        mean = float(n @ np.diag(rho).real / max(np.trace(rho).real, 1e-300))
        re_axis, im_axis = default_q_grid(math.sqrt(mean))
    return husimi_from_density(rho, np.asarray(re_axis, float), np.asarray(im_axis, float))


@dataclass
class ObservableSeries:
    model: ModelKind
    times: np.ndarray
    modes: tuple[int, ...]
    mean_n: np.ndarray  # (n_modes, n_times)
    var_n: np.ndarray
    norm: np.ndarray
    truncation_weight: float
    amplitudes: tuple[complex, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def fano(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.mean_n > 0, self.var_n / np.where(self.mean_n > 0, self.mean_n, 1), np.nan)

    def mean(self, mode: int) -> np.ndarray:
        return self.mean_n[self.modes.index(mode)]

    def fano_of(self, mode: int) -> np.ndarray:
        return self.fano[self.modes.index(mode)]


def _chunk_sums(model: ModelKind, items: list, times: np.ndarray) -> np.ndarray:
    """Per-block accumulation of sum p, sum j p, sum j^2 p over the chunk.

    Returns an array (n_modes*2 + 1, n_times): norm, then first and second
    raw moments for each mode.
    """
    modes = model.modes
    acc = np.zeros((1 + 2 * len(modes), times.size))
    for label, vec in items:
        dim = vec.size
        if dim == 1:
            p = np.abs(vec[:, None]) ** 2 * np.ones((1, times.size))
        else:
            vals, vecs = _eigensystem(block_offdiag(model, label), dim)
            coeff = vecs.T @ vec
            # real GEMMs on cos/sin parts; cheaper than a complex exp + complex GEMM
            phase = np.outer(vals, times)
            cos, sin = np.cos(phase), np.sin(phase)
            a, b = coeff.real[:, None], coeff.imag[:, None]
            if np.any(b):
                re = vecs @ (a * cos + b * sin)
                im = vecs @ (b * cos - a * sin)
            else:
                re = vecs @ (a * cos)
                im = vecs @ (a * sin)
            p = re * re + im * im
        j = np.arange(dim, dtype=float)
        s0 = p.sum(axis=0)
        s1 = j @ p
        s2 = (j * j) @ p
        acc[0] += s0
        for i, m in enumerate(modes):
            off, slope = _occupation_affine(model, label, m)
            acc[1 + 2 * i] += off * s0 + slope * s1
            acc[2 + 2 * i] += off * off * s0 + 2 * off * slope * s1 + slope * slope * s2
    return acc


def _chunk_task(args):
    return _chunk_sums(*args)


def observable_series(
    model: ModelKind,
    amplitudes: Sequence[complex],
    times: Iterable[float],
    eps_trunc: float = DEFAULT_EPS_TRUNC,
    max_dim: int = DEFAULT_MAX_DIM,
    workers: int = 1,
) -> ObservableSeries:
    """Mean photon numbers and Fano factors of every mode on a time grid.

    Each block is diagonalised once; all times are then obtained by phase
    rotation.  Moments are normalised by the retained norm.
    """
    times = np.asarray(list(times), dtype=float)
    if times.size == 0:
        raise ValueError("empty time grid")
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    state = coherent_state(model, amplitudes, eps_trunc, max_dim)
    items = sorted(state.blocks.items())
    chunks = [items[i:i + _CHUNK_BLOCKS] for i in range(0, len(items), _CHUNK_BLOCKS)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(_chunk_task, [(model, c, times) for c in chunks]))
    else:
        partial = [_chunk_sums(model, c, times) for c in chunks]
    acc = np.zeros_like(partial[0])
    for part in partial:
        acc += part

    norm = acc[0]
    means = acc[1::2] / norm
    second = acc[2::2] / norm
    var = np.maximum(second - means * means, 0.0)
    return ObservableSeries(
        model=model,
        times=times,
        modes=model.modes,
        mean_n=means,
        var_n=var,
        norm=norm,
        truncation_weight=state.truncation_weight,
        amplitudes=tuple(complex(a) for a in amplitudes),
        meta={"blocks": len(items), "basis_states": state.total_dim, "eps_trunc": eps_trunc},
    )
