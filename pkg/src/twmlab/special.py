"""Special functions and small numerical primitives used by the classical solver.

Elliptic functions use the arithmetic-geometric mean (descending Landen)
recurrences.  Quadrature is deliberately not used here; it is the test oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF_PI = 0.5 * math.pi
_AGM_TOL = 1e-16
_MAX_AGM_STEPS = 64


class UnphysicalInvariants(ValueError):
    """The integrals of motion do not correspond to any real trajectory."""


def _check_modulus(k: float) -> float:
    k = float(k)
    if not 0.0 <= k <= 1.0 or math.isnan(k):
        raise ValueError(f"elliptic modulus must lie in [0, 1], got {k!r}")
    return k


def _complementary(k: float) -> float:
    # sqrt(1 - k^2) without cancellation near k = 1
    return math.sqrt((1.0 - k) * (1.0 + k))


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two non-negative numbers."""
    for _ in range(_MAX_AGM_STEPS):
        if abs(a - b) <= _AGM_TOL * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return a


def complete_K(k: float) -> float:
    """Complete elliptic integral of the first kind, K(k) = F(pi/2, k)."""
    k = _check_modulus(k)
    if k == 1.0:
        return math.inf
    return HALF_PI / agm(1.0, _complementary(k))


def elliptic_F(phi: float, k: float) -> float:
    """Incomplete elliptic integral of the first kind.

    F(phi, k) = int_0^phi dx / sqrt(1 - k^2 sin^2 x), with 0 <= phi <= pi/2.

    Uses the AGM sequence with phase doubling,
    phi_{n+1} = phi_n + arctan((b_n / a_n) tan phi_n), F = phi_N / (2^N a_N).
    """
    k = _check_modulus(k)
    phi = float(phi)
    if not (0.0 <= phi <= HALF_PI + 1e-15):
        raise ValueError(f"amplitude phi must lie in [0, pi/2], got {phi!r}")
    phi = min(phi, HALF_PI)
    if phi == 0.0:
        return 0.0
    if k == 0.0:
        return phi
    if k == 1.0:
        if phi >= HALF_PI:
            raise ValueError("F(pi/2, 1) diverges")
        return math.atanh(math.sin(phi))

    a, b = 1.0, _complementary(k)
    scale = 1.0
    for _ in range(_MAX_AGM_STEPS):
        if abs(a - b) <= _AGM_TOL * a:
            break
        step = math.atan2(b * math.sin(phi), a * math.cos(phi))
        # continuous branch of arctan((b/a) tan phi)
        step += 2.0 * math.pi * round((phi - step) / (2.0 * math.pi))
        phi += step
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        scale *= 2.0
    return phi / (scale * a)


def jacobi_sn(u, k: float):
    """Jacobi elliptic function sn(u, k); vectorised over ``u``.

    Descending Landen transformation: build the AGM table, set
    phi_N = 2^N a_N u and recurse phi_{n-1} = (phi_n + arcsin(c_n/a_n sin phi_n)) / 2.
    """
    k = _check_modulus(k)
    u_arr = np.asarray(u, dtype=float)
    if k == 0.0:
        out = np.sin(u_arr)
    elif k == 1.0:
        out = np.tanh(u_arr)
    else:
        a, b, c = [1.0], _complementary(k), [k]
        while abs(c[-1]) > _AGM_TOL and len(a) < _MAX_AGM_STEPS:
            a_n = a[-1]
            a.append(0.5 * (a_n + b))
            c.append(0.5 * (a_n - b))
            b = math.sqrt(a_n * b)
        n = len(a) - 1
        phi = (2.0 ** n) * a[n] * u_arr
        for j in range(n, 0, -1):
            phi = 0.5 * (phi + np.arcsin(c[j] / a[j] * np.sin(phi)))
        out = np.sin(phi)
    return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True)
class CubicRoots:
    """Roots a >= b >= c of n (E1 - n)(E2 - n) - K^2 = 0."""

    a: float
    b: float
    c: float

    @property
    def degenerate(self) -> bool:
        """True when b and c coincide, i.e. n3 is a constant of the motion."""
        span = self.a - self.c
        return span <= 0.0 or (self.b - self.c) < 1e-9 * span

    @property
    def modulus(self) -> float:
        span = self.a - self.c
        if span <= 0.0:
            return 0.0
        return min(1.0, math.sqrt(max(self.b - self.c, 0.0) / span))


def _cubic(n: float, E1: float, E2: float, K2: float) -> float:
    return n * (E1 - n) * (E2 - n) - K2


def cubic_roots_sorted(E1: float, E2: float, K: float) -> CubicRoots:
    """Real roots of n (E1 - n)(E2 - n) = K^2, sorted descending.

    Trigonometric solution of the depressed cubic followed by one Newton step
    per simple root.  Raises :class:`UnphysicalInvariants` if the roots are
    complex beyond rounding.
    """
    E1, E2, K2 = float(E1), float(E2), float(K) ** 2
    if E1 < 0 or E2 < 0:
        raise UnphysicalInvariants(f"negative energies E1={E1}, E2={E2}")
    s = E1 + E2
    if s == 0.0:
        if K2 > 0:
            raise UnphysicalInvariants("K != 0 with zero energies")
        return CubicRoots(0.0, 0.0, 0.0)
    # n = y + s/3  ->  y^3 + p y + q = 0
    w = E1 * E1 - E1 * E2 + E2 * E2
    p = -w / 3.0
    q = -2.0 * s ** 3 / 27.0 + s * E1 * E2 / 3.0 - K2
    if w == 0.0:
        # E1 = E2 = 0 handled above; unreachable otherwise
        raise UnphysicalInvariants("degenerate cubic")

    # Double roots sit on stationary points of the cubic; the trigonometric
    # formula only resolves them to ~sqrt(eps), so snap when the cubic
    # vanishes there to rounding accuracy.
    sq = math.sqrt(w)
    eps = np.finfo(float).eps
    for m_stat, sign in (((s - sq) / 3.0, -1), ((s + sq) / 3.0, 1)):
        prod = m_stat * (E1 - m_stat) * (E2 - m_stat)
        val = prod - K2
        if abs(val) <= 16.0 * eps * (abs(prod) + K2):
            other = s - 2.0 * m_stat
            if sign < 0:
                return CubicRoots(max(other, m_stat), m_stat, min(other, m_stat))
            return CubicRoots(m_stat, m_stat, other)

    m = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * m)
    if abs(arg) > 1.0 + 1e-9:
        raise UnphysicalInvariants(
            f"cubic has complex roots (E1={E1}, E2={E2}, K^2={K2}, arg={arg})"
        )
    theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
    roots = [s / 3.0 + m * math.cos(theta - 2.0 * math.pi * j / 3.0) for j in range(3)]

    polished = []
    for n in roots:
        d = 3.0 * n * n - 2.0 * s * n + E1 * E2
        f = _cubic(n, E1, E2, K2)
        if abs(d) > 1e-6 * w:
            n_new = n - f / d
            if abs(_cubic(n_new, E1, E2, K2)) <= abs(f):
                n = n_new
        polished.append(n)
    a, b, c = sorted(polished, reverse=True)
    # P(0) = -K^2 <= 0, so the smallest root is never negative
    return CubicRoots(a, b, max(c, 0.0))


@dataclass(frozen=True)
class RandomStream:
    """Counter-based Gaussian stream (Philox-4x64 with Box-Muller).

    Value-semantic: a stream is the pair (key, counter).  ``split(i)`` derives
    an independent substream for trajectory ``i``.
    """

    seed: int
    index: int = 0
    counter: int = 0

    def split(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, int(index), 0)

    def advance(self, steps: int = 1) -> "RandomStream":
        return RandomStream(self.seed, self.index, self.counter + steps)

    def _key(self) -> int:
        return (int(self.seed) & 0xFFFFFFFFFFFFFFFF) | (int(self.index) << 64)

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normals: the concatenation of gaussian_pair at
        counters counter, counter+1, ..."""
        raw = philox_blocks(self.seed, [self.index], self.counter, (n + 1) // 2)[0]
        return _box_muller(raw)[:n]


_MASK64 = 0xFFFFFFFFFFFFFFFF


def philox_blocks(seed: int, indices, counter: int, blocks: int) -> np.ndarray:
    """Raw Philox-4x64 output, shape (len(indices), blocks, 4).

    Key = (seed, index), counter = counter .. counter + blocks - 1.  A single
    generator is re-keyed per index, which is much cheaper than building one.
    """
    bitgen = np.random.Philox(key=0)
    state = bitgen.state
    out = np.empty((len(indices), blocks, 4), dtype=np.uint64)
    for row, index in enumerate(indices):
        state["state"]["key"][:] = (int(seed) & _MASK64, int(index) & _MASK64)
        state["state"]["counter"][:] = (int(counter) & _MASK64, int(counter) >> 64, 0, 0)
        state["buffer_pos"] = 4
        bitgen.state = state
        out[row] = bitgen.random_raw(4 * blocks).reshape(blocks, 4)
    return out


def _box_muller(raw: np.ndarray) -> np.ndarray:
    """Two normals per 4-word block from its first two words; last axis is the block."""
    u1 = ((raw[..., 0] >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    u2 = ((raw[..., 1] >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    radius = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(raw.shape[:-2] + (2 * raw.shape[-2],))
    out[..., 0::2] = radius * np.cos(2.0 * np.pi * u2)
    out[..., 1::2] = radius * np.sin(2.0 * np.pi * u2)
    return out


def stream_normals(seed: int, indices, n: int) -> np.ndarray:
    """First ``n`` normals of every substream ``RandomStream(seed).split(i)``."""
    raw = philox_blocks(seed, list(indices), 0, (n + 1) // 2)
    return _box_muller(raw)[:, :n]


def gaussian_pair(stream: RandomStream) -> tuple[float, float]:
    """Two independent N(0, 1) deviates determined by (seed, index, counter)."""
    x, y = stream.normals(2)
    return float(x), float(y)
