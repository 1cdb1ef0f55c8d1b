import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from twmlab.special import (
    CubicRoots,
    RandomStream,
    UnphysicalInvariants,
    agm,
    complete_K,
    cubic_roots_sorted,
    elliptic_F,
    gaussian_pair,
    jacobi_sn,
    stream_normals,
)

moduli = st.floats(0.0, 0.999)
amplitudes = st.floats(0.0, math.pi / 2)


def F_quad(phi, k):
    return quad(lambda x: 1.0 / math.sqrt(1.0 - (k * math.sin(x)) ** 2), 0.0, phi,
                epsabs=1e-14, epsrel=1e-13)[0]


def test_agm_known_value():
    # Gauss's constant: 1 / agm(1, sqrt 2)
    assert agm(1.0, math.sqrt(2.0)) == pytest.approx(1.1981402347355922, rel=1e-15)


@given(moduli)
def test_complete_K_matches_quadrature(k):
    assert complete_K(k) == pytest.approx(F_quad(math.pi / 2, k), rel=1e-12)


def test_complete_K_limits():
    assert complete_K(0.0) == pytest.approx(math.pi / 2, rel=1e-15)
    assert complete_K(1.0) == math.inf
    assert complete_K(1 - 1e-12) > 10.0


@given(amplitudes, moduli)
def test_elliptic_F_matches_quadrature(phi, k):
    assert elliptic_F(phi, k) == pytest.approx(F_quad(phi, k), rel=1e-12, abs=1e-15)


def test_elliptic_F_edge_values():
    assert elliptic_F(0.0, 0.7) == 0.0
    assert elliptic_F(0.3, 0.0) == 0.3
    assert elliptic_F(0.3, 1.0) == pytest.approx(math.atanh(math.sin(0.3)), rel=1e-15)
    assert elliptic_F(math.pi / 2, 0.5) == pytest.approx(complete_K(0.5), rel=1e-14)


@pytest.mark.parametrize("phi,k", [(-0.1, 0.5), (2.0, 0.5), (0.5, 1.2), (0.5, -0.1), (math.pi / 2, 1.0)])
def test_elliptic_F_domain_errors(phi, k):
    with pytest.raises(ValueError):
        elliptic_F(phi, k)


@given(amplitudes, moduli)
def test_sn_inverts_F(phi, k):
    assert jacobi_sn(elliptic_F(phi, k), k) == pytest.approx(math.sin(phi), abs=1e-12)


def test_sn_limits_and_vectorisation():
    u = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(jacobi_sn(u, 0.0), np.sin(u), atol=1e-15)
    np.testing.assert_allclose(jacobi_sn(u, 1.0), np.tanh(u), atol=1e-15)
    k = 0.8
    K = complete_K(k)
    assert jacobi_sn(K, k) == pytest.approx(1.0, abs=1e-13)
    # period 4K and odd symmetry
    np.testing.assert_allclose(jacobi_sn(u + 4 * K, k), jacobi_sn(u, k), atol=1e-12)
    np.testing.assert_allclose(jacobi_sn(-u, k), -jacobi_sn(u, k), atol=1e-15)
    assert isinstance(jacobi_sn(0.2, k), float)


@given(st.floats(0.01, 50), st.floats(0.01, 50), st.floats(0.0, 1.0))
def test_cubic_roots_are_roots(E1, E2, frac):
    # K^2 ranges over the physical interval [0, max_{n} n (E1-n)(E2-n)] on [0, min E]
    m = (E1 + E2 - math.sqrt(E1 * E1 - E1 * E2 + E2 * E2)) / 3
    kmax2 = m * (E1 - m) * (E2 - m)
    K = math.sqrt(frac * kmax2)
    roots = cubic_roots_sorted(E1, E2, K)
    assert roots.a >= roots.b >= roots.c >= 0.0
    scale = max(E1, E2) ** 3
    for n in (roots.a, roots.b, roots.c):
        assert abs(n * (E1 - n) * (E2 - n) - K * K) <= 1e-9 * scale
    assert roots.b <= min(E1, E2) + 1e-9 * max(E1, E2)


def test_cubic_double_root_resolved_exactly():
    # no-energy-transfer point (6, 4, r3): n3 = r3^2 is a double root
    r3sq = 36 * 16 / 52
    E1, E2 = 36 + r3sq, 16 + r3sq
    roots = cubic_roots_sorted(E1, E2, math.sqrt(36 * 16 * r3sq))
    assert roots.b == pytest.approx(r3sq, rel=1e-14)
    assert roots.c == pytest.approx(r3sq, rel=1e-14)
    assert roots.degenerate
    balanced = cubic_roots_sorted(54.0, 54.0, 36.0 * math.sqrt(18.0))
    assert (balanced.a, balanced.b, balanced.c) == pytest.approx((72.0, 18.0, 18.0), rel=1e-14)
    assert cubic_roots_sorted(1.0, 1.0, 0.0) == CubicRoots(1.0, 1.0, 0.0)


def test_cubic_unphysical():
    with pytest.raises(UnphysicalInvariants):
        cubic_roots_sorted(1.0, 1.0, 1.0)
    with pytest.raises(UnphysicalInvariants):
        cubic_roots_sorted(-1.0, 1.0, 0.0)


def test_modulus_bounds():
    assert CubicRoots(3.0, 1.0, 0.0).modulus == pytest.approx(math.sqrt(1 / 3))
    assert CubicRoots(1.0, 1.0, 1.0).modulus == 0.0


def test_random_stream_determinism_and_independence():
    s = RandomStream(42, 7)
    np.testing.assert_array_equal(s.normals(6), RandomStream(42, 7).normals(6))
    assert not np.array_equal(s.normals(6), RandomStream(42, 8).normals(6))
    assert not np.array_equal(s.normals(6), RandomStream(43, 7).normals(6))
    assert gaussian_pair(s) == tuple(s.normals(2))
    # counter semantics: the pair at counter c+1 continues the sequence
    np.testing.assert_array_equal(s.advance(1).normals(2), s.normals(4)[2:])
    assert s.split(3) == RandomStream(42, 3, 0)


def test_stream_normals_matches_substreams():
    block = stream_normals(9, range(5, 9), 6)
    for row, i in enumerate(range(5, 9)):
        np.testing.assert_array_equal(block[row], RandomStream(9).split(i).normals(6))


def test_normals_are_standard():
    z = RandomStream(1).normals(400_000)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert z.var() == pytest.approx(1.0, rel=0.01)
    # Box-Muller pair components are uncorrelated
    assert abs(np.corrcoef(z[0::2], z[1::2])[0, 1]) < 0.01
