import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twmlab.classical import ClassicalState, integrate, n3_period, n3_roots, netr_amplitude
from twmlab.ensemble import (
    NoiseModel,
    _Moments,
    classical_fano,
    jackknife_stderr,
    netr_analytic,
    netr_fano_ratio,
    netr_moment_check,
    netr_moments,
    oscillation_parameters,
    plateau,
    plateau_time,
    run_ensemble,
    sample_batch,
    sample_initial,
)
from twmlab.quantum import ModelKind, coherent_state, evolve, husimi_marginal
from twmlab.special import RandomStream

positive = st.floats(0.5, 30.0)


def test_noise_model_validation():
    assert NoiseModel().sigma == 0.5
    with pytest.raises(ValueError):
        NoiseModel(0.0)


def test_vanishing_blur_gives_centres():
    s = sample_initial((6, 4, 3.3), NoiseModel(1e-30), RandomStream(0, 0))
    np.testing.assert_allclose(s.as_array(), [6, 4, 3.3], atol=1e-12)


def test_blur_statistics():
    n = 1_000_000
    centres = np.array([6.0, 4.0, 3.0])
    a = sample_batch(centres, NoiseModel(), 11, 0, n)
    sigma = 0.5
    assert np.all(np.abs(a.mean(axis=0) - centres) < 4 * sigma / math.sqrt(n))
    np.testing.assert_allclose(a.real.var(axis=0), 0.25, rtol=0.01)
    np.testing.assert_allclose(a.imag.var(axis=0), 0.25, rtol=0.01)


def test_sample_initial_matches_batch():
    batch = sample_batch((1, 2, 3), NoiseModel(), 5, 10, 13)
    for row, i in enumerate(range(10, 13)):
        s = sample_initial((1, 2, 3), NoiseModel(), RandomStream(5, i))
        np.testing.assert_array_equal(s.as_array(), batch[row])


def test_classical_fano_examples():
    assert classical_fano([3.0, 3.0, 3.0]) == 0.0
    assert classical_fano([4.0, 6.0]) == pytest.approx(0.4)
    draws = np.random.default_rng(0).poisson(25, 100_000)
    assert classical_fano(draws) == pytest.approx(1.0, abs=0.02)
    with pytest.raises(ValueError):
        classical_fano([1.0])
    with pytest.raises(ZeroDivisionError):
        classical_fano([1.0, -1.0])


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 10**6))
def test_chan_merge_matches_numpy(n1, n2, seed):
    x = np.random.default_rng(seed).gamma(3.0, size=(n1 + n2, 2))
    a, b = _Moments.of(x[:n1]), _Moments.of(x[n1:])
    both = a.merge(b)
    np.testing.assert_allclose(both.mean, x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(both.fano, x.var(axis=0, ddof=1) / x.mean(axis=0), rtol=1e-10)
    back = both.remove(b)
    np.testing.assert_allclose(back.m2, a.m2, rtol=1e-8, atol=1e-10)


def test_jackknife_of_means_equals_classical_stderr():
    x = np.random.default_rng(1).normal(size=40)
    reps = np.array([np.delete(x, i).mean() for i in range(40)])
    assert jackknife_stderr(reps) == pytest.approx(x.std(ddof=1) / math.sqrt(40), rel=1e-12)


def test_run_ensemble_determinism_across_workers():
    args = dict(r=(6, 4, 0), n_traj=1200, t_grid=np.linspace(0, 1, 11), seed=3, snapshots=(0.5,), chunk=500)
    one = run_ensemble(workers=1, **args)
    two = run_ensemble(workers=2, **args)
    np.testing.assert_array_equal(one.mean_n, two.mean_n)
    np.testing.assert_array_equal(one.var_n, two.var_n)
    np.testing.assert_array_equal(one.fano_replicates, two.fano_replicates)
    np.testing.assert_array_equal(one.clouds[0.5], two.clouds[0.5])
    assert one.clouds[0.5].shape == (1200, 3)
    other = run_ensemble(workers=1, **{**args, "seed": 4})
    assert not np.array_equal(one.mean_n, other.mean_n)


def test_run_ensemble_matches_direct_integration():
    t = np.linspace(0, 2, 5)
    stats = run_ensemble((3, 2, 1), 30, t, seed=9, chunk=7)
    a0 = sample_batch((3, 2, 1), NoiseModel(), 9, 0, 30)
    n = np.array([integrate(ClassicalState.from_array(a), 1.0, t).n for a in a0])
    np.testing.assert_allclose(stats.mean_n, n.mean(axis=0), rtol=1e-8)
    np.testing.assert_allclose(stats.fano_cl, n.var(axis=0, ddof=1) / n.mean(axis=0), rtol=1e-6)
    assert stats.max_invariant_drift < 1e-8
    assert stats.fano_replicates.shape == (5, 5, 3)


def test_run_ensemble_input_errors():
    with pytest.raises(ValueError):
        run_ensemble((1, 2), 10, [0, 1])
    with pytest.raises(ValueError):
        run_ensemble((1, 2, 3), 1, [0, 1])
    with pytest.raises(ValueError):
        run_ensemble((1, 2, 3), 10, [])


def test_degenerate_ensemble_runs():
    stats = run_ensemble((4, 2), 200, np.linspace(0, 1, 6), g=1 / math.sqrt(2), degenerate=True)
    assert stats.modes == (1, 3)
    total = stats.mean_n[:, 0] + 2 * stats.mean_n[:, 1]
    assert np.ptp(total) < 1e-8 * total[0]


@pytest.mark.parametrize("t", [0.0, 0.1, 0.2])
def test_clouds_track_husimi_moments(t):
    # cloud centroid and spread against Q-grid moments; the cloud carries the
    # symmetric-order 1/4 per quadrature, Q adds another 1/4
    r = (6.0, 4.0, 0.0)
    stats = run_ensemble(r, 10_000, [0.0], seed=0, snapshots=(t,))
    state = evolve(coherent_state(ModelKind.nondegenerate(), r), t)
    axis = np.linspace(-12, 12, 241)
    grid = axis[None, :] + 1j * axis[:, None]
    for k, mode in enumerate((1, 2, 3)):
        w = husimi_marginal(state, mode, axis, axis)
        w = w / w.sum()
        mq = (grid * w).sum()
        vq = ((grid.real - mq.real) ** 2 * w).sum(), ((grid.imag - mq.imag) ** 2 * w).sum()
        cloud = stats.clouds[t][:, k]
        n = cloud.size
        for part, m, v in ((np.real, mq.real, vq[0]), (np.imag, mq.imag, vq[1])):
            x = part(cloud)
            assert abs(x.mean() - m) < 3 * x.std(ddof=1) / math.sqrt(n)
            assert abs(x.var(ddof=1) + 0.25 - v) < 3 * math.sqrt(2 / (n - 1)) * x.var(ddof=1)


def test_plateau_helpers():
    assert plateau_time((6, 4, 3)) == pytest.approx(40 / 6)
    assert plateau_time((6, 4, 3), 2.0) == pytest.approx(20 / 6)
    stats = run_ensemble((4, 4, netr_amplitude(4, 4)), 2000, np.linspace(0, plateau_time((4, 4)), 81), seed=2)
    p = plateau(stats, 3)
    window = stats.fano_cl[60:, 2]
    assert p.value == pytest.approx(window.mean())
    assert p.stderr > 0 and p.shift_stderr > 0
    with pytest.raises(ValueError):
        plateau(run_ensemble((4, 4, 0), 10, [0, 1]), 3)


@pytest.mark.slow
@pytest.mark.parametrize("r1,r2", [(4, 4), (8, 4), (8, 6), (8, 8)])
def test_stationary_agreement_and_split(r1, r2):
    r3 = netr_amplitude(r1, r2)
    t = np.linspace(0, plateau_time((r1, r2, r3)), 201)
    stats = run_ensemble((r1, r2, r3), 10_000, t, seed=0)
    pred = netr_analytic(r1, r2)
    values = {}
    for mode, f in zip((1, 2, 3), (pred.F1, pred.F2, pred.F3)):
        p = plateau(stats, mode)
        values[mode] = p.value
        assert abs(p.value - f) < 3 * p.stderr
    assert values[3] < 1 < min(values[1], values[2])


@given(positive)
def test_netr_balanced_values(r):
    pred = netr_analytic(r, r)
    assert pred.F3 == pytest.approx(5 / 6, abs=1e-12)
    assert pred.F1 == pytest.approx(1.25, abs=1e-12)
    assert pred.F2 == pytest.approx(1.25, abs=1e-12)
    assert pred.Omega_bar == pytest.approx(r * math.sqrt(1.5), rel=1e-12)


@given(positive, positive)
def test_netr_exchange_symmetry_and_bounds(r1, r2):
    a, b = netr_analytic(r1, r2), netr_analytic(r2, r1)
    assert a.F1 == b.F2 and a.F2 == b.F1 and a.F3 == b.F3
    assert a.F3 <= 1 <= min(a.F1, a.F2)
    rho = max(r1, r2) ** 2 / min(r1, r2) ** 2
    f3, f1, f2 = netr_fano_ratio(rho)
    big = a if r1 >= r2 else b
    assert (f3, f1, f2) == pytest.approx((big.F3, big.F1, big.F2), abs=1e-12)


def test_netr_limits_and_maximum():
    far = netr_analytic(1e4, 1.0)
    assert (far.F1, far.F2, far.F3) == pytest.approx((1, 1, 1), abs=1e-6)
    assert netr_fano_ratio(math.inf) == (1.0, 1.0, 1.0)
    assert netr_fano_ratio(1.0)[0] == pytest.approx(5 / 6, abs=1e-15)
    assert netr_fano_ratio(2.25)[0] == pytest.approx(0.871, abs=5e-4)
    ratios = np.linspace(1.0, 2.0, 20001)
    f1 = np.array([netr_analytic(x, 1.0).F1 for x in ratios])
    i = int(f1.argmax())
    assert f1[i] == pytest.approx(1.255, abs=5e-4)
    assert ratios[i] == pytest.approx(1.136, abs=1e-3)
    # F3 approaches 1 from below
    assert netr_fano_ratio(1e6)[0] < 1.0
    with pytest.raises(ValueError):
        netr_fano_ratio(0.5)
    with pytest.raises(ValueError):
        netr_analytic(0.0, 1.0)


def test_moment_formulas_swap_under_exchange():
    a, b = netr_moments(6, 4), netr_moments(4, 6)
    assert a["c1_minus_b2"] == pytest.approx(b["c2_minus_b2"], rel=1e-14)
    assert a["c2_minus_b2"] == pytest.approx(b["c1_minus_b2"], rel=1e-14)
    assert a["b2"] == pytest.approx(b["b2"], rel=1e-14)
    assert a["a2"] == pytest.approx(b["a2"], rel=1e-14)


def test_moment_check_balanced():
    report = netr_moment_check(6, 6, n_traj=100_000, seed=0)
    for key, z in report.z_scores().items():
        assert abs(z) < 5, (key, z, report.relative_deviation()[key])


def test_moment_check_unbalanced_symmetry():
    a = netr_moment_check(6, 4, n_traj=100_000, seed=0)
    b = netr_moment_check(4, 6, n_traj=100_000, seed=1)
    assert a.predicted["c1_minus_b2"] == pytest.approx(b.predicted["c2_minus_b2"], rel=1e-14)
    assert a.predicted["c2_minus_b2"] == pytest.approx(b.predicted["c1_minus_b2"], rel=1e-14)
    for ka, kb in (("c1_minus_b2", "c2_minus_b2"), ("c2_minus_b2", "c1_minus_b2"), ("b2", "b2"), ("a2", "a2")):
        se = math.hypot(a.stderr[ka], b.stderr[kb])
        assert abs(a.estimated[ka] - b.estimated[kb]) < 5 * se
    assert a.as_dict()["n_traj"] == 100_000


def test_moment_check_converges_at_strong_fields():
    report = netr_moment_check(20, 20, n_traj=100_000, seed=0)
    assert max(abs(z) for z in report.z_scores().values()) < 3


def test_b_mean_vanishes_within_noise():
    report = netr_moment_check(6, 6, n_traj=100_000, seed=0)
    # linearised mean is zero; the second-order offset is small against the spread
    assert abs(report.b_mean) < 0.1 * report.b_spread
    strong = netr_moment_check(20, 20, n_traj=100_000, seed=0)
    assert abs(strong.b_mean) / strong.b_spread < abs(report.b_mean) / report.b_spread


@pytest.mark.parametrize("r1,r2,amp_tol,period_tol", [(6, 6, 0.03, 0.04), (6, 4, 0.03, 0.04), (20, 20, 0.003, 0.004)])
def test_sinusoidal_linearisation(r1, r2, amp_tol, period_tol):
    # blurred NETR trajectories oscillate as n30 + b + a sin(2 Omega g t + phi)
    r3 = netr_amplitude(r1, r2)
    a0 = sample_batch((r1, r2, r3), NoiseModel(), 3, 0, 200)
    p = oscillation_parameters(a0, r1, r2)
    for i in range(a0.shape[0]):
        s = ClassicalState.from_array(a0[i])
        roots = n3_roots(s)
        half = 0.5 * (roots.b - roots.c)
        assert math.sqrt(p["a2"][i]) == pytest.approx(half, rel=amp_tol)
        assert n3_period(s) == pytest.approx(math.pi / p["Omega"][i], rel=period_tol)
        centre = 0.5 * (roots.b + roots.c) - r3 * r3
        assert abs(centre - p["b"][i]) < 0.15 * half


def test_single_trajectory_frequency():
    r1 = r2 = 6.0
    r3 = netr_amplitude(r1, r2)
    a0 = sample_batch((r1, r2, r3), NoiseModel(), 0, 0, 1)[0]
    omega_bar = netr_analytic(r1, r2).Omega_bar
    period = math.pi / omega_bar
    n = 4096
    t = np.arange(n) * (10 * period / n)
    n3 = integrate(ClassicalState.from_array(a0), 1.0, t).n[:, 2]
    spectrum = np.abs(np.fft.rfft(n3 - n3.mean()))
    freqs = 2 * math.pi * np.fft.rfftfreq(n, t[1] - t[0])
    assert freqs[spectrum.argmax()] == pytest.approx(2 * omega_bar, rel=0.05)
