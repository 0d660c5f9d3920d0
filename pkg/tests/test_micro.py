import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chaosbath.micro import (
    REFRESH_INTERVAL,
    MicroEnsemble,
    MicroUnit,
    ObservableKind,
    ParameterEscapeError,
    SystemSpec,
    centred_moments,
    cocycle_trajectory,
    coupling_term,
    draw_params,
    empirical_density,
    eval_observable,
    simulate,
    step_macro,
    step_micro_unit,
)
from chaosbath.params import RaisedCosineLaw
from chaosbath.rng import TAG_TRAJECTORY, stream

MZ = ObservableKind.MEAN_ZERO_QUADRATIC
SQ = ObservableKind.SQUARE


def spec_for(M, gamma=0.5, observable=MZ, base=3.91, gain=0.05):
    return SystemSpec(base_param=base, coupling_gain=gain, gamma=gamma,
                      observable=observable, n_units=M)


# ----------------------------------------------------------- single unit

def test_step_idles_when_r_below_half():
    u = step_micro_unit(MicroUnit(q=0.3, r=0.25, a=3.85))
    assert u.q == pytest.approx(0.3)
    assert u.r == pytest.approx(0.5)


def test_step_advances_when_r_at_least_half():
    u = step_micro_unit(MicroUnit(q=0.5, r=0.5, a=3.8))
    assert u.q == pytest.approx(0.95)
    assert u.r == pytest.approx(0.0)


@given(st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
       st.floats(min_value=0.0, max_value=4.0))
@settings(max_examples=300, deadline=None)
def test_step_preserves_state_domain(q, r, a):
    # q stays in [0, 1] for a in [0, 4]; r stays in [0, 1) under doubling
    u = step_micro_unit(MicroUnit(q=q, r=r, a=a))
    assert 0.0 <= u.q <= 1.0
    assert 0.0 <= u.r < 1.0
    again = step_micro_unit(u)
    assert 0.0 <= again.q <= 1.0
    assert 0.0 <= again.r < 1.0


def test_mean_zero_observable_vanishes_at_fixed_point():
    a = 3.85
    qstar = 1.0 - 1.0 / a
    assert eval_observable(MZ, qstar, a) == pytest.approx(0.0, abs=1e-14)


def test_square_observable():
    assert eval_observable(SQ, 0.5, 3.9) == pytest.approx(0.25)


def test_mean_zero_observable_time_average_vanishes():
    q = cocycle_trajectory(3.85, 300_000, 10_000, seed=3)
    phi = eval_observable(MZ, q, 3.85)
    # stationarity forces E[x^2] = E[(a x (1-x))^2]; tolerance from the
    # series' own batch-means error
    batches = phi[: 300 * 1000].reshape(300, 1000).mean(axis=1)
    se = batches.std(ddof=1) / np.sqrt(batches.size)
    assert abs(phi.mean()) < 4 * se


def test_invariant_density_at_a4_matches_arcsine_law():
    # at a = 4 the logistic marginal is Beta(1/2, 1/2)
    q = cocycle_trajectory(4.0, 1_000_000, 10_000, seed=11)
    ks = np.max(np.abs(np.sort((2.0 / np.pi) * np.arcsin(np.sqrt(q)))
                       - np.arange(1, q.size + 1) / q.size))
    assert ks < 0.01


def test_marginal_matches_plain_logistic():
    # the mixing modification preserves the logistic marginal law of q
    a = 3.85
    q_mixed = cocycle_trajectory(a, 200_000, 10_000, seed=21)
    x = np.empty(200_000)
    v = 0.37
    for _ in range(10_000):
        v = a * v * (1.0 - v)
    for n in range(x.size):
        v = a * v * (1.0 - v)
        x[n] = v
    both = np.sort(np.concatenate([q_mixed, x]))
    f1 = np.searchsorted(np.sort(q_mixed), both, side="right") / q_mixed.size
    f2 = np.searchsorted(np.sort(x), both, side="right") / x.size
    assert np.abs(f1 - f2).max() < 0.02


# ----------------------------------------------------------- coupling

def test_coupling_single_unit_sqrt_scaling():
    e = MicroEnsemble(units=[MicroUnit(0.4, 0.1, 3.82)], observable=MZ, gamma=0.5)
    assert coupling_term(e) == pytest.approx(eval_observable(MZ, 0.4, 3.82))


def test_coupling_equal_values_gamma_one():
    units = [MicroUnit(0.5, 0.0, 3.8) for _ in range(7)]
    e = MicroEnsemble(units=units, observable=SQ, gamma=1.0)
    assert coupling_term(e) == pytest.approx(0.25)


def test_empty_ensemble_rejected():
    with pytest.raises(ValueError):
        MicroEnsemble(units=[], observable=SQ, gamma=1.0)


# ----------------------------------------------------------- macro step

def test_macro_step_peak():
    assert step_macro(0.5, spec_for(1, base=4.0, gain=0.0), 0.0) == pytest.approx(1.0)


def test_macro_fixed_point_zero():
    assert step_macro(0.0, spec_for(1), 0.3) == pytest.approx(0.0)


def test_macro_escape_raises():
    with pytest.raises(ParameterEscapeError):
        step_macro(0.5, spec_for(1, base=3.99, gain=0.05), 1.0)


def test_macro_escape_clamp():
    out = step_macro(0.5, spec_for(1, base=3.99, gain=0.05), 1.0, escape="clamp")
    assert out == pytest.approx(1.0)


def test_gamma_restricted():
    with pytest.raises(ValueError):
        spec_for(4, gamma=0.7)


# ----------------------------------------------------------- simulate

def test_simulate_deterministic_given_seed():
    spec = spec_for(8)
    params = draw_params(RaisedCosineLaw(), 8, stream(5, 0))
    t1 = simulate(spec, params, 0.0, 500, 100, seed=42, escape="clamp")
    t2 = simulate(spec, params, 0.0, 500, 100, seed=42, escape="clamp")
    assert np.array_equal(t1.macro, t2.macro)
    assert np.array_equal(t1.drive, t2.drive)
    t3 = simulate(spec, params, 0.0, 500, 100, seed=43, escape="clamp")
    assert not np.array_equal(t1.macro, t3.macro)


def test_simulate_decoupled_limit_is_plain_logistic():
    # coupling gain zero: the macro series is the logistic map at the base
    # parameter regardless of the micro ensemble.  Chaos doubles any
    # last-bit rounding difference every couple of steps, so the exact
    # comparison is confined to a short horizon.
    spec = spec_for(4, base=3.7, gain=0.0)
    params = draw_params(RaisedCosineLaw(), 4, stream(9, 0))
    traj = simulate(spec, params, 0.0, 40, 0, seed=1, macro_init=0.3)
    ref = np.empty(40)
    v = 0.3
    for n in range(40):
        ref[n] = v
        v = 3.7 * v * (1.0 - v)
    np.testing.assert_allclose(traj.macro, ref, rtol=1e-7)


def test_simulate_matches_reference_stepper():
    # kernel semantics against the pure per-unit reference, within the
    # first refresh window; the horizon is short enough that amplified
    # rounding noise stays far below the tolerance
    M, n = 3, 14
    spec = spec_for(M, gamma=1.0, observable=SQ, base=3.8, gain=0.02)
    params = np.column_stack([np.array([3.81, 3.84, 3.88]), np.ones(M)])
    traj = simulate(spec, params, 0.0, n, 0, seed=77, macro_init=0.42)

    rng = stream(77, TAG_TRAJECTORY)
    q = rng.random(M)
    block = rng.random((1, M))
    units = [MicroUnit(q[j], block[0, j], params[j, 0]) for j in range(M)]
    macro = 0.42
    for t in range(n):
        ens = MicroEnsemble(units=units, observable=SQ, gamma=1.0)
        drive = coupling_term(ens)
        assert traj.drive[t] == pytest.approx(drive, rel=1e-11)
        assert traj.macro[t] == pytest.approx(macro, rel=1e-11)
        macro = step_macro(macro, spec, drive)
        units = [step_micro_unit(u) for u in units]


def test_simulate_macro_chain_locally_consistent():
    # step-local check with no chaotic amplification: every recorded macro
    # value is the one-step image of the previous recorded (macro, drive)
    spec = spec_for(8, gamma=0.5, observable=MZ, base=3.91, gain=0.05)
    params = draw_params(RaisedCosineLaw(), 8, stream(14, 0))
    traj = simulate(spec, params, 0.0, 400, 50, seed=15, escape="clamp")
    for t in range(0, 399, 7):
        expect = step_macro(traj.macro[t], spec, traj.drive[t], escape="clamp")
        assert traj.macro[t + 1] == pytest.approx(expect, rel=1e-12, abs=1e-13)


def test_simulate_escape_raises_with_step():
    # gain large enough that the very first drive fluctuation escapes
    spec = spec_for(16, base=3.95, gain=1.0)
    params = draw_params(RaisedCosineLaw(), 16, stream(6, 0))
    with pytest.raises(ParameterEscapeError):
        simulate(spec, params, 0.0, 2_000, 0, seed=2)


def test_simulate_macro_reset_after_burn():
    spec = spec_for(4, observable=SQ, gamma=1.0, base=3.8, gain=0.01)
    params = draw_params(RaisedCosineLaw(), 4, stream(8, 0))
    traj = simulate(spec, params, 0.0, 10, 200, seed=3, macro_init_after_burn=0.5)
    assert traj.macro[0] == pytest.approx(0.5)


def test_refresh_keeps_mixing_coordinate_alive():
    # the doubling map erodes r's mantissa; without refreshes every unit
    # would freeze within ~60 steps.  Advancing far past that horizon must
    # still leave the units moving.
    spec = spec_for(2, observable=SQ, gamma=1.0, base=3.8, gain=0.0)
    params = np.column_stack([np.array([3.83, 3.87]), np.ones(2)])
    traj = simulate(spec, params, 0.0, 500, 10 * REFRESH_INTERVAL, seed=4)
    assert np.std(traj.drive[-100:]) > 1e-4


# ----------------------------------------------------------- statistics

def test_clt_of_the_drive_gamma_half():
    # gamma = 1/2, mean-zero observable: the drive at a fixed time is
    # asymptotically Gaussian over realizations with variance <E[phi^2]>
    M, n_real = 1024, 1500
    spec = spec_for(M, gamma=0.5, observable=MZ, base=3.91, gain=0.0)
    law = RaisedCosineLaw()
    z = np.empty(n_real)
    for k in range(n_real):
        params = draw_params(law, M, stream(1000, 1, k))
        traj = simulate(spec, params, 0.0, 1, 400, seed=stream(1000, 2, k))
        z[k] = traj.drive[0]
    _, p_normal = stats.normaltest(z)
    assert p_normal > 0.01
    # quadrature oracle for <E[phi^2]> over the parameter law
    alphas = np.linspace(3.8, 3.9, 201)
    ephi2 = np.empty(alphas.size)
    for i, a in enumerate(alphas):
        q = cocycle_trajectory(a, 30_000, 2_000, seed=stream(1000, 3, i))
        ephi2[i] = np.mean(eval_observable(MZ, q, a) ** 2)
    oracle = np.trapezoid(ephi2 * law.pdf(alphas), alphas)
    assert z.var() == pytest.approx(oracle, rel=0.05)


def test_lln_scaling_gamma_one():
    # gamma = 1, square observable: fluctuation of the drive about its mean
    # shrinks like M^(-1/2)
    law = RaisedCosineLaw()
    sizes = np.array([64, 256, 1024, 4096])
    sds = []
    for M in sizes:
        spec = spec_for(M, gamma=1.0, observable=SQ, base=3.847, gain=0.0)
        z = np.empty(300)
        for k in range(300):
            params = draw_params(law, M, stream(2000, M, k))
            traj = simulate(spec, params, 0.0, 1, 400, seed=stream(2000, M, k, 1))
            z[k] = traj.drive[0]
        sds.append(z.std())
    slope = np.polyfit(np.log(sizes), np.log(sds), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


# ----------------------------------------------------------- histograms

def test_empirical_density_normalized():
    rng = stream(31, 0)
    centers, dens = empirical_density(rng.random(5000), bins=100)
    assert dens.sum() / 100 == pytest.approx(1.0)
    assert centers[0] == pytest.approx(0.005)


def test_empirical_density_uniform_flat():
    rng = stream(32, 0)
    _, dens = empirical_density(rng.random(2_000_000), bins=50)
    assert np.abs(dens - 1.0).max() < 0.02


def test_empirical_density_rejects_empty_and_out_of_range():
    with pytest.raises(ValueError):
        empirical_density(np.array([]))
    with pytest.raises(ValueError):
        empirical_density(np.array([0.2, 1.4]))


def test_centred_moments_constant():
    mu = centred_moments(np.full(100, 0.7), 4)
    assert mu[0] == pytest.approx(0.7)
    np.testing.assert_allclose(mu[1:], 0.0, atol=1e-15)


def test_centred_moments_uniform_oracle():
    # analytic central moments of U(0, 1): 1/12, 0, 1/80
    rng = stream(33, 0)
    x = rng.random(1_000_000)
    mu = centred_moments(x, 4)
    assert mu[0] == pytest.approx(0.5, abs=3 * 0.2887 / 1000)
    assert mu[1] == pytest.approx(1.0 / 12.0, abs=3e-4)
    assert mu[2] == pytest.approx(0.0, abs=1.5e-4)
    assert mu[3] == pytest.approx(1.0 / 80.0, abs=1e-4)


def test_centred_moments_needs_two_samples():
    with pytest.raises(ValueError):
        centred_moments(np.array([1.0]), 2)
