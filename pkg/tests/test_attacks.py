import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from riscma import attacks, channel, detectors, statdist
from riscma.channel import ChannelRealization, CompositeChannel
from riscma.errors import InfeasibleTarget, InvalidArgument
from riscma.rng import substream

from oracles import bisect, grid_min_gain


def _siso(n, seed, noise=0.1, p=1.0):
    ch = channel.sample_rayleigh(n, 1.0, 1.0, substream(seed, 0))
    return ch, channel.composite(ch, noise, p)


def _raw_gain(ch, omega):
    return abs(np.sum(ch.g * ch.h * omega.unit)) ** 2


# UMP target and phase attack --------------------------------------------------------

def test_target_variance_examples():
    assert attacks.target_variance_ump(0.1, 0.1, 50, 2.5) == 2.5
    ref = -2 * math.log(0.95) / (2 * math.log(2))
    assert attacks.target_variance_ump(0.05, 0.5, 1, 1.0) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.074001, abs=1e-6)
    with pytest.raises(InfeasibleTarget):
        attacks.target_variance_ump(0.2, 0.1, 50, 1.0)


def test_target_variance_table_operating_point():
    rng = np.random.default_rng(41)
    s2 = attacks.target_variance_ump(0.05, 0.53, 50, 1.0)
    test = detectors.EnergyTest.design(50, 0.05, 1.0)
    W = s2 / 2 * np.sum(rng.standard_normal((100000, 100)) ** 2, axis=1)
    assert np.mean(W <= test.threshold) == pytest.approx(0.53, abs=0.01)


def test_phase_attack_cancellation():
    psi = CompositeChannel(np.array([0.8, 0.8 * np.exp(1j)]), 0.1, 1.0)
    plan = attacks.design_phase_attack(psi, 0.0, 200, np.random.default_rng(0))
    assert plan.feasible and plan.achieved_metric < 1e-8


def test_phase_attack_at_maximum():
    ch, psi = _siso(6, 1)
    nu = float(np.sum(np.abs(psi.psi)) ** 2)
    plan = attacks.design_phase_attack(psi, nu, 200, np.random.default_rng(1))
    assert plan.feasible
    assert plan.achieved_metric == pytest.approx(nu, rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_phase_attack_vs_grid(seed):
    ch, psi = _siso(4, 10 + seed)
    nu = 0.5 * float(np.sum(np.abs(psi.psi)) ** 2)
    plan = attacks.design_phase_attack(psi, nu, 1000, np.random.default_rng(seed))
    assert plan.feasible
    assert plan.achieved_metric <= 1.05 * grid_min_gain(psi.psi, 16, nu)
    # re-verified from the raw gains, not the cached composite
    assert _raw_gain(ch, plan.omega) == pytest.approx(plan.achieved_metric, rel=1e-10)
    assert _raw_gain(ch, plan.omega) >= nu * (1 - 1e-9)


@settings(max_examples=15)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 24), frac=st.floats(0.0, 0.95))
def test_feasible_plans_satisfy_constraint_from_raw_gains(seed, n, frac):
    ch = channel.sample_rayleigh(n, 1.0, 1.0, np.random.default_rng(seed))
    psi = channel.composite(ch, 0.01, 2.0)
    nu = frac * float(np.sum(np.abs(psi.psi)) ** 2)
    plan = attacks.design_phase_attack(psi, nu, 300, np.random.default_rng(seed + 1))
    assert plan.feasible
    g = _raw_gain(ch, plan.omega)
    assert plan.satisfies(g)
    assert g >= nu * (1 - 1e-9)


def test_phase_attack_monotone_in_nu():
    ch, psi = _siso(16, 2)
    top = float(np.sum(np.abs(psi.psi)) ** 2)
    achieved = [attacks.design_phase_attack(psi, f * top, 1000, np.random.default_rng(3)).achieved_metric
                for f in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(b >= a for a, b in zip(achieved, achieved[1:]))


def test_ump_attack_meets_detection_target():
    ch, psi = _siso(32, 4, noise=1e-4)
    plan = attacks.design_ump_attack(psi, 0.05, 0.5, 50, 500, np.random.default_rng(4))
    assert plan.feasible
    assert plan.predicted <= 0.5 + 1e-9
    assert psi.noise_var + psi.p_tx * plan.achieved_metric >= plan.diagnostics["target_variance"] * (1 - 1e-9)


def test_ump_attack_vacuous_detection_constraint():
    ch, psi = _siso(8, 5)
    plan = attacks.design_ump_attack(psi, 0.05, 1.0, 50, 500, np.random.default_rng(5))
    free = attacks.design_phase_attack(psi, None, 500, np.random.default_rng(5))
    assert plan.achieved_metric == pytest.approx(free.achieved_metric, rel=1e-9, abs=1e-12)


def test_miso_reduces_to_siso():
    ch, psi = _siso(8, 6, noise=0.01)
    col = CompositeChannel(psi.psi[:, None], psi.noise_var, psi.p_tx)
    s0 = psi.noise_var + psi.p_tx * float(np.sum(np.abs(psi.psi)) ** 2)
    a = attacks.design_miso_attack(col, 0.05, 0.6, 50, s0, 500, np.random.default_rng(7))
    nu = (attacks.target_variance_ump(0.05, 0.6, 50, s0) - psi.noise_var) / psi.p_tx
    b = attacks.design_phase_attack(psi, nu, 500, np.random.default_rng(7))
    assert a.achieved_metric == pytest.approx(b.achieved_metric, rel=1e-9)


def test_miso_no_op_when_xi_equals_rho():
    ch = channel.sample_rayleigh(8, 1.0, 1.0, substream(8, 0), m=2)
    psi = channel.composite(ch, 0.01, 1.0)
    om, u = channel.joint_optimal(ch)
    s0 = 0.01 + float(psi.gain(om.unit))
    plan = attacks.design_miso_attack(psi, 0.1, 0.1, 50, s0, 500, np.random.default_rng(8))
    assert plan.feasible
    assert plan.diagnostics["target_variance"] == s0
    assert plan.achieved_metric >= s0 - 0.01 - 1e-9


def test_miso_vs_grid():
    ch = channel.sample_rayleigh(8, 1.0, 1.0, substream(9, 0), m=2)
    psi = channel.composite(ch, 0.01, 1.0)
    om, _ = channel.joint_optimal(ch)
    s0 = 0.01 + float(psi.gain(om.unit))
    plan = attacks.design_miso_attack(psi, 0.05, 0.7, 50, s0, 2000, np.random.default_rng(9))
    nu = (plan.diagnostics["target_variance"] - 0.01)
    assert plan.feasible
    assert plan.achieved_metric <= 1.05 * grid_min_gain(psi.psi, 4, nu)


# GLR-CUSUM attack ------------------------------------------------------------------------

def test_log_ratio_roots():
    for rhs, ref in ((-1.0, 0.56714), (-0.25, 0.816)):
        a = attacks.solve_log_ratio(rhs)
        assert a == pytest.approx(bisect(lambda x: math.log(x) / x - rhs, 1e-9, 1.0), abs=1e-12)
        assert a == pytest.approx(ref, abs=5e-4)


def test_a_from_threshold_guard():
    # ln(a)/a = -1 and -0.25 with I = 1: roots 0.567 and 0.816 lie outside (0, 0.5]
    for rhs in (-1.0, -0.25):
        with pytest.raises(InvalidArgument):
            attacks.a_from_threshold(math.log(-rhs * 12.0), 1.0)


@given(a=st.floats(1e-6, 0.5), ratio=st.floats(1e-4, 0.99))
def test_a_from_threshold_round_trip(a, ratio):
    eps = detectors.cusum_threshold(a, ratio, 1.0)
    back = attacks.a_from_threshold(eps, statdist.kl_divergence(ratio, 1.0))
    assert back == pytest.approx(a, rel=1e-8)
    assert detectors.cusum_threshold(back, ratio, 1.0) == pytest.approx(eps, abs=1e-8)


@given(a=st.floats(1e-4, 0.5), tau=st.floats(1.0, 1e4), s0=st.floats(1e-3, 1e3))
def test_variance_floor_identity(a, tau, s0):
    q = attacks.variance_floor_from_arld(a, tau, s0)
    assert 0 < q <= s0
    assert statdist.kl_divergence(q, s0) == pytest.approx(-math.log(a) / tau, rel=1e-8, abs=1e-14)
    assert abs(attacks.arld_printed_residual(q, a, tau, s0)) < 1e-10


def test_variance_floor_long_arld_limit():
    assert attacks.variance_floor_from_arld(0.01, math.inf, 2.0) == 2.0
    assert attacks.variance_floor_from_arld(0.01, 1e12, 2.0) == pytest.approx(2.0, rel=1e-5)


def test_variance_floor_operating_point_arld():
    ch, psi = _siso(64, 11, noise=1e-4)
    s0 = psi.noise_var + psi.p_tx * float(np.sum(np.abs(psi.psi)) ** 2)
    smin = attacks.estimate_sigma_min(psi, 500, np.random.default_rng(11))
    eps = detectors.cusum_threshold(0.01, smin, s0)
    q = attacks.variance_floor_from_arld(0.01, 185.0, s0)
    rng = np.random.default_rng(12)
    e = q * rng.exponential(size=(300, 3000))
    rl = detectors.cusum_run_lengths(e, s0, smin, eps, window=1000)
    rl = np.where(rl == 0, e.shape[1], rl)
    assert rl.mean() >= 185 * 0.8


def test_cusum_attack_collapses_for_long_arld():
    ch, psi = _siso(16, 13, noise=0.01)
    top = float(np.sum(np.abs(psi.psi)) ** 2)
    s0 = psi.noise_var + psi.p_tx * top
    smin = attacks.estimate_sigma_min(psi, 500, np.random.default_rng(13))
    eps = detectors.cusum_threshold(0.01, smin, s0)
    plan = attacks.design_cusum_attack(psi, eps, smin, s0, 1e14, 500, np.random.default_rng(14))
    assert plan.feasible
    assert plan.achieved_metric == pytest.approx(top, rel=1e-5)


# LP attack ----------------------------------------------------------------------------------

def test_lp_single_state_two_actions():
    st_ = ChannelRealization(h=[1.0, 0.5], g=[1.0, 1.0])
    s_hi, s_lo = 1.5 ** 2, 0.5 ** 2
    m1 = 1.2
    zeta1 = 0.2
    pol = attacks.design_lp_attack([st_], None, 1, (m1, 1e6), (zeta1 / m1, 1e9), 1.0, canonical=True)
    assert pol.feasible
    p_lo = pol.probs[0][np.argmin(pol.snr[0])]
    assert p_lo * s_lo + (1 - p_lo) * s_hi == pytest.approx(m1 - zeta1, rel=1e-9)


def _states(n, N, seed):
    rng = substream(seed, 0)
    return [channel.sample_rayleigh(N, 1.0, 1.0, rng) for _ in range(n)]


def test_lp_huge_tolerance_picks_min_rate_action():
    states = _states(6, 3, 15)
    pol = attacks.design_lp_attack(states, None, 2, (1.0, 1.0), (1e12, 1e12), 10.0)
    assert pol.feasible
    best = np.argmin(pol.snr, axis=1)
    assert np.allclose(pol.probs[np.arange(6), best], 1.0)


def test_lp_moments_reverified_by_direct_summation():
    states = _states(12, 4, 16)
    ms = statdist.snr_moments_discrete(4, 10.0, b=2)
    pol = attacks.design_lp_attack(states, None, 2, ms, (0.1, 0.1), 10.0)
    assert pol.feasible
    e1 = e2 = rate = 0.0
    step = 2 * math.pi / 4
    for s, st_ in enumerate(states):
        for a, idx in enumerate(pol.action_index):
            snr = 10.0 * abs(np.sum(st_.g * st_.h * np.exp(1j * step * idx))) ** 2
            w = pol.state_probs[s] * pol.probs[s, a]
            e1 += w * snr
            e2 += w * snr ** 2
            rate += w * math.log2(1 + snr)
    assert abs(e1 - ms.m1) <= 0.1 * ms.m1 * (1 + 1e-6)
    assert abs(e2 - ms.m2) <= 0.1 * ms.m2 * (1 + 1e-6)
    assert rate == pytest.approx(pol.rate, rel=1e-9)
    assert pol.rate <= pol.rate_no_attack
    assert np.allclose(pol.probs.sum(axis=1), 1.0)


def test_lp_infeasible_reports_scale():
    states = _states(4, 3, 17)
    pol = attacks.design_lp_attack(states, None, 2, (1e6, 1e12), (1e-3, 1e-3), 1.0)
    assert not pol.feasible
    assert pol.diagnostics["min_zeta_scale"] > 1


def test_lp_action_space_guard():
    with pytest.raises(InvalidArgument):
        attacks.enumerate_actions(9, 2)
    assert attacks.enumerate_actions(3, 2).shape == (16, 3)
    assert attacks.enumerate_actions(3, 2, canonical=False).shape == (64, 3)


# imperfect-CSI attack and baselines --------------------------------------------------------------

def test_csi_attack_vacuous_bound_is_unconstrained_minimum():
    ch, psi = _siso(8, 18, noise=0.01)
    plan = attacks.design_csi_attack(psi, 1e6, 1e6, 0.0, 0.01, 8, 500, np.random.default_rng(18))
    free = attacks.design_phase_attack(psi, None, 500, np.random.default_rng(18))
    assert plan.feasible
    assert plan.achieved_metric == pytest.approx(free.achieved_metric, rel=1e-9, abs=1e-12)


def test_csi_attack_respects_upper_bound():
    ch, psi = _siso(8, 19, noise=0.01)
    top = float(np.sum(np.abs(psi.psi)) ** 2)
    r_l = 0.3 * top
    plan = attacks.design_csi_attack(psi, 1.0, r_l, 1e-3, 0.01, 8, 500, np.random.default_rng(19))
    bound = (r_l - 8e-3 - 0.01)
    assert plan.feasible and plan.achieved_metric <= bound * (1 + 1e-9)
    bad = attacks.design_csi_attack(psi, 1.0, 1e-3, 1e-3, 0.01, 8, 500, np.random.default_rng(19))
    assert not bad.feasible


def test_random_baseline_uniform():
    rng = substream(20, 0)
    ph = np.concatenate([attacks.random_phase_baseline(64, None, rng).phases for _ in range(200)])
    assert stats.kstest(ph, stats.uniform(0, 2 * math.pi).cdf).pvalue > 0.01
    ph = np.concatenate([attacks.random_phase_baseline(64, 2, rng).phases for _ in range(200)])
    counts = np.bincount(np.rint(ph / (math.pi / 2)).astype(int), minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


def test_random_baseline_incoherent_snr():
    rng = substream(21, 0)
    snr = []
    for _ in range(100000 // 100):
        h = (rng.standard_normal((100, 64)) + 1j * rng.standard_normal((100, 64))) / math.sqrt(2)
        g = (rng.standard_normal((100, 64)) + 1j * rng.standard_normal((100, 64))) / math.sqrt(2)
        v = np.exp(1j * rng.uniform(0, 2 * math.pi, (100, 64)))
        snr.append(np.abs(np.sum(h * g * v, axis=1)) ** 2)
    assert np.mean(snr) / 64 == pytest.approx(1.0, abs=0.02)


def test_sigma_min_examples():
    psi = CompositeChannel(np.array([0.6 + 0.3j]), 0.05, 2.0)
    assert attacks.estimate_sigma_min(psi, 50) == pytest.approx(0.05 + 2.0 * 0.45, rel=1e-9)
    psi = CompositeChannel(np.array([0.5, 0.5j]), 0.05, 2.0)
    assert attacks.estimate_sigma_min(psi, 200) == pytest.approx(0.05, rel=1e-6)
    ch, psi = _siso(4, 22, noise=0.05, p=2.0)
    smin = attacks.estimate_sigma_min(psi, 1000, np.random.default_rng(22))
    grid = grid_min_gain(psi.psi, 16)
    top = float(np.sum(np.abs(psi.psi)) ** 2)
    assert (smin - 0.05) / 2.0 <= 1.05 * grid + 1e-9 * top
