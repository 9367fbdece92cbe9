import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from riscma import channel
from riscma.channel import ChannelRealization, PhaseVector
from riscma.errors import InvalidArgument
from riscma.rng import substream


def _ch(n, seed=0):
    return channel.sample_rayleigh(n, 1.0, 1.0, substream(seed, 1))


def test_rayleigh_unit_variance():
    rng = substream(3, 0)
    hs = np.concatenate([channel.sample_rayleigh(64, 1.0, 1.0, rng).h for _ in range(1600)])
    assert np.mean(np.abs(hs) ** 2) == pytest.approx(1.0, abs=0.02)
    assert np.var(hs.real) == pytest.approx(0.5, abs=0.01)


def test_rayleigh_path_loss_scaling():
    rng = substream(3, 1)
    gs = np.concatenate([channel.sample_rayleigh(64, 1.0, 4.0, rng).g for _ in range(800)])
    assert np.mean(np.abs(gs) ** 2) / 4.0 == pytest.approx(1.0, abs=0.03)


def test_single_element_is_rayleigh():
    rng = substream(4, 0)
    amp = np.array([abs(channel.sample_rayleigh(1, 1.0, 1.0, rng).h[0]) for _ in range(20000)])
    assert stats.kstest(amp, stats.rayleigh(scale=math.sqrt(0.5)).cdf).pvalue > 0.01


def test_sampling_is_deterministic():
    a, b = _ch(16, 5), _ch(16, 5)
    assert np.array_equal(a.h, b.h) and np.array_equal(a.g, b.g)


def test_optimal_phases_examples():
    ch = ChannelRealization(h=[1.0, 2.0, 0.5], g=[3.0, 1.0, 1.0])
    assert np.allclose(channel.optimal_phases(ch).phases, 0.0)
    ch = ChannelRealization(h=[1, 1j], g=[1, 1])
    assert np.allclose(channel.optimal_phases(ch).phases, [0.0, 1.5 * math.pi])


def test_optimal_phases_dominate_random():
    ch = _ch(32)
    best = channel.received_snr(ch, channel.optimal_phases(ch), 1.0)
    rng = substream(6, 0)
    others = [channel.received_snr(ch, channel.random_phases(32, rng), 1.0) for _ in range(1000)]
    assert best >= max(others)
    assert best == pytest.approx(np.sum(np.abs(ch.h) * np.abs(ch.g)) ** 2, rel=1e-12)


def test_quantize_examples():
    assert channel.quantize_phases(PhaseVector([0.9 * math.pi]), 1).phases[0] == pytest.approx(math.pi)
    q = channel.quantize_phases(PhaseVector([math.pi / 4 + 1e-12]), 2)
    assert q.phases[0] == pytest.approx(math.pi / 2)
    assert q.bits == 2


def test_quantization_error_uniform():
    rng = substream(7, 0)
    d = []
    for _ in range(1600):
        ch = channel.sample_rayleigh(64, 1.0, 1.0, rng)
        opt = channel.optimal_phases(ch)
        d.append(channel.quantization_error(channel.quantize_phases(opt, 2), opt))
    d = np.concatenate(d)
    assert d.min() > -math.pi / 4 - 1e-12 and d.max() <= math.pi / 4 + 1e-12
    assert stats.kstest(d, stats.uniform(-math.pi / 4, math.pi / 2).cdf).pvalue > 0.01


def test_discrete_phase_grid_enforced():
    PhaseVector([0.0, math.pi / 2], bits=2)
    with pytest.raises(InvalidArgument):
        PhaseVector([0.1], bits=2)


def test_received_snr_cancellation():
    ch = ChannelRealization(h=[1.0, 1.0], g=[1.0, 1.0])
    assert channel.received_snr(ch, PhaseVector([0.0, math.pi]), 5.0) < 1e-28


@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 40))
def test_composite_matches_raw_gains(seed, n):
    rng = np.random.default_rng(seed)
    ch = channel.sample_rayleigh(n, 1.0, 2.0, rng)
    om = channel.random_phases(n, rng)
    psi = channel.composite(ch, 0.1, 3.0)
    raw = channel.received_snr(ch, om, 30.0)
    assert psi.snr_scale * psi.gain(om.unit) == pytest.approx(raw, rel=1e-12, abs=1e-300)


def test_samples_pure_noise_and_coherent_variance():
    ch = _ch(8)
    rng = substream(8, 0)
    y = channel.sample_symbols(ch, channel.optimal_phases(ch), 100000, 0.0, 0.3, rng)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(0.3, rel=0.02)
    om = channel.optimal_phases(ch)
    y = channel.sample_symbols(ch, om, 100000, 2.0, 0.3, rng)
    s0 = 0.3 + 2.0 * abs(channel.cascaded_amplitude(ch, om)) ** 2
    assert np.mean(np.abs(y) ** 2) == pytest.approx(s0, rel=0.01)


def test_block_energy_chi_square_law():
    ch = _ch(8)
    om = channel.random_phases(8, substream(9, 0))
    s2 = 0.1 + abs(channel.cascaded_amplitude(ch, om)) ** 2
    rng = substream(9, 1)
    stat = np.array([2 * np.sum(np.abs(channel.sample_symbols(ch, om, 50, 1.0, 0.1, rng)) ** 2) / s2
                     for _ in range(10000)])
    assert stats.kstest(stat, stats.chi2(100).cdf).pvalue > 0.01


def _miso(n=16, m=3, seed=0):
    rng = substream(seed, 2)
    return channel.sample_rayleigh(n, 1.0, 1.0, rng, m=m)


def test_mrt_unit_norm_and_optimal():
    ch = _miso()
    om = channel.random_phases(16, substream(10, 0))
    u = channel.mrt_vector(ch, om)
    assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
    a = channel.effective_channel(ch, om)
    best = abs(a @ u) ** 2
    rng = substream(10, 1)
    for _ in range(1000):
        w = channel.complex_normal(rng, 1.0, 3)
        assert abs(a @ (w / np.linalg.norm(w))) ** 2 <= best * (1 + 1e-12)


def test_mrt_single_antenna():
    ch = _miso(m=1)
    u = channel.mrt_vector(ch, channel.random_phases(16, substream(11, 0)))
    assert u.shape == (1,) and abs(u[0]) == pytest.approx(1.0)


def test_miso_composite_gain_matches_mrt_snr():
    ch = _miso()
    om = channel.random_phases(16, substream(12, 0))
    psi = channel.composite(ch, 1.0, 1.0, miso=True)
    assert psi.gain(om.unit) == pytest.approx(channel.received_snr_miso(ch, om, 1.0), rel=1e-12)


def test_joint_optimal_beats_random():
    ch = _miso()
    om, u = channel.joint_optimal(ch)
    best = channel.received_snr_miso(ch, om, 1.0, u)
    rng = substream(13, 0)
    assert all(channel.received_snr_miso(ch, channel.random_phases(16, rng), 1.0) <= best
               for _ in range(200))


def test_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        channel.received_snr(_ch(4), PhaseVector(np.zeros(3)), 1.0)
