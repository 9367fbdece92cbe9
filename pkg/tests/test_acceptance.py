"""Acceptance criteria 1-11 at their stated tolerances.

Each test records ``(passed, detail)`` into the session ACCEPTANCE dict, and
conftest prints one line per criterion at the end of the run. Criteria that
this implementation does not meet are strict xfails: they still assert the
full criterion, so an unexpected pass turns the suite red.
"""
import math

import numpy as np
import pytest
from scipy import stats

from riscma import channel, statdist
from riscma.attacks import target_variance_ump
from riscma.detectors import (EnergyTest, cusum_run_lengths, cusum_threshold, detection_probability,
                              threshold_quantiles, window_llr)
from riscma.harness import make_config, render, run
from riscma.rng import substream
from riscma.solvers import UnitDiagSdp, gaussian_randomize, select_best, solve_unit_diag_sdp

from oracles import coherent_snr_mc, grid_min_gain, sample_csi_energy


def _metric(rows, name, **params):
    hits = [r for r in rows if r.metric == name and all(r.params.get(k) == v for k, v in params.items())]
    assert len(hits) == 1, (name, params)
    return hits[0].value


def _record(acceptance, k, ok, detail):
    acceptance[k] = (bool(ok), detail)
    return bool(ok)


# 1 -------------------------------------------------------------------------------------------

def test_c01_quantile_exactness(acceptance):
    rhos = np.round(np.arange(0.01, 1.0, 0.01), 2)
    e1 = max(abs(statdist.chi2_inv(r, 2) + 2 * math.log1p(-r)) for r in rhos)
    e2 = 0.0
    for dof in range(1, 201):
        for p in (1e-6, 0.001, 0.05, 0.3, 0.5, 0.8, 0.95, 0.999):
            e2 = max(e2, abs(statdist.chi2_cdf(statdist.chi2_inv(p, dof), dof) - p))
    ok = e1 <= 1e-10 and e2 <= 1e-8
    _record(acceptance, 1, ok, f"closed-form err {e1:.1e} (<=1e-10), round-trip err {e2:.1e} (<=1e-8)")
    assert ok


# 2 -------------------------------------------------------------------------------------------

def test_c02_block_energy_law(acceptance):
    K, s0w = 50, 1e-4
    ch = channel.sample_rayleigh(16, 1.0, 1.0, substream(1, 0))
    om = channel.random_phases(16, substream(1, 1))
    s2 = s0w + abs(channel.cascaded_amplitude(ch, om)) ** 2
    rng = substream(1, 2)
    stat = np.array([2 * np.sum(np.abs(channel.sample_symbols(ch, om, K, 1.0, s0w, rng)) ** 2) / s2
                     for _ in range(10000)])
    pv = stats.kstest(stat, stats.chi2(2 * K).cdf).pvalue
    ok = pv > 0.01
    _record(acceptance, 2, ok, f"KS p-value {pv:.3f} vs chi2(100) (>0.01)")
    assert ok


# 3 -------------------------------------------------------------------------------------------

def _block_energy(rng, var, K, n):
    z = rng.standard_normal((n, K, 2))
    return 0.5 * var * np.sum(z ** 2, axis=(1, 2))


def test_c03_ump_calibration(acceptance):
    K, s02, n = 50, 1.0, 100000
    rng = substream(3, 0)
    worst_fa, worst_pd = 0.0, 0.0
    for rho in (0.05, 0.10, 0.15):
        test = EnergyTest.design(K, rho, s02)
        pfa = np.mean(_block_energy(rng, s02, K, n) <= test.threshold)
        worst_fa = max(worst_fa, abs(pfa - rho))
        for xi in (0.3, 0.5, 0.7):
            s2 = target_variance_ump(rho, xi, K, s02)
            assert detection_probability(s2, test) == pytest.approx(xi, abs=1e-10)
            pd = np.mean(_block_energy(rng, s2, K, n) <= test.threshold)
            worst_pd = max(worst_pd, abs(pd - xi))
    ok = worst_fa <= 0.5e-2 and worst_pd <= 1e-2
    _record(acceptance, 3, ok, f"max |PFA-rho| {worst_fa:.4f} (<=0.005), max |PD-xi| {worst_pd:.4f} (<=0.01)")
    assert ok


# 4 -------------------------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="rate decreases are ~5x larger than the published Table I values; "
                                       "see README, acceptance analysis")
def test_c04_table1(acceptance):
    rows = run(make_config("table1", {"trials": 2000}))
    att_ref, base_ref, pd_ref = (14.1, 12.6, 11.2), (9.1, 7.56, 6.40), (0.53, 0.57, 0.60)
    parts, ok = [], True
    for rho, a_ref, b_ref, p_ref in zip((0.05, 0.10, 0.15), att_ref, base_ref, pd_ref):
        a = _metric(rows, "attack_rate_decrease_pct", rho=rho)
        b = _metric(rows, "baseline_rate_decrease_pct", rho=rho)
        pb = _metric(rows, "baseline_expected_pd", rho=rho)
        pa = _metric(rows, "attack_expected_pd", rho=rho)
        ok &= abs(a - a_ref) <= 2 and abs(b - b_ref) <= 2 and abs(pb - p_ref) <= 0.03 \
            and abs(pa - p_ref) <= 0.03
        parts.append(f"rho={rho}: attack {a:.1f} (ref {a_ref}), baseline {b:.1f} (ref {b_ref}), "
                     f"PD {pb:.2f}/{pa:.2f} (ref {p_ref})")
    _record(acceptance, 4, ok, "; ".join(parts))
    assert ok


# 5 -------------------------------------------------------------------------------------------

def _grid_sup(n, y, smin, s0):
    # two-stage grid over the variance, log spaced, endpoints included
    g = np.exp(np.linspace(math.log(smin), math.log(s0), 10001))
    f = n * np.log(s0 / g) - (1.0 / g - 1.0 / s0) * y
    k = int(np.argmax(f))
    lo, hi = g[max(k - 1, 0)], g[min(k + 1, g.size - 1)]
    g2 = np.concatenate([np.linspace(lo, hi, 20001), [smin, s0]])
    return float(np.max(n * np.log(s0 / g2) - (1.0 / g2 - 1.0 / s0) * y))


def test_c05_cusum_bounds(acceptance):
    S, details, ok = 2000, [], True
    for ratio in (0.3, 1e-6):
        s0, smin = 1.0, ratio
        for a in (0.01, 0.02):
            eps = cusum_threshold(a, smin, s0)
            cap = int(20 / a)
            E = substream(5, int(a * 1000), int(ratio < 0.1)).standard_exponential((S, cap)) * s0
            rl = cusum_run_lengths(E, s0, smin, eps, window=1000).astype(float)
            rl[rl == 0] = cap  # censoring only lowers the estimate
            arl = float(np.mean(rl))
            ok &= arl >= 1 / a
            details.append(f"ARLFA(a={a}, smin/s0={ratio:g}) >= {arl:.0f} (need {1 / a:.0f})")
    rng = substream(5, 9)
    worst = 0.0
    for _ in range(100):
        smin, s0 = sorted(np.exp(rng.uniform(-8, 3, 2)))
        n = int(rng.integers(1, 1001))
        y = float(np.exp(rng.uniform(math.log(smin) - 1, math.log(s0) + 1)) * rng.gamma(n))
        clamp = float(window_llr(n, y, smin, s0))
        worst = max(worst, abs(clamp - _grid_sup(n, y, smin, s0)) / max(1.0, abs(clamp)))
    ok &= worst <= 1e-6
    details.append(f"clamp vs grid max err {worst:.1e} (<=1e-6)")
    _record(acceptance, 5, ok, "; ".join(details))
    assert ok


# 6 -------------------------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="at matched ARLD the random baseline's rate decrease exceeds the "
                                       "attack's; see README, acceptance analysis")
def test_c06_table2(acceptance):
    rows = run(make_config("table2", {"trials": 2000}))
    parts, ok = [], True
    for a, ref in zip((0.01, 0.015, 0.02), (10.1, 7.8, 7.3)):
        att = _metric(rows, "attack_rate_decrease_pct", a_glr=a)
        base = _metric(rows, "baseline_rate_decrease_pct", a_glr=a)
        ok &= att > base and abs(att - ref) <= 3
        parts.append(f"a={a}: attack {att:.1f} vs baseline {base:.1f} (ref {ref})")
    _record(acceptance, 6, ok, "; ".join(parts))
    assert ok


# 7 -------------------------------------------------------------------------------------------

def _fd(mgf, scale):
    h = 1e-3 / scale
    mp, m0, mm = mgf(h), mgf(0.0), mgf(-h)
    return (mp - mm) / (2 * h), (mp - 2 * m0 + mm) / h ** 2


def test_c07_moments(acceptance):
    parts, ok = [], True
    for label, ms, kw in (("continuous N=64", statdist.snr_moments_continuous(64, 1.0), dict(n=64)),
                          ("discrete N=256 b=2", statdist.snr_moments_discrete(256, 1.0, b=2),
                           dict(n=256, b=2))):
        snr = coherent_snr_mc(substream(7, kw["n"]), kw["n"], 1.0, 100000, b=kw.get("b"))
        r1 = abs(np.mean(snr) / ms.m1 - 1)
        r2 = abs(np.mean(snr ** 2) / ms.m2 - 1)
        d1, d2 = _fd(ms.mgf, ms.m1)
        f1, f2 = abs(d1 / ms.m1 - 1), abs(d2 / ms.m2 - 1)
        ok &= r1 <= 0.02 and r2 <= 0.05 and f1 <= 1e-4 and f2 <= 1e-4
        parts.append(f"{label}: MC err {100 * r1:.2f}%/{100 * r2:.2f}% (2%/5%), "
                     f"MGF err {max(f1, f2):.1e}")
    _record(acceptance, 7, ok, "; ".join(parts))
    assert ok


# 8 -------------------------------------------------------------------------------------------

def test_c08_sdr_quality(acceptance):
    rng = substream(8, 0)
    within, bound_ok = 0, True
    levels = {4: 16, 6: 8, 8: 8}  # exhaustive grid size per N
    for i in range(100):
        n = (4, 6, 8)[i % 3]
        psi = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        nu = rng.uniform(0.1, 0.6) * np.sum(np.abs(psi)) ** 2
        sol = solve_unit_diag_sdp(UnitDiagSdp.from_composite(psi, nu=nu))
        cands = gaussian_randomize(sol, 1000, rng)
        gains = np.abs(cands.unit @ psi) ** 2
        feas = gains[gains >= nu * (1 - 1e-9)]
        bound_ok &= bool(feas.size == 0 or feas.min() >= sol.lower_bound - 1e-9 * nu)
        pick = select_best(cands, lambda U: np.abs(U @ psi) ** 2, lo=nu)
        if pick.found and pick.gains[pick.index] <= 1.05 * grid_min_gain(psi, levels[n], nu):
            within += 1
    ok = bound_ok and within >= 95
    _record(acceptance, 8, ok, f"SDP bound holds: {bound_ok}; within 5% of grid optimum: {within}/100 (>=95)")
    assert ok


# 9 -------------------------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="rate decrease at zeta=10% is about twice the published 9.30%; "
                                       "see README, acceptance analysis")
def test_c09_table3(acceptance):
    rows = run(make_config("table3", {"zeta": [0.1]}))
    dec = _metric(rows, "rate_decrease_pct", zeta=0.1)
    viol = _metric(rows, "max_moment_violation", zeta=0.1)
    ok = abs(dec - 9.30) <= 2 and viol <= 1e-6
    _record(acceptance, 9, ok, f"rate decrease {dec:.2f}% (ref 9.30 +-2); moment violation {viol:.1e} (<=1e-6)")
    assert ok


# 10 ------------------------------------------------------------------------------------------

def test_c10_imperfect_csi(acceptance):
    rng = substream(10, 0)
    sup = 0.0
    for s2, ss2 in ((1.0, 0.5), (1.0, 0.05), (2500.0, 0.64)):
        dist = statdist.CsiEnergyDist(s2, ss2)
        grid = np.array([dist.inv_cdf(q) for q in np.linspace(1e-4, 1 - 1e-4, 801)])
        counts = np.zeros(grid.size)
        total = 0
        for _ in range(10):
            r = np.sort(sample_csi_energy(rng, s2, ss2, 1_000_000))
            counts += np.searchsorted(r, grid, side="right")
            total += r.size
        sup = max(sup, float(np.max(np.abs(counts / total - dist.cdf(grid)))))
    res = 0.0
    for K in (10, 50, 100, 200):
        for iota in (0.1, 0.23, 0.5):
            emax = 1 / (4 * (K - 1) * iota ** 2)
            for eps in (1e-4, 0.3 * emax, 0.9 * emax):
                c = (K - 1) * eps * iota ** 2
                for z in threshold_quantiles(K, iota, eps):
                    res = max(res, abs(z * z - z + c))
    rows = run(make_config("table4", {"trials": 2000, "eps_ks": [0.02], "nu_ks": [0.10]}))
    cell = _metric(rows, "attack_rate_decrease_pct", eps_ks=0.02, nu_ks=0.10)
    ok = sup < 3e-3 and res <= 4 * np.finfo(float).eps and abs(cell - 49.44) <= 3
    _record(acceptance, 10, ok, f"CDF sup-norm {sup:.1e} (<3e-3); root residual {res:.1e}; "
                                f"Table IV cell {cell:.2f}% (ref 49.44 +-3)")
    assert ok


# 11 ------------------------------------------------------------------------------------------

SMALL = {
    "table1": {"trials": 3},
    "fig2": {"trials": 2, "rho": [0.1], "xi": [0.5, 0.7]},
    "table2": {"trials": 3, "a_glr": [0.01], "max_run_factor": 3, "baseline_cap": 300},
    "fig3": {"trials": 2, "a_glr": [0.01], "tau": [10, 50]},
    "table3": {"trials": 1, "states": 8, "zeta": [0.2], "moment_samples": 5000},
    "table5": {"trials": 1, "states": 8, "moment_samples": 5000, "detect_trials": 20},
    "table4": {"trials": 3, "eps_ks": [0.02], "nu_ks": [0.1, 0.2]},
}


def test_c11_determinism(acceptance):
    same = {}
    for exp, over in SMALL.items():
        a = render(run(make_config(exp, {**over, "randomization_trials": 200})), "csv")
        b = render(run(make_config(exp, {**over, "randomization_trials": 200})), "csv")
        same[exp] = a == b
    ok = all(same.values())
    _record(acceptance, 11, ok, "byte-identical reruns: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
