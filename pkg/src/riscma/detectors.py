"""Receiver-side attack detectors.

* fixed-sample energy test (low block energy means attack),
* GLR-CUSUM sequential test on a variance drop,
* two-moment test on per-block SNR estimates,
* per-sample double-threshold test derived from the KS statistic.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidArgument
from .statdist import chi2_cdf, chi2_inv, kl_divergence


@dataclass(frozen=True)
class DetectionOutcome:
    """Verdict of a detector. ``attack`` is True for H1."""
    detector: str
    statistic: float
    thresholds: tuple
    attack: bool
    run_length: int = None

    def to_record(self):
        return {
            "detector": self.detector,
            "statistic": float(self.statistic),
            "thresholds": ";".join(repr(float(t)) for t in self.thresholds),
            "verdict": "H1" if self.attack else "H0",
            "run_length": "" if self.run_length is None else int(self.run_length),
        }


# ---------------------------------------------------------------------------
# energy test
# ---------------------------------------------------------------------------

def energy_threshold(K, rho, sigma02):
    """Threshold eta' with P(W <= eta' | H0) = rho.

    Under H0, 2W/sigma0^2 is chi-square with 2K degrees of freedom, so
    eta' = R_{2K, rho} * sigma0^2 / 2.
    """
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    if sigma02 <= 0:
        raise InvalidArgument("sigma02 must be positive")
    return chi2_inv(rho, 2 * K) * sigma02 / 2.0


@dataclass(frozen=True)
class EnergyTest:
    K: int
    rho: float
    sigma02: float
    threshold: float

    @classmethod
    def design(cls, K, rho, sigma02):
        return cls(int(K), float(rho), float(sigma02), energy_threshold(K, rho, sigma02))


def energy_statistic(samples):
    return float(np.sum(np.abs(np.asarray(samples)) ** 2))


def energy_detect(samples, test):
    """H1 iff W = sum |y_i|^2 <= eta' (ties go to H1)."""
    y = np.asarray(samples)
    if y.shape[0] != test.K:
        raise InvalidArgument(f"expected {test.K} samples, got {y.shape[0]}")
    W = energy_statistic(y)
    return DetectionOutcome("energy", W, (test.threshold,), W <= test.threshold)


def detection_probability(sigma2, test):
    """P(W <= eta') when the received variance is ``sigma2``."""
    if sigma2 <= 0:
        raise InvalidArgument("sigma2 must be positive")
    return chi2_cdf(2.0 * test.threshold / sigma2, 2 * test.K)


# ---------------------------------------------------------------------------
# GLR-CUSUM
# ---------------------------------------------------------------------------

def ml_variance(n, ytilde, sigma_min2, sigma02):
    """Window MLE of the post-change variance clamped to [sigma_min2, sigma02]."""
    return np.clip(np.asarray(ytilde, dtype=float) / n, sigma_min2, sigma02)


def window_llr(n, ytilde, sigma_min2, sigma02):
    """Sup log-likelihood ratio of a window with n samples and energy ytilde."""
    s = ml_variance(n, ytilde, sigma_min2, sigma02)
    return n * np.log(sigma02 / s) - (1.0 / s - 1.0 / sigma02) * ytilde


def cusum_threshold(a, sigma_min2, sigma02):
    """eps = -ln(a/b), b = 3 ln(1/a) (1 + 1/I(sigma_min2))^2.

    ``a`` is restricted to (0, 0.5] where b stays positive and the inverse
    map used by the attacker is single valued.
    """
    if not (0.0 < a <= 0.5):
        raise InvalidArgument(f"a must lie in (0, 0.5], got {a}")
    if not (0 < sigma_min2 < sigma02):
        raise InvalidArgument("need 0 < sigma_min2 < sigma02")
    kl = kl_divergence(sigma_min2, sigma02)
    b = 3.0 * math.log(1.0 / a) * (1.0 + 1.0 / kl) ** 2
    return -math.log(a / b)


class GlrCusum:
    """Sequential GLR-CUSUM detector for a drop in received variance.

    At time t the statistic is

        Y(t) = max(0, max_{k} sup_{s in [s_min, s_0]} log LR(y_k..y_t)),

    with the supremum attained at the clamped window MLE. Windows are
    restricted to the last ``window`` samples when given.
    """

    def __init__(self, sigma02, sigma_min2, epsilon, window=None):
        if sigma02 <= 0 or sigma_min2 <= 0 or sigma_min2 > sigma02:
            raise InvalidArgument("need 0 < sigma_min2 <= sigma02")
        if window is not None and window < 1:
            raise InvalidArgument("window must be >= 1")
        self.sigma02 = float(sigma02)
        self.sigma_min2 = float(sigma_min2)
        self.epsilon = float(epsilon)
        self.window = window
        self.reset()

    def reset(self):
        self.t = 0
        self.statistic = 0.0
        self.alarm_time = None
        self._suffix = np.zeros(0)

    def step(self, y):
        e = float(abs(y) ** 2)
        self.t += 1
        suf = self._suffix + e
        suf = np.concatenate([[e], suf])
        if self.window is not None and suf.shape[0] > self.window:
            suf = suf[: self.window]
        self._suffix = suf
        n = np.arange(1, suf.shape[0] + 1)
        llr = window_llr(n, suf, self.sigma_min2, self.sigma02)
        self.statistic = max(0.0, float(np.max(llr)))
        alarm = self.statistic >= self.epsilon
        if alarm and self.alarm_time is None:
            self.alarm_time = self.t
        return DetectionOutcome("glr_cusum", self.statistic, (self.epsilon,), alarm,
                                run_length=self.alarm_time)


def cusum_step(det, y):
    """Feed one received symbol to ``det``."""
    return det.step(y)


class CusumBank:
    """Independent GLR-CUSUM runs over S streams fed in chunks.

    Parameters may differ per stream. ``alarms`` holds the 1-based first
    alarm time of each stream, 0 while it has not alarmed.
    """

    def __init__(self, sigma02, sigma_min2, epsilon, window=None, size=None):
        S = size if size is not None else np.broadcast(
            np.asarray(sigma02), np.asarray(sigma_min2), np.asarray(epsilon)).size
        self.s0 = np.broadcast_to(np.asarray(sigma02, dtype=float), (S,)).copy()
        self.smin = np.broadcast_to(np.asarray(sigma_min2, dtype=float), (S,)).copy()
        self.eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (S,)).copy()
        if np.any(self.smin <= 0) or np.any(self.smin > self.s0):
            raise InvalidArgument("need 0 < sigma_min2 <= sigma02")
        self.window = window
        self.t = 0
        self.alarms = np.zeros(S, dtype=np.int64)
        self._live = np.arange(S)
        self._suf = np.zeros((S, 0))

    @property
    def done(self):
        return self._live.size == 0

    def feed(self, energies):
        """Process the next chunk of energies, shape (S, t) for all S streams."""
        E = np.atleast_2d(np.asarray(energies, dtype=float))
        if E.shape[0] != self.alarms.shape[0]:
            raise InvalidArgument("chunk must have one row per stream")
        for j in range(E.shape[1]):
            if self._live.size == 0:
                break
            self.t += 1
            live = self._live
            e = E[live, j:j + 1]
            suf = np.concatenate([e, self._suf + e], axis=1)
            if self.window is not None:
                suf = suf[:, :self.window]
            n = np.arange(1, suf.shape[1] + 1)[None, :]
            s0, smin = self.s0[live, None], self.smin[live, None]
            s = np.clip(suf / n, smin, s0)
            llr = n * np.log(s0 / s) - (1.0 / s - 1.0 / s0) * suf
            stat = np.maximum(0.0, llr.max(axis=1))
            hit = stat >= self.eps[live]
            self.alarms[live[hit]] = self.t
            self._live = live[~hit]
            self._suf = suf[~hit]
        return self.alarms


def cusum_run_lengths(energies, sigma02, sigma_min2, epsilon, window=None):
    """Alarm times of independent GLR-CUSUM runs, vectorized over streams.

    Parameters
    ----------
    energies : ndarray, shape (S, T)
        Per-sample energies |y|^2 of S streams.
    sigma02, sigma_min2, epsilon : float or ndarray of shape (S,)
    window : int, optional
        Window cap.

    Returns
    -------
    ndarray of int, shape (S,)
        First alarm time (1-based); 0 when no alarm within T samples.
    """
    E = np.atleast_2d(np.asarray(energies, dtype=float))
    bank = CusumBank(sigma02, sigma_min2, epsilon, window, size=E.shape[0])
    return bank.feed(E).copy()


# ---------------------------------------------------------------------------
# moment test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentDetector:
    """Two-moment test on per-block SNR estimates."""
    ref_m1: float
    ref_m2: float
    zeta1: float
    zeta2: float
    T: int

    def __post_init__(self):
        if self.zeta1 <= 0 or self.zeta2 <= 0:
            raise InvalidArgument("thresholds must be positive")
        if self.T < 1:
            raise InvalidArgument("T must be >= 1")


def estimate_block_snr(samples, sigma_w2):
    """max(0, (mean |y|^2 - sigma_w2) / sigma_w2) over one block."""
    p = float(np.mean(np.abs(np.asarray(samples)) ** 2))
    return max(0.0, (p - sigma_w2) / sigma_w2)


def moment_detect(snr_estimates, det):
    """H1 iff |mean - m1| >= zeta1 or |mean of squares - m2| >= zeta2."""
    x = np.asarray(snr_estimates, dtype=float)
    if x.shape[0] != det.T:
        raise InvalidArgument(f"expected {det.T} estimates, got {x.shape[0]}")
    m1 = float(np.mean(x))
    m2 = float(np.mean(x ** 2))
    d1 = abs(m1 - det.ref_m1)
    d2 = abs(m2 - det.ref_m2)
    stat = max(d1 / det.zeta1, d2 / det.zeta2)
    return DetectionOutcome("moment", stat, (det.zeta1, det.zeta2),
                            bool(d1 >= det.zeta1 or d2 >= det.zeta2))


# ---------------------------------------------------------------------------
# KS / double-threshold test
# ---------------------------------------------------------------------------

def _cdf_of(F0):
    return F0.cdf if hasattr(F0, "cdf") else F0


def ks_statistic(energies, F0):
    """max_n |F1(r_n) - F0(r_n)| with F1 the right-continuous empirical CDF."""
    r = np.sort(np.asarray(energies, dtype=float).ravel())
    if r.size == 0:
        raise InvalidArgument("need at least one sample")
    F1 = np.searchsorted(r, r, side="right") / r.size
    return float(np.max(np.abs(F1 - _cdf_of(F0)(r))))


def threshold_quantiles(K, iota, eps_ks):
    """Roots z of z^2 - z + (K-1) eps iota^2 = 0."""
    if K < 2:
        raise InvalidArgument("K must be >= 2")
    c = (K - 1) * eps_ks * iota ** 2
    disc = 1.0 - 4.0 * c
    if disc < 0:
        emax = 1.0 / (4.0 * (K - 1) * iota ** 2)
        raise InvalidArgument(f"eps_ks={eps_ks} too large; the largest admissible value is {emax:.6g}")
    root = math.sqrt(disc)
    # small root via the product of roots to avoid cancellation
    zu = (1.0 + root) / 2.0
    zl = c / zu
    return zl, zu


def double_thresholds(K, iota, eps_ks, F0):
    """Energy thresholds (r_l, r_u) = F0^{-1}(z_l), F0^{-1}(z_u)."""
    zl, zu = threshold_quantiles(K, iota, eps_ks)
    if zl <= 0.0 or zu >= 1.0:
        raise InvalidArgument("eps_ks must be positive")
    return F0.inv_cdf(zl), F0.inv_cdf(zu)


@dataclass(frozen=True)
class DoubleThresholdTest:
    r_l: float
    r_u: float
    iota: float
    eps_ks: float
    K: int
    F0: object = field(repr=False, default=None)

    def __post_init__(self):
        if not (0 < self.r_l < self.r_u):
            raise InvalidArgument("need 0 < r_l < r_u")

    @classmethod
    def design(cls, K, iota, eps_ks, F0):
        rl, ru = double_thresholds(K, iota, eps_ks, F0)
        return cls(rl, ru, iota, eps_ks, K, F0)


def double_threshold_detect(energies, test):
    """H1 iff some energy is <= r_l or >= r_u."""
    r = np.asarray(energies, dtype=float).ravel()
    if r.size == 0:
        raise InvalidArgument("need at least one sample")
    out = (r <= test.r_l) | (r >= test.r_u)
    hit = np.flatnonzero(out)
    stat = float(np.max(np.maximum(test.r_l / np.maximum(r, 1e-300), r / test.r_u)))
    return DetectionOutcome("double_threshold", stat, (test.r_l, test.r_u), bool(hit.size),
                            run_length=int(hit[0]) + 1 if hit.size else None)
