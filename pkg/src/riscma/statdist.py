"""Distributions used by the detectors and attack designers.

Chi-square CDF and quantiles for the energy test, closed-form SNR moment
sets for continuous and quantized phase models, the Gaussian KL divergence
behind the CUSUM bounds, and the received-energy law under imperfect CSI.
"""
from dataclasses import dataclass, field
import math
from statistics import NormalDist
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import InvalidArgument, NumericalFailure
from .solvers.numeric import quadrature

_EPS = 1e-16
_FPMIN = 1e-300


# ---------------------------------------------------------------------------
# regularized incomplete gamma and chi-square
# ---------------------------------------------------------------------------

def _gamma_series(a, x):
    # P(a, x) by the power series, good for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise NumericalFailure(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Q(a, x) by the modified Lentz continued fraction, good for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise NumericalFailure(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise InvalidArgument("shape a must be positive")
    if x < 0:
        raise InvalidArgument("x must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a, x):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise InvalidArgument("shape a must be positive")
    if x < 0:
        raise InvalidArgument("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_cdf(x, dof):
    """CDF of the chi-square law with ``dof`` degrees of freedom.

    Accepts a scalar or an array for ``x``.
    """
    if dof < 1:
        raise InvalidArgument("dof must be >= 1")
    if np.ndim(x) == 0:
        x = float(x)
        if x < 0 or math.isnan(x):
            raise InvalidArgument(f"chi2_cdf needs x >= 0, got {x}")
        return gammainc_lower(dof / 2.0, x / 2.0)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise InvalidArgument("chi2_cdf needs x >= 0")
    out = np.empty_like(arr)
    for i, v in np.ndenumerate(arr):
        out[i] = gammainc_lower(dof / 2.0, v / 2.0)
    return out


def chi2_pdf(x, dof):
    """Density of the chi-square law (scalar)."""
    if x <= 0:
        return 0.0 if dof > 2 else (0.5 if dof == 2 and x == 0 else 0.0)
    k = dof / 2.0
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - math.lgamma(k))


def chi2_inv(p, dof, tol=1e-13):
    """Quantile R_{dof, p} of the chi-square law.

    Newton iteration from a Wilson-Hilferty start, safeguarded by bisection
    inside a maintained bracket.
    """
    if not (0.0 < p < 1.0):
        raise InvalidArgument(f"probability must lie in (0, 1), got {p}")
    if dof < 1:
        raise InvalidArgument("dof must be >= 1")
    z = NormalDist().inv_cdf(p)
    c = 2.0 / (9.0 * dof)
    x = dof * max(1.0 - c + z * math.sqrt(c), 1e-3) ** 3
    # bracket the root
    lo, hi = 0.0, max(x, 1e-300)
    while chi2_cdf(hi, dof) < p:
        lo = hi
        hi *= 2.0
    x = min(max(x, lo), hi)
    if x <= 0:
        x = hi / 2.0
    for _ in range(200):
        fx = chi2_cdf(x, dof) - p
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = chi2_pdf(x, dof)
        step = fx / d if d > 0 else math.inf
        xn = x - step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * max(x, 1e-300):
            return xn
        x = xn
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi)
    raise NumericalFailure(f"chi2_inv did not converge (p={p}, dof={dof})")


@dataclass(frozen=True)
class Chi2Quantile:
    """A chi-square quantile R_{dof, prob}."""
    dof: int
    prob: float
    value: float

    @classmethod
    def of(cls, prob, dof):
        return cls(int(dof), float(prob), chi2_inv(prob, dof))


# ---------------------------------------------------------------------------
# SNR moment sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SnrMomentSet:
    """First two moments, MGF and density of the optimal received SNR.

    ``model`` is ``"continuous"`` or ``"discrete(b)"``. ``params`` holds the
    intermediate quantities of the approximating law.
    """
    m1: float
    m2: float
    mgf: Callable = field(repr=False)
    pdf: Callable = field(repr=False)
    model: str = "continuous"
    params: dict = field(default_factory=dict)

    @property
    def variance(self):
        return self.m2 - self.m1 ** 2


def _ncx2_like_pdf(mu2, s2, kappa):
    """Density of kappa*Z^2 with Z ~ N(mu, s2), mu2 = mu^2."""
    mu = math.sqrt(mu2)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        z = np.sqrt(x[pos] / kappa)
        dens = (np.exp(-(z - mu) ** 2 / (2 * s2)) + np.exp(-(z + mu) ** 2 / (2 * s2)))
        out[pos] = dens / (np.sqrt(2 * math.pi * s2) * 2 * np.sqrt(kappa * x[pos]))
        return out if out.ndim else float(out)
    return pdf


def snr_moments_continuous(n, kappa, eps_h=1.0, eps_g=1.0):
    """Moments of the optimal SNR under continuous phases.

    The SNR is kappa * Z^2 with Z = sum of N products of Rayleigh amplitudes,
    approximated as Gaussian with mean N*sqrt(E)*pi/4 and variance
    N*E*(1 - pi^2/16), E = eps_h*eps_g.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    e = eps_h * eps_g
    mu = n * math.sqrt(e) * math.pi / 4.0
    s2 = n * e * (1.0 - math.pi ** 2 / 16.0)
    m1 = n * kappa * e * (1.0 + math.pi ** 2 * (n - 1) / 16.0)
    m2 = kappa ** 2 * (mu ** 4 + 6 * mu ** 2 * s2 + 3 * s2 ** 2)

    def mgf(t):
        den = 1.0 - 2.0 * kappa * t * s2
        if den <= 0:
            return math.inf
        return math.exp(mu ** 2 * kappa * t / den) / math.sqrt(den)

    return SnrMomentSet(m1=m1, m2=m2, mgf=mgf, pdf=_ncx2_like_pdf(mu ** 2, s2, kappa),
                        model="continuous", params={"mu_z": mu, "sigma_z2": s2, "kappa": kappa, "n": n})


def quantization_cf(omega_arg, b):
    """Characteristic function of the uniform quantization error at ``omega_arg``."""
    if b < 1:
        raise InvalidArgument("b must be >= 1")
    x = omega_arg * math.pi / 2 ** b
    if x == 0:
        return 1.0
    return math.sin(x) / x


def snr_moments_discrete(n, kappa, eps_h=1.0, eps_g=1.0, b=2):
    """Moments of the quantized-optimal SNR, Gamma approximation.

    The normalized sum V = (1/N) sum alpha*beta*e^{j delta} has real part with
    mean mu and variance s_r^2; |V|^2 is approximated by Gamma(k, theta) with
    k = mu^2/(4 s_r^2), theta = 4 s_r^2, and the SNR is kappa*N^2*|V|^2.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if b < 1:
        raise InvalidArgument("b must be >= 1")
    e = eps_h * eps_g
    f1 = quantization_cf(1, b)
    f2 = quantization_cf(2, b)
    mu2 = math.pi ** 2 * e * f1 ** 2 / 16.0
    s_r2 = e * (1.0 + f2 - math.pi ** 2 * f1 ** 2 / 8.0) / (2.0 * n)
    s_i2 = e * (1.0 - f2) / (2.0 * n)
    k = mu2 / (4.0 * s_r2)
    theta = 4.0 * s_r2
    scale = kappa * n ** 2 * theta
    m1 = k * scale
    m2 = k * (k + 1.0) * scale ** 2

    def mgf(t):
        den = 1.0 - t * scale
        if den <= 0:
            return math.inf
        return den ** (-k)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp((k - 1) * np.log(x[pos]) - x[pos] / scale - k * math.log(scale) - math.lgamma(k))
        return out if out.ndim else float(out)

    return SnrMomentSet(m1=m1, m2=m2, mgf=mgf, pdf=pdf, model=f"discrete({b})",
                        params={"mu2": mu2, "sigma_vr2": s_r2, "sigma_vi2": s_i2,
                                "k": k, "theta": theta, "scale": scale, "kappa": kappa, "n": n})


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------

def kl_divergence(sigma2, sigma02):
    """KL divergence of CN(0, sigma2) from CN(0, sigma02).

    I = ln(sigma02/sigma2) + sigma2/sigma02 - 1, evaluated with log1p for
    accuracy near sigma2 = sigma02.
    """
    if sigma2 <= 0 or sigma02 <= 0:
        raise InvalidArgument("variances must be positive")
    u = sigma2 / sigma02 - 1.0
    if abs(u) < 0.5:
        return u - math.log1p(u)
    return math.log(sigma02 / sigma2) + u


# ---------------------------------------------------------------------------
# imperfect-CSI received energy
# ---------------------------------------------------------------------------

def _survival_exact(x, c, tol=1e-12):
    # P(r > x*sigma2) for unit sigma2 and ratio c = sigma_s2/sigma2.
    # Given q = |x_sym|^2 ~ Exp(1), r is exponential with mean 1 + c*q.
    if x <= 0:
        return 1.0
    return quadrature(lambda q: math.exp(-q - x / (1.0 + c * q)), 0.0, math.inf, tol=tol)


def _printed_cdf(r, sigma2, sigma_s2):
    # closed form as printed: 1 - a e^{-a} int_1^inf exp(-a t - r/(sigma2 t)) dt,
    # a = sigma2/sigma_s2. The exact law has e^{+a} in front; kept for comparison.
    a = sigma2 / sigma_s2
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    for i, rv in enumerate(r):
        if rv <= 0:
            out[i] = -math.expm1(-2.0 * a)
            continue
        val = quadrature(lambda t: math.exp(-a - a * t - rv / (sigma2 * t)), 1.0, math.inf, tol=1e-12)
        out[i] = 1.0 - a * val
    return out


@dataclass(frozen=True)
class CsiEnergyDist:
    """Law of the per-sample energy r = |y|^2 under imperfect CSI.

    The received symbol is y = u + Zx with u ~ CN(0, sigma2),
    Z ~ CN(0, sigma_s2) and x ~ CN(0, 1) independent. Conditioning on
    q = |x|^2 gives r | q ~ Exp(sigma2 + sigma_s2 q), hence

        F(r) = 1 - int_0^inf exp(-q) exp(-r / (sigma2 + sigma_s2 q)) dq.

    The table is built once at construction (PCHIP in log r of
    log(-log(1 - F)), which is nearly linear) and inverted by bisection on
    the same interpolant, so ``inv_cdf(cdf(r)) == r`` to bisection accuracy.
    """
    sigma2: float
    sigma_s2: float
    _logx: np.ndarray = field(repr=False, compare=False, default=None)
    _interp: object = field(repr=False, compare=False, default=None)

    @property
    def ratio(self):
        return self.sigma_s2 / self.sigma2

    def __post_init__(self):
        if self.sigma2 <= 0 or self.sigma_s2 < 0:
            raise InvalidArgument("need sigma2 > 0 and sigma_s2 >= 0")
        if self._interp is None:
            logx, h = _build_table(self.ratio)
            object.__setattr__(self, "_logx", logx)
            object.__setattr__(self, "_interp", PchipInterpolator(logx, h, extrapolate=True))

    def _h(self, r):
        x = np.asarray(r, dtype=float) / self.sigma2
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        return self._interp(lx)

    def cdf(self, r):
        """CDF at ``r`` (scalar or array)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        pos = r > 0
        if np.any(pos):
            h = self._h(r[pos])
            out[pos] = -np.expm1(-np.exp(h))
        return out if out.ndim else float(out)

    def __call__(self, r):
        return self.cdf(r)

    def sf(self, r):
        """Survival function 1 - F(r), accurate in the upper tail."""
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        pos = r > 0
        if np.any(pos):
            out[pos] = np.exp(-np.exp(self._h(r[pos])))
        return out if out.ndim else float(out)

    def cdf_exact(self, r, tol=1e-12):
        """CDF by direct quadrature (slow, for verification)."""
        return 1.0 - _survival_exact(r / self.sigma2, self.ratio, tol=tol)

    def inv_cdf(self, p):
        """Inverse CDF by bisection on the interpolated CDF."""
        return csi_inv_cdf(self, p)

    def printed_cdf(self, r):
        """Closed form as printed in the source derivation (diagnostic only)."""
        return _printed_cdf(r, self.sigma2, self.sigma_s2)

    def printed_discrepancy(self):
        """Value of the printed closed form at r = 0 (should be 0)."""
        if self.sigma_s2 == 0:
            return math.nan
        return float(self.printed_cdf(0.0)[0])


def _build_table(c):
    """Grid of log x and h = log(-log(1 - F(x))) for unit sigma2 and ratio c."""
    # extent: survival below ~1e-14 at the top, F ~ 1e-10 at the bottom
    xmax = 40.0 * (1.0 + c * 40.0)
    logx = np.linspace(math.log(1e-10), math.log(xmax), 1600)
    x = np.exp(logx)
    if c == 0:
        return logx, logx.copy()

    def integrand(q):
        return np.exp(-q - x / (1.0 + c * q))
    # split the q range to keep quad_vec's error control local
    qmax = 60.0
    s, err = integrate.quad_vec(integrand, 0.0, qmax, epsabs=1e-15, epsrel=1e-12, limit=2000)
    if not np.all(np.isfinite(s)) or err > 1e-11:
        raise NumericalFailure(f"imperfect-CSI table quadrature failed (err={err})")
    # contribution beyond qmax is below e^-60
    s = np.clip(s, 1e-300, 1.0)
    keep = s < 1.0 - 1e-15
    # where F underflows relative to 1, use the small-x expansion F ~ x E[1/(1+cq)]
    with np.errstate(divide="ignore"):
        neglog = -np.log(s)
    if not np.all(keep):
        m1 = quadrature(lambda q: math.exp(-q) / (1.0 + c * q), 0.0, math.inf, tol=1e-14)
        neglog[~keep] = x[~keep] * m1
    h = np.log(neglog)
    ok = np.isfinite(h) & (s > 1e-250)
    logx, h = logx[ok], h[ok]
    if np.any(np.diff(h) <= 0):
        # enforce strict monotonicity lost to round-off in the far tail
        cut = np.argmax(np.diff(h) <= 0)
        logx, h = logx[: cut + 1], h[: cut + 1]
    return logx, h


def csi_energy_dist(sigma2, sigma_s2):
    """Build the imperfect-CSI energy law for ``sigma2`` and ``sigma_s2``."""
    if sigma2 <= 0 or sigma_s2 <= 0:
        raise InvalidArgument("need sigma2 > 0 and sigma_s2 > 0")
    return CsiEnergyDist(float(sigma2), float(sigma_s2))


def csi_inv_cdf(dist, p, rtol=1e-12):
    """Quantile of ``dist`` at ``p`` in (0, 1), by bisection in log r."""
    if not (0.0 < p < 1.0):
        raise InvalidArgument(f"probability must lie in (0, 1), got {p}")
    # h target: log(-log(1-p)); invert the monotone interpolant in log space
    target = math.log(-math.log1p(-p))
    lo, hi = float(dist._logx[0]), float(dist._logx[-1])
    while float(dist._interp(lo)) > target:
        lo -= 5.0
    while float(dist._interp(hi)) < target:
        hi += 5.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if float(dist._interp(mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol:
            break
    return dist.sigma2 * math.exp(0.5 * (lo + hi))


def shared_symbol_energy_cdf(r, signal_amp2, noise_var, sigma_s2):
    """Energy CDF when the mean and error terms share the same symbol.

    Variant model y = (a + Z) x + w with deterministic |a|^2 = signal_amp2.
    Given Z, r is exponential with mean |a + Z|^2 + noise_var, and |a + Z|^2
    is a scaled noncentral chi-square with 2 degrees of freedom. This
    alternative is provided for comparison and is not validated against the
    main model.
    """
    from scipy import stats
    if sigma_s2 <= 0:
        return 1.0 - math.exp(-r / (signal_amp2 + noise_var))
    lam = 2.0 * signal_amp2 / sigma_s2
    law = stats.ncx2(df=2, nc=lam, scale=sigma_s2 / 2.0)
    return 1.0 - quadrature(lambda v: law.pdf(v) * math.exp(-r / (v + noise_var)), 0.0, math.inf,
                            tol=1e-10)
