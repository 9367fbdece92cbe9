"""Fading realizations, RIS phase configurations and received SNR.

Convention: element k applies v_k = exp(j*phi_k) and the cascaded amplitude
is sum_k psi_k v_k with psi_k = g_k h_k (SISO). For a MISO link
psi = diag(conj(h_r)) G, so the effective channel is the row v^T psi.
In both cases the gain is ||psi^T v||^2.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DegenerateChannel, InvalidArgument

TWO_PI = 2.0 * math.pi
_TINY = 1e-300


@dataclass(frozen=True)
class ChannelRealization:
    """One fading block.

    Attributes
    ----------
    h, g : ndarray of complex, shape (N,)
        Tx->RIS and RIS->Rx gains (SISO). ``None`` for MISO-only blocks.
    eps_h, eps_g : float
        Path losses (linear power) used to draw the gains.
    G : ndarray of complex, shape (N, M), optional
        Tx->RIS matrix for an M-antenna transmitter.
    h_r : ndarray of complex, shape (N,), optional
        RIS->Rx vector for the MISO link.
    """
    h: np.ndarray = None
    g: np.ndarray = None
    eps_h: float = 1.0
    eps_g: float = 1.0
    G: np.ndarray = None
    h_r: np.ndarray = None

    def __post_init__(self):
        for name in ("h", "g", "h_r"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=complex).reshape(-1)
                if not np.all(np.isfinite(v)):
                    raise InvalidArgument(f"{name} has non-finite entries")
                object.__setattr__(self, name, v)
        if self.G is not None:
            G = np.asarray(self.G, dtype=complex)
            if G.ndim == 1:
                G = G[:, None]
            if not np.all(np.isfinite(G)):
                raise InvalidArgument("G has non-finite entries")
            object.__setattr__(self, "G", G)
        if (self.h is None) != (self.g is None):
            raise InvalidArgument("h and g must be given together")
        if (self.G is None) != (self.h_r is None):
            raise InvalidArgument("G and h_r must be given together")
        if self.h is None and self.G is None:
            raise InvalidArgument("realization needs SISO or MISO gains")
        if self.h is not None and self.h.shape != self.g.shape:
            raise InvalidArgument("h and g lengths differ")
        if self.G is not None and self.G.shape[0] != self.h_r.shape[0]:
            raise InvalidArgument("G rows and h_r length differ")

    @property
    def n(self):
        return self.h.shape[0] if self.h is not None else self.h_r.shape[0]

    @property
    def m(self):
        return None if self.G is None else self.G.shape[1]

    @property
    def is_siso(self):
        return self.h is not None

    @property
    def is_miso(self):
        return self.G is not None


@dataclass(frozen=True)
class PhaseVector:
    """RIS phase shifts in [0, 2pi).

    ``bits`` is ``None`` for continuous phases, else the resolution b and
    every phase must lie on the grid {0, 2pi/M, ...}, M = 2^b.
    """
    phases: np.ndarray
    bits: int = None

    def __post_init__(self):
        ph = np.mod(np.asarray(self.phases, dtype=float).reshape(-1), TWO_PI)
        if not np.all(np.isfinite(ph)):
            raise InvalidArgument("phases must be finite")
        ph[ph >= TWO_PI] = 0.0
        if self.bits is not None:
            if self.bits < 1:
                raise InvalidArgument("bits must be >= 1")
            step = TWO_PI / 2 ** self.bits
            idx = np.rint(ph / step)
            if np.any(np.abs(ph - idx * step) > 1e-9):
                raise InvalidArgument("discrete phases must lie on the 2^b grid")
            ph = np.mod(idx, 2 ** self.bits) * step
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @property
    def n(self):
        return self.phases.shape[0]

    @property
    def unit(self):
        """Unit-modulus vector exp(j*phases)."""
        return np.exp(1j * self.phases)

    @property
    def mode(self):
        return "continuous" if self.bits is None else f"discrete({self.bits})"


@dataclass(frozen=True)
class CompositeChannel:
    """Cascaded channel psi with noise and transmit power.

    ``psi`` has shape (N,) for SISO and (N, M) for MISO. The received signal
    power for a phase vector v is ``p_tx * gain(v)`` and the SNR is
    ``snr_scale * gain(v)``.
    """
    psi: np.ndarray
    noise_var: float = 1.0
    p_tx: float = 1.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.ndim not in (1, 2):
            raise InvalidArgument("psi must be a vector or a matrix")
        if not np.all(np.isfinite(psi)):
            raise InvalidArgument("psi has non-finite entries")
        if self.noise_var <= 0 or self.p_tx < 0:
            raise InvalidArgument("need noise_var > 0 and p_tx >= 0")
        if np.max(np.abs(psi)) < _TINY:
            raise DegenerateChannel("all cascaded gains vanish")
        object.__setattr__(self, "psi", psi)

    @property
    def n(self):
        return self.psi.shape[0]

    @property
    def is_miso(self):
        return self.psi.ndim == 2

    @property
    def matrix(self):
        """psi as an (N, M) matrix."""
        return self.psi if self.psi.ndim == 2 else self.psi[:, None]

    @property
    def snr_scale(self):
        return self.p_tx / self.noise_var

    def gain(self, v):
        """|psi^T v|^2, or ||psi^T v||^2 for MISO; ``v`` may be (..., N)."""
        a = np.asarray(v) @ self.matrix
        return np.sum(np.abs(a) ** 2, axis=-1)

    def quad_matrix(self):
        """Hermitian A with gain(v) = v^H A v."""
        P = self.matrix
        return np.conj(P) @ P.T

    def max_gain_bound(self):
        """(sum_k |psi_k|)^2, exact maximum for SISO, upper bound for MISO."""
        P = self.matrix
        if P.shape[1] == 1:
            return float(np.sum(np.abs(P[:, 0])) ** 2)
        return float(np.sum(np.abs(self.quad_matrix())))

    def variance(self, v):
        """Received-signal variance sigma_w^2 + P*gain(v)."""
        return self.noise_var + self.p_tx * self.gain(v)


@dataclass(frozen=True)
class LinkSample:
    """A received baseband symbol with its block and position."""
    y: complex
    block_id: int
    symbol_index: int


def sample_rayleigh(n, eps_h, eps_g, rng, m=None):
    """Draw an i.i.d. Rayleigh block.

    SISO gains h, g are always drawn; if ``m`` is given, a MISO pair
    (G of shape (N, m) with variance eps_h, h_r with variance eps_g) is drawn
    as well.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if eps_h <= 0 or eps_g <= 0:
        raise InvalidArgument("path losses must be positive")
    s_h, s_g = math.sqrt(eps_h / 2), math.sqrt(eps_g / 2)
    z = rng.standard_normal((2, 2, n))
    h = s_h * (z[0, 0] + 1j * z[0, 1])
    g = s_g * (z[1, 0] + 1j * z[1, 1])
    if m is None:
        return ChannelRealization(h=h, g=g, eps_h=eps_h, eps_g=eps_g)
    if m < 1:
        raise InvalidArgument("m must be >= 1")
    zg = rng.standard_normal((2, n, m))
    zr = rng.standard_normal((2, n))
    G = s_h * (zg[0] + 1j * zg[1])
    h_r = s_g * (zr[0] + 1j * zr[1])
    return ChannelRealization(h=h, g=g, eps_h=eps_h, eps_g=eps_g, G=G, h_r=h_r)


def composite(ch, noise_var=1.0, p_tx=1.0, miso=None):
    """Cascaded channel of a realization.

    SISO: psi_k = g_k h_k. MISO: psi = diag(conj(h_r)) G. ``miso`` selects the
    link when both are present (default: MISO if available).
    """
    use_miso = ch.is_miso if miso is None else miso
    if use_miso:
        if not ch.is_miso:
            raise InvalidArgument("realization has no MISO gains")
        psi = np.conj(ch.h_r)[:, None] * ch.G
    else:
        if not ch.is_siso:
            raise InvalidArgument("realization has no SISO gains")
        psi = ch.g * ch.h
    return CompositeChannel(psi=psi, noise_var=noise_var, p_tx=p_tx)


def optimal_phases(ch):
    """Coherent phases phi_k = -(arg h_k + arg g_k) mod 2pi."""
    if not ch.is_siso:
        raise InvalidArgument("optimal_phases needs SISO gains")
    ph = np.mod(-(np.angle(ch.h) + np.angle(ch.g)), TWO_PI)
    return PhaseVector(ph)


def quantize_phases(omega, b):
    """Map each phase to the nearest point of the 2^b grid, ties upward."""
    if b < 1:
        raise InvalidArgument("b must be >= 1")
    m = 2 ** b
    step = TWO_PI / m
    ph = omega.phases if isinstance(omega, PhaseVector) else np.mod(np.asarray(omega, float), TWO_PI)
    idx = np.floor(ph / step + 0.5).astype(np.int64) % m
    return PhaseVector(idx * step, bits=b)


def quantization_error(quantized, reference):
    """delta_k = quantized - reference wrapped to (-pi, pi]."""
    q = quantized.phases if isinstance(quantized, PhaseVector) else np.asarray(quantized)
    r = reference.phases if isinstance(reference, PhaseVector) else np.asarray(reference)
    d = np.mod(q - r + math.pi, TWO_PI) - math.pi
    d[d <= -math.pi] += TWO_PI
    return d


def _check_dims(ch, omega):
    if omega.n != ch.n:
        raise InvalidArgument(f"phase vector has {omega.n} entries, channel has {ch.n}")


def effective_channel(ch, omega):
    """Row vector conj(h_r)^T Phi G of a MISO link (length M)."""
    if not ch.is_miso:
        raise InvalidArgument("MISO gains required")
    _check_dims(ch, omega)
    return (np.conj(ch.h_r) * omega.unit) @ ch.G


def mrt_vector(ch, omega):
    """Maximal ratio transmit beamformer for the phases ``omega``."""
    a = effective_channel(ch, omega)
    nrm = np.linalg.norm(a)
    if nrm < _TINY:
        raise DegenerateChannel("effective MISO channel vanishes")
    return np.conj(a) / nrm


def cascaded_amplitude(ch, omega):
    """Scalar amplitude sum_k g_k h_k exp(j phi_k) of a SISO link."""
    if not ch.is_siso:
        raise InvalidArgument("SISO gains required")
    _check_dims(ch, omega)
    return complex(np.sum(ch.g * ch.h * omega.unit))


def received_snr(ch, omega, kappa, u=None):
    """Received SNR kappa * |sum_k alpha_k beta_k e^{j Lambda_k}|^2.

    For a MISO-only realization the beamformer ``u`` defaults to MRT, giving
    kappa * ||conj(h_r)^T Phi G||^2.
    """
    if ch.is_siso:
        _check_dims(ch, omega)
        if max(np.max(np.abs(ch.h)), np.max(np.abs(ch.g))) < _TINY:
            raise DegenerateChannel("all channel gains vanish")
        amp = np.abs(ch.h) * np.abs(ch.g)
        lam = omega.phases + np.angle(ch.h) + np.angle(ch.g)
        return float(kappa * np.abs(np.sum(amp * np.exp(1j * lam))) ** 2)
    a = effective_channel(ch, omega)
    if np.max(np.abs(ch.G)) < _TINY or np.max(np.abs(ch.h_r)) < _TINY:
        raise DegenerateChannel("all channel gains vanish")
    if u is None:
        return float(kappa * np.sum(np.abs(a) ** 2))
    return float(kappa * np.abs(a @ np.asarray(u)) ** 2)


def received_snr_miso(ch, omega, kappa, u=None):
    """MISO SNR kappa*|conj(h_r)^T Phi G u|^2 (MRT when ``u`` is None)."""
    a = effective_channel(ch, omega)
    if u is None:
        u = mrt_vector(ch, omega)
    return float(kappa * np.abs(a @ u) ** 2)


def sample_symbols(ch, omega, K, p_tx, sigma_w2, rng, u=None):
    """Draw K received symbols y = sqrt(P) a x + w for one block.

    Returns a complex array of length K; :func:`as_link_samples` converts it
    to :class:`LinkSample` records when needed.
    """
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    if ch.is_siso:
        amp = cascaded_amplitude(ch, omega)
    else:
        a = effective_channel(ch, omega)
        amp = complex(a @ (mrt_vector(ch, omega) if u is None else u))
    z = rng.standard_normal((4, K))
    x = (z[0] + 1j * z[1]) / math.sqrt(2)
    w = math.sqrt(sigma_w2 / 2) * (z[2] + 1j * z[3])
    return math.sqrt(p_tx) * amp * x + w


def as_link_samples(y, block_id=0):
    """Wrap an array of symbols as LinkSample records."""
    return [LinkSample(complex(v), int(block_id), i) for i, v in enumerate(np.asarray(y))]


def complex_normal(rng, var, shape):
    """CN(0, var) draws."""
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return np.sqrt(np.asarray(var) / 2.0) * (z[0] + 1j * z[1])


def random_phases(n, rng, b=None):
    """Uniform phases on [0, 2pi), or uniform over the 2^b grid."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if b is None:
        return PhaseVector(rng.uniform(0.0, TWO_PI, n))
    m = 2 ** b
    return PhaseVector(rng.integers(0, m, n) * (TWO_PI / m), bits=b)


def joint_optimal(ch, iters=200, starts=8, rng=None, tol=1e-12):
    """No-attack MISO configuration maximizing ||conj(h_r)^T Phi G||^2.

    Alternating optimization: for fixed beamformer u the coherent phases are
    closed form, for fixed phases u is MRT. Several starts (MRT on each
    antenna's column plus random) are run and the best kept.
    """
    if not ch.is_miso:
        raise InvalidArgument("MISO gains required")
    P = np.conj(ch.h_r)[:, None] * ch.G
    rng = np.random.default_rng(0) if rng is None else rng
    inits = [np.eye(P.shape[1])[i] for i in range(P.shape[1])]
    inits += [complex_normal(rng, 1.0, P.shape[1]) for _ in range(max(0, starts - len(inits)))]
    best = (-1.0, None, None)
    for u in inits:
        u = u / np.linalg.norm(u)
        last = -1.0
        for _ in range(iters):
            c = P @ u
            v = np.exp(-1j * np.angle(c))
            a = v @ P
            val = float(np.sum(np.abs(a) ** 2))
            u = np.conj(a) / max(np.linalg.norm(a), _TINY)
            if val - last <= tol * max(val, 1.0):
                break
            last = val
        if val > best[0]:
            best = (val, np.mod(np.angle(v), TWO_PI), u)
    return PhaseVector(best[1]), best[2]
