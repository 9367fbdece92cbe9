"""Attack designers matched to each detector, plus the random baseline.

Every designer returns an :class:`AttackPlan` whose phases were checked
against the constraint by recomputing the gain from the cascaded channel.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy import sparse

from .channel import PhaseVector, TWO_PI, random_phases
from .detectors import EnergyTest, detection_probability
from .errors import InfeasibleTarget, InvalidArgument, NumericalFailure
from .solvers.lp import LpProblem, solve_lp
from .solvers.numeric import find_root
from .solvers.sdp import UnitDiagSdp, gaussian_randomize, select_best, solve_unit_diag_sdp
from .statdist import chi2_inv, kl_divergence

DEFAULT_TRIALS = 1000


@dataclass
class AttackPlan:
    """Designed RIS configuration and its bookkeeping.

    ``sense`` is ``"ge"`` (gain >= bound), ``"le"`` (gain <= bound),
    ``"range"`` or ``"none"`` (unconstrained).
    """
    omega: PhaseVector
    achieved_metric: float
    target_bound: float
    predicted: float
    feasible: bool
    sense: str = "ge"
    upper_bound: float = math.inf
    diagnostics: dict = field(default_factory=dict)

    def satisfies(self, gain, atol=1e-6):
        lo = self.target_bound if self.sense in ("ge", "range") else -math.inf
        hi = self.upper_bound if self.sense in ("le", "range") else math.inf
        tol = atol * max(1.0, abs(gain))
        return lo - tol <= gain <= hi + tol

    def to_record(self):
        return {
            "phases": None if self.omega is None else [float(p) for p in self.omega.phases],
            "achieved_metric": float(self.achieved_metric),
            "target_bound": float(self.target_bound),
            "upper_bound": float(self.upper_bound),
            "predicted": float(self.predicted),
            "feasible": bool(self.feasible),
            "sense": self.sense,
            "diagnostics": {k: (float(v) if isinstance(v, (np.floating, float, int)) else v)
                            for k, v in self.diagnostics.items()},
        }


# ---------------------------------------------------------------------------
# UMP energy test
# ---------------------------------------------------------------------------

def target_variance_ump(rho, xi, K, sigma02):
    """Variance giving detection probability xi: R_{2K,rho} sigma0^2 / R_{2K,xi}."""
    if not (0 < rho < 1 and 0 < xi < 1):
        raise InvalidArgument("rho and xi must lie in (0, 1)")
    if xi < rho:
        raise InfeasibleTarget(f"xi={xi} below rho={rho} needs a variance above sigma0^2")
    if xi == rho:
        return float(sigma02)
    return chi2_inv(rho, 2 * K) * sigma02 / chi2_inv(xi, 2 * K)


def _coherent(psi):
    """Phases maximizing the gain (closed form for SISO, alternating for MISO)."""
    P = psi.matrix
    if P.shape[1] == 1:
        return PhaseVector(np.mod(-np.angle(P[:, 0]), TWO_PI))
    u = np.linalg.svd(P, full_matrices=False)[2][0].conj()
    best, best_v = -1.0, None
    for start in [u] + [np.eye(P.shape[1])[i] for i in range(P.shape[1])]:
        u = start / np.linalg.norm(start)
        last = -1.0
        for _ in range(500):
            v = np.exp(-1j * np.angle(P @ u))
            a = v @ P
            val = float(np.sum(np.abs(a) ** 2))
            u = np.conj(a) / np.linalg.norm(a)
            if val - last <= 1e-13 * val:
                break
            last = val
        if val > best:
            best, best_v = val, v
    return PhaseVector(np.mod(np.angle(best_v), TWO_PI))


def _achievable_range(psi, trials, rng):
    sdp = UnitDiagSdp.from_composite(psi)
    sol = solve_unit_diag_sdp(sdp)
    cands = gaussian_randomize(sol, trials, rng)
    g = psi.gain(cands.unit)
    gmax = float(psi.gain(_coherent(psi).unit))
    return float(np.min(g)), max(float(np.max(g)), gmax)


def design_phase_attack(psi, nu, trials=DEFAULT_TRIALS, rng=None, upper_nu=None, tol=1e-7,
                        fallback=True):
    """Minimize the gain subject to gain >= nu (and gain <= upper_nu).

    Solves the unit-diagonal relaxation, draws ``trials`` Gaussian
    candidates and keeps the best feasible one. When no randomized
    candidate meets a lower-bound-only constraint, the coherent
    configuration (always feasible when nu is achievable) is used if
    ``fallback`` is set and the plan records ``fallback = 1``.

    ``nu`` <= 0 or None means no lower bound.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lo = None if nu is None or nu <= 0 else float(nu)
    hi = None if upper_nu is None or not math.isfinite(upper_nu) else float(upper_nu)
    sense = "range" if (lo is not None and hi is not None) else "ge" if lo is not None \
        else "le" if hi is not None else "none"
    bound = lo if lo is not None else (0.0 if nu is None else float(nu))
    diag = {"n": psi.n, "trials": trials}
    if hi is not None and hi <= 0:
        diag["reason"] = "upper bound is not positive"
        return AttackPlan(None, math.nan, bound, math.nan, False, sense,
                          math.inf if hi is None else hi, diag)
    sdp = UnitDiagSdp.from_composite(psi, nu=lo, upper=hi)
    sol = solve_unit_diag_sdp(sdp, tol=tol)
    diag["sdp_status"] = sol.status
    if sol.status == "infeasible":
        gmin, gmax = _achievable_range(psi, trials, rng)
        diag.update(achievable_min=gmin, achievable_max=gmax, reason=sol.method)
        return AttackPlan(None, math.nan, bound, math.nan, False, sense,
                          math.inf if hi is None else hi, diag)
    if sol.status != "optimal":
        raise NumericalFailure(f"relaxation did not converge (gap {sol.gap:.3g})")
    diag["relaxation_value"] = sol.objective
    diag["relaxation_bound"] = sol.lower_bound
    cands = gaussian_randomize(sol, trials, rng)
    pick = select_best(cands, psi.gain, -math.inf if lo is None else lo,
                       math.inf if hi is None else hi)
    diag["feasible_candidates"] = int(np.sum(pick.feasible))
    diag["candidate_min"], diag["candidate_max"] = pick.achievable
    if pick.found:
        omega = PhaseVector(cands.phases[pick.index])
        diag["fallback"] = 0
    elif fallback and lo is not None and hi is None:
        omega = _coherent(psi)
        diag["fallback"] = 1
    else:
        diag["reason"] = "no feasible randomized candidate"
        return AttackPlan(None, math.nan, bound, math.nan, False, sense,
                          math.inf if hi is None else hi, diag)
    g = float(psi.gain(omega.unit))
    plan = AttackPlan(omega, g, bound, psi.snr_scale * g, True, sense,
                      math.inf if hi is None else hi, diag)
    if not plan.satisfies(g):
        plan.feasible = False
        diag["reason"] = "selected candidate violates the constraint on re-evaluation"
    return plan


def design_ump_attack(psi, rho, xi, K, trials=DEFAULT_TRIALS, rng=None):
    """Phase attack that meets detection probability ``xi`` at level ``rho``.

    ``xi`` >= 1 - 1e-12 is treated as no detection constraint.
    """
    s0 = float(psi.variance(_coherent(psi).unit))
    if xi >= 1.0 - 1e-12:
        nu, s_target = None, math.nan
    else:
        s_target = target_variance_ump(rho, xi, K, s0)
        nu = (s_target - psi.noise_var) / psi.p_tx
    plan = design_phase_attack(psi, nu, trials, rng)
    test = EnergyTest.design(K, rho, s0)
    if plan.feasible:
        plan.predicted = detection_probability(psi.noise_var + psi.p_tx * plan.achieved_metric, test)
    plan.diagnostics.update(sigma02=s0, target_variance=s_target)
    return plan


def design_miso_attack(psi_matrix, rho, xi, K, sigma_J02, trials=DEFAULT_TRIALS, rng=None):
    """MISO attack: minimize ||psi^T v||^2 s.t. it stays above nu_jt."""
    if not psi_matrix.is_miso:
        raise InvalidArgument("MISO composite channel required")
    s_target = target_variance_ump(rho, xi, K, sigma_J02)
    nu = (s_target - psi_matrix.noise_var) / psi_matrix.p_tx
    plan = design_phase_attack(psi_matrix, nu, trials, rng)
    if plan.feasible:
        test = EnergyTest.design(K, rho, sigma_J02)
        plan.predicted = detection_probability(
            psi_matrix.noise_var + psi_matrix.p_tx * plan.achieved_metric, test)
    plan.diagnostics.update(sigma02=sigma_J02, target_variance=s_target)
    return plan


# ---------------------------------------------------------------------------
# GLR-CUSUM
# ---------------------------------------------------------------------------

def solve_log_ratio(rhs, hi=1.0):
    """Root a in (0, hi] of ln(a)/a = rhs (increasing map on (0, 1))."""
    f = lambda a: math.log(a) / a - rhs
    return find_root(f, 1e-300, hi, tol=1e-15)


def a_from_threshold(epsilon, kl_min):
    """ARLFA parameter a in (0, 0.5] producing the threshold ``epsilon``.

    Solves ln(a)/a = -exp(epsilon) / (3 (1 + 1/I)^2).
    """
    if epsilon <= 0 or kl_min <= 0:
        raise InvalidArgument("epsilon and kl_min must be positive")
    rhs = -math.exp(epsilon) / (3.0 * (1.0 + 1.0 / kl_min) ** 2)
    edge = math.log(0.5) / 0.5
    if rhs > edge * (1 - 1e-12):
        root = solve_log_ratio(rhs)
        raise InvalidArgument(f"threshold implies a={root:.6g} outside (0, 0.5] "
                              f"(ln(a)/a = {rhs:.6g} > -2 ln 2)")
    if rhs >= edge:
        return 0.5
    return solve_log_ratio(rhs, hi=0.5)


def variance_floor_from_arld(a, tau_arld, sigma02):
    """Smallest variance Q' keeping the ARLD lower bound at ``tau_arld``.

    Q' solves I(Q') = -ln(a)/tau on (0, sigma02]; tau = inf gives sigma02.
    """
    if not (0 < a < 1):
        raise InvalidArgument("a must lie in (0, 1)")
    if tau_arld <= 0:
        raise InvalidArgument("tau_arld must be positive")
    c = -math.log(a) / tau_arld
    if c == 0:
        return float(sigma02)
    # I(x sigma02) = -ln x + x - 1, decreasing in x on (0, 1]
    g = lambda x: -math.log(x) + x - 1.0 - c
    lo = 1e-300
    if g(lo) < 0:
        raise InfeasibleTarget("ARLD target needs a variance below representable range")
    x = find_root(g, lo, 1.0, tol=1e-15)
    return float(x * sigma02)


def arld_printed_residual(q, a, tau_arld, sigma02):
    """Relative residual of q in sigma^2 - sigma0^2 ln sigma^2 = L'.

    L' = sigma0^2 (1 - ln sigma0^2 - ln(a)/tau). Zero when the closed form
    and the KL form agree.
    """
    Lp = sigma02 * (1.0 - math.log(sigma02) - math.log(a) / tau_arld)
    lhs = q - sigma02 * math.log(q)
    return (lhs - Lp) / max(abs(Lp), abs(lhs), 1e-300)


def design_cusum_attack(psi, epsilon, sigma_min2, sigma02, tau_arld, trials=DEFAULT_TRIALS,
                        rng=None):
    """Phase attack keeping the GLR-CUSUM ARLD lower bound at ``tau_arld``."""
    kl = kl_divergence(sigma_min2, sigma02)
    a = a_from_threshold(epsilon, kl)
    q = variance_floor_from_arld(a, tau_arld, sigma02)
    nu = (q - psi.noise_var) / psi.p_tx
    plan = design_phase_attack(psi, nu if nu > 0 else None, trials, rng)
    plan.diagnostics.update(a=a, variance_floor=q, printed_residual=(
        arld_printed_residual(q, a, tau_arld, sigma02) if math.isfinite(tau_arld) else 0.0))
    if plan.feasible:
        s2 = psi.noise_var + psi.p_tx * plan.achieved_metric
        s2 = min(s2, sigma02)
        kl_att = kl_divergence(s2, sigma02)
        plan.predicted = math.log(1.0 / a) / kl_att if kl_att > 0 else math.inf
    return plan


# ---------------------------------------------------------------------------
# multi-block LP attack
# ---------------------------------------------------------------------------

@dataclass
class LpPolicy:
    """Randomized phase policy p(a|s) over sampled channel states."""
    states: list
    action_index: np.ndarray
    probs: np.ndarray
    moments_achieved: tuple
    rate: float
    bits: int
    state_probs: np.ndarray = None
    snr: np.ndarray = field(default=None, repr=False)
    rate_no_attack: float = math.nan
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def actions(self):
        step = TWO_PI / 2 ** self.bits
        return [PhaseVector(row * step, bits=self.bits) for row in self.action_index]


def enumerate_actions(n, b, canonical=True):
    """All discrete phase vectors as integer grid indices.

    With ``canonical`` the first element is fixed to phase 0, which removes
    the common-phase redundancy (gains are invariant to a global rotation).
    """
    if n * b > 16:
        raise InvalidArgument(f"action space 2^(N b) = 2^{n * b} is too large to enumerate")
    m = 2 ** b
    free = n - 1 if canonical else n
    idx = np.array(list(itertools.product(range(m), repeat=free)), dtype=np.int64).reshape(-1, free)
    if canonical:
        idx = np.hstack([np.zeros((idx.shape[0], 1), dtype=np.int64), idx])
    return idx


def state_action_snr(states, action_index, b, kappa_bar):
    """SNR(s, a) for every sampled state and action (n x m)."""
    step = TWO_PI / 2 ** b
    E = np.exp(1j * step * action_index)  # (m, N)
    Psi = np.stack([s.g * s.h for s in states], axis=1)  # (N, n)
    return kappa_bar * np.abs(E @ Psi).T ** 2


def _lp_moment_rows(snr, pi):
    n, m = snr.shape
    w1 = (pi[:, None] * snr).ravel()
    w2 = (pi[:, None] * snr ** 2).ravel()
    return w1, w2


def design_lp_attack(states, state_probs, b, moments, kappa_l, kappa_bar, zeta_bar=None,
                     canonical=True):
    """Rate-minimizing randomized policy matching two SNR moments.

    Minimizes sum_s pi(s) sum_a p(a|s) log2(1 + SNR(s, a)) subject to
    |E SNR - m1| <= zeta_1 and |E SNR^2 - m2| <= zeta_2, zeta_l =
    kappa_l * zeta_bar_l, with zeta_bar defaulting to (m1, m2).
    """
    if len(states) == 0:
        raise InvalidArgument("need at least one state")
    n = len(states)
    pi = np.full(n, 1.0 / n) if state_probs is None else np.asarray(state_probs, dtype=float)
    if pi.shape[0] != n or abs(pi.sum() - 1.0) > 1e-9 or np.any(pi < 0):
        raise InvalidArgument("state_probs must be a distribution over the states")
    N = states[0].n
    acts = enumerate_actions(N, b, canonical)
    snr = state_action_snr(states, acts, b, kappa_bar)
    m = acts.shape[0]
    m1, m2 = (moments.m1, moments.m2) if hasattr(moments, "m1") else moments
    zb = (m1, m2) if zeta_bar is None else zeta_bar
    z1, z2 = kappa_l[0] * zb[0], kappa_l[1] * zb[1]
    rate = np.log2(1.0 + snr)
    c = (pi[:, None] * rate).ravel()
    A_eq = sparse.kron(sparse.identity(n, format="csr"), np.ones((1, m)), format="csc")
    b_eq = np.ones(n)
    w1, w2 = _lp_moment_rows(snr, pi)
    rows, rhs = [], []
    # rows outside the achievable moment range are vacuous; dropping them
    # keeps huge right-hand sides out of the basis solves
    for w, mm, z, v in ((w1, m1, z1, snr), (w2, m2, z2, snr ** 2)):
        lo_m = float(np.sum(pi * v.min(axis=1)))
        hi_m = float(np.sum(pi * v.max(axis=1)))
        if mm + z < hi_m:
            rows.append(w)
            rhs.append(mm + z)
        if mm - z > lo_m:
            rows.append(-w)
            rhs.append(-(mm - z))
    A_ub = sparse.csc_matrix(np.vstack(rows)) if rows else None
    prob = LpProblem(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=np.array(rhs) if rows else None)
    sol = solve_lp(prob)
    best = np.argmax(snr, axis=1)
    r0 = float(np.sum(pi * rate[np.arange(n), best]))
    diag = {"lp_status": sol.status, "iterations": sol.iterations, "zeta": (z1, z2),
            "reference": (m1, m2), "actions": m}
    if sol.status != "optimal":
        diag["min_zeta_scale"] = _min_zeta_scale(snr, pi, m1, m2, z1, z2)
        return LpPolicy(list(states), acts, np.full((n, m), np.nan), (math.nan, math.nan),
                        math.nan, b, pi, snr, r0, False, diag)
    P = np.clip(sol.x.reshape(n, m), 0.0, None)
    P /= P.sum(axis=1, keepdims=True)
    # direct re-verification by summation over (state, action) pairs
    e1 = float(np.sum(pi[:, None] * P * snr))
    e2 = float(np.sum(pi[:, None] * P * snr ** 2))
    rate_att = float(np.sum(pi[:, None] * P * rate))
    # violations are relative to the moment scale; m2 is ~1e11 so absolute
    # residuals sit at the float resolution
    diag.update(cs_residual=sol.cs_residual, violation1=max(0.0, abs(e1 - m1) - z1) / m1,
                violation2=max(0.0, abs(e2 - m2) - z2) / m2)
    return LpPolicy(list(states), acts, P, (e1, e2), rate_att, b, pi, snr, r0, True, diag)


def _min_zeta_scale(snr, pi, m1, m2, z1, z2):
    """Smallest t with the LP feasible at tolerances t*zeta (diagnostic)."""
    n, m = snr.shape
    w1, w2 = _lp_moment_rows(snr, pi)
    nv = n * m
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    A_eq = sparse.hstack([sparse.kron(sparse.identity(n), np.ones((1, m))),
                          sparse.csc_matrix((n, 1))], format="csc")
    rows = []
    rhs = []
    for w, mm, z in ((w1, m1, z1), (w2, m2, z2)):
        if not math.isfinite(z):
            continue
        rows.append(np.append(w, -z))
        rhs.append(mm)
        rows.append(np.append(-w, -z))
        rhs.append(-mm)
    sol = solve_lp(LpProblem(c=c, A_eq=A_eq, b_eq=np.ones(n), A_ub=sparse.csc_matrix(np.vstack(rows)),
                             b_ub=np.array(rhs)))
    return float(sol.x[-1]) if sol.status == "optimal" else math.nan


# ---------------------------------------------------------------------------
# imperfect CSI
# ---------------------------------------------------------------------------

def design_csi_attack(psi_hat, nu_ks, r_l, sigma_e2, sigma_w2, n, trials=DEFAULT_TRIALS, rng=None,
                      nu_tilde=None):
    """Attack on the double-threshold test.

    Keeps the mean per-sample energy at most nu_ks * r_l:
    gain <= (nu_ks r_l - P N sigma_e^2 - sigma_w^2) / P, optionally with a
    lower bound ``nu_tilde`` on the gain.
    """
    p = psi_hat.p_tx
    bound = (nu_ks * r_l - p * n * sigma_e2 - sigma_w2) / p
    if bound <= 0:
        return AttackPlan(None, math.nan, 0.0 if nu_tilde is None else nu_tilde, math.nan, False,
                          "le", bound, {"reason": "mean-energy bound below the error and noise floor"})
    plan = design_phase_attack(psi_hat, nu_tilde, trials, rng, upper_nu=bound)
    if plan.feasible:
        plan.predicted = (sigma_w2 + p * (plan.achieved_metric + n * sigma_e2)) / r_l
    plan.diagnostics["mean_energy_bound"] = nu_ks * r_l
    return plan


# ---------------------------------------------------------------------------
# baseline and helpers
# ---------------------------------------------------------------------------

def random_phase_baseline(n, b=None, rng=None):
    """Uniformly random phases (continuous, or uniform over the 2^b grid)."""
    rng = np.random.default_rng() if rng is None else rng
    return random_phases(n, rng, b)


def estimate_sigma_min(psi, trials=DEFAULT_TRIALS, rng=None):
    """Smallest received variance found by the unconstrained phase attack."""
    plan = design_phase_attack(psi, 0.0, trials, rng)
    return psi.noise_var + psi.p_tx * plan.achieved_metric
