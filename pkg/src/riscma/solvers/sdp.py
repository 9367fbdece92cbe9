"""Unit-diagonal semidefinite relaxation and Gaussian randomization.

The relaxed problem is

    minimize Tr(L S)  s.t.  S >= 0, diag(S) = 1, lo <= Tr(L S) <= hi

with L = F F^H low rank. The unconstrained minimum is found with a low-rank
factorization S = V V^H (rows of V on the unit sphere) and Riemannian
gradient steps on the product of spheres; a dual certificate gives a
rigorous lower bound on it. Since the bounded quantity is the objective
itself, the constrained optimum is max(f_min, lo), reached by mixing the
minimizer with a maximizer.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import linalg

from ..errors import InvalidArgument, NumericalFailure

_TINY = 1e-300


@dataclass(frozen=True)
class UnitDiagSdp:
    """Bordered unit-diagonal SDP instance.

    Attributes
    ----------
    L : ndarray, shape (n, n)
        Hermitian cost matrix (n = N + 1 for the bordered construction).
    nu : float
        Lower bound on Tr(L S); ``-inf`` when absent.
    upper : float
        Upper bound on Tr(L S); ``inf`` when absent.
    factor : ndarray, shape (n, r), optional
        F with L = F F^H. Used for fast products when available.
    max_trace : float, optional
        Exact maximum of Tr(L S) over the feasible set if known.
    """
    L: np.ndarray
    nu: float = -math.inf
    upper: float = math.inf
    factor: np.ndarray = field(default=None, repr=False)
    max_trace: float = None

    def __post_init__(self):
        L = np.asarray(self.L, dtype=complex)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InvalidArgument("L must be square")
        scale = max(np.max(np.abs(L)), _TINY)
        if np.max(np.abs(L - L.conj().T)) > 1e-12 * scale:
            raise InvalidArgument("L must be Hermitian")
        object.__setattr__(self, "L", 0.5 * (L + L.conj().T))
        nu = -math.inf if self.nu is None else float(self.nu)
        up = math.inf if self.upper is None else float(self.upper)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "upper", up)

    @property
    def n(self):
        return self.L.shape[0]

    @classmethod
    def from_composite(cls, psi, nu=None, upper=None):
        """Build the bordered problem for gain(v) = ||psi^T v||^2.

        ``psi`` is a CompositeChannel or an (N,) / (N, M) array. With
        s = [v; t], Tr(L s s^H) equals the gain of v.
        """
        P = getattr(psi, "matrix", None)
        if P is None:
            P = np.asarray(psi, dtype=complex)
            P = P[:, None] if P.ndim == 1 else P
        n = P.shape[0] + 1
        F = np.zeros((n, P.shape[1]), dtype=complex)
        F[:-1] = np.conj(P)
        mx = float(np.sum(np.abs(P[:, 0])) ** 2) if P.shape[1] == 1 else None
        return cls(L=F @ F.conj().T, nu=nu, upper=upper, factor=F, max_trace=mx)

    def apply(self, V):
        if self.factor is not None:
            return self.factor @ (self.factor.conj().T @ V)
        return self.L @ V

    def trace(self, V):
        if self.factor is not None:
            return float(np.sum(np.abs(self.factor.conj().T @ V) ** 2))
        return float(np.real(np.vdot(V, self.L @ V)))


@dataclass
class SdpSolution:
    """Result of :func:`solve_unit_diag_sdp`.

    ``objective`` is Tr(L S) at the returned S; ``lower_bound`` is the value
    of the dual certificate and bounds the relaxation optimum from below.
    """
    S: np.ndarray
    objective: float
    max_constraint_violation: float
    status: str
    V: np.ndarray = field(default=None, repr=False)
    lower_bound: float = -math.inf
    gap: float = math.inf
    multipliers: tuple = (0.0, 0.0)
    iterations: int = 0
    method: str = "bm"
    achievable: tuple = None


# ---------------------------------------------------------------------------
# Burer-Monteiro with augmented Lagrangian
# ---------------------------------------------------------------------------

def _normalize_rows(V):
    nrm = np.linalg.norm(V, axis=1, keepdims=True)
    return V / np.maximum(nrm, _TINY)


def _project(V, G):
    # tangent projection on the product of unit spheres (row-wise)
    return G - np.real(np.sum(np.conj(V) * G, axis=1, keepdims=True)) * V


def _rank_cap(n):
    return min(n, int(math.ceil(math.sqrt(2 * n))) + 1)


class _Penalty:
    """Augmented Lagrangian terms for lo <= f <= hi (scaled units)."""

    def __init__(self, lo, hi, mu):
        self.lo, self.hi, self.mu = lo, hi, mu
        self.l1 = 0.0
        self.l2 = 0.0

    def value(self, f):
        out = f
        mu = self.mu
        if self.lo > -math.inf:
            out += (max(0.0, self.l1 + mu * (self.lo - f)) ** 2 - self.l1 ** 2) / (2 * mu)
        if self.hi < math.inf:
            out += (max(0.0, self.l2 + mu * (f - self.hi)) ** 2 - self.l2 ** 2) / (2 * mu)
        return out

    def weight(self, f):
        w = 1.0
        if self.lo > -math.inf:
            w -= max(0.0, self.l1 + self.mu * (self.lo - f))
        if self.hi < math.inf:
            w += max(0.0, self.l2 + self.mu * (f - self.hi))
        return w

    def update(self, f):
        if self.lo > -math.inf:
            self.l1 = max(0.0, self.l1 + self.mu * (self.lo - f))
        if self.hi < math.inf:
            self.l2 = max(0.0, self.l2 + self.mu * (f - self.hi))

    def violation(self, f):
        return max(0.0, self.lo - f, f - self.hi)


def _inner(prob, V, pen, scale, sign, tol, maxit):
    """Riemannian gradient descent with BB steps and Armijo backtracking."""
    def evaluate(V):
        LV = prob.apply(V) / scale
        f = float(np.real(np.vdot(V, LV)))
        return f, LV

    f, LV = evaluate(V)
    phi = pen.value(sign * f)
    w = pen.weight(sign * f) * sign
    R = _project(V, 2.0 * w * LV)
    alpha = 0.5 / max(abs(w), 1e-3)
    V_prev = R_prev = None
    it = 0
    for it in range(1, maxit + 1):
        gn2 = float(np.real(np.vdot(R, R)))
        if math.sqrt(gn2) <= tol:
            break
        if V_prev is not None:
            s = V - V_prev
            y = R - R_prev
            sy = abs(float(np.real(np.vdot(s, y))))
            ss = float(np.real(np.vdot(s, s)))
            if sy > 0 and ss > 0:
                alpha = min(max(ss / sy, 1e-8), 1e8)
        accepted = False
        for _ in range(60):
            Vn = _normalize_rows(V - alpha * R)
            fn, LVn = evaluate(Vn)
            phin = pen.value(sign * fn)
            if phin <= phi - 1e-4 * alpha * gn2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        V_prev, R_prev = V, R
        V, f, LV, phi = Vn, fn, LVn, phin
        w = pen.weight(sign * f) * sign
        R = _project(V, 2.0 * w * LV)
    return V, f, it


def _bm(prob, lo, hi, scale, rng, tol, sign=1.0, max_outer=60, maxit=3000, V0=None):
    """Augmented Lagrangian outer loop. ``sign=-1`` maximizes instead."""
    n = prob.n
    r = _rank_cap(n)
    if V0 is None:
        Z = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
        V = _normalize_rows(Z)
    else:
        V = _normalize_rows(V0)
    pen = _Penalty(lo, hi, mu=10.0)
    total = 0
    prev_viol = math.inf
    f = prob.trace(V) / scale
    converged = False
    for _ in range(max_outer):
        V, f, it = _inner(prob, V, pen, scale, sign, tol, maxit)
        total += it
        viol = pen.violation(sign * f)
        pen.update(sign * f)
        LV = prob.apply(V) / scale
        stat = float(np.linalg.norm(_project(V, 2.0 * (1.0 - pen.l1 + pen.l2) * sign * LV)))
        if viol <= tol and stat <= 10 * tol:
            converged = True
            break
        if viol > 0.25 * prev_viol:
            pen.mu = min(pen.mu * 10.0, 1e12)
        prev_viol = viol
        if max(pen.l1, pen.l2) > 1e8:
            break
    return V, f, pen, total, converged


def _dual_certificate(prob, V, l1, l2, lo, hi):
    """Certified lower bound from multipliers (scaled units not needed)."""
    wl = 1.0 - l1 + l2
    LV = prob.apply(V)
    y = wl * np.real(np.sum(LV * np.conj(V), axis=1))
    Z = wl * prob.L - np.diag(y)
    emin = float(linalg.eigvalsh(0.5 * (Z + Z.conj().T), subset_by_index=[0, 0])[0])
    if emin < 0:
        y = y + emin
    bound = float(np.sum(y))
    if l1 > 0 and lo > -math.inf:
        bound += l1 * lo
    if l2 > 0 and hi < math.inf:
        bound -= l2 * hi
    return bound


def _certificate_from_y(prob, y, l1, l2):
    # any y gives a valid bound once shifted so that w L - diag(y) is PSD
    wl = 1.0 - l1 + l2
    Z = wl * prob.L - np.diag(y)
    emin = float(linalg.eigvalsh(0.5 * (Z + Z.conj().T), subset_by_index=[0, 0])[0])
    bound = float(np.sum(y)) + prob.n * min(emin, 0.0)
    if l1 > 0 and prob.nu > -math.inf:
        bound += l1 * prob.nu
    if l2 > 0 and prob.upper < math.inf:
        bound -= l2 * prob.upper
    return bound


def _max_factor(prob, rng, tol):
    """Factor of a maximizer of Tr(L S) over unit-diagonal S."""
    if prob.factor is not None and prob.factor.shape[1] == 1:
        f = prob.factor[:, 0]
        # s_k = f_k/|f_k| maximizes |f^H s|^2; zero rows are free
        s = np.where(np.abs(f) > 0, f / np.maximum(np.abs(f), _TINY), 1.0)
        return s[:, None].astype(complex), float(np.sum(np.abs(f)) ** 2)
    scale = max(float(np.real(np.trace(prob.L))), _TINY)
    V, f, _, _, _ = _bm(prob, -math.inf, math.inf, scale, rng, tol, sign=-1.0)
    return V, prob.trace(V)


def _min_factor(prob, rng, tol):
    scale = max(float(np.real(np.trace(prob.L))), _TINY)
    V, f, _, _, _ = _bm(prob, -math.inf, math.inf, scale, rng, tol)
    return V, prob.trace(V)


def _finish(prob, V, l1, l2, method, iters, tol, scale, lower_bound=None):
    S = V @ V.conj().T
    obj = prob.trace(V)
    viol = max(0.0, prob.nu - obj, obj - prob.upper)
    lb = _dual_certificate(prob, V, l1, l2, prob.nu, prob.upper) if lower_bound is None else lower_bound
    gap = obj - lb
    ok = viol <= max(tol * scale, 1e-12) and gap <= tol * max(scale, 1e-300)
    return SdpSolution(S=S, objective=obj, max_constraint_violation=viol,
                       status="optimal" if ok else "max-iter", V=V, lower_bound=lb,
                       gap=gap, multipliers=(l1, l2), iterations=iters, method=method)


def solve_unit_diag_sdp(prob, tol=1e-7, rng=None, method="auto"):
    """Solve the unit-diagonal relaxation.

    Parameters
    ----------
    prob : UnitDiagSdp
    tol : float
        Relative tolerance on constraint violation and duality gap.
    rng : numpy Generator, optional
        Source of the random initial factor (default: fixed seed).
    method : {"auto", "bm", "dense"}
        ``bm`` is the low-rank solver; ``dense`` uses an interior-point
        solver through cvxpy; ``auto`` runs ``bm`` and retries with ``dense``
        when it fails and n <= 30.
    """
    if method not in ("auto", "bm", "dense"):
        raise InvalidArgument(f"unknown method {method!r}")
    rng = np.random.default_rng(12345) if rng is None else rng
    lo, hi = prob.nu, prob.upper
    if lo > hi:
        return _infeasible(prob, "empty interval")
    # maximum of the relaxation: exact for rank-one L
    if prob.max_trace is not None:
        fmax = prob.max_trace
    else:
        fmax = float(np.sum(np.abs(prob.L)))
    scale = max(fmax, _TINY)
    if lo > fmax * (1 + 1e-12):
        return _infeasible(prob, "lower bound exceeds the largest achievable trace")
    if method == "dense":
        return _solve_dense(prob, tol)
    # The objective and the bounded quantity are the same trace f = Tr(L S),
    # so the relaxation optimum is max(f_min, lo): solve the unconstrained
    # minimum, and if it falls below lo blend with a maximizer to land on lo.
    V, f, pen, iters, conv = _bm(prob, -math.inf, math.inf, scale, rng, tol * 1e-2)
    fmin = prob.trace(V)
    if lo <= fmin:
        sol = _finish(prob, V, 0.0, 0.0, "bm", iters, tol, scale)
        if fmin > hi:
            if sol.lower_bound > hi:
                return _infeasible(prob, "upper bound is below the smallest achievable trace")
            sol.status = "max-iter"
    else:
        Vmax, fm = _max_factor(prob, rng, tol * 1e-2)
        if fm < lo:
            if prob.max_trace is not None or fm < lo * (1 - tol):
                return _infeasible(prob, "lower bound exceeds the largest achievable trace")
            fm = lo
        th = (fm - lo) / (fm - fmin) if fm > fmin else 0.0
        V = np.hstack([math.sqrt(th) * V, math.sqrt(1 - th) * Vmax])
        # every feasible S has Tr(L S) >= lo, and this S attains it
        sol = _finish(prob, V, 1.0, 0.0, "bm", iters, tol, scale, lower_bound=lo)
    if sol.status != "optimal" and method == "auto" and prob.n <= 30:
        dense = _solve_dense(prob, tol)
        if dense.status == "optimal":
            return dense
    return sol


def _infeasible(prob, reason):
    n = prob.n
    return SdpSolution(S=np.eye(n, dtype=complex), objective=math.nan,
                       max_constraint_violation=math.inf, status="infeasible",
                       method=reason)


def _solve_dense(prob, tol):
    """Interior-point solve through cvxpy (reference path for small n)."""
    import cvxpy as cp
    n = prob.n
    S = cp.Variable((n, n), hermitian=True)
    obj = cp.real(cp.trace(prob.L @ S))
    diag_c = cp.real(cp.diag(S)) == 1
    cons = [S >> 0, diag_c]
    lo_c = hi_c = None
    if prob.nu > -math.inf:
        lo_c = obj >= prob.nu
        cons.append(lo_c)
    if prob.upper < math.inf:
        hi_c = obj <= prob.upper
        cons.append(hi_c)
    pr = cp.Problem(cp.Minimize(obj), cons)
    try:
        pr.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        pr.solve(solver=cp.SCS, eps=1e-9)
    if pr.status in ("infeasible", "infeasible_inaccurate"):
        return _infeasible(prob, "dense solver reports infeasible")
    if S.value is None:
        raise NumericalFailure(f"dense SDP solve failed: {pr.status}")
    Sv = 0.5 * (S.value + S.value.conj().T)
    w, Q = linalg.eigh(Sv)
    V = Q * np.sqrt(np.clip(w, 0, None))
    V = _normalize_rows(V)
    l1 = float(lo_c.dual_value) if lo_c is not None else 0.0
    l2 = float(hi_c.dual_value) if hi_c is not None else 0.0
    scale = max(prob.max_trace or float(np.sum(np.abs(prob.L))), _TINY)
    l1, l2 = max(l1, 0.0), max(l2, 0.0)
    lb = _dual_certificate(prob, V, l1, l2, prob.nu, prob.upper)
    if diag_c.dual_value is not None:
        # the solver's own multipliers usually certify more tightly
        y = np.real(np.asarray(diag_c.dual_value, dtype=complex)).reshape(-1)
        lb = max(lb, _certificate_from_y(prob, y, l1, l2))
    return _finish(prob, V, l1, l2, "dense", 0, max(tol, 1e-6), scale, lower_bound=lb)


# ---------------------------------------------------------------------------
# Gaussian randomization
# ---------------------------------------------------------------------------

@dataclass
class CandidateSet:
    """Randomized unit-modulus candidates recovered from a relaxed solution."""
    phases: np.ndarray  # (trials, N) radians in [0, 2pi)

    @property
    def unit(self):
        return np.exp(1j * self.phases)

    def __len__(self):
        return self.phases.shape[0]


def gaussian_randomize(sol, trials, rng):
    """Draw candidates s = Q sqrt(Sigma) f with f ~ CN(0, I).

    The phases are recovered as arg(s_k / s_{N+1}) for k = 1..N.
    """
    if sol.status != "optimal":
        raise InvalidArgument(f"cannot randomize a solution with status {sol.status!r}")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    S = 0.5 * (sol.S + sol.S.conj().T)
    w, Q = linalg.eigh(S)
    if w[0] < -1e-6 * max(1.0, w[-1]):
        raise NumericalFailure(f"relaxed solution is not PSD (min eigenvalue {w[0]:.3g})")
    # drop eigenvalues at round-off level so rank-deficient S randomizes exactly
    w = np.where(w > 1e-12 * max(w[-1], _TINY), w, 0.0)
    root = Q * np.sqrt(w)
    n = S.shape[0]
    f = (rng.standard_normal((n, trials)) + 1j * rng.standard_normal((n, trials))) / math.sqrt(2)
    s = root @ f
    ref = s[-1]
    ref = np.where(np.abs(ref) > 0, ref, 1.0)
    ph = np.angle(s[:-1] * np.conj(ref)[None, :]).T
    return CandidateSet(np.mod(ph, 2 * math.pi))


@dataclass
class Selection:
    """Best feasible candidate and the achievable range seen."""
    index: int
    gains: np.ndarray
    feasible: np.ndarray
    achievable: tuple

    @property
    def found(self):
        return self.index is not None


def select_best(candidates, gain_fn, lo=-math.inf, hi=math.inf, rtol=1e-9):
    """Lowest-gain feasible candidate; ties go to the lowest index.

    ``gain_fn`` maps a (trials, N) array of unit vectors to gains.
    Feasibility is checked with a relative slack ``rtol`` of the largest gain.
    """
    g = np.asarray(gain_fn(candidates.unit), dtype=float)
    slack = rtol * max(float(np.max(np.abs(g))), 1.0 if not np.isfinite(lo) else abs(lo), _TINY)
    feas = np.ones(g.shape, dtype=bool)
    if lo > -math.inf:
        feas &= g >= lo - slack
    if hi < math.inf:
        feas &= g <= hi + slack
    rng_ = (float(np.min(g)), float(np.max(g)))
    if not np.any(feas):
        return Selection(None, g, feas, rng_)
    masked = np.where(feas, g, np.inf)
    return Selection(int(np.argmin(masked)), g, feas, rng_)
