"""Two-phase revised simplex for small-row, many-column linear programs.

Problems are given as

    minimize c^T x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi

and converted to standard form. The basis matrix is refactorized with a
dense LU each iteration (the row count is small); constraint matrices may
be scipy.sparse, which is used only for the pricing products A^T y and
column extraction. Pricing is Dantzig's rule, switching to Bland's rule
after a run of degenerate pivots to rule out cycling.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import linalg, sparse

from ..errors import InvalidArgument


@dataclass
class LpProblem:
    """Linear program data. ``bounds`` is None (all x >= 0), one (lo, hi)
    pair for every variable, or a list of pairs; None entries mean infinite."""
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray = None
    A_ub: object = None
    b_ub: np.ndarray = None
    bounds: object = None


@dataclass
class LpSolution:
    """Simplex result with duals.

    ``duals_eq`` and ``duals_ub`` are the multipliers y of the original rows
    (c - A^T y >= 0 on the reduced costs; ``duals_ub`` <= 0).
    """
    x: np.ndarray
    objective: float
    status: str
    duals_eq: np.ndarray = None
    duals_ub: np.ndarray = None
    iterations: int = 0
    cs_residual: float = math.nan
    dual_infeasibility: float = math.nan
    phase1_objective: float = math.nan
    message: str = ""


def _as_matrix(A, n, name):
    if A is None:
        return sparse.csc_matrix((0, n))
    if sparse.issparse(A):
        A = sparse.csc_matrix(A, dtype=float)
    else:
        A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != n:
        raise InvalidArgument(f"{name} has {A.shape[1]} columns, expected {n}")
    return A


def _vec(b, m, name):
    if m == 0:
        return np.zeros(0)
    if b is None:
        raise InvalidArgument(f"{name} missing")
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != m:
        raise InvalidArgument(f"{name} has length {b.shape[0]}, expected {m}")
    if not np.all(np.isfinite(b)):
        raise InvalidArgument(f"{name} must be finite")
    return b


def _bounds(bounds, n):
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    if bounds is None:
        return lo, hi
    if isinstance(bounds, tuple) and len(bounds) == 2 and not isinstance(bounds[0], (tuple, list)):
        pairs = [bounds] * n
    else:
        pairs = list(bounds)
        if len(pairs) != n:
            raise InvalidArgument("bounds length differs from number of variables")
    for j, (l, h) in enumerate(pairs):
        lo[j] = -np.inf if l is None else float(l)
        hi[j] = np.inf if h is None else float(h)
    if np.any(lo > hi):
        raise InvalidArgument("lower bound exceeds upper bound")
    return lo, hi


def _hstack(blocks, shape0):
    if any(sparse.issparse(b) for b in blocks):
        return sparse.hstack([sparse.csc_matrix(b) for b in blocks], format="csc")
    return np.hstack(blocks) if blocks else np.zeros((shape0, 0))


def _vstack(blocks):
    if any(sparse.issparse(b) for b in blocks):
        return sparse.vstack([sparse.csc_matrix(b) for b in blocks], format="csc")
    return np.vstack(blocks)


def _col(A, j):
    if sparse.issparse(A):
        return A[:, [j]].toarray().ravel()
    return A[:, j]


def _cols(A, idx):
    if sparse.issparse(A):
        return A[:, idx].toarray()
    return A[:, idx]


def _standardize(prob):
    """Return (A, b, c, c0, recover, rows) for min c^T z, A z = b, z >= 0."""
    c = np.asarray(prob.c, dtype=float).reshape(-1)
    n = c.shape[0]
    if not np.all(np.isfinite(c)):
        raise InvalidArgument("c must be finite")
    Ae = _as_matrix(prob.A_eq, n, "A_eq")
    Au = _as_matrix(prob.A_ub, n, "A_ub")
    be = _vec(prob.b_eq, Ae.shape[0], "b_eq")
    bu = _vec(prob.b_ub, Au.shape[0], "b_ub")
    lo, hi = _bounds(prob.bounds, n)

    simple = np.all(lo == 0) and np.all(np.isinf(hi))
    if simple:
        T = None
        t0 = np.zeros(n)
        nz = n
        extra_rows = None
    else:
        # x = t0 + T z
        rows, cols, vals = [], [], []
        t0 = np.zeros(n)
        nz = 0
        ub_rows = []
        for j in range(n):
            if np.isfinite(lo[j]):
                t0[j] = lo[j]
                rows.append(j); cols.append(nz); vals.append(1.0)
                if np.isfinite(hi[j]):
                    ub_rows.append((nz, hi[j] - lo[j]))
                nz += 1
            elif np.isfinite(hi[j]):
                t0[j] = hi[j]
                rows.append(j); cols.append(nz); vals.append(-1.0)
                nz += 1
            else:
                rows += [j, j]; cols += [nz, nz + 1]; vals += [1.0, -1.0]
                nz += 2
        T = sparse.csc_matrix((vals, (rows, cols)), shape=(n, nz))
        extra_rows = ub_rows
    if T is not None:
        be = be - (Ae @ t0 if Ae.shape[0] else 0)
        bu = bu - (Au @ t0 if Au.shape[0] else 0)
        Ae = Ae @ T
        Au = Au @ T
        cz = T.T @ c
        if extra_rows:
            r = sparse.csc_matrix((np.ones(len(extra_rows)), (np.arange(len(extra_rows)),
                                  [k for k, _ in extra_rows])), shape=(len(extra_rows), nz))
            Au = _vstack([Au, r]) if Au.shape[0] else r
            bu = np.concatenate([bu, [u for _, u in extra_rows]])
    else:
        cz = c.copy()
    if sparse.issparse(Ae) or sparse.issparse(Au):
        Ae = sparse.csc_matrix(Ae)
        Au = sparse.csc_matrix(Au)
    me, mu = Ae.shape[0], Au.shape[0]
    # slacks for inequality rows
    if mu:
        if sparse.issparse(Au):
            top = sparse.hstack([Ae, sparse.csc_matrix((me, mu))], format="csc")
            bot = sparse.hstack([Au, sparse.identity(mu, format="csc")], format="csc")
            A = sparse.vstack([top, bot], format="csc")
        else:
            A = np.block([[Ae, np.zeros((me, mu))], [Au, np.eye(mu)]])
    else:
        A = Ae
    b = np.concatenate([be, bu])
    cs = np.concatenate([cz, np.zeros(mu)])
    c0 = float(c @ t0)
    return A, b, cs, c0, T, t0, nz, me, mu


class _Simplex:
    def __init__(self, A, b, tol, max_iter):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def factor(self, basis):
        B = _cols(self.A, basis)
        return linalg.lu_factor(B, check_finite=False)

    def run(self, basis, cost, allowed):
        """Minimize cost over the current basis. Returns (status, basis)."""
        A, b, tol = self.A, self.b, self.tol
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                return "max-iter", basis
            lu = self.factor(basis)
            xb = linalg.lu_solve(lu, b, check_finite=False)
            xb[np.abs(xb) < 1e-13] = 0.0
            y = linalg.lu_solve(lu, cost[basis], trans=1, check_finite=False)
            d = cost - (A.T @ y)
            d[basis] = 0.0
            d[~allowed] = 0.0
            cand = np.flatnonzero(d < -tol)
            if cand.size == 0:
                return "optimal", basis
            j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            u = linalg.lu_solve(lu, _col(A, j), check_finite=False)
            pos = u > 1e-11
            if not np.any(pos):
                return "unbounded", basis
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(xb[pos], 0.0) / u[pos]
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
            if bland:
                r = int(ties[np.argmin(np.asarray(basis)[ties])])
            else:
                r = int(ties[np.argmax(u[ties])])
            basis = basis.copy()
            basis[r] = j
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 20:
                    bland = True
            else:
                degenerate = 0
                bland = False


def solve_lp(prob, tol=1e-9, max_iter=50000):
    """Solve an :class:`LpProblem` by the two-phase revised simplex method."""
    A, b, c, c0, T, t0, nz, me, mu = _standardize(prob)
    m, n = A.shape
    nvar = np.asarray(prob.c).shape[0]
    if m == 0:
        # only bounds: each variable sits at its cheapest bound
        if np.any(c < -tol):
            return LpSolution(x=np.full(nvar, np.nan), objective=-np.inf, status="unbounded")
        z = np.zeros(n)
        x = t0 + (T @ z if T is not None else z)
        return LpSolution(x=x, objective=float(np.asarray(prob.c) @ x), status="optimal",
                          duals_eq=np.zeros(0), duals_ub=np.zeros(0), cs_residual=0.0,
                          dual_infeasibility=0.0)
    # row equilibration
    if sparse.issparse(A):
        rs = np.asarray(abs(A).max(axis=1).todense()).ravel()
    else:
        rs = np.max(np.abs(A), axis=1)
    rs[rs == 0] = 1.0
    D = 1.0 / rs
    A = (sparse.diags(D) @ A).tocsc() if sparse.issparse(A) else A * D[:, None]
    b = b * D
    sign = np.where(b < 0, -1.0, 1.0)
    A = (sparse.diags(sign) @ A).tocsc() if sparse.issparse(A) else A * sign[:, None]
    b = b * sign
    # initial basis: slacks of rows that were not flipped, artificials elsewhere
    basis = np.empty(m, dtype=np.int64)
    art_rows = []
    for i in range(m):
        if i >= me and sign[i] > 0:
            basis[i] = nz + (i - me)
        else:
            art_rows.append(i)
    na = len(art_rows)
    if na:
        Art = sparse.csc_matrix((np.ones(na), (art_rows, np.arange(na))), shape=(m, na))
        Afull = sparse.hstack([sparse.csc_matrix(A), Art], format="csc") if sparse.issparse(A) \
            else np.hstack([A, Art.toarray()])
        for k, i in enumerate(art_rows):
            basis[i] = n + k
    else:
        Afull = A
    ntot = n + na
    sx = _Simplex(Afull, b, tol, max_iter)
    phase1 = 0.0
    if na:
        cost1 = np.zeros(ntot)
        cost1[n:] = 1.0
        status, basis = sx.run(basis, cost1, np.ones(ntot, dtype=bool))
        if status == "max-iter":
            return LpSolution(x=np.full(nvar, np.nan), objective=np.nan, status="max-iter",
                              iterations=sx.iterations)
        lu = sx.factor(basis)
        xb = linalg.lu_solve(lu, b, check_finite=False)
        phase1 = float(np.sum(xb[basis >= n]))
        if phase1 > 1e-7 * max(1.0, float(np.max(np.abs(b)))):
            return LpSolution(x=np.full(nvar, np.nan), objective=np.nan, status="infeasible",
                              iterations=sx.iterations, phase1_objective=phase1)
        # drive artificials out of the basis where possible
        for r in np.flatnonzero(basis >= n):
            lu = sx.factor(basis)
            e = np.zeros(m)
            e[r] = 1.0
            rho = linalg.lu_solve(lu, e, trans=1, check_finite=False)
            row = np.asarray(Afull[:, :n].T @ rho).ravel()
            inb = np.zeros(n, dtype=bool)
            inb[basis[basis < n]] = True
            cand = np.flatnonzero((np.abs(row) > 1e-9) & ~inb)
            if cand.size:
                basis = basis.copy()
                basis[r] = int(cand[np.argmax(np.abs(row[cand]))])
    allowed = np.zeros(ntot, dtype=bool)
    allowed[:n] = True
    cost2 = np.concatenate([c, np.zeros(na)])
    status, basis = sx.run(basis, cost2, allowed)
    lu = sx.factor(basis)
    xb = linalg.lu_solve(lu, b, check_finite=False)
    # one step of iterative refinement on the final basic solution
    B = _cols(Afull, basis)
    xb = xb + linalg.lu_solve(lu, b - B @ xb, check_finite=False)
    z = np.zeros(ntot)
    z[basis] = np.maximum(xb, 0.0)
    y = linalg.lu_solve(lu, cost2[basis], trans=1, check_finite=False)
    d = cost2 - Afull.T @ y
    d = np.asarray(d).ravel()[:n]
    zs = z[:n]
    cs = float(np.max(np.abs(zs * d))) if n else 0.0
    dinf = float(max(0.0, -np.min(d))) if n else 0.0
    # duals of the original rows: undo flips and equilibration
    yo = y * sign * D
    duals_eq = yo[:me]
    n_ub = 0 if prob.A_ub is None else np.asarray(prob.b_ub).reshape(-1).shape[0]
    duals_ub = yo[me:me + n_ub]
    zz = zs[:nz]
    x = t0 + (T @ zz if T is not None else zz)
    if status != "optimal":
        return LpSolution(x=x, objective=float(np.asarray(prob.c) @ x), status=status,
                          iterations=sx.iterations, phase1_objective=phase1)
    return LpSolution(x=x, objective=float(np.asarray(prob.c, dtype=float) @ x), status="optimal",
                      duals_eq=duals_eq, duals_ub=duals_ub, iterations=sx.iterations,
                      cs_residual=cs, dual_infeasibility=dinf, phase1_objective=phase1)
