"""Scalar root finding and adaptive quadrature.

Both are thin, checked wrappers over scipy routines: the package relies on
them for inversions and integrals but does not need its own implementations.
"""
import math

import numpy as np
from scipy import integrate, optimize

from ..errors import BracketError, InvalidArgument, NumericalFailure


def find_root(f, lo, hi, tol=1e-12, maxiter=500):
    """Root of a monotone function bracketed by ``[lo, hi]``.

    Uses Brent's method. Raises ``BracketError`` when ``f(lo)`` and ``f(hi)``
    have the same strict sign.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise InvalidArgument(f"invalid bracket [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise NumericalFailure(f"non-finite function values at bracket ends: {flo}, {fhi}")
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    # brentq's xtol is absolute; scale it so tiny brackets still resolve
    xtol = min(tol, 1e-12) * max(1.0, abs(lo), abs(hi)) * 1e-3
    root, info = optimize.brentq(f, lo, hi, xtol=max(xtol, 1e-300), rtol=4 * np.finfo(float).eps,
                                 maxiter=maxiter, full_output=True, disp=False)
    if not info.converged:
        raise NumericalFailure(f"root finding did not converge: {info.flag}")
    return float(root)


def quadrature(f, a, b, tol=1e-10, limit=200, points=None):
    """Adaptive integral of ``f`` over ``[a, b]``; ``b`` may be ``inf``.

    Semi-infinite ranges are mapped to a finite interval by QUADPACK's
    substitution. Raises ``NumericalFailure`` if the error estimate stays
    above ``tol`` or the routine reports a failure.
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    kw = dict(epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    if points is not None and math.isfinite(b):
        kw["points"] = points
    out = integrate.quad(f, a, b, **kw)
    val, err = out[0], out[1]
    ier = 0 if len(out) == 3 else 1
    if (ier and err > tol) or not math.isfinite(val) or err > 10 * tol:
        raise NumericalFailure(f"quadrature did not reach tol={tol}: estimate {val}, error {err}")
    return float(val)
