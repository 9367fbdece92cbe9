"""Numerical back ends: root finding and quadrature, unit-diagonal SDP, LP."""
from .lp import LpProblem, LpSolution, solve_lp
from .numeric import find_root, quadrature
from .sdp import (CandidateSet, Selection, SdpSolution, UnitDiagSdp, gaussian_randomize, select_best,
                  solve_unit_diag_sdp)

__all__ = ["LpProblem", "LpSolution", "solve_lp", "find_root", "quadrature", "CandidateSet",
           "Selection", "SdpSolution", "UnitDiagSdp", "gaussian_randomize", "select_best",
           "solve_unit_diag_sdp"]
