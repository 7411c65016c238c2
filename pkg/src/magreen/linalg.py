"""Sparse linear solvers shared by the solver, Green and capacity modules."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailureError

# below this size a diagonal preconditioner is as fast as building a hierarchy
AMG_THRESHOLD = 4000
# 2D systems up to this size are factorized directly in the nonsymmetric solver
DIRECT_2D_LIMIT = 250_000


def _amg(A):
    import pyamg

    # "local" weighting avoids the randomized spectral radius estimate, so the
    # hierarchy (and every downstream result) is bitwise reproducible
    return pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric", max_coarse=500,
                                             smooth=("jacobi", {"weighting": "local"}))


def solve_spd(A, b, rtol=1e-10, maxiter=2000):
    """Preconditioned CG for a symmetric positive definite system.

    Returns ``(x, stats)``.  The true relative residual is recomputed after
    the iteration and a :class:`SolverFailureError` is raised if it exceeds
    ``rtol`` by more than a factor of 10.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0, "preconditioner": "none"}
    if A.shape[0] < AMG_THRESHOLD:
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        kind = "jacobi"
    else:
        M = _amg(A).aspreconditioner(cycle="V")
        kind = "amg"
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=rtol, maxiter=maxiter, M=M, callback=cb)
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    if info != 0 and res > rtol or res > 10 * rtol:
        raise SolverFailureError(f"CG did not reach rtol={rtol:g} (residual {res:.3e}, info={info})", res)
    return x, {"iterations": count[0], "residual": res, "preconditioner": kind}


def solve_general(A, b, rtol=1e-10, dim=2):
    """Solve a nonsymmetric system; direct LU in 2D, AMG-preconditioned GMRES otherwise."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if dim == 2 and n <= DIRECT_2D_LIMIT or n < AMG_THRESHOLD:
        return spla.spsolve(A, b)
    if A.diagonal().mean() < 0:
        # elliptic operators assembled with negative diagonal: flip to make AMG applicable
        A, b = -A, -b
    sym = (A + A.T) * 0.5
    M = _amg(sym).aspreconditioner(cycle="V")
    x, info = spla.gmres(A, b, rtol=rtol, restart=50, maxiter=40, M=M)
    bnorm = float(np.linalg.norm(b)) or 1.0
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    if info != 0 and res > 1e-6:
        raise SolverFailureError(f"GMRES stagnated (residual {res:.3e})", res)
    return x
