"""Dirichlet problem ``det D^2 u = f`` in a convex domain with ``u = 0`` on the boundary.

The discrete Hessian uses Shortley-Weller second differences along the axes
(exact boundary fractions, zero boundary data) and one-quadrant mixed
differences averaged over every quadrant whose three extra nodes lie in the
domain.  Both are exact on quadratics, so ``f = const`` on an ellipsoid is
reproduced to roundoff.  The nonlinear system is solved by damped Newton.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, PreconditionError, SolverFailureError
from .expr import Expression
from .grid import ConvexDomain, Grid, build_grid, central_gradient
from .linalg import solve_general

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-8
CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class DensitySpec:
    """Right-hand side ``f`` with its declared bounds ``lam <= f <= Lam``."""

    fn: Callable
    lam: float
    Lam: float
    source: str = ""

    @classmethod
    def from_expression(cls, text: str, lam: Optional[float] = None, Lam: Optional[float] = None):
        expr = Expression(text)
        if lam is None or Lam is None:
            try:
                c = float(expr.evaluate({}))
            except Exception:
                raise ParameterError(f"density {text!r} is not constant; give lam and Lam") from None
            lam = c if lam is None else lam
            Lam = c if Lam is None else Lam
        return cls(expr.on_points, float(lam), float(Lam), text)

    @classmethod
    def constant(cls, c: float):
        return cls.from_expression(repr(float(c)), c, c)

    def sample(self, grid: Grid):
        """Values of ``f`` on the grid (NaN outside the domain), validated against the bounds."""
        if not 0 < self.lam <= self.Lam:
            raise PreconditionError(f"need 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        try:
            vals = np.asarray(self.fn(grid.points, h=grid.h), dtype=float)
        except TypeError:
            vals = np.asarray(self.fn(grid.points), dtype=float)
        vals = np.broadcast_to(vals, grid.shape).copy()
        inside = vals[grid.inside]
        lo_tol = self.lam * (1 - CLAMP_SLACK) - CLAMP_SLACK
        hi_tol = self.Lam * (1 + CLAMP_SLACK) + CLAMP_SLACK
        if not np.all(np.isfinite(inside)) or inside.min() < lo_tol or inside.max() > hi_tol:
            raise PreconditionError(
                f"density {self.source!r} leaves [{self.lam}, {self.Lam}]: "
                f"range [{np.nanmin(inside):.6g}, {np.nanmax(inside):.6g}]"
            )
        vals = np.clip(vals, self.lam, self.Lam)
        vals[~grid.inside] = np.nan
        return vals


@dataclass(frozen=True, eq=False)
class PotentialState:
    """Convex potential with its derivative fields.

    ``u`` is NaN outside the domain.  ``hess`` and ``cof`` have shape
    ``grid.shape + (dim, dim)`` and are exactly symmetric.
    """

    grid: Grid
    u: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    cof: np.ndarray
    f: np.ndarray
    density: Optional[DensitySpec]
    residual: float = 0.0
    newton_iters: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.grid.dim

    @property
    def min_hessian_eig(self):
        m = self.grid.inside
        return float(np.linalg.eigvalsh(self.hess[m]).min())

    def laplacian(self):
        return np.trace(self.hess, axis1=-2, axis2=-1)

    def sidecar(self):
        return {
            "residual": self.residual,
            "newton_iters": self.newton_iters,
            "min_hessian_eig": self.min_hessian_eig,
            **self.stats,
        }


def cofactor_matrix(H):
    """Adjugate of a stack of symmetric 2x2 or 3x3 matrices."""
    H = np.asarray(H, dtype=float)
    d = H.shape[-1]
    out = np.empty_like(H)
    if d == 2:
        out[..., 0, 0] = H[..., 1, 1]
        out[..., 1, 1] = H[..., 0, 0]
        out[..., 0, 1] = -H[..., 0, 1]
        out[..., 1, 0] = -H[..., 1, 0]
        return out
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = H[..., r[0], c[0]] * H[..., r[1], c[1]] - H[..., r[0], c[1]] * H[..., r[1], c[0]]
            out[..., i, j] = (-1) ** (i + j) * minor
    return out


def compute_cofactor(state: PotentialState):
    """Cofactor field ``det(D^2u) (D^2u)^{-1}`` of a state."""
    return cofactor_matrix(state.hess)


def cofactor_divergence(state: PotentialState):
    """Row divergences ``sum_j D_j U^{ij}`` by centered differences (NaN near the boundary)."""
    g = state.grid
    out = np.zeros(g.shape + (g.dim,))
    for i in range(g.dim):
        for j in range(g.dim):
            out[..., i] += central_gradient(g, state.cof[..., i, j])[..., j]
    return out


def _det(H):
    if H.shape[-1] == 2:
        return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] ** 2
    return np.linalg.det(H)


class _Stencils:
    """Linear maps from interior unknowns to Hessian entries and gradients."""

    def __init__(self, grid: Grid):
        self.grid = grid
        inside = grid.inside
        self.n = int(inside.sum())
        idx = np.full(grid.shape, -1, dtype=np.int64)
        idx[inside] = np.arange(self.n)
        self.idx = idx
        fr = grid.axis_fractions
        h = grid.h
        d = grid.dim
        rows = np.arange(self.n)
        self.D = {}
        self.G = []
        self.empty_cross = 0
        for k in range(d):
            a = fr[k, 0][inside]
            b = fr[k, 1][inside]
            nf = np.roll(idx, -1, axis=k)[inside]
            nb = np.roll(idx, 1, axis=k)[inside]
            # second derivative, Shortley-Weller
            r, c, v = [rows], [rows], [-2.0 / (a * b * h * h)]
            for nbr, cf in ((nf, 2.0 / (a * (a + b) * h * h)), (nb, 2.0 / (b * (a + b) * h * h))):
                ok = nbr >= 0
                r.append(rows[ok])
                c.append(nbr[ok])
                v.append(cf[ok])
            self.D[(k, k)] = self._mat(r, c, v)
            # first derivative, three-point nonuniform
            den = a * b * (a + b) * h
            r, c, v = [rows], [rows], [(a * a - b * b) / den]
            for nbr, cf in ((nf, b * b / den), (nb, -a * a / den)):
                ok = nbr >= 0
                r.append(rows[ok])
                c.append(nbr[ok])
                v.append(cf[ok])
            self.G.append(self._mat(r, c, v))
        for i, j in combinations(range(d), 2):
            quads = []
            for si in (1, -1):
                for sj in (1, -1):
                    ni = np.roll(idx, -si, axis=i)
                    nj = np.roll(idx, -sj, axis=j)
                    nij = np.roll(ni, -sj, axis=j)
                    ni, nj, nij = ni[inside], nj[inside], nij[inside]
                    quads.append((si * sj, ni, nj, nij, (ni >= 0) & (nj >= 0) & (nij >= 0)))
            count = sum(q[4].astype(int) for q in quads)
            self.empty_cross += int(np.sum(count == 0))
            w = np.where(count > 0, 1.0 / np.maximum(count, 1), 0.0) / (h * h)
            r, c, v = [], [], []
            for s, ni, nj, nij, ok in quads:
                ws = s * w[ok]
                ro = rows[ok]
                r += [ro, ro, ro, ro]
                c += [ro, ni[ok], nj[ok], nij[ok]]
                v += [ws, -ws, -ws, ws]
            self.D[(i, j)] = self._mat(r, c, v)

    def _mat(self, r, c, v):
        return sp.csr_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(self.n, self.n)
        )

    def hessian(self, x):
        d = self.grid.dim
        H = np.empty((self.n, d, d))
        for (i, j), M in self.D.items():
            H[:, i, j] = H[:, j, i] = M @ x
        return H

    def laplacian(self):
        return sum(self.D[(k, k)] for k in range(self.grid.dim))

    def jacobian(self, cof):
        J = None
        for (i, j), M in self.D.items():
            w = cof[:, i, j] if i == j else 2.0 * cof[:, i, j]
            term = sp.diags(w) @ M
            J = term if J is None else J + term
        return J.tocsc()


def _project(H, floor=EIG_FLOOR):
    w, V = np.linalg.eigh(H)
    if w.min() >= floor:
        return H
    w = np.maximum(w, floor)
    return np.einsum("nij,nj,nkj->nik", V, w, V)


def solve_monge_ampere(domain: ConvexDomain, density: DensitySpec, h: float, tol: float = 1e-8,
                       max_iter: int = 200, max_halvings: int = 30) -> PotentialState:
    """Damped Newton solve of ``det D^2 u = f``, ``u = 0`` on the boundary.

    Parameters
    ----------
    domain, density, h
        Problem data and grid spacing.
    tol : float
        Target max-norm residual of ``det D^2u - f`` over interior nodes (>= 1e-10).

    Raises
    ------
    SolverFailureError
        If the residual is still above ``tol`` after ``max_iter`` steps.
    """
    if tol < 1e-10:
        raise ParameterError(f"tol must be >= 1e-10, got {tol:g}")
    t0 = time.perf_counter()
    grid = build_grid(domain, h)
    fvals = density.sample(grid)
    st = _Stencils(grid)
    fi = fvals[grid.inside]
    n = grid.dim
    # convex start: Delta u0 = n f^{1/n}
    x = solve_general(st.laplacian(), n * fi ** (1.0 / n), dim=n)

    def resid(x):
        H = st.hessian(x)
        return H, _det(H) - fi

    H, F = resid(x)
    r = float(np.abs(F).max())
    it = 0
    halvings_total = 0
    while r > tol:
        if it >= max_iter:
            raise SolverFailureError(f"Newton did not converge in {max_iter} steps (residual {r:.3e})", r)
        it += 1
        J = st.jacobian(cofactor_matrix(_project(H)))
        dx = solve_general(J, -F, rtol=1e-10, dim=n)
        step = 1.0
        for _ in range(max_halvings + 1):
            xn = x + step * dx
            Hn, Fn = resid(xn)
            rn = float(np.abs(Fn).max())
            if rn < r:
                break
            step *= 0.5
            halvings_total += 1
        else:
            raise SolverFailureError(f"line search failed at Newton step {it} (residual {r:.3e})", r)
        x, H, F, r = xn, Hn, Fn, rn
        log.debug("newton %d: residual %.3e step %.3g", it, r, step)

    u = np.full(grid.shape, np.nan)
    u[grid.inside] = x
    hess = np.full(grid.shape + (n, n), np.nan)
    hess[grid.inside] = H
    grad = np.full(grid.shape + (n,), np.nan)
    for k, G in enumerate(st.G):
        grad[grid.inside, k] = G @ x
    stats = {
        "h": h,
        "unknowns": st.n,
        "empty_cross_stencils": st.empty_cross,
        "line_search_halvings": halvings_total,
        "seconds": time.perf_counter() - t0,
    }
    return PotentialState(grid, u, grad, hess, cofactor_matrix(hess), fvals, density, r, it, stats)


def potential_from_function(domain: ConvexDomain, h: float, fn: Callable, label: str = "") -> PotentialState:
    """State for a closed-form convex ``u`` (no boundary condition imposed).

    ``fn`` maps points of shape ``(..., dim)`` to values.  Derivatives are
    centered differences of ``fn`` sampled on the whole bounding box, so they
    are exact for quadratics.
    """
    grid = build_grid(domain, h)
    vals = np.asarray(fn(grid.points), dtype=float)
    n = grid.dim
    pts = grid.points
    grad = np.empty(grid.shape + (n,))
    hess = np.empty(grid.shape + (n, n))
    eye = np.eye(n) * h
    for i in range(n):
        grad[..., i] = (fn(pts + eye[i]) - fn(pts - eye[i])) / (2 * h)
        hess[..., i, i] = (fn(pts + eye[i]) - 2 * vals + fn(pts - eye[i])) / (h * h)
        for j in range(i + 1, n):
            e = eye[i] + eye[j]
            e2 = eye[i] - eye[j]
            hess[..., i, j] = hess[..., j, i] = (
                fn(pts + e) + fn(pts - e) - fn(pts + e2) - fn(pts - e2)
            ) / (4 * h * h)
    out = ~grid.inside
    u = np.where(out, np.nan, vals)
    grad[out] = np.nan
    hess[out] = np.nan
    with np.errstate(invalid="ignore"):
        f = _det(hess)
    dens = None
    if np.any(grid.inside):
        fi = f[grid.inside]
        dens = DensitySpec(lambda p, h=0.0: np.nan, float(fi.min()), float(fi.max()), label or "closed form")
    return PotentialState(grid, u, grad, hess, cofactor_matrix(hess), f, dens, 0.0, 0, {"h": h, "closed_form": label})


def sobolev_energy(state: PotentialState, eps: float, region=None) -> float:
    """Integral of ``(Delta u)^{1+eps}`` over ``region`` (default: the whole domain)."""
    from .grid import integrate_region

    if eps < 0:
        raise ParameterError(f"eps must be >= 0, got {eps}")
    if region is None:
        region = state.grid.inside
    lap = np.maximum(state.laplacian(), 0.0)
    return integrate_region(state.grid, lap ** (1.0 + eps), region)
