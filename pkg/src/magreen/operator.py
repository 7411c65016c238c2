"""Symmetric bond-graph discretization of ``v -> -(U^{ij} v)_{ij}``.

The cofactor field is averaged over grid cells.  In each cell the matrix is
split into axis bonds with weight ``U^{kk} - sum_{j != k} |U^{kj}|`` and
diagonal bonds ``e_i +- e_j`` with weight ``max(+-U^{ij}, 0)``; for any
constant ``U`` these weights reproduce ``tr(U D^2 v)`` exactly on quadratics.
A bond's weight is the mean over the cells it touches.  Negative axis
weights (strong anisotropy) are clamped to zero and counted, which keeps the
matrix an M-matrix.

Dirichlet data are imposed on the continuous boundary: a bond from a free
node ``p`` that leaves the free set after a fraction ``theta`` of its length
contributes ``w / theta`` to the diagonal and ``w / theta * value`` to the
right-hand side.  This keeps the matrix symmetric and is second order on
smooth boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, DomainError
from .grid import Region, erode
from .solver import PotentialState

PD_TOL = 1e-10


def shift(arr, offset, fill=np.nan):
    """``out[p] = arr[p + offset]`` with ``fill`` where ``p + offset`` leaves the array."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def bond_offsets(dim):
    """Half set of bond directions: the axes and the face diagonals ``e_i +- e_j``."""
    out = []
    for k in range(dim):
        e = [0] * dim
        e[k] = 1
        out.append(tuple(e))
    for i, j in combinations(range(dim), 2):
        for s in (1, -1):
            e = [0] * dim
            e[i], e[j] = 1, s
            out.append(tuple(e))
    return out


@dataclass(frozen=True)
class DirichletPiece:
    """Non-free nodes beyond the boundary of ``region`` carrying Dirichlet ``value``.

    ``value`` is a number or a function of boundary points (shape ``(m, dim)``).

    ``inward`` is True when free nodes lie outside ``region`` (an obstacle
    such as the compact set of a capacity problem).
    """

    nodes: np.ndarray
    region: Region
    value: object
    inward: bool = False


@dataclass(eq=False)
class DirichletSystem:
    """Matrix over free nodes with the data needed to evaluate the energy.

    ``A`` includes the ``1/h^2`` scaling; the bond lists are unscaled.
    """

    A: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    index: np.ndarray
    ff: tuple
    cut: tuple
    labels: tuple = ()

    def extend(self, x, fill=0.0):
        out = np.full(self.free.shape, fill)
        out[self.free] = x
        return out

    def energy(self, field, h, dim):
        """Discrete ``int U grad(phi).grad(phi)`` of a field whose boundary values are the pieces' values."""
        return float(sum(self.energy_breakdown(field, h, dim).values()))

    def energy_breakdown(self, field, h, dim):
        """Energy split by bond family (``"+0"`` is the x axis, ``"++"`` a diagonal, ...)."""
        flat = np.asarray(field, dtype=float).ravel()
        p, q, w, fam = self.ff
        bond = w * (flat[q] - flat[p]) ** 2
        cp, coef, val, cfam = self.cut
        cut = coef * (val - flat[cp]) ** 2
        scale = h ** (dim - 2)
        out = {}
        for k, lab in enumerate(self.labels):
            out[lab] = float(np.sum(bond[fam == k]) + np.sum(cut[cfam == k])) * scale
        return out

    def boundary_flux(self, field, h, dim, value=None):
        """Flux ``sum coef (value - phi_p)`` through the cut bonds (optionally one value only)."""
        flat = np.asarray(field, dtype=float).ravel()
        cp, coef, val, _ = self.cut
        sel = np.ones(len(cp), bool) if value is None else val == value
        return float(np.sum(coef[sel] * (val[sel] - flat[cp[sel]]))) * h ** (dim - 2)


class LinearizedOperator:
    """Bond weights of the linearized operator on a region ``V`` of the domain."""

    def __init__(self, state: PotentialState, V: Region):
        self.state = state
        self.grid = state.grid
        self.V = V
        self.dim = self.grid.dim
        self.h = self.grid.h
        self.lumped_cells = 0
        self._build()

    def _build(self):
        g = self.grid
        d = self.dim
        U = self.state.cof
        # cell average over the 2^d corners, cell indexed by its lower corner
        cell = np.zeros(U.shape)
        for corner in product((0, 1), repeat=d):
            cell += shift(U, corner)
        cell /= 2**d
        cw = {}
        axis_w = []
        for k in range(d):
            a = cell[..., k, k] - sum(np.abs(cell[..., k, j]) for j in range(d) if j != k)
            axis_w.append(a)
        near = self._support_cells()
        neg = near & np.any(np.stack([a < -PD_TOL * np.abs(cell[..., k, k]) for k, a in enumerate(axis_w)]), axis=0)
        self.lumped_cells = int(neg.sum())
        for k, e in enumerate(bond_offsets(d)[:d]):
            cw[e] = np.maximum(axis_w[k], 0.0)
        for e in bond_offsets(d)[d:]:
            i, j = [m for m in range(d) if e[m] != 0]
            cw[e] = np.maximum(e[j] * cell[..., i, j], 0.0)
        self.weights = {}
        for e, wc in cw.items():
            # bond p -> p+e touches cells with lower corner p + min(e, 0) - delta
            free_axes = [m for m in range(d) if e[m] == 0]
            acc = np.zeros(g.shape)
            count = 0
            for delta in product((0, 1), repeat=len(free_axes)):
                off = [min(em, 0) for em in e]
                for m, dm in zip(free_axes, delta):
                    off[m] -= dm
                acc += shift(wc, tuple(off))
                count += 1
            self.weights[e] = acc / count

    def _support_cells(self):
        m = self.V.mask
        out = m.copy()
        for corner in product((0, 1), repeat=self.dim):
            out |= shift(m.astype(float), tuple(-c for c in corner), fill=0.0) > 0
        return out

    def system(self, free, pieces) -> DirichletSystem:
        """Assemble the Dirichlet problem with unknowns on ``free`` and data from ``pieces``."""
        g = self.grid
        d = self.dim
        free = np.asarray(free, dtype=bool)
        n = int(free.sum())
        idx = np.full(g.shape, -1, dtype=np.int64)
        idx[free] = np.arange(n)
        flat_all = np.arange(free.size).reshape(g.shape)
        pts = g.points.reshape(-1, d)
        diag = np.zeros(n)
        rhs = np.zeros(n)
        rows, cols, vals = [], [], []
        ffp, ffq, ffw, fff = [], [], [], []
        cp, ccoef, cval, cfam = [], [], [], []
        for fam, (e, W) in enumerate(self.weights.items()):
            for sgn in (1, -1):
                off = tuple(sgn * c for c in e)
                Wp = W if sgn == 1 else shift(W, off)
                q_free = shift(free.astype(float), off, fill=0.0) > 0
                q_flat = shift(flat_all.astype(float), off, fill=-1).astype(np.int64)
                bad = free & ~np.isfinite(Wp)
                if np.any(bad):
                    node = tuple(int(v) for v in np.argwhere(bad)[0])
                    raise AssemblyError(f"cofactor undefined next to free node {node}")
                if sgn == 1:
                    pair = free & q_free & (Wp > 0)
                    pi, qi, w = idx[pair], shift(idx.astype(float), off, fill=-1)[pair].astype(np.int64), Wp[pair]
                    rows += [pi, qi]
                    cols += [qi, pi]
                    vals += [-w, -w]
                    np.add.at(diag, pi, w)
                    np.add.at(diag, qi, w)
                    ffp.append(flat_all[pair])
                    ffq.append(q_flat[pair])
                    ffw.append(w)
                    fff.append(np.full(len(w), fam))
                cut = free & ~q_free & (Wp > 0)
                if not np.any(cut):
                    continue
                p_flat = flat_all[cut]
                qf = q_flat[cut]
                w = Wp[cut]
                assigned = np.zeros(len(qf), bool)
                for piece in pieces:
                    on = ~assigned & piece.nodes.ravel()[qf]
                    if not np.any(on):
                        continue
                    lev = piece.region.level.ravel()
                    theta = piece.region.fraction(pts[p_flat[on]], pts[qf[on]], lev[p_flat[on]], lev[qf[on]], piece.inward)
                    coef = w[on] / theta
                    pi = idx.ravel()[p_flat[on]]
                    if callable(piece.value):
                        xp, xq = pts[p_flat[on]], pts[qf[on]]
                        value = np.asarray(piece.value(xp + theta[:, None] * (xq - xp)), dtype=float)
                        value = np.broadcast_to(value, coef.shape)
                    else:
                        value = np.full(len(coef), float(piece.value))
                    np.add.at(diag, pi, coef)
                    np.add.at(rhs, pi, coef * value)
                    cp.append(p_flat[on])
                    ccoef.append(coef)
                    cval.append(value)
                    cfam.append(np.full(len(coef), fam))
                    assigned |= on
                if not np.all(assigned):
                    node = np.unravel_index(qf[~assigned][0], g.shape)
                    raise DomainError(f"bond leaves the free set at {tuple(int(v) for v in node)} with no boundary data")
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        A = A / g.h**2

        def cat(lst, dtype=float):
            return np.concatenate(lst) if lst else np.array([], dtype=dtype)

        ff = (cat(ffp, np.int64), cat(ffq, np.int64), cat(ffw), cat(fff, np.int64))
        cut = (cat(cp, np.int64), cat(ccoef), cat(cval), cat(cfam, np.int64))
        labels = tuple("".join("+" if c > 0 else "-" if c < 0 else "0" for c in e) for e in self.weights)
        return DirichletSystem(A.tocsr(), rhs / g.h**2, free, idx, ff, cut, labels)

    def dirichlet_V(self, free=None) -> DirichletSystem:
        """System with zero data on the boundary of ``V``."""
        free = self.V.mask if free is None else free
        return self.system(free, [DirichletPiece(~self.V.mask, self.V, 0.0)])

    def matrix(self):
        """Matrix of the zero-data problem on ``V`` (unknowns ordered as ``V.mask`` nodes)."""
        return self.dirichlet_V().A


def assemble_operator(state: PotentialState, V) -> LinearizedOperator:
    """Linearized operator of ``state`` on the region ``V``.

    ``V`` may be a :class:`Region`, a ``ConvexDomain`` or anything accepted by
    :func:`as_region`.

    Raises
    ------
    DomainError
        If ``V`` is not contained in the interior of the domain.
    AssemblyError
        If the cofactor matrix fails to be positive definite at a node of ``V``.
    """
    V = as_region(state.grid, V)
    g = state.grid
    if np.any(V.mask & ~erode(g.inside, 1)):
        raise DomainError(f"region {V.name!r} reaches the boundary layer of the domain")
    U = state.cof[V.mask]
    if not np.all(np.isfinite(U)):
        raise AssemblyError("cofactor field undefined on part of V")
    eig = np.linalg.eigvalsh(U)
    scale = np.abs(eig).max()
    bad = eig[:, 0] <= PD_TOL * scale
    if np.any(bad):
        node = tuple(int(v) for v in np.argwhere(V.mask)[np.argmax(bad)])
        raise AssemblyError(f"cofactor matrix not positive definite at node {node} (min eig {eig[bad, 0].min():.3e})")
    return LinearizedOperator(state, V)


def as_region(grid, V) -> Region:
    from .grid import ConvexDomain, parse_domain

    if isinstance(V, Region):
        return V
    if isinstance(V, str):
        V = parse_domain(V)
    if isinstance(V, ConvexDomain):
        return Region.from_domain(grid, V)
    if hasattr(V, "region"):
        return V.region()
    raise TypeError(f"cannot interpret {type(V).__name__} as a region")
