"""Bilinear (Q1) finite elements on the cut-cell domain.

Degrees of freedom live on the active nodes (internal + ghost).  On each
contributing cell (full or cut) the four tensor-product hat functions are
polynomials in local coordinates (xi, eta) in [0,1]^2, and every operator
entry is a polynomial integral over the cell's fluid polygon:

    mass       B[i,j]  = int v_i v_j            (biquadratic)
    stiffness  L[i,j]  = int grad v_i . grad v_j
    convection H[a]    = int a_h grad v_j . grad v_i   (a_h bilinear in V_h)
    bubble     BG[i,j] = int_{A-B chord} v_i v_j dl

All bulk integrals go through the divergence-theorem edge rule of
:mod:`mpnp.geometry`; the integrands stay within the rule's degree-5 edge
budget (taking d/dxi of a bilinear drops its xi-degree, so even the triple
products peak at x^2 y^3 / x^4 y^1 after the antiderivative).  On full
cells the closed-form unit-square tables are used directly; either way the
entries are exact up to roundoff.  Chord integrals use the same
Gauss-Legendre rule (quartic integrand on a straight segment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (CUT, FULL, GHOST, GL3_NODES, GL3_WEIGHTS, INTERNAL,
                       LevelSetDomain, polygon_monomial_integrals)

# local basis b_i(xi, eta) as coefficient arrays c[p, q] * xi^p * eta^q,
# corners ordered (0,0), (1,0), (1,1), (0,1)
_B = np.zeros((4, 2, 2))
_B[0, 0, 0], _B[0, 1, 0], _B[0, 0, 1], _B[0, 1, 1] = 1.0, -1.0, -1.0, 1.0
_B[1, 1, 0], _B[1, 1, 1] = 1.0, -1.0
_B[2, 1, 1] = 1.0
_B[3, 0, 1], _B[3, 1, 1] = 1.0, -1.0

_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


def _pmul(a, b):
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for p in range(a.shape[0]):
        for q in range(a.shape[1]):
            if a[p, q] != 0.0:
                out[p:p + b.shape[0], q:q + b.shape[1]] += a[p, q] * b
    return out


def _pdx(a):
    out = np.zeros((max(a.shape[0] - 1, 1), a.shape[1]))
    for p in range(1, a.shape[0]):
        out[p - 1] += p * a[p]
    return out


def _pdy(a):
    out = np.zeros((a.shape[0], max(a.shape[1] - 1, 1)))
    for q in range(1, a.shape[1]):
        out[:, q - 1] += q * a[:, q]
    return out


def _pad(a, shape):
    out = np.zeros(shape)
    out[:a.shape[0], :a.shape[1]] = a
    return out


def _build_integrand_tables():
    pm = np.zeros((4, 4, 4, 4))
    ps = np.zeros((4, 4, 4, 4))
    ph = np.zeros((4, 4, 4, 4, 4))
    for i in range(4):
        for j in range(4):
            pm[i, j] = _pad(_pmul(_B[i], _B[j]), (4, 4))
            ps[i, j] = _pad(_pmul(_pdx(_B[i]), _pdx(_B[j])), (4, 4)) \
                + _pad(_pmul(_pdy(_B[i]), _pdy(_B[j])), (4, 4))
            for k in range(4):
                ph[k, i, j] = _pad(
                    _pmul(_B[k], _pmul(_pdx(_B[i]), _pdx(_B[j]))), (4, 4)) \
                    + _pad(_pmul(_B[k], _pmul(_pdy(_B[i]), _pdy(_B[j]))), (4, 4))
    return pm, ps, ph


_PM, _PS, _PH = _build_integrand_tables()

# unit-square monomial integrals int xi^p eta^q = 1/((p+1)(q+1))
_I_FULL = 1.0 / np.outer(np.arange(1, 5), np.arange(1, 5)).astype(float)

MASS_FULL = np.einsum("ijpq,pq->ij", _PM, _I_FULL)      # times h^2
STIFF_FULL = np.einsum("ijpq,pq->ij", _PS, _I_FULL)     # h-free
CONV_FULL = np.einsum("kijpq,pq->kij", _PH, _I_FULL)    # h-free


def basis_eval(points):
    """Values of the four local basis functions at unit-cell points (m, 2)."""
    xi, eta = points[:, 0], points[:, 1]
    return np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta],
                    axis=1)


@dataclass
class Q1Space:
    domain: LevelSetDomain
    dof_index: np.ndarray     # (n+1, n+1), -1 for inactive nodes
    node_xy: np.ndarray       # (ndof, 2)
    cells_dofs: np.ndarray    # (n_active_cells, 4) global dofs per cell
    cells_kind: np.ndarray    # FULL or CUT per active cell
    cut_lookup: dict          # active-cell position -> CutCell

    @property
    def ndof(self) -> int:
        return self.node_xy.shape[0]

    def interpolate(self, fn) -> np.ndarray:
        return fn(self.node_xy[:, 0], self.node_xy[:, 1])


def build_space(domain: LevelSetDomain) -> Q1Space:
    active = domain.node_class != 2  # INTERNAL or GHOST
    dof_index = -np.ones(domain.phi.shape, dtype=int)
    ij = np.nonzero(active)
    dof_index[ij] = np.arange(ij[0].size)
    xs = domain.origin[0] + domain.h * ij[0]
    ys = domain.origin[1] + domain.h * ij[1]
    node_xy = np.column_stack([xs, ys])

    cells = []
    kinds = []
    cut_lookup = {}
    cut_by_pos = {(c.ix, c.iy): c for c in domain.cut_cells}
    for ix, iy in zip(*np.nonzero(domain.cell_kind != 2)):  # FULL or CUT
        dofs = [dof_index[ix + dx, iy + dy] for dx, dy in _CORNER_OFFSETS]
        if any(d < 0 for d in dofs):
            raise RuntimeError("contributing cell touches an inactive node")
        pos = len(cells)
        cells.append(dofs)
        kind = domain.cell_kind[ix, iy]
        kinds.append(kind)
        if kind == CUT:
            cut_lookup[pos] = cut_by_pos[(int(ix), int(iy))]
    return Q1Space(domain=domain, dof_index=dof_index, node_xy=node_xy,
                   cells_dofs=np.asarray(cells, dtype=int),
                   cells_kind=np.asarray(kinds, dtype=int),
                   cut_lookup=cut_lookup)


class OperatorSet2D:
    """Assembled mass/stiffness/boundary-mass plus the convection factory."""

    def __init__(self, space: Q1Space, b_mat, l_mat, bg_mat, conv_tensor):
        self.space = space
        self.b_mat = b_mat
        self.l_mat = l_mat
        self.bg_mat = bg_mat
        self._conv_tensor = conv_tensor  # (n_cells, 4, 4, 4)
        cd = space.cells_dofs
        self._conv_rows = np.repeat(cd, 4, axis=1).ravel()
        self._conv_cols = np.tile(cd, (1, 4)).ravel()
        self.ndof = space.ndof
        self.b_lumped = np.asarray(b_mat.sum(axis=1)).ravel()

    def convection(self, a_nodal: np.ndarray) -> sp.csr_matrix:
        """H[a] with the coefficient field a given by nodal values."""
        a_cells = a_nodal[self.space.cells_dofs]            # (nc, 4)
        vals = np.einsum("ckij,ck->cij", self._conv_tensor, a_cells)
        return sp.coo_matrix(
            (vals.ravel(), (self._conv_rows, self._conv_cols)),
            shape=(self.ndof, self.ndof)).tocsr()


def assemble_mass(space: Q1Space) -> sp.csr_matrix:
    return assemble_operators(space).b_mat


def assemble_stiffness(space: Q1Space) -> sp.csr_matrix:
    return assemble_operators(space).l_mat


def assemble_boundary_mass(space: Q1Space) -> sp.csr_matrix:
    return assemble_operators(space).bg_mat


def assemble_convection(space: Q1Space, a_nodal: np.ndarray) -> sp.csr_matrix:
    return assemble_operators(space).convection(a_nodal)


def assemble_operators(space: Q1Space) -> OperatorSet2D:
    """One pass over the contributing cells building every operator."""
    h = space.domain.h
    nc = space.cells_dofs.shape[0]
    ndof = space.ndof

    mass_loc = np.broadcast_to(h * h * MASS_FULL, (nc, 4, 4)).copy()
    stiff_loc = np.broadcast_to(STIFF_FULL, (nc, 4, 4)).copy()
    conv_loc = np.broadcast_to(CONV_FULL, (nc, 4, 4, 4)).copy()

    bg_rows, bg_cols, bg_vals = [], [], []
    for pos, cut in space.cut_lookup.items():
        table = polygon_monomial_integrals(cut.poly_unit)
        mass_loc[pos] = h * h * np.einsum("ijpq,pq->ij", _PM, table)
        stiff_loc[pos] = np.einsum("ijpq,pq->ij", _PS, table)
        conv_loc[pos] = np.einsum("kijpq,pq->kij", _PH, table)
        if cut.chord_unit is not None:
            a, b = cut.chord_unit
            seg_len = h * float(np.linalg.norm(b - a))
            pts = a[None, :] + GL3_NODES[:, None] * (b - a)[None, :]
            vals = basis_eval(pts)                           # (3, 4)
            loc = seg_len * np.einsum("s,si,sj->ij", GL3_WEIGHTS, vals, vals)
            dofs = space.cells_dofs[pos]
            bg_rows.append(np.repeat(dofs, 4))
            bg_cols.append(np.tile(dofs, 4))
            bg_vals.append(loc.ravel())

    cd = space.cells_dofs
    rows = np.repeat(cd, 4, axis=1).ravel()
    cols = np.tile(cd, (1, 4)).ravel()
    b_mat = sp.coo_matrix((mass_loc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    l_mat = sp.coo_matrix((stiff_loc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    if bg_rows:
        bg_mat = sp.coo_matrix(
            (np.concatenate(bg_vals),
             (np.concatenate(bg_rows), np.concatenate(bg_cols))),
            shape=(ndof, ndof)).tocsr()
    else:
        bg_mat = sp.csr_matrix((ndof, ndof))
    return OperatorSet2D(space, b_mat, l_mat, bg_mat, conv_loc)


def apply_zero_mean_constraint(a_mat: sp.spmatrix, rhs: np.ndarray,
                               weights: np.ndarray):
    """Border a (possibly singular) system with the mean constraint
    sum_i weights_i x_i = 0 via one Lagrange multiplier."""
    n = a_mat.shape[0]
    w = sp.csr_matrix(weights.reshape(1, n))
    aug = sp.bmat([[sp.csr_matrix(a_mat), w.T], [w, None]], format="csr")
    rhs_aug = np.concatenate([rhs, [0.0]])
    return aug, rhs_aug
