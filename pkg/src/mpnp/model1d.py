"""Block assemblies for the three 1D electrodiffusion models.

All variants evolve cell-centered concentrations coupled to an algebraic
Poisson constraint and are presented to the IMEX integrator as
B dq/dt = Theta(q) q + f(t).

delta-model (resolved wall layer), domain [-delta, 1]:
    dc+/dt = D+ (c+'' + (c+ (U+ + Phi)')')
    dc-/dt = D- (c-'' + (c- (U- - Phi)')')
    -eps Phi'' = c+/m+ - c-/m-
    zero-flux mirrors at both ends for c+-, homogeneous Neumann for Phi.
    Unknowns [c+ (n), c- (n), Phi (n), lam].

multiscale 0-model (wall collapsed to a trap condition), domain [0, 1]:
    bulk equations as above with U = 0; at x = 0 the anion carries a
    time-dependent trap condition and Phi a flux condition,
        (M/2)(dc-_0/dt + dc-_1/dt) = D- [(c-_1 - c-_0)/h
                                         - (c-_1 + c-_0)/2 (Phi_1 - Phi_0)/h]
        eps (Phi_1 - Phi_0)/h = M (c-_0 + c-_1)/2
    realized with one ghost cell for c- and Phi (3n + 2 physical unknowns).
    The cation mirrors its gradient (c+_0 = c+_1); unknowns
    [c+ (n), c-_0, c- (n), Phi_0, Phi (n), lam].

cq-model (sum/charge variables C = n+ + n-, Q = (n+ - n-)/eps):
    dC/dt      = Dt C'' + eps Dh Q'' + ((Dh C + eps Dt Q) Phi')'
    eps dQ/dt  = Dh C'' + eps Dt Q'' + ((Dt C + eps Dh Q) Phi')'
    -Phi''     = Q
    with Dt = (D+ + D-)/2, Dh = (D+ - D-)/2.  At x = 0 the trap pair is
    kept as {anion row (differential), cation-flux row (algebraic sum)}
    plus the Phi flux row scaled by eps,
        eps (Phi_1 - Phi_0)/h = (M/2) Cb - eps (M/2) Qb,   b = boundary mean.
    Ghost cells for C, Q, Phi; unknowns [C_0, C (n), Q_0, Q (n),
    Phi_0, Phi (n), lam].

With all-Neumann Phi boundaries the potential is defined up to a constant,
so every variant carries one Lagrange-multiplier row pinning sum(Phi) over
the cells (to the manufactured target when a forcing is installed).

Manufactured solutions for the accuracy studies are Gaussian pulses with a
pulsating amplitude and a standing-wave potential,

    c_pm(x,t)  = v0 (cos^2(t) G(x; x_pm_0) + sin^2(t) G(x; x_pm_1)),
    G(x; x0)   = exp(-(x - x0)^2 / sigma),
    Phi(x,t)   = cos(t) cos(2 pi x),

with x+_0 = 0.45, x-_0 = 0.5, x+_1 = 0.5, x-_1 = 0.55.  The forcing that
makes these exact is evaluated analytically, including the flux defects of
the mirror closures at the domain ends and the residuals of the boundary
rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid1d import Grid1D, mesh_peclet_check
from .imex import SemiLinearDAE
from .params import LJPotentialSpec, PhysicalParams, lj_profile_on_axis

VARIANTS = ("delta", "multiscale", "cq")

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# manufactured solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution1D:
    v0: float = 1e-4
    sigma: float = 0.01
    x_plus_0: float = 0.45
    x_plus_1: float = 0.5
    x_minus_0: float = 0.5
    x_minus_1: float = 0.55

    def _centers(self, species):
        if species == +1:
            return self.x_plus_0, self.x_plus_1
        return self.x_minus_0, self.x_minus_1

    def _bump(self, x, x0, order):
        g = np.exp(-((x - x0) ** 2) / self.sigma)
        if order == 0:
            return g
        if order == 1:
            return -2.0 * (x - x0) / self.sigma * g
        if order == 2:
            return (4.0 * (x - x0) ** 2 / self.sigma**2 - 2.0 / self.sigma) * g
        raise ValueError(order)

    def c(self, x, t, species, dx=0):
        x0, x1 = self._centers(species)
        w0, w1 = math.cos(t) ** 2, math.sin(t) ** 2
        return self.v0 * (w0 * self._bump(x, x0, dx) + w1 * self._bump(x, x1, dx))

    def c_t(self, x, t, species):
        x0, x1 = self._centers(species)
        return self.v0 * math.sin(2.0 * t) * (self._bump(x, x1, 0) - self._bump(x, x0, 0))

    def phi(self, x, t, dx=0):
        x = np.asarray(x, dtype=float)
        if dx == 0:
            return math.cos(t) * np.cos(TWO_PI * x)
        if dx == 1:
            return -TWO_PI * math.cos(t) * np.sin(TWO_PI * x)
        if dx == 2:
            return -TWO_PI**2 * math.cos(t) * np.cos(TWO_PI * x)
        raise ValueError(dx)

    # sum / scaled-charge combinations
    def cq(self, x, t, params, eps, dx=0):
        np_ = self.c(x, t, +1, dx) / params.m_plus
        nm_ = self.c(x, t, -1, dx) / params.m_minus
        return np_ + nm_, (np_ - nm_) / eps

    def cq_t(self, x, t, params, eps):
        np_ic = self.c_t(x, t, +1) / params.m_plus
        nm_t = self.c_t(x, t, -1) / params.m_minus
        return np_ic + nm_t, (np_ic - nm_t) / eps


# ---------------------------------------------------------------------------
# sparse helpers: conservative tridiagonal blocks with ghost/mirror closures
# ---------------------------------------------------------------------------

def _cols_ext(cols, left_ghost=None, right_ghost=None):
    """Extended column map [left, cells..., right]; -1 marks a mirror."""
    left = -1 if left_ghost is None else left_ghost
    right = -1 if right_ghost is None else right_ghost
    return np.concatenate([[left], cols, [right]]).astype(int)


def _ext_values(v, left=None, right=None):
    lv = v[0] if left is None else left
    rv = v[-1] if right is None else right
    return np.concatenate([[lv], v, [rv]])


def _weighted_lap_triplets(rows, cols_ext, ce, s2):
    """Rows of D ((c v')')/1 with c the sampled weight: acting on the field
    indexed by cols_ext; -1 columns fold the mirrored neighbor into the
    center, preserving the flux form."""
    jm, j0, jp = ce[:-2], ce[1:-1], ce[2:]
    sup = s2 * (jp + j0)
    dia = -s2 * (jp + 2.0 * j0 + jm)
    sub = s2 * (j0 + jm)
    cm, c0, cp = cols_ext[:-2], cols_ext[1:-1], cols_ext[2:]
    sup_cols = np.where(cp < 0, c0, cp)
    sub_cols = np.where(cm < 0, c0, cm)
    rr = np.concatenate([rows, rows, rows])
    cc = np.concatenate([sub_cols, c0, sup_cols])
    vv = np.concatenate([sub, dia, sup])
    return rr, cc, vv


def _potential_drift_triplets(rows, cols_ext, ue, s2):
    """Rows of D ((v U')') acting on the field itself (columns = cols_ext)."""
    jm, j0, jp = ue[:-2], ue[1:-1], ue[2:]
    sup = s2 * (jp - j0)
    dia = s2 * (jp - 2.0 * j0 + jm)
    sub = s2 * (jm - j0)
    cm, c0, cp = cols_ext[:-2], cols_ext[1:-1], cols_ext[2:]
    sup_cols = np.where(cp < 0, c0, cp)
    sub_cols = np.where(cm < 0, c0, cm)
    rr = np.concatenate([rows, rows, rows])
    cc = np.concatenate([sub_cols, c0, sup_cols])
    vv = np.concatenate([sub, dia, sup])
    return rr, cc, vv


class _TripletBag:
    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, rr, cc, vv):
        self.rows.append(np.asarray(rr, dtype=int))
        self.cols.append(np.asarray(cc, dtype=int))
        self.vals.append(np.asarray(vv, dtype=float))

    def add_entries(self, entries):
        rr, cc, vv = zip(*entries)
        self.add(np.array(rr), np.array(cc), np.array(vv))

    def arrays(self):
        return (np.concatenate(self.rows), np.concatenate(self.cols),
                np.concatenate(self.vals))

    def matrix(self, n):
        rr, cc, vv = self.arrays()
        return sp.coo_matrix((vv, (rr, cc)), shape=(n, n)).tocsr()


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------

@dataclass
class Model1D:
    variant: str
    grid: Grid1D
    params: PhysicalParams
    dae: SemiLinearDAE
    idx: dict
    lj: LJPotentialSpec | None = None
    manufactured: ManufacturedSolution1D | None = None

    @property
    def size(self):
        return self.dae.n

    def unpack(self, q):
        return {key: q[val] for key, val in self.idx.items()}

    def manufactured_state(self, t):
        """Exact solution sampled on the unknown layout (MMS runs)."""
        ms = self.manufactured
        if ms is None:
            raise ValueError("model was assembled without a manufactured solution")
        g = self.grid
        x = g.centers()
        q = np.zeros(self.size)
        if self.variant == "cq":
            eps = self.params.epsilon
            xg = g.x_left - 0.5 * g.h
            cc, qq = ms.cq(x, t, self.params, eps)
            c0, q0 = ms.cq(xg, t, self.params, eps)
            q[self.idx["c_field"]] = cc
            q[self.idx["q_field"]] = qq
            q[self.idx["c_ghost"]] = c0
            q[self.idx["q_ghost"]] = q0
            q[self.idx["phi"]] = ms.phi(x, t)
            q[self.idx["phi_ghost"]] = ms.phi(xg, t)
        else:
            q[self.idx["c_plus"]] = ms.c(x, t, +1)
            q[self.idx["c_minus"]] = ms.c(x, t, -1)
            q[self.idx["phi"]] = ms.phi(x, t)
            if self.variant == "multiscale":
                xg = g.x_left - 0.5 * g.h
                q[self.idx["c_minus_ghost"]] = ms.c(xg, t, -1)
                q[self.idx["phi_ghost"]] = ms.phi(xg, t)
        return q

    def error_fields(self, q, t):
        """Relative L2 error per field against the manufactured solution."""
        ms = self.manufactured
        x = self.grid.centers()
        out = {}
        if self.variant == "cq":
            eps = self.params.epsilon
            cc, qq = ms.cq(x, t, self.params, eps)
            pairs = {"c_field": cc, "q_field": qq, "phi": ms.phi(x, t)}
        else:
            pairs = {
                "c_plus": ms.c(x, t, +1),
                "c_minus": ms.c(x, t, -1),
                "phi": ms.phi(x, t),
            }
        for key, exact in pairs.items():
            num = q[self.idx[key]]
            out[key] = float(np.linalg.norm(num - exact) / np.linalg.norm(exact))
        return out


# ---------------------------------------------------------------------------
# delta-model
# ---------------------------------------------------------------------------

def _lj_samples(lj, x):
    """(U-, U-', U-'', U+, U+', U+'') sampled at positions x (zero if lj is None)."""
    if lj is None:
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z, z, z, z.copy(), z.copy(), z.copy()
    xi = 1.0 + np.asarray(x, dtype=float) / lj.delta
    xi = np.maximum(xi, 1e-6)
    inv = 1.0 / xi
    inv6 = inv**6
    inv7 = inv6 * inv
    inv8 = inv7 * inv
    inv12 = inv6 * inv6
    inv13 = inv12 * inv
    inv14 = inv13 * inv
    nu, d = lj.nu, lj.delta
    outside = xi > lj.big_l + 1.0
    um = np.where(outside, 0.0, nu * (inv12 - 2.0 * inv6))
    um_x = np.where(outside, 0.0, nu * (-12.0 * inv13 + 12.0 * inv7) / d)
    um_xx = np.where(outside, 0.0, nu * (156.0 * inv14 - 84.0 * inv8) / d**2)
    up = np.where(outside, 0.0, nu * inv12)
    up_x = np.where(outside, 0.0, -12.0 * nu * inv13 / d)
    up_xx = np.where(outside, 0.0, 156.0 * nu * inv14 / d**2)
    return um, um_x, um_xx, up, up_x, up_xx


def assemble_delta_model(params: PhysicalParams, grid: Grid1D,
                         lj: LJPotentialSpec | None = None,
                         manufactured: ManufacturedSolution1D | None = None) -> Model1D:
    """Resolved-layer model on [-delta, 1] (U = 0 throughout when lj is None)."""
    n = grid.n_cells
    h = grid.h
    x = grid.centers()
    eps = params.epsilon
    if lj is not None and not math.isclose(grid.x_left, -lj.delta, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError("grid must start at x = -delta for the resolved model")

    icp = np.arange(n)
    icm = n + np.arange(n)
    iph = 2 * n + np.arange(n)
    ilam = 3 * n
    size = 3 * n + 1

    um, um_x, um_xx, up, up_x, up_xx = _lj_samples(lj, x)
    if lj is not None:
        mesh_peclet_check(grid, um)

    # constant part: diffusion + potential drift + Poisson rows + pinning
    const = _TripletBag()
    s2p = params.d_plus / (2.0 * h**2)
    s2m = params.d_minus / (2.0 * h**2)
    s21 = 1.0 / (2.0 * h**2)
    ones = np.ones(n)
    cols_cp = _cols_ext(icp)
    cols_cm = _cols_ext(icm)
    cols_ph = _cols_ext(iph)
    const.add(*_weighted_lap_triplets(icp, cols_cp, _ext_values(ones), s2p))
    const.add(*_weighted_lap_triplets(icm, cols_cm, _ext_values(ones), s2m))
    const.add(*_potential_drift_triplets(icp, cols_cp, _ext_values(up), s2p))
    const.add(*_potential_drift_triplets(icm, cols_cm, _ext_values(um), s2m))
    # Poisson rows: 0 = -c+/m+ + c-/m- - eps*Lap(phi) + lam
    const.add(iph, icp, np.full(n, -1.0 / params.m_plus))
    const.add(iph, icm, np.full(n, 1.0 / params.m_minus))
    rr, cc, vv = _weighted_lap_triplets(iph, cols_ph, _ext_values(ones), s21)
    const.add(rr, cc, -eps * vv)
    const.add(iph, np.full(n, ilam), np.ones(n))
    const.add(np.full(n, ilam), iph, np.ones(n))
    rr0, cc0, vv0 = const.arrays()

    def theta(q):
        bag = _TripletBag()
        bag.add(rr0, cc0, vv0)
        cp = q[icp]
        cm = q[icm]
        bag.add(*_weighted_lap_triplets(icp, cols_ph, _ext_values(cp), s2p))
        rr, cc, vv = _weighted_lap_triplets(icm, cols_ph, _ext_values(cm), s2m)
        bag.add(rr, cc, -vv)
        return bag.matrix(size)

    mass = sp.lil_matrix((size, size))
    mass[icp, icp] = 1.0
    mass[icm, icm] = 1.0
    mass = mass.tocsr()
    mass.eliminate_zeros()

    forcing = None
    if manufactured is not None:
        forcing = _delta_forcing(grid, params, manufactured, (um, um_x, um_xx, up, up_x, up_xx),
                                 icp, icm, iph, ilam, size)

    dae = SemiLinearDAE(mass, theta, forcing, label="delta1d")
    idx = {"c_plus": icp, "c_minus": icm, "phi": iph, "lam": ilam}
    return Model1D("delta", grid, params, dae, idx, lj=lj, manufactured=manufactured)


def _delta_forcing(grid, params, ms, usamp, icp, icm, iph, ilam, size):
    um, um_x, um_xx, up, up_x, up_xx = usamp
    x = grid.centers()
    h = grid.h
    xl, xr = grid.x_left, grid.x_right
    eps = params.epsilon
    # boundary-face potentials for the flux defects (U' at the faces)
    uml_x, umr_x = _lj_face_slope(um_x)
    upl_x, upr_x = _lj_face_slope(up_x)

    def f(t):
        out = np.zeros(size)
        phix = ms.phi(x, t, 1)
        phixx = ms.phi(x, t, 2)
        for species, rows, d, ux, uxx, ufl, ufr in (
            (+1, icp, params.d_plus, up_x, up_xx, upl_x, upr_x),
            (-1, icm, params.d_minus, um_x, um_xx, uml_x, umr_x),
        ):
            sgn = 1.0 if species > 0 else -1.0
            c = ms.c(x, t, species)
            cx = ms.c(x, t, species, 1)
            cxx = ms.c(x, t, species, 2)
            drift = ux + sgn * phix
            drift_x = uxx + sgn * phixx
            out[rows] = ms.c_t(x, t, species) - d * (cxx + cx * drift + c * drift_x)
            # mirror closures pin the face fluxes to zero; cancel analytically
            flux_l = d * (ms.c(xl, t, species, 1)
                          + ms.c(xl, t, species) * (ufl + sgn * ms.phi(xl, t, 1)))
            flux_r = d * (ms.c(xr, t, species, 1)
                          + ms.c(xr, t, species) * (ufr + sgn * ms.phi(xr, t, 1)))
            out[rows[0]] -= flux_l / h
            out[rows[-1]] += flux_r / h
        cpx = ms.c(x, t, +1) / params.m_plus
        cmx = ms.c(x, t, -1) / params.m_minus
        out[iph] = cpx - cmx + eps * phixx
        out[iph[0]] += eps * ms.phi(xl, t, 1) / h
        out[iph[-1]] -= eps * ms.phi(xr, t, 1) / h
        out[ilam] = -np.sum(ms.phi(x, t))
        return out

    return f


def _lj_face_slope(u_x):
    # mirror closure also mirrors the sampled potential, so the implied
    # boundary-face slope is zero; the analytic flux defect uses U' = 0 there
    return 0.0, 0.0


# ---------------------------------------------------------------------------
# multiscale 0-model
# ---------------------------------------------------------------------------

def assemble_multiscale_model(params: PhysicalParams, grid: Grid1D,
                              manufactured: ManufacturedSolution1D | None = None) -> Model1D:
    """Trap-condition model on [0, 1] with ghost cells for c- and Phi."""
    if not math.isclose(grid.x_left, 0.0, abs_tol=1e-15):
        raise ValueError("multiscale model lives on [0, 1]")
    n = grid.n_cells
    h = grid.h
    eps = params.epsilon
    trap_m = params.trap_m

    icp = np.arange(n)
    icm0 = n
    icm = n + 1 + np.arange(n)
    iph0 = 2 * n + 1
    iph = 2 * n + 2 + np.arange(n)
    ilam = 3 * n + 2
    size = 3 * n + 3

    s2p = params.d_plus / (2.0 * h**2)
    s2m = params.d_minus / (2.0 * h**2)
    s21 = 1.0 / (2.0 * h**2)
    ones = np.ones(n)

    cols_cp = _cols_ext(icp)                      # mirrors both ends
    cols_cm = _cols_ext(icm, left_ghost=icm0)     # real ghost on the left
    cols_ph = _cols_ext(iph, left_ghost=iph0)

    const = _TripletBag()
    const.add(*_weighted_lap_triplets(icp, cols_cp, _ext_values(ones), s2p))
    const.add(*_weighted_lap_triplets(icm, cols_cm, _ext_values(ones), s2m))
    # Poisson cell rows: 0 = -c+/m+ + c-/m- - eps*Lap(phi) + lam
    const.add(iph, icp, np.full(n, -1.0 / params.m_plus))
    const.add(iph, icm, np.full(n, 1.0 / params.m_minus))
    rr, cc, vv = _weighted_lap_triplets(iph, cols_ph, _ext_values(ones), s21)
    const.add(rr, cc, -eps * vv)
    const.add(iph, np.full(n, ilam), np.ones(n))
    const.add(np.full(n, ilam), iph, np.ones(n))
    # trap row, constant part: D-(c-_1 - c-_0)/h
    const.add_entries([
        (icm0, icm[0], params.d_minus / h),
        (icm0, icm0, -params.d_minus / h),
    ])
    # Phi flux row: 0 = eps (Phi_1 - Phi_0)/h - (M/2)(c-_0 + c-_1)
    const.add_entries([
        (iph0, iph[0], eps / h),
        (iph0, iph0, -eps / h),
        (iph0, icm0, -0.5 * trap_m),
        (iph0, icm[0], -0.5 * trap_m),
    ])
    rr0, cc0, vv0 = const.arrays()

    def theta(q):
        bag = _TripletBag()
        bag.add(rr0, cc0, vv0)
        cp = q[icp]
        cm = q[icm]
        cm_ghost = q[icm0]
        bag.add(*_weighted_lap_triplets(icp, cols_ph, _ext_values(cp), s2p))
        rr, cc, vv = _weighted_lap_triplets(
            icm, cols_ph, _ext_values(cm, left=cm_ghost), s2m)
        bag.add(rr, cc, -vv)
        # trap row drift: - D- (c-_0 + c-_1)/2 * (Phi_1 - Phi_0)/h
        w = params.d_minus * 0.5 * (cm_ghost + cm[0]) / h
        bag.add_entries([(icm0, iph[0], -w), (icm0, iph0, w)])
        return bag.matrix(size)

    mass = sp.lil_matrix((size, size))
    mass[icp, icp] = 1.0
    mass[icm, icm] = 1.0
    mass[icm0, icm0] = 0.5 * trap_m
    mass[icm0, icm[0]] = 0.5 * trap_m
    mass = mass.tocsr()
    mass.eliminate_zeros()

    forcing = None
    if manufactured is not None:
        forcing = _multiscale_forcing(grid, params, manufactured,
                                      icp, icm0, icm, iph0, iph, ilam, size)

    dae = SemiLinearDAE(mass, theta, forcing, label="multiscale1d")
    idx = {"c_plus": icp, "c_minus": icm, "phi": iph,
           "c_minus_ghost": icm0, "phi_ghost": iph0, "lam": ilam}
    return Model1D("multiscale", grid, params, dae, idx, manufactured=manufactured)


def _multiscale_forcing(grid, params, ms, icp, icm0, icm, iph0, iph, ilam, size):
    x = grid.centers()
    h = grid.h
    xr = grid.x_right
    eps = params.epsilon
    trap_m = params.trap_m
    dp, dm = params.d_plus, params.d_minus

    def f(t):
        out = np.zeros(size)
        phix = ms.phi(x, t, 1)
        phixx = ms.phi(x, t, 2)
        for species, rows, d in ((+1, icp, dp), (-1, icm, dm)):
            sgn = 1.0 if species > 0 else -1.0
            c = ms.c(x, t, species)
            cx = ms.c(x, t, species, 1)
            cxx = ms.c(x, t, species, 2)
            out[rows] = (ms.c_t(x, t, species)
                         - d * (cxx + sgn * (cx * phix + c * phixx)))
            flux_r = d * (ms.c(xr, t, species, 1)
                          + sgn * ms.c(xr, t, species) * ms.phi(xr, t, 1))
            out[rows[-1]] += flux_r / h
        # cation mirror at x=0 kills only the diffusive part of the flux
        out[icp[0]] -= dp * ms.c(0.0, t, +1, 1) / h
        # trap row residual
        out[icm0] = (trap_m * ms.c_t(0.0, t, -1)
                     - dm * (ms.c(0.0, t, -1, 1)
                             - ms.c(0.0, t, -1) * ms.phi(0.0, t, 1)))
        # Poisson rows
        cpx = ms.c(x, t, +1) / params.m_plus
        cmx = ms.c(x, t, -1) / params.m_minus
        out[iph] = cpx - cmx + eps * phixx
        out[iph[-1]] -= eps * ms.phi(xr, t, 1) / h
        # Phi flux row residual (algebraic: 0 = theta q + f)
        out[iph0] = -(eps * ms.phi(0.0, t, 1) - trap_m * ms.c(0.0, t, -1))
        out[ilam] = -np.sum(ms.phi(x, t))
        return out

    return f


# ---------------------------------------------------------------------------
# cq-model
# ---------------------------------------------------------------------------

def assemble_cq_model_1d(params: PhysicalParams, grid: Grid1D,
                         manufactured: ManufacturedSolution1D | None = None) -> Model1D:
    """Sum/scaled-charge model on [0, 1]; the charge row is scaled by eps so
    every matrix entry stays bounded as eps -> 0."""
    if not math.isclose(grid.x_left, 0.0, abs_tol=1e-15):
        raise ValueError("cq model lives on [0, 1]")
    eps = params.epsilon
    if eps <= 0.0:
        raise ValueError("the 1D cq assembly needs eps > 0")
    n = grid.n_cells
    h = grid.h
    trap_m = params.trap_m
    dt_, dh_ = params.d_tilde, params.d_hat

    ic0 = 0
    ic = 1 + np.arange(n)
    iq0 = n + 1
    iq = n + 2 + np.arange(n)
    ip0 = 2 * n + 2
    ip = 2 * n + 3 + np.arange(n)
    ilam = 3 * n + 3
    size = 3 * n + 4

    s21 = 1.0 / (2.0 * h**2)
    ones = np.ones(n)
    cols_c = _cols_ext(ic, left_ghost=ic0)
    cols_q = _cols_ext(iq, left_ghost=iq0)
    cols_p = _cols_ext(ip, left_ghost=ip0)

    const = _TripletBag()
    # C rows: Dt*Lap(C) + eps*Dh*Lap(Q) (+ drift on Phi, state dependent)
    rr, cc, vv = _weighted_lap_triplets(ic, cols_c, _ext_values(ones), s21)
    const.add(rr, cc, dt_ * vv)
    rr, cc, vv = _weighted_lap_triplets(ic, cols_q, _ext_values(ones), s21)
    const.add(rr, cc, eps * dh_ * vv)
    # Q rows (eps-scaled): Dh*Lap(C) + eps*Dt*Lap(Q)
    rr, cc, vv = _weighted_lap_triplets(iq, cols_c, _ext_values(ones), s21)
    const.add(rr, cc, dh_ * vv)
    rr, cc, vv = _weighted_lap_triplets(iq, cols_q, _ext_values(ones), s21)
    const.add(rr, cc, eps * dt_ * vv)
    # Poisson rows: 0 = -Lap(Phi) - Q + lam
    rr, cc, vv = _weighted_lap_triplets(ip, cols_p, _ext_values(ones), s21)
    const.add(rr, cc, -vv)
    const.add(ip, iq, -np.ones(n))
    const.add(ip, np.full(n, ilam), np.ones(n))
    const.add(np.full(n, ilam), ip, np.ones(n))
    # anion trap row (differential), constant part
    const.add_entries([
        (ic0, ic[0], dt_ / h), (ic0, ic0, -dt_ / h),
        (ic0, iq[0], eps * dh_ / h), (ic0, iq0, -eps * dh_ / h),
    ])
    # cation flux row (algebraic sum of the boundary pair)
    dsum = dt_ + dh_
    const.add_entries([
        (iq0, ic[0], dsum / h), (iq0, ic0, -dsum / h),
        (iq0, iq[0], eps * dsum / h), (iq0, iq0, -eps * dsum / h),
    ])
    # Phi flux row: 0 = eps(Phi_1-Phi_0)/h - (M/4)(C_0+C_1) + eps(M/4)(Q_0+Q_1)
    const.add_entries([
        (ip0, ip[0], eps / h), (ip0, ip0, -eps / h),
        (ip0, ic0, -0.25 * trap_m), (ip0, ic[0], -0.25 * trap_m),
        (ip0, iq0, 0.25 * eps * trap_m), (ip0, iq[0], 0.25 * eps * trap_m),
    ])
    rr0, cc0, vv0 = const.arrays()

    def theta(q):
        bag = _TripletBag()
        bag.add(rr0, cc0, vv0)
        a = dh_ * q[np.r_[ic0, ic]] + eps * dt_ * q[np.r_[iq0, iq]]
        b = dt_ * q[np.r_[ic0, ic]] + eps * dh_ * q[np.r_[iq0, iq]]
        a_ext = np.concatenate([[a[0]], a[1:], [a[-1]]])
        b_ext = np.concatenate([[b[0]], b[1:], [b[-1]]])
        bag.add(*_weighted_lap_triplets(ic, cols_p, a_ext, s21))
        bag.add(*_weighted_lap_triplets(iq, cols_p, b_ext, s21))
        # boundary drift coefficients (means of ghost and first cell)
        a_b = 0.5 * (a[0] + a[1])
        b_b = 0.5 * (b[0] + b[1])
        bag.add_entries([
            (ic0, ip[0], a_b / h), (ic0, ip0, -a_b / h),
            (iq0, ip[0], (a_b + b_b) / h), (iq0, ip0, -(a_b + b_b) / h),
        ])
        return bag.matrix(size)

    mass = sp.lil_matrix((size, size))
    mass[ic, ic] = 1.0
    mass[iq, iq] = eps
    mass[ic0, ic0] = 0.25 * trap_m
    mass[ic0, ic[0]] = 0.25 * trap_m
    mass[ic0, iq0] = -0.25 * eps * trap_m
    mass[ic0, iq[0]] = -0.25 * eps * trap_m
    mass = mass.tocsr()
    mass.eliminate_zeros()

    explicit_rows = None
    explicit_cols = None
    if trap_m > 0.0:
        explicit_rows = np.r_[ic0, ic, iq]
        explicit_cols = np.r_[ic0, ic, iq]   # Q ghost stays lagged

    forcing = None
    if manufactured is not None:
        forcing = _cq_forcing(grid, params, manufactured,
                              ic0, ic, iq0, iq, ip0, ip, ilam, size)

    dae = SemiLinearDAE(mass, theta, forcing,
                        explicit_rows=explicit_rows, explicit_cols=explicit_cols,
                        label="cq1d")
    idx = {"c_field": ic, "q_field": iq, "phi": ip,
           "c_ghost": ic0, "q_ghost": iq0, "phi_ghost": ip0, "lam": ilam}
    return Model1D("cq", grid, params, dae, idx, manufactured=manufactured)


def _cq_forcing(grid, params, ms, ic0, ic, iq0, iq, ip0, ip, ilam, size):
    x = grid.centers()
    h = grid.h
    xr = grid.x_right
    eps = params.epsilon
    trap_m = params.trap_m
    dt_, dh_ = params.d_tilde, params.d_hat

    def f(t):
        out = np.zeros(size)
        cc, qq = ms.cq(x, t, params, eps)
        cx, qx = ms.cq(x, t, params, eps, 1)
        cxx, qxx = ms.cq(x, t, params, eps, 2)
        ct, qt = ms.cq_t(x, t, params, eps)
        phix = ms.phi(x, t, 1)
        phixx = ms.phi(x, t, 2)
        a = dh_ * cc + eps * dt_ * qq
        ax = dh_ * cx + eps * dt_ * qx
        b = dt_ * cc + eps * dh_ * qq
        bx = dt_ * cx + eps * dh_ * qx
        out[ic] = ct - (dt_ * cxx + eps * dh_ * qxx + ax * phix + a * phixx)
        out[iq] = eps * qt - (dh_ * cxx + eps * dt_ * qxx + bx * phix + b * phixx)
        out[ip] = ms.phi(x, t, 2) + qq

        # right-face flux defects (mirror closures)
        c_r, q_r = ms.cq(xr, t, params, eps)
        cx_r, qx_r = ms.cq(xr, t, params, eps, 1)
        phix_r = ms.phi(xr, t, 1)
        fc_r = dt_ * cx_r + eps * dh_ * qx_r + (dh_ * c_r + eps * dt_ * q_r) * phix_r
        fq_r = dh_ * cx_r + eps * dt_ * qx_r + (dt_ * c_r + eps * dh_ * q_r) * phix_r
        out[ic[-1]] += fc_r / h
        out[iq[-1]] += fq_r / h
        out[ip[-1]] -= phix_r / h

        # boundary rows at x = 0
        c_0, q_0 = ms.cq(0.0, t, params, eps)
        cx_0, qx_0 = ms.cq(0.0, t, params, eps, 1)
        ct_0, qt_0 = ms.cq_t(0.0, t, params, eps)
        phix_0 = ms.phi(0.0, t, 1)
        fa = dt_ * cx_0 + eps * dh_ * qx_0 + (dh_ * c_0 + eps * dt_ * q_0) * phix_0
        fb = dh_ * cx_0 + eps * dt_ * qx_0 + (dt_ * c_0 + eps * dh_ * q_0) * phix_0
        out[ic0] = 0.5 * trap_m * ct_0 - 0.5 * eps * trap_m * qt_0 - fa
        out[iq0] = -(fa + fb)
        out[ip0] = -(eps * phix_0 - 0.5 * trap_m * c_0 + 0.5 * eps * trap_m * q_0)
        out[ilam] = -np.sum(ms.phi(x, t))
        return out

    return f


# ---------------------------------------------------------------------------
# spec-level entry point for the forcing alone
# ---------------------------------------------------------------------------

def manufactured_forcing(variant: str, t: float, grid: Grid1D,
                         params: PhysicalParams,
                         ms: ManufacturedSolution1D | None = None,
                         lj: LJPotentialSpec | None = None) -> np.ndarray:
    """Forcing vector that makes the manufactured solution exact at time t."""
    ms = ms if ms is not None else ManufacturedSolution1D(v0=params.v0)
    if variant == "delta":
        model = assemble_delta_model(params, grid, lj=lj, manufactured=ms)
    elif variant == "multiscale":
        model = assemble_multiscale_model(params, grid, manufactured=ms)
    elif variant == "cq":
        model = assemble_cq_model_1d(params, grid, manufactured=ms)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return model.dae.forcing(t)
