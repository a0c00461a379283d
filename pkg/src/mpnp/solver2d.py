"""2D sum/charge system on the cut-cell domain, for any Debye parameter
eps >= 0.

State vector layout: q = [C (ndof), Q (ndof), Phi (ndof), lam] with C the
sum variable n+ + n-, Q the scaled charge (n+ - n-)/eps, Phi the zero-mean
potential and lam its Lagrange multiplier.

General path (eps > 0), with Dt/Dh the mean/half-difference diffusivity,
M the trap strength, B/L/BG/H the mass, stiffness, bubble-boundary mass
and convection operators:

    [B + (M/2) BG] dC/dt - eps (M/2) BG dQ/dt
        = -Dt L C - eps Dh L Q - H[Dh C + eps Dt Q] Phi
    -(M/2) BG dC/dt + eps [B + (M/2) BG] dQ/dt
        = -Dh L C - eps Dt L Q - H[Dt C + eps Dh Q] Phi
    L Phi + (M/(2 eps)) BG C - (M/2) BG Q + w lam = B Q,   w^T Phi = 0

The boundary (BG) couplings are oriented so the trapped anion mass adds to
the bulk: summing the rows against constants yields the exact discrete
invariants  sum B (C + eps Q)  (cations) and
sum (B + M BG)(C - eps Q)  (anions, bulk + trapped).

Limit path (eps = 0), obtained by exact elimination from the eps -> 0
stage equations (the Poisson boundary term disappears with the layer):

    [B + (M/2)(1 + Dh/Dt) BG] dC/dt = -(Dt^2 - Dh^2)/Dt  L C - (Dh/Dt) w lam
    -(M/2) BG dC/dt = -Dh L C - Dt H[C] Phi + w lam
    L Phi = B Q,   w^T Phi = 0

At eps = 0 the multiplier lam sits on the charge row: H[C] annihilates
constants, so that row block is rank-deficient by one (its sum equals the
trapped-mass rate, which the remaining terms cannot represent), while the
Poisson block B Q = L Phi is uniquely solvable as it stands.  Bordering
the Poisson row instead would duplicate the column B*1 already spanned by
the Q unknowns and leave the uniform charge mode free.

Row operations connect the two eps = 0 forms, so one IMEX step of the
general path assembled at eps = 0 and one step of the limit path produce
the same stage values up to roundoff; ap_equivalence_check verifies this
and the eps -> 0 approach of the true general path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem2d import OperatorSet2D, Q1Space
from .imex import SemiLinearDAE, Workspace, imex_sa_222, imex_step
from .params import PhysicalParams


@dataclass
class State2D:
    c_field: np.ndarray
    q_field: np.ndarray
    phi_field: np.ndarray
    t: float = 0.0
    lam: float = 0.0


def pack_state(state: State2D) -> np.ndarray:
    return np.concatenate([state.c_field, state.q_field, state.phi_field,
                           [state.lam]])


def unpack_state(q: np.ndarray, ndof: int, t: float = 0.0) -> State2D:
    return State2D(c_field=q[:ndof], q_field=q[ndof:2 * ndof],
                   phi_field=q[2 * ndof:3 * ndof], t=t, lam=float(q[3 * ndof]))


def split(q: np.ndarray, ndof: int):
    return q[:ndof], q[ndof:2 * ndof], q[2 * ndof:3 * ndof]


@dataclass(frozen=True)
class InitialCondition2D:
    """Gaussian pulses c_pm = v0 exp(-((x-x_pm)^2 + (y-y_pm)^2)/sigma^2)."""

    x_plus: float = 0.4
    x_minus: float = 0.5
    y_plus: float = 0.2
    y_minus: float = 0.2
    sigma: float = 0.05
    v0: float = 1e-6

    def c_plus(self, x, y):
        r2 = (x - self.x_plus) ** 2 + (y - self.y_plus) ** 2
        return self.v0 * np.exp(-r2 / self.sigma**2)

    def c_minus(self, x, y):
        r2 = (x - self.x_minus) ** 2 + (y - self.y_minus) ** 2
        return self.v0 * np.exp(-r2 / self.sigma**2)


def initial_conditions_2d(params: PhysicalParams, space: Q1Space,
                          eps: float, ic: InitialCondition2D | None = None):
    """Nodal (C0, Q0).  For the eps = 0 limit path Q0 is the neutral zero."""
    ic = ic if ic is not None else InitialCondition2D(v0=params.v0)
    np_ = space.interpolate(ic.c_plus) / params.m_plus
    nm_ = space.interpolate(ic.c_minus) / params.m_minus
    c0 = np_ + nm_
    q0 = (np_ - nm_) / eps if eps > 0.0 else np.zeros_like(c0)
    return c0, q0


def _theta_general(ops: OperatorSet2D, params: PhysicalParams, eps: float,
                   include_gamma_term: bool):
    n = ops.ndof
    dt_, dh_ = params.d_tilde, params.d_hat
    m = params.trap_m
    l_mat, b_mat, bg = ops.l_mat, ops.b_mat, ops.bg_mat
    w = sp.csr_matrix(ops.b_lumped.reshape(1, n))
    poisson_q = b_mat + 0.5 * m * bg
    poisson_c = -(0.5 * m / eps) * bg if (include_gamma_term and m > 0.0) else None

    def theta(q):
        c_e, q_e, _ = split(q, n)
        a_field = dh_ * c_e + eps * dt_ * q_e
        b_field = dt_ * c_e + eps * dh_ * q_e
        h_a = ops.convection(a_field)
        h_b = ops.convection(b_field)
        blocks = [
            [-dt_ * l_mat, -eps * dh_ * l_mat, -h_a, None],
            [-dh_ * l_mat, -eps * dt_ * l_mat, -h_b, None],
            [poisson_c, poisson_q, -l_mat, -w.T],
            [None, None, w, None],
        ]
        return sp.bmat(blocks, format="csr")

    return theta


def assemble_system_2d(params: PhysicalParams, ops: OperatorSet2D,
                       eps: float | None = None) -> SemiLinearDAE:
    """General (eps > 0) path; eps = 0 is served by qnl_limit_system."""
    eps = params.epsilon if eps is None else eps
    if eps <= 0.0:
        raise ValueError("general 2D assembly needs eps > 0; "
                         "use qnl_limit_system for the eps = 0 limit")
    n = ops.ndof
    m = params.trap_m
    b_mat, bg = ops.b_mat, ops.bg_mat
    mass = sp.bmat([
        [b_mat + 0.5 * m * bg, -eps * 0.5 * m * bg, None, None],
        [-0.5 * m * bg, eps * (b_mat + 0.5 * m * bg), None, None],
        [None, None, sp.csr_matrix((n, n)), None],
        [None, None, None, sp.csr_matrix((1, 1))],
    ], format="csr")
    theta = _theta_general(ops, params, eps, include_gamma_term=True)
    rows = np.arange(2 * n)
    return SemiLinearDAE(mass, theta, explicit_rows=rows, explicit_cols=rows,
                         label=f"cq2d(eps={eps:g})")


# In the eps = 0 paths the potential is slaved to the sum field through
# H[C]; where C underflows (far from the pulses) that relation degenerates.
# The coefficient field is floored at a small fraction of its peak, which
# leaves the C dynamics untouched at the solver tolerances and turns the
# far-field potential into a harmless harmonic extension.
COEFF_FLOOR_REL = 1e-10


def _floored(c_field: np.ndarray) -> np.ndarray:
    peak = float(np.abs(c_field).max())
    if peak == 0.0:
        return np.full_like(c_field, 1.0)
    return np.maximum(c_field, COEFF_FLOOR_REL * peak)


def general_system_at_eps0(params: PhysicalParams, ops: OperatorSet2D) -> SemiLinearDAE:
    """General stage equations with eps substituted by 0 symbolically.

    The Poisson boundary term M/(2 eps) BG C has no finite eps -> 0 limit
    and disappears with the boundary layer; the remaining rows are the
    exact termwise limits of the eps > 0 assembly.
    """
    n = ops.ndof
    dt_, dh_ = params.d_tilde, params.d_hat
    m = params.trap_m
    l_mat, b_mat, bg = ops.l_mat, ops.b_mat, ops.bg_mat
    w = sp.csr_matrix(ops.b_lumped.reshape(1, n))
    mass = sp.bmat([
        [b_mat + 0.5 * m * bg, None, None, None],
        [-0.5 * m * bg, sp.csr_matrix((n, n)), None, None],
        [None, None, sp.csr_matrix((n, n)), None],
        [None, None, None, sp.csr_matrix((1, 1))],
    ], format="csr")

    def theta(q):
        h_c = ops.convection(_floored(q[:n]))
        return sp.bmat([
            [-dt_ * l_mat, None, -dh_ * h_c, None],
            [-dh_ * l_mat, None, -dt_ * h_c, w.T],
            [None, b_mat, -l_mat, None],
            [None, None, w, None],
        ], format="csr")

    rows = np.arange(n)
    return SemiLinearDAE(mass, theta, explicit_rows=rows, explicit_cols=rows,
                         label="cq2d(eps=0, general form)")


def qnl_limit_system(params: PhysicalParams, ops: OperatorSet2D) -> SemiLinearDAE:
    """Quasi-neutral limit path (reduced form; see module docstring).

    The effective-diffusion row keeps the exact boundary-mass correction
    (M/2)(1 + Dh/Dt) BG produced by eliminating the charge row, so the
    stage values coincide with the eps = 0 general form to roundoff.
    """
    n = ops.ndof
    dt_, dh_ = params.d_tilde, params.d_hat
    d_eff = params.d_eff
    m = params.trap_m
    l_mat, b_mat, bg = ops.l_mat, ops.b_mat, ops.bg_mat
    w = sp.csr_matrix(ops.b_lumped.reshape(1, n))
    mass = sp.bmat([
        [b_mat + 0.5 * m * (1.0 + dh_ / dt_) * bg, None, None, None],
        [-0.5 * m * bg, sp.csr_matrix((n, n)), None, None],
        [None, None, sp.csr_matrix((n, n)), None],
        [None, None, None, sp.csr_matrix((1, 1))],
    ], format="csr")

    beta = dh_ / dt_

    def theta(q):
        h_c = ops.convection(_floored(q[:n]))
        return sp.bmat([
            [-d_eff * l_mat, None, None, -beta * w.T],
            [-dh_ * l_mat, None, -dt_ * h_c, w.T],
            [None, b_mat, -l_mat, None],
            [None, None, w, None],
        ], format="csr")

    rows = np.arange(n)
    return SemiLinearDAE(mass, theta, explicit_rows=rows, explicit_cols=rows,
                         label="cq2d(qnl limit)")


def reconstruct_concentrations(params: PhysicalParams, eps: float,
                               c_field: np.ndarray, q_field: np.ndarray):
    """(c+, c-) nodal fields from (C, Q); exact neutrality at eps = 0."""
    if eps > 0.0:
        n_plus = 0.5 * (c_field + eps * q_field)
        n_minus = 0.5 * (c_field - eps * q_field)
    else:
        n_plus = 0.5 * c_field
        n_minus = 0.5 * c_field
    return params.m_plus * n_plus, params.m_minus * n_minus


@dataclass
class APReport:
    stage_discrepancy: dict
    max_discrepancy: float
    eps_sweep: list
    passed: bool


def ap_equivalence_check(params: PhysicalParams, ops: OperatorSet2D,
                         q0: np.ndarray, dt: float,
                         eps_sweep=(1e-6, 1e-8, 1e-10),
                         tol: float = 1e-10) -> APReport:
    """Stage-by-stage comparison of the eps = 0 general form against the
    limit path, plus the eps -> 0 approach of the true general path.

    The stage comparison runs on the supplied state with the supplied trap
    strength (exercising the boundary couplings).  The eps sweep needs the
    asymptotics to be visible at all: it uses a smooth, time-resolved
    background state and drops the trap, whose Poisson boundary term grows
    like M/(2 eps) and would otherwise mask the O(eps) agreement.
    """
    n = ops.ndof
    tab = imex_sa_222()

    def one_step(system, state):
        stages = []
        imex_step(system, tab, state, 0.0, dt, workspace=Workspace(),
                  stage_hook=lambda i, qe, qi: stages.append((qe.copy(), qi.copy())))
        return stages

    stages_gen = one_step(general_system_at_eps0(params, ops), q0)
    stages_lim = one_step(qnl_limit_system(params, ops), q0)

    def rel(a, b):
        scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
        return float(np.abs(a - b).max() / scale)

    disc = {}
    for i, ((qe_g, qi_g), (qe_l, qi_l)) in enumerate(zip(stages_gen, stages_lim)):
        for name, sl in (("C", slice(0, n)), ("Q", slice(n, 2 * n)),
                         ("Phi", slice(2 * n, 3 * n))):
            disc[f"stage{i + 1}_{name}_implicit"] = rel(qi_g[sl], qi_l[sl])
        disc[f"stage{i + 1}_C_explicit"] = rel(qe_g[:n], qe_l[:n])
    max_disc = max(disc.values())

    # monotone approach of the true general path (final C after one step)
    p_sweep = params.with_(trap_m=0.0)
    x, y = ops.space.node_xy[:, 0], ops.space.node_xy[:, 1]
    c_smooth = params.v0 * (1.0 + np.exp(-((x - 0.5) ** 2 + (y - 0.2) ** 2) / 0.04))
    state = np.concatenate([c_smooth, np.zeros(n), np.zeros(n), [0.0]])
    q_lim = one_step(qnl_limit_system(p_sweep, ops), state)[-1][1]
    sweep = []
    for eps in eps_sweep:
        sys_eps = assemble_system_2d(p_sweep, ops, eps=eps)
        q_eps = imex_step(sys_eps, tab, state, 0.0, dt, workspace=Workspace())
        sweep.append((eps, rel(q_eps[:n], q_lim[:n])))

    return APReport(stage_discrepancy=disc, max_discrepancy=max_disc,
                    eps_sweep=sweep, passed=bool(max_disc <= tol))
