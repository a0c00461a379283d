"""IMEX Runge-Kutta integration of semi-linear differential-algebraic systems

    B dq/dt = Theta(q) q + f(t)

where the generalized mass matrix B may be singular (algebraic constraint
rows) and Theta is a sparse matrix whose entries depend on q only through
coefficient fields (drift/convection terms).  Stage fluxes freeze Theta at
explicitly predicted states and solve linearly for the implicit states:

    q_E^1 = q^n
    q_E^i = solution of  B q_E^i = B q^n + dt * sum_{j<i} ta_ij K_j
    q_I^i = solution of (B - dt a_ii Theta(q_E^i)) q_I^i
                          = B q^n + dt sum_{j<i} a_ij K_j + dt a_ii f_i
    K_i   = Theta(q_E^i) q_I^i + f(t^n + c_i dt)

with the double tableau's explicit coefficients ta and implicit a.  The
shipped tableau is the two-stage, stiffly accurate, L-stable pair

    explicit:  0      |               implicit:  g  | g
               1/(2g) | 1/(2g) 0                 1  | 1-g  g
               -------+---------                 ----+--------
                      | 1-g    g                     | 1-g  g

with g = 1 - 1/sqrt(2), which makes the implicit half second order.
Stiff accuracy (b equals the last implicit row) means the step result is
the last implicit stage, so constraint rows hold exactly at t^{n+1}.

Because B is singular, the explicit-stage relation determines only the
differential components of q_E.  Each system declares (or the constructor
auto-detects) the square differential block: the rows of B that are
nonzero and the columns they couple.  Remaining components of q_E are
taken from the most recent implicit stage; mass couplings to such lagged
columns are moved to the right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAMMA_LSTABLE = 1.0 - 1.0 / math.sqrt(2.0)


class StepFailure(RuntimeError):
    """Raised when a stage solve fails or produces non-finite values."""

    def __init__(self, message, stage=None, t=None):
        super().__init__(message)
        self.stage = stage
        self.t = t


@dataclass(frozen=True)
class DoubleButcherTableau:
    a_explicit: np.ndarray
    a_implicit: np.ndarray
    b: np.ndarray
    c_explicit: np.ndarray
    c_implicit: np.ndarray

    def __post_init__(self):
        s = self.b.size
        for name in ("a_explicit", "a_implicit"):
            a = getattr(self, name)
            if a.shape != (s, s):
                raise ValueError(f"{name} must be {s}x{s}")
        if np.any(np.triu(self.a_explicit) != 0.0):
            raise ValueError("explicit table must be strictly lower triangular")
        if np.any(np.triu(self.a_implicit, 1) != 0.0):
            raise ValueError("implicit table must be lower triangular")
        diag = np.diag(self.a_implicit)
        if np.any(diag <= 0.0) or not np.allclose(diag, diag[0]):
            raise ValueError("implicit diagonal must be a single positive gamma")
        if not np.allclose(self.b, self.a_implicit[-1]):
            raise ValueError("tableau must be stiffly accurate (b = last implicit row)")

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def gamma(self) -> float:
        return float(self.a_implicit[0, 0])


def imex_sa_222(gamma: float = GAMMA_LSTABLE) -> DoubleButcherTableau:
    """Two-stage stiffly accurate L-stable IMEX pair (see module docstring)."""
    g = float(gamma)
    a_exp = np.array([[0.0, 0.0], [1.0 / (2.0 * g), 0.0]])
    a_imp = np.array([[g, 0.0], [1.0 - g, g]])
    b = np.array([1.0 - g, g])
    c_exp = np.array([0.0, 1.0 / (2.0 * g)])
    c_imp = np.array([g, 1.0])
    return DoubleButcherTableau(a_exp, a_imp, b, c_exp, c_imp)


def stability_function(tableau: DoubleButcherTableau, z: complex) -> complex:
    """Amplification factor of the implicit half on y' = lambda*y (z = lambda*dt).

    Composed directly from the stage recursion, independently of imex_step.
    """
    s = tableau.stages
    a = tableau.a_implicit
    y = np.zeros(s, dtype=complex)
    for i in range(s):
        acc = 1.0 + z * sum(a[i, j] * y[j] for j in range(i))
        y[i] = acc / (1.0 - z * a[i, i])
    return 1.0 + z * sum(tableau.b[i] * y[i] for i in range(s))


class _RefinedLU:
    """Sparse LU with iterative refinement, reusable across nearby matrices.

    ``solve(A, b)`` factors A on first use and afterwards tries the cached
    factorization, refining against the current A.  If refinement cannot
    reach the target residual the matrix is refactored once.  For matrices
    where even a fresh factorization stalls (very stiff couplings), the
    reachable residual is remembered to avoid refactoring every call.
    """

    def __init__(self, rtol=1e-12, max_refine=3):
        self.rtol = rtol
        self.max_refine = max_refine
        self._lu = None
        self._floor = 0.0

    def _refine(self, a_mat, b, x, target):
        best = x
        best_res = np.linalg.norm(b - a_mat @ x)
        for _ in range(self.max_refine):
            if best_res <= target:
                break
            x = best + self._lu.solve(b - a_mat @ best)
            res = np.linalg.norm(b - a_mat @ x)
            if not np.isfinite(res) or res >= best_res:
                break
            best, best_res = x, res
        return best, best_res

    def solve(self, a_mat, b):
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        target = max(self.rtol * bnorm, self._floor * bnorm)
        if self._lu is None:
            self._lu = spla.splu(sp.csc_matrix(a_mat))
        x, res = self._refine(a_mat, b, self._lu.solve(b), target)
        if res > target:
            self._lu = spla.splu(sp.csc_matrix(a_mat))
            x, res = self._refine(a_mat, b, self._lu.solve(b), target)
            if res > target:
                # remember what this problem class can actually deliver
                self._floor = max(self._floor, 10.0 * res / bnorm)
        return x


class SemiLinearDAE:
    """Problem container for B dq/dt = Theta(q) q + f(t).

    Parameters
    ----------
    mass : sparse matrix
        Generalized mass matrix B (rows of zeros mark algebraic equations).
    theta : callable(q) -> sparse matrix
        Operator factory; evaluated at explicitly predicted states.
    forcing : callable(t) -> ndarray, optional
        Source vector; None means homogeneous.
    explicit_rows, explicit_cols : index arrays, optional
        Square differential block used to reconstruct explicit stage
        values.  Auto-detected from the sparsity of B when omitted;
        autodetection requires the block to come out square.
    """

    def __init__(self, mass, theta, forcing=None, explicit_rows=None,
                 explicit_cols=None, label=""):
        self.mass = sp.csr_matrix(mass)
        self.theta = theta
        self.forcing = forcing
        self.label = label
        self.n = self.mass.shape[0]

        nz_rows = np.unique(self.mass.nonzero()[0])
        if explicit_rows is None:
            explicit_rows = nz_rows
        self.explicit_rows = np.asarray(explicit_rows, dtype=int)

        b_rows = self.mass[self.explicit_rows]
        touched = np.unique(b_rows.nonzero()[1])
        if explicit_cols is None:
            explicit_cols = touched
        self.explicit_cols = np.asarray(explicit_cols, dtype=int)
        if self.explicit_rows.size != self.explicit_cols.size:
            raise ValueError(
                "differential block is not square; pass explicit_rows/cols "
                f"(got {self.explicit_rows.size} rows, {self.explicit_cols.size} cols)"
            )
        self.lagged_cols = np.setdiff1d(touched, self.explicit_cols)

        self._b_rows = b_rows.tocsr()
        self._b_dd = b_rows[:, self.explicit_cols].tocsc()
        self._b_lag = b_rows[:, self.lagged_cols].tocsr() if self.lagged_cols.size else None
        self._b_dd_lu = None

    def forcing_at(self, t):
        if self.forcing is None:
            return None
        return self.forcing(t)

    def solve_explicit_block(self, rhs):
        if self._b_dd_lu is None:
            self._b_dd_lu = spla.splu(self._b_dd)
        return self._b_dd_lu.solve(rhs)

    def algebraic_rows(self):
        nz = np.unique(self.mass.nonzero()[0])
        return np.setdiff1d(np.arange(self.n), nz)


class Workspace:
    """Per-run solver caches (one LU cache per implicit stage index)."""

    def __init__(self, rtol=1e-12):
        self.rtol = rtol
        self._stage_lu = {}
        self.algebraic_solver = _RefinedLU(rtol=rtol)

    def stage_solver(self, i) -> _RefinedLU:
        if i not in self._stage_lu:
            self._stage_lu[i] = _RefinedLU(rtol=self.rtol)
        return self._stage_lu[i]


def imex_step(system: SemiLinearDAE, tableau: DoubleButcherTableau, q, t, dt,
              workspace: Workspace | None = None, stage_hook=None):
    """Advance q from t to t + dt; returns the new state (last implicit stage)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ws = workspace if workspace is not None else Workspace()
    a_e = tableau.a_explicit
    a_i = tableau.a_implicit
    c_i = tableau.c_implicit
    s = tableau.stages

    b_mat = system.mass
    bq = b_mat @ q
    rows = system.explicit_rows
    cols = system.explicit_cols

    fluxes = []
    q_latest = q
    for i in range(s):
        if i == 0:
            q_e = q
        else:
            rhs = bq[rows].copy()
            for j in range(i):
                if a_e[i, j] != 0.0:
                    rhs += (dt * a_e[i, j]) * fluxes[j][rows]
            if system._b_lag is not None:
                rhs -= system._b_lag @ (q_latest[system.lagged_cols]
                                        - q[system.lagged_cols])
            x = system.solve_explicit_block(rhs)
            q_e = q_latest.copy()
            q_e[cols] = x
        if not np.all(np.isfinite(q_e)):
            raise StepFailure("non-finite explicit stage state", stage=i, t=t)

        theta_i = system.theta(q_e)
        f_i = system.forcing_at(t + c_i[i] * dt)

        a_stage = (b_mat - (dt * a_i[i, i]) * theta_i).tocsc()
        rhs = bq.copy()
        for j in range(i):
            if a_i[i, j] != 0.0:
                rhs += (dt * a_i[i, j]) * fluxes[j]
        if f_i is not None:
            rhs += (dt * a_i[i, i]) * f_i
        try:
            q_i = ws.stage_solver(i).solve(a_stage, rhs)
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise StepFailure(f"stage solve failed: {exc}", stage=i, t=t) from exc
        if not np.all(np.isfinite(q_i)):
            raise StepFailure("non-finite implicit stage state", stage=i, t=t)

        k_i = theta_i @ q_i
        if f_i is not None:
            k_i = k_i + f_i
        fluxes.append(k_i)
        q_latest = q_i
        if stage_hook is not None:
            stage_hook(i, q_e, q_i)

    # stiffly accurate: the step result is the last implicit stage
    return q_latest


def explicit_euler_step(system: SemiLinearDAE, q, t, dt,
                        workspace: Workspace | None = None):
    """Forward-Euler update of the differential block, then re-solve the
    algebraic rows.  First order; used for conservation comparisons."""
    ws = workspace if workspace is not None else Workspace()
    theta = system.theta(q)
    f = system.forcing_at(t)
    k = theta @ q
    if f is not None:
        k = k + f
    rows, cols = system.explicit_rows, system.explicit_cols
    rhs = (system.mass @ q)[rows] + dt * k[rows]
    q1 = q.copy()
    q1[cols] = system.solve_explicit_block(rhs)
    return solve_algebraic(system, q1, t + dt, workspace=ws)


def solve_algebraic(system: SemiLinearDAE, q, t, workspace: Workspace | None = None):
    """Solve the algebraic rows for the algebraic variables at state q.

    Requires the algebraic block to be square (as many constraint rows as
    non-differential variables); returns q unchanged when there is nothing
    to solve.  Theta's coefficient fields are frozen at q.
    """
    rows_a = system.algebraic_rows()
    cols_a = np.setdiff1d(np.arange(system.n), system.explicit_cols)
    if rows_a.size == 0:
        return q
    if rows_a.size != cols_a.size:
        raise ValueError("algebraic block is not square; cannot project")
    theta = sp.csr_matrix(system.theta(q))
    f = system.forcing_at(t)
    rhs = -(theta[rows_a] @ q)
    if f is not None:
        rhs -= f[rows_a]
    a_aa = theta[rows_a][:, cols_a].tocsc()
    # rhs currently holds -(full row residual); add back the unknowns' part
    rhs += a_aa @ q[cols_a]
    lu = workspace.algebraic_solver if workspace is not None else _RefinedLU()
    x = lu.solve(a_aa, rhs)
    out = q.copy()
    out[cols_a] = x
    if not np.all(np.isfinite(out)):
        raise StepFailure("algebraic projection produced non-finite values", t=t)
    return out


@dataclass
class TrajectoryResult:
    t: float
    q: np.ndarray
    n_steps: int
    stopped_early: bool = False
    extras: dict = field(default_factory=dict)


def integrate(system: SemiLinearDAE, tableau: DoubleButcherTableau, q0, t0,
              t_final, dt, observers=(), stop_when=None,
              workspace: Workspace | None = None) -> TrajectoryResult:
    """Repeatedly apply imex_step from t0 to t_final.

    ``observers`` are callables obs(t, q) invoked at t0 and after every
    step; ``stop_when(t, q)`` may end the run early (positivity studies).
    """
    span = t_final - t0
    if span < 0:
        raise ValueError("t_final must be >= t0")
    n_steps = int(round(span / dt)) if span > 0 else 0
    if n_steps > 0 and not math.isclose(n_steps * dt, span, rel_tol=1e-9):
        raise ValueError("dt must divide the time span")

    ws = workspace if workspace is not None else Workspace()
    q = np.array(q0, dtype=float, copy=True)
    t = t0
    for obs in observers:
        obs(t, q)
    stopped = False
    for k in range(n_steps):
        q = imex_step(system, tableau, q, t, dt, workspace=ws)
        t = t0 + (k + 1) * dt
        for obs in observers:
            obs(t, q)
        if stop_when is not None and stop_when(t, q):
            stopped = True
            break
    return TrajectoryResult(t=t, q=q, n_steps=n_steps, stopped_early=stopped)
