"""Diagnostics: error norms, observed orders, model agreement, conservation,
quasi-neutrality, positivity.

All metrics are pure functions of states/trajectories and reuse the solver
quadrature operators where a discrete integral is needed, so recomputation
is deterministic and carries no independent discretization drift.  The
conservation monitor additionally offers a lumped measurement quadrature:
the scheme conserves its own mass-matrix functionals to solver roundoff,
and only an independent quadrature exposes the spatial convergence of the
conserved charge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import PhysicalParams
from .solver2d import reconstruct_concentrations, split


def relative_l2_error(numeric, exact, weights=None):
    """||numeric - exact|| / ||exact|| with optional quadrature weights.

    Falls back to the absolute error (flagged by returning a tuple through
    :func:`relative_l2_error_flagged`) only when the exact norm vanishes.
    """
    err, flagged = relative_l2_error_flagged(numeric, exact, weights)
    return err


def relative_l2_error_flagged(numeric, exact, weights=None):
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    diff = numeric - exact
    if weights is None:
        num = np.linalg.norm(diff)
        den = np.linalg.norm(exact)
    else:
        num = math.sqrt(float(diff @ (weights * diff)))
        den = math.sqrt(float(exact @ (weights * exact)))
    if den == 0.0:
        return float(num), True
    return float(num / den), False


def observed_orders(h_values, errors):
    """Pairwise orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def lsq_order(h_values, errors):
    """Least-squares slope of log(error) against log(h)."""
    h = np.log(np.asarray(h_values, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(h, e, 1)[0])


@dataclass
class ConvergenceTable:
    """Rows of (resolution, per-field error) with observed-order columns."""

    label: str
    resolutions: list = field(default_factory=list)   # h or dt per row
    errors: dict = field(default_factory=dict)        # field -> list of errors

    def add_row(self, resolution, field_errors: dict):
        self.resolutions.append(float(resolution))
        for key, val in field_errors.items():
            self.errors.setdefault(key, []).append(float(val))

    def orders(self, key):
        return observed_orders(self.resolutions, self.errors[key])

    def lsq_orders(self):
        return {k: lsq_order(self.resolutions, v) for k, v in self.errors.items()}

    def as_rows(self):
        """Header + data rows for CSV output."""
        keys = sorted(self.errors)
        header = ["resolution"]
        for k in keys:
            header += [f"error_{k}", f"order_{k}"]
        rows = []
        for i, res in enumerate(self.resolutions):
            row = [res]
            for k in keys:
                row.append(self.errors[k][i])
                if i == 0:
                    row.append(float("nan"))
                else:
                    pair = observed_orders(self.resolutions[i - 1:i + 1],
                                           self.errors[k][i - 1:i + 1])
                    row.append(float(pair[0]))
            rows.append(row)
        return header, rows


def richardson_order(q_h, q_h2, q_h4, weights=None):
    """Observed order from three nested solutions restricted to common nodes.

    order = log2(||q_h - q_h2|| / ||q_h2 - q_h4||); returns NaN when the
    fine-level difference sits at roundoff (undefined order).
    """
    def norm(v):
        v = np.asarray(v, dtype=float)
        if weights is None:
            return float(np.linalg.norm(v))
        return math.sqrt(float(v @ (weights * v)))

    coarse = norm(np.asarray(q_h) - np.asarray(q_h2))
    fine = norm(np.asarray(q_h2) - np.asarray(q_h4))
    if fine <= 1e-300 or coarse <= 1e-300:
        return float("nan")
    return float(np.log2(coarse / fine))


def diff_m(grid_delta, c_minus_delta, lj_delta, big_l, trap_m,
           c_minus0_boundary_pair, v0):
    """Near-surface solute mismatch between the resolved and trap models.

    |trapezoid of c-^delta over [-delta, delta*L]  -  M * c-^0(0)| / v0,
    with c-^0(0) the mean of the trap model's ghost/first-cell pair.
    """
    x = grid_delta.centers()
    mask = x <= lj_delta * big_l
    xb = x[mask]
    cb = np.asarray(c_minus_delta)[mask]
    bulk = float(np.trapezoid(cb, xb))
    surf = trap_m * 0.5 * (c_minus0_boundary_pair[0] + c_minus0_boundary_pair[1])
    return abs(bulk - surf) / v0


# ---------------------------------------------------------------------------
# 2D trajectory monitors
# ---------------------------------------------------------------------------

def charge_plus(ops, params: PhysicalParams, eps, c_field, q_field):
    """Total cation charge int c+ (no surface trapping for cations)."""
    c_plus, _ = reconstruct_concentrations(params, eps, c_field, q_field)
    return float(np.ones_like(c_plus) @ (ops.b_mat @ c_plus))


def charge_minus(ops, params: PhysicalParams, eps, c_field, q_field,
                 quadrature="consistent"):
    """Total anion charge int c- + M int_Gamma c- (bulk plus trapped).

    quadrature="consistent" uses the solver's mass matrices (the scheme
    conserves this functional to roundoff); "lumped" uses row-sum lumping
    and chord-trapezoid surface weights, an independent O(h^2) measurement.
    """
    _, c_minus = reconstruct_concentrations(params, eps, c_field, q_field)
    one = np.ones_like(c_minus)
    if quadrature == "consistent":
        bulk = float(one @ (ops.b_mat @ c_minus))
        surf = float(one @ (ops.bg_mat @ c_minus))
    elif quadrature == "lumped":
        bulk = float(ops.b_lumped @ c_minus)
        surf = float(np.asarray(ops.bg_mat.sum(axis=1)).ravel() @ c_minus)
    else:
        raise ValueError(quadrature)
    return bulk + params.trap_m * surf


@dataclass
class ConservationMonitor:
    """Per-step series of diff_cons = |Q-(t) - Q-(0)| / |Q-(0)|."""

    ops: object
    params: PhysicalParams
    eps: float
    quadrature: str = "consistent"
    times: list = field(default_factory=list)
    charges: list = field(default_factory=list)

    def __call__(self, t, q):
        n = self.ops.ndof
        c_field, q_field, _ = split(q, n)
        self.times.append(t)
        self.charges.append(charge_minus(self.ops, self.params, self.eps,
                                         c_field, q_field, self.quadrature))

    def drift_series(self):
        q0 = self.charges[0]
        return np.array(self.times), np.abs(np.array(self.charges) - q0) / abs(q0)

    @property
    def final_drift(self):
        _, d = self.drift_series()
        return float(d[-1])


def quasi_neutrality_gap(params: PhysicalParams, eps, c_field, q_field, v0=None):
    """Field |n+ - n-| / v0 (= eps |Q| / v0 identically) and its maximum."""
    v0 = params.v0 if v0 is None else v0
    gap = eps * np.abs(np.asarray(q_field)) / v0
    return gap, float(gap.max())


@dataclass
class QuasiNeutralityMonitor:
    params: PhysicalParams
    eps: float
    ndof: int
    times: list = field(default_factory=list)
    max_gap: list = field(default_factory=list)

    def __call__(self, t, q):
        c_field, q_field, _ = split(q, self.ndof)
        _, g = quasi_neutrality_gap(self.params, self.eps, c_field, q_field)
        self.times.append(t)
        self.max_gap.append(g)


@dataclass
class PositivityMonitor:
    """Series (t, min c-, |min c-|, max c-) over the active dofs."""

    params: PhysicalParams
    eps: float
    ndof: int
    times: list = field(default_factory=list)
    min_c: list = field(default_factory=list)
    max_c: list = field(default_factory=list)

    def __call__(self, t, q):
        c_field, q_field, _ = split(q, self.ndof)
        _, c_minus = reconstruct_concentrations(self.params, self.eps,
                                                c_field, q_field)
        self.times.append(t)
        self.min_c.append(float(c_minus.min()))
        self.max_c.append(float(c_minus.max()))

    def series(self):
        t = np.array(self.times)
        mn = np.array(self.min_c)
        return t, mn, np.abs(mn), np.array(self.max_c)

    def first_positive_time(self, settle: int = 1):
        """First time after which min(c-) stays positive for `settle` samples."""
        t, mn, _, _ = self.series()
        ok = mn > 0.0
        run = 0
        for i in range(len(t)):
            run = run + 1 if ok[i] else 0
            if run >= settle:
                return float(t[i - settle + 1])
        return None
