"""Cell-centered 1D grid and the three tridiagonal space operators.

For a field sampled at cell centers x_j the interior stencils are

    lap[c]_j      = D (c_{j+1} + c_{j-1} - 2 c_j) / h^2
    drift[U]c_j   = D ((U_{j+1}-U_j) c_{j+1} + (U_{j+1}-2U_j+U_{j-1}) c_j
                       + (U_{j-1}-U_j) c_{j-1}) / (2 h^2)
    drift[c]Phi_j = D ((c_{j+1}+c_j) Phi_{j+1} - (c_{j+1}+2c_j+c_{j-1}) Phi_j
                       + (c_j+c_{j-1}) Phi_{j-1}) / (2 h^2)

i.e. second-order conservative discretizations of D c'', D (c U')' and
D (c Phi')'.  Boundary rows are left as identity placeholders here; each
model closes them with its own ghost policy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

PECLET_LIMIT = 2.0


@dataclass(frozen=True)
class Grid1D:
    x_left: float
    x_right: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 3:
            raise ValueError("need at least 3 cells")
        if self.x_right <= self.x_left:
            raise ValueError("empty interval")

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    def centers(self) -> np.ndarray:
        i = np.arange(1, self.n_cells + 1, dtype=float)
        return self.x_left + (i - 0.5) * self.h


class TriDiagOperator:
    """Tridiagonal operator stored as per-row (sub, diag, sup) coefficients.

    ``sub[0]`` and ``sup[-1]`` are structurally unused.  Rows 0 and n-1 are
    identity placeholders until a model applies its boundary closure.
    """

    def __init__(self, sub, diag, sup):
        self.sub = np.asarray(sub, dtype=float)
        self.diag = np.asarray(diag, dtype=float)
        self.sup = np.asarray(sup, dtype=float)
        n = self.diag.size
        if self.sub.size != n or self.sup.size != n:
            raise ValueError("band arrays must share one length")

    @property
    def size(self) -> int:
        return self.diag.size

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.sup[:-1] * v[1:]
        out[1:] += self.sub[1:] * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        n = self.size
        a = np.diag(self.diag)
        a += np.diag(self.sup[:-1], 1)
        a += np.diag(self.sub[1:], -1)
        return a


def _placeholder_rows(sub, diag, sup):
    sub[0] = 0.0
    diag[0] = 1.0
    sup[0] = 0.0
    sub[-1] = 0.0
    diag[-1] = 1.0
    sup[-1] = 0.0


def build_laplacian(grid: Grid1D, d: float) -> TriDiagOperator:
    """Second-difference operator scaled by the diffusivity d."""
    if d <= 0:
        raise ValueError("diffusivity must be positive")
    n = grid.n_cells
    s = d / grid.h**2
    sub = np.full(n, s)
    diag = np.full(n, -2.0 * s)
    sup = np.full(n, s)
    _placeholder_rows(sub, diag, sup)
    return TriDiagOperator(sub, diag, sup)


def build_drift_from_potential(grid: Grid1D, d: float, u: np.ndarray) -> TriDiagOperator:
    """Divergence of the potential-driven flux, D (c U')', acting on c."""
    u = np.asarray(u, dtype=float)
    n = grid.n_cells
    if u.size != n:
        raise ValueError("potential samples must live on cell centers")
    s = d / (2.0 * grid.h**2)
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    sup[1:-1] = s * (u[2:] - u[1:-1])
    diag[1:-1] = s * (u[2:] - 2.0 * u[1:-1] + u[:-2])
    sub[1:-1] = s * (u[:-2] - u[1:-1])
    _placeholder_rows(sub, diag, sup)
    return TriDiagOperator(sub, diag, sup)


def build_drift_from_concentration(grid: Grid1D, d: float, c: np.ndarray) -> TriDiagOperator:
    """Divergence of the concentration-weighted flux, D (c Phi')', acting on Phi."""
    c = np.asarray(c, dtype=float)
    n = grid.n_cells
    if c.size != n:
        raise ValueError("concentration samples must live on cell centers")
    s = d / (2.0 * grid.h**2)
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    sup[1:-1] = s * (c[2:] + c[1:-1])
    diag[1:-1] = -s * (c[2:] + 2.0 * c[1:-1] + c[:-2])
    sub[1:-1] = s * (c[1:-1] + c[:-2])
    _placeholder_rows(sub, diag, sup)
    return TriDiagOperator(sub, diag, sup)


def mesh_peclet_check(grid: Grid1D, u: np.ndarray, warn: bool = True) -> float:
    """Mesh Peclet number max|dU/dx| * h; values >= 2 destabilize the
    centered drift stencil and trigger a warning."""
    u = np.asarray(u, dtype=float)
    h = grid.h
    du = np.empty_like(u)
    du[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    du[0] = (u[1] - u[0]) / h
    du[-1] = (u[-1] - u[-2]) / h
    pec = float(np.max(np.abs(du)) * h)
    if warn and pec >= PECLET_LIMIT:
        warnings.warn(
            f"mesh Peclet number {pec:.3g} >= {PECLET_LIMIT}; "
            "the centered drift stencil may oscillate",
            RuntimeWarning,
            stacklevel=2,
        )
    return pec
