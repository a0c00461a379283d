"""Model constants and bubble-trap potential functions.

Everything the solvers consume is nondimensional.  The laboratory values in
``LAB_CONSTANTS`` are kept only so that presets and reports can state where
the default diffusivity/mass ratios come from; no unit arithmetic is done
anywhere in the package.

The anion potential is a Lennard-Jones well in the scaled wall coordinate
``xi`` (distance from the repulsive core in units of the range ``delta``),

    U_minus(xi) = nu * (xi**-12 - 2*xi**-6),      minimum -nu at xi = 1,
    U_plus(xi)  = nu * xi**-12,                   purely repulsive,

and the lumped trap strength is the Boltzmann-weighted width of the well,

    M = delta * integral_0^{L+1} exp(-U_minus(xi)) d(xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

# Laboratory reference values (sodium-like cation, surfactant-like anion).
# Documentation / preset provenance only.
LAB_CONSTANTS = {
    "D0": 1.0e-9,       # reference diffusivity, m^2/s
    "eps0": 8.8541e-12, # vacuum permittivity, F/m
    "eps_r": 78.0,      # relative permittivity of water
    "rho": 1.0e3,       # mass density, kg/m^3
    "m0": 1.0e-3,       # reference molar mass, kg/mol
    "q": 1.602e-19,     # elementary charge, C
    "kBT": 4.14e-21,    # thermal energy, J
    "N_A": 6.022e23,    # Avogadro constant, 1/mol
}

# exp(-U) below this is treated as exactly zero when integrating over the
# repulsive core; keeps xi**-12 far away from overflow territory.
_CORE_EXP_CUTOFF = 1e-30
_U_CUTOFF = -math.log(_CORE_EXP_CUTOFF)


@dataclass(frozen=True)
class PhysicalParams:
    """Nondimensional model constants.

    Defaults follow the laboratory preset: D+/D0 = 1.5, D-/D0 = 0.5,
    m+ = 23 (Na+), m- = 265 (surfactant anion).
    """

    d_plus: float = 1.5
    d_minus: float = 0.5
    m_plus: float = 23.0
    m_minus: float = 265.0
    epsilon: float = 1e-1
    trap_m: float = 0.0
    v0: float = 1e-4

    def __post_init__(self):
        if self.d_plus <= 0 or self.d_minus <= 0:
            raise ValueError("diffusivities must be positive")
        if self.m_plus <= 0 or self.m_minus <= 0:
            raise ValueError("molecular masses must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.trap_m < 0:
            raise ValueError("trap strength M must be >= 0")
        if self.v0 <= 0:
            raise ValueError("v0 must be positive")
        if self.d_tilde <= abs(self.d_hat):
            # cannot happen for positive diffusivities, but guards the
            # effective diffusivity (d_tilde^2 - d_hat^2)/d_tilde > 0
            raise ValueError("mean diffusivity must exceed half-difference")

    @property
    def d_tilde(self) -> float:
        """Mean diffusivity (D+ + D-)/2."""
        return 0.5 * (self.d_plus + self.d_minus)

    @property
    def d_hat(self) -> float:
        """Half-difference (D+ - D-)/2."""
        return 0.5 * (self.d_plus - self.d_minus)

    @property
    def d_eff(self) -> float:
        """Effective diffusivity of the quasi-neutral limit."""
        return (self.d_tilde**2 - self.d_hat**2) / self.d_tilde

    def with_(self, **kw) -> "PhysicalParams":
        return replace(self, **kw)

    @classmethod
    def lab_preset(cls, **overrides) -> "PhysicalParams":
        """Laboratory diffusivity/mass ratios, everything else default."""
        return cls(**overrides)


@dataclass(frozen=True)
class LJPotentialSpec:
    """Lennard-Jones trap: well depth ``nu`` (units of kT), range ``delta``,
    cutoff multiplier ``big_l`` (potential set to zero beyond xi = L + 1)."""

    nu: float
    delta: float
    big_l: float = 1.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("well depth nu must be >= 0")
        if self.delta <= 0:
            raise ValueError("potential range delta must be positive")
        if self.big_l <= 0:
            raise ValueError("cutoff multiplier L must be positive")


def _check_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0.0):
        raise ValueError("xi must be positive (repulsive core at xi = 0)")
    return xi


def potential_u_minus(spec: LJPotentialSpec, xi):
    """Anion wall potential nu*(xi^-12 - 2 xi^-6); scalar or array xi > 0."""
    xi = _check_xi(xi)
    inv6 = xi**-6
    return spec.nu * (inv6 * inv6 - 2.0 * inv6)


def potential_u_plus(spec: LJPotentialSpec, xi):
    """Cation wall potential nu*xi^-12 (repulsion only); xi > 0."""
    xi = _check_xi(xi)
    inv6 = xi**-6
    return spec.nu * inv6 * inv6


def compute_trap_m(spec: LJPotentialSpec) -> float:
    """Lumped trap strength M = delta * int_0^{L+1} exp(-U_minus) dxi.

    The integrand is doubly-exponentially small inside the repulsive core,
    so the integration starts where exp(-U_minus) first exceeds 1e-30;
    adaptive quadrature then resolves the exp(nu) peak at xi = 1.
    """
    upper = spec.big_l + 1.0
    if spec.nu == 0.0:
        return spec.delta * upper

    def u(x):
        return potential_u_minus(spec, x)

    # U_minus decreases monotonically from +inf on (0, 1]; find where it
    # drops below the cutoff.  At xi = 1e-3 the potential is astronomically
    # large for any nu > 0 handled in double precision.
    lo = 1e-3
    while u(lo) <= _U_CUTOFF:
        lo *= 0.5
    xi_min = brentq(lambda x: u(x) - _U_CUTOFF, lo, 1.0, xtol=1e-15)

    val, _ = quad(
        lambda x: math.exp(-u(x)),
        xi_min,
        upper,
        points=[1.0] if xi_min < 1.0 < upper else None,
        epsrel=1e-10,
        epsabs=0.0,
        limit=200,
    )
    return spec.delta * val


def lj_profile_on_axis(spec: LJPotentialSpec, x, attract: bool = True):
    """Sample U_-(1 + x/delta) (or U_+ for ``attract=False``) at positions x.

    The wall sits at x = -delta; the potential vanishes beyond x = delta*L.
    Positions at or behind the wall (xi <= 0) are clamped to the sample
    nearest the core, which is already far beyond exp-underflow.
    """
    xi = 1.0 + np.asarray(x, dtype=float) / spec.delta
    xi = np.maximum(xi, 1e-6)
    u = potential_u_minus(spec, xi) if attract else potential_u_plus(spec, xi)
    return np.where(xi > spec.big_l + 1.0, 0.0, u)
