"""Two-sided numerical bounds on the capacity between the wells.

A = {x <= a(y)}, B = {x >= b(y)} with a = x_minus + rho_hat and
b = x_plus - rho_hat. The upper bound evaluates the Dirichlet form of the
static-like test function h~0; the lower bound evaluates the Thomson
functional of the flow proportional to lambda1 B^2 Phi e_x, Phi = pi/pi0.
Both carry a defect term because the test objects are not exact.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import QuadratureFailure
from .invariant_solver import InvariantExpansion, total_mass
from .jump_model import RateProfile
from .periodic import PeriodicSpline
from .potential import PotentialModel, find_critical_points
from .static_spectral import log_partition_Z0, make_slice


@dataclass(frozen=True)
class TransitionSets:
    model: PotentialModel
    rho_hat: float = 0.3

    def a(self, y: float) -> float:
        return _crit(self.model, float(y) % 1.0)[0] + self.rho_hat

    def b(self, y: float) -> float:
        return _crit(self.model, float(y) % 1.0)[2] - self.rho_hat

    def check(self, y_grid) -> bool:
        for y in y_grid:
            xm, x0, xp = _crit(self.model, float(y) % 1.0)
            if not (xm + self.rho_hat < x0 < xp - self.rho_hat):
                return False
        return True


@lru_cache(maxsize=8192)
def _crit(model: PotentialModel, y: float):
    g = find_critical_points(model, y)
    return g.x_minus, g.x_saddle, g.x_plus


@dataclass(frozen=True)
class CapacityEstimate:
    C0: float
    dirichlet_upper: float
    thomson_lower: float
    defect_upper: float
    defect_lower: float
    rho_hat: float
    sigma: float
    epsilon: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def bracket_ok(self) -> bool:
        return self.thomson_lower - self.defect_lower <= self.dirichlet_upper + self.defect_upper


def reference_C0(profile: RateProfile, delta1, n: int = 4096) -> float:
    """C0 = <lambda1 (1 - A delta1)> / (4 eps); ``delta1`` is a callable of y."""
    y = np.arange(n) / n
    lam, A = profile.lambda1_fn(y), profile.A_fn(y)
    return float(np.mean(lam * (1.0 - A * np.asarray(delta1(y))))) / (4.0 * profile.epsilon)


@dataclass
class _CapSlice:
    y: float
    x: np.ndarray
    E: np.ndarray        # exp(2 (V0 - V0(saddle)) / sigma^2)
    Nt: float            # integral of E over [a, b]
    h: np.ndarray        # h~0
    Phi: np.ndarray
    hstar: np.ndarray
    log_Zs: float        # log Z0 + 2 V0(saddle)/sigma^2
    dx: float


def _h_from_weights(w, dx):
    G = cumulative_simpson(w[::-1], dx=dx, initial=0.0)[::-1]
    return G / G[0], G[0]


class _Builder:
    def __init__(self, sets: TransitionSets, expansion: InvariantExpansion, n_x: int):
        self.sets = sets
        self.exp = expansion
        self.model = expansion.model
        self.sigma = expansion.sigma
        self.n_x = n_x
        self.norm = total_mass(expansion)

    def slice(self, y: float) -> _CapSlice:
        m, s2 = self.model, self.sigma**2
        a, b = self.sets.a(y), self.sets.b(y)
        x = np.linspace(a, b, self.n_x)
        dx = x[1] - x[0]
        Vs = float(m.V(_crit(m, y % 1.0)[1], y))
        E = np.exp(2.0 * (m.V(x, y) - Vs) / s2)
        h, Nt = _h_from_weights(E, dx)
        xs, _, _, _, Phi_grid, _ = self.exp.slice_density(y)
        Phi = np.interp(x, xs, Phi_grid) / self.norm
        if np.any(Phi <= 0):
            raise QuadratureFailure(f"negative density on the transition region at y={y}")
        hstar, _ = _h_from_weights(E / Phi**2, dx)
        sl = make_slice(m, y, self.sigma, self.exp.n_nodes)
        log_Zs = log_partition_Z0(sl) + 2.0 * Vs / s2
        return _CapSlice(y, x, E, Nt, h, Phi, hstar, log_Zs, dx)


def _on(x, sl: _CapSlice, arr):
    return np.interp(x, sl.x, arr, left=1.0, right=0.0)


def capacity_bounds(sets: TransitionSets, profile: RateProfile, expansion: InvariantExpansion,
                    rho: float = 0.0, n_y: int = 64, n_x: int = 801, dy: float = 1e-3,
                    lambda1_source: str = "profile") -> CapacityEstimate:
    """C0, Dirichlet upper bound, Thomson lower bound and both defects."""
    eps, sigma = profile.epsilon, profile.sigma
    s2 = sigma**2
    bld = _Builder(sets, expansion, n_x)
    ys = np.arange(n_y) / n_y
    if lambda1_source == "numeric":
        lam_fn = PeriodicSpline(expansion.elements.eigenvalues[:, 1])
    else:
        lam_fn = profile.lambda1_fn
    B_fn = profile.B_fn

    dir_y, def_up, flow_norm, thom_y, def_lo_y = [], [], [], [], []
    for y in ys:
        c = bld.slice(y)
        lo, hi = bld.slice(y - dy), bld.slice(y + dy)
        x = c.x
        pi = c.Phi * np.exp(-c.log_Zs) / c.E
        # Dirichlet form of h~0
        dxh2 = (c.E / c.Nt) ** 2
        h_lo, h_hi = _on(x, lo, lo.h), _on(x, hi, hi.h)
        dyh = (h_hi - h_lo) / (2 * dy)
        dyyh = (h_hi - 2 * c.h + h_lo) / dy**2
        integrand = pi * (dxh2 + eps * rho**2 * dyh**2)
        dir_y.append(simpson(integrand, dx=c.dx))
        # divergence defect of the associated flow
        hs_lo, hs_hi = _on(x, lo, lo.hstar), _on(x, hi, hi.hstar)
        dyhs = (hs_hi - hs_lo) / (2 * dy)
        dyyhs = (hs_hi - 2 * c.hstar + hs_lo) / dy**2
        if rho > 0:
            logpi_lo = np.log(np.interp(x, lo.x, lo.Phi)) - lo.log_Zs - np.log(
                np.exp(2.0 * (bld.model.V(x, y - dy) - bld.model.V(x, y)) / s2) * c.E)
            logpi_hi = np.log(np.interp(x, hi.x, hi.Phi)) - hi.log_Zs - np.log(
                np.exp(2.0 * (bld.model.V(x, y + dy) - bld.model.V(x, y)) / s2) * c.E)
            dyV = -0.5 * s2 * (logpi_hi - logpi_lo) / (2 * dy)
        else:
            dyV = np.zeros_like(x)
        div = pi * (dyh + 0.5 * rho**2 * s2 * dyyh) - pi * (
            0.5 * rho**2 * s2 * dyyhs - dyhs - 2 * rho**2 * dyV * dyhs)
        def_up.append(simpson(div * c.h, dx=c.dx))
        # Thomson flow
        lam, B = float(lam_fn(y)), float(B_fn(y))
        flow_norm.append(lam * B**2 * c.Phi[0])
        thom_y.append(lam**2 * B**4 * math.exp(c.log_Zs) * simpson(c.Phi * c.E, dx=c.dx))
        dPhi = np.gradient(c.Phi, c.dx, edge_order=2)
        def_lo_y.append(lam * B**2 * simpson(dPhi * c.h, dx=c.dx))

    dirichlet = s2 / (2 * eps) * float(np.mean(dir_y))
    defect_upper = abs(float(np.mean(def_up)))
    fourC = float(np.mean(flow_norm))  # this is 4 eps C
    D_flow = (2 * eps / s2) * float(np.mean(thom_y)) / fourC**2
    thomson = 1.0 / D_flow
    # a unit flow leaking a fraction d of its flux lowers the bound to (1-d)^2/D
    defect_lower = 2.0 * abs(float(np.mean(def_lo_y)) / fourC) * thomson
    C0 = reference_C0(profile, expansion.delta1.fn)
    if not all(np.isfinite(v) for v in (dirichlet, thomson, defect_upper, defect_lower)):
        raise QuadratureFailure("capacity integrals are not finite")
    return CapacityEstimate(C0, dirichlet, thomson, defect_upper, defect_lower,
                            sets.rho_hat, sigma, eps)


def tilde_committors(sets: TransitionSets, expansion: InvariantExpansion, y: float, n_x: int = 801):
    """(x, h~0, h~0*) on [a(y), b(y)]."""
    c = _Builder(sets, expansion, n_x).slice(float(y))
    return c.x, c.h, c.hstar


def dirichlet_upper(sets, profile, expansion, **kw) -> tuple[float, float]:
    est = capacity_bounds(sets, profile, expansion, **kw)
    return est.dirichlet_upper, est.defect_upper


def thomson_lower(sets, profile, expansion, **kw) -> tuple[float, float]:
    est = capacity_bounds(sets, profile, expansion, **kw)
    return est.thomson_lower, est.defect_lower
