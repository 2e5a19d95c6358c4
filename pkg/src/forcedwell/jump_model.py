"""Two-state jump reduction with y-dependent rates.

Time is measured in units of the slow variable y, so the chain jumps
from - to + at rate r_minus(y)/eps and back at rate r_plus(y)/eps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .periodic import GL_NODES, GL_WEIGHTS, PeriodicSpline, n_cells_for, solve_periodic_linear
from .potential import PotentialModel, find_critical_points
from .rng import uniforms
from .static_spectral import eigen_solve, kramers_rates, make_slice
from .stats import HittingStats, summarize


@dataclass(eq=False)
class RateProfile:
    """Kramers rates sampled on a uniform periodic y-grid."""

    y_grid: np.ndarray
    r_minus: np.ndarray
    r_plus: np.ndarray
    epsilon: float
    sigma: Optional[float] = None
    lambda1_numeric: Optional[np.ndarray] = None
    DeltaBar: Optional[np.ndarray] = None
    geometries: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        self.r_minus = np.asarray(self.r_minus, dtype=float)
        self.r_plus = np.asarray(self.r_plus, dtype=float)
        if np.any(self.r_minus <= 0) or np.any(self.r_plus <= 0):
            raise ValueError("rates must be strictly positive")
        n = len(self.r_minus)
        if not np.allclose(self.y_grid, np.arange(n) / n):
            raise ValueError("y_grid must be the uniform grid k/n on [0, 1)")
        self.lambda1 = self.r_minus + self.r_plus
        self.A = (self.r_minus - self.r_plus) / self.lambda1
        self.B = 2.0 * np.sqrt(self.r_minus * self.r_plus) / self.lambda1
        if self.DeltaBar is None and self.sigma is not None:
            self.DeltaBar = self.sigma**2 * np.arctanh(np.clip(self.A, -1 + 1e-16, 1 - 1e-16))

    @classmethod
    def from_rates(cls, r_minus, r_plus, epsilon, sigma=None) -> "RateProfile":
        n = len(r_minus)
        return cls(np.arange(n) / n, r_minus, r_plus, float(epsilon), sigma)

    def with_epsilon(self, epsilon: float) -> "RateProfile":
        return RateProfile(self.y_grid, self.r_minus, self.r_plus, float(epsilon), self.sigma,
                           self.lambda1_numeric, self.DeltaBar, self.geometries)

    @cached_property
    def r_minus_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.r_minus)

    @cached_property
    def r_plus_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.r_plus)

    @cached_property
    def lambda1_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.lambda1)

    @cached_property
    def A_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.A)

    @cached_property
    def B_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.B)

    @cached_property
    def DeltaBar_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.DeltaBar)

    def Lambda(self, y1, y0):
        """Integral of lambda1 from y0 to y1."""
        return self.lambda1_fn.integral(y1) - self.lambda1_fn.integral(y0)

    def R_minus(self, y1, y0):
        return self.r_minus_fn.integral(y1) - self.r_minus_fn.integral(y0)

    def R_plus(self, y1, y0):
        return self.r_plus_fn.integral(y1) - self.r_plus_fn.integral(y0)

    def average(self, name: str) -> float:
        """Period average of one of the sampled profiles."""
        return getattr(self, name + "_fn").mean


def build_rate_profile(model: PotentialModel, sigma: float, epsilon: float, n_y: int = 128,
                       numeric_lambda1: bool = False, n_nodes: int = 2048) -> RateProfile:
    """Kramers rates of each frozen slice on the grid k/n_y."""
    ys = np.arange(n_y) / n_y
    rm, rp, db, ln, geo = [], [], [], [], []
    for y in ys:
        g = find_critical_points(model, y, sigma)
        geo.append(g)
        rs = kramers_rates(g, sigma)
        rm.append(rs.r_minus)
        rp.append(rs.r_plus)
        db.append(rs.DeltaBar)
        if numeric_lambda1:
            ln.append(eigen_solve(make_slice(model, y, sigma, n_nodes), 1).eigenvalues[1])
    return RateProfile(ys, np.array(rm), np.array(rp), float(epsilon), float(sigma),
                       np.array(ln) if numeric_lambda1 else None, np.array(db), geo)


@dataclass
class JumpSolution:
    grid: np.ndarray
    delta: np.ndarray
    residual: float
    stabilized: bool
    profile: RateProfile = field(repr=False)

    @cached_property
    def delta_fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.delta)

    def occupation(self, p_plus_0: float, y0: float, y):
        return occupation(self.profile, p_plus_0, y0, y, self)


def delta_periodic(profile: RateProfile, n_cells: int | None = None) -> JumpSolution:
    """Periodic solution of eps delta' = -lambda1 (delta - A)."""
    lam, A = profile.lambda1_fn, profile.A_fn
    sol = solve_periodic_linear(lam, lambda y: lam(y) * A(y), profile.epsilon, n_cells)
    return JumpSolution(sol.grid, sol.values, sol.residual, sol.stabilized, profile)


def occupation(profile: RateProfile, p_plus_0: float, y0: float, y,
               solution: JumpSolution | None = None):
    """Occupation probabilities (p_minus, p_plus) at y, starting from y0."""
    sol = solution or delta_periodic(profile)
    d = sol.delta_fn
    y = np.asarray(y, dtype=float)
    c = (p_plus_0 - (1.0 - p_plus_0) - float(d(y0))) * np.exp(-profile.Lambda(y, y0) / profile.epsilon)
    p_plus = 0.5 * (1.0 + d(y)) + 0.5 * c
    p_minus = 0.5 * (1.0 - d(y)) - 0.5 * c
    return p_minus, p_plus


def _survival_integral(rate: PeriodicSpline, y0: float, eps: float) -> float:
    K = n_cells_for(rate.max(), eps)
    h = 1.0 / K
    s = y0 + (np.arange(K)[:, None] + GL_NODES[None, :]) * h
    R = rate.integral(s) - rate.integral(y0)
    return float(h * np.sum(GL_WEIGHTS * np.exp(-R / eps)))


def _mean_time(rate: PeriodicSpline, y0: float, eps: float) -> float:
    return _survival_integral(rate, y0, eps) / (-math.expm1(-rate.total / eps))


def mean_jump_time(profile: RateProfile, y0: float) -> float:
    """Mean time to leave the - state when started there at y0."""
    return _mean_time(profile.r_minus_fn, float(y0), profile.epsilon)


def mean_jump_time_plus(profile: RateProfile, y0: float) -> float:
    """Mirror of mean_jump_time for leaving the + state."""
    return _mean_time(profile.r_plus_fn, float(y0), profile.epsilon)


def invert_hazard(rate: PeriodicSpline, y0: float, eps: float, e) -> np.ndarray:
    """Times t with R(y0 + t, y0) = eps * e, for an array of targets e >= 0."""
    target = eps * np.asarray(e, dtype=float)
    total = rate.total
    n = np.floor(target / total)
    rem = target - n * total
    K = 4096
    grid = y0 + np.arange(K + 1) / K
    Rg = rate.integral(grid) - rate.integral(y0)
    Rg[-1] = total
    t = np.interp(rem, Rg, grid - y0)
    base = rate.integral(y0)
    for _ in range(4):
        f = rate.integral(y0 + t) - base - rem
        t = t - f / rate(y0 + t)
    return n + np.clip(t, 0.0, 1.0)


def survival_function(profile: RateProfile, y0: float, t) -> np.ndarray:
    """P[tau > t] = exp(-R_minus(y0 + t, y0)/eps)."""
    t = np.asarray(t, dtype=float)
    return np.exp(-profile.R_minus(y0 + t, y0) / profile.epsilon)


def sample_jump_times(profile: RateProfile, y0: float, seed: int, n_samples: int,
                      stream: int = 0) -> np.ndarray:
    u = uniforms(seed, n_samples, stream=stream)
    return invert_hazard(profile.r_minus_fn, float(y0), profile.epsilon, -np.log(u))


def simulate_jump(profile: RateProfile, y0: float, rng_seed: int, n_samples: int) -> HittingStats:
    """Monte Carlo absorption times of the chain with + made absorbing."""
    return summarize(sample_jump_times(profile, y0, rng_seed, n_samples))
