"""Eigenfunction expansion of the invariant density of the forced system.

pi(x, y) = pi0(x|y) [1 + alpha_1(y) phi_1(x|y) + sum_{n>=2} alpha_n(y) phi_n(x|y)]

with alpha_1 = (A - delta1)/B. delta1 solves a periodic first-order (or,
with slow-variable noise, second-order) linear ODE; the higher
coefficients are taken quasi-static or from a periodic linear solve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import SingularSystem
from .jump_model import RateProfile
from .periodic import PeriodicSpline, solve_periodic_linear
from .potential import PotentialModel
from .static_spectral import eigen_solve, make_slice, matrix_elements


class TruncationWarning(UserWarning):
    """The coupling to higher modes moved delta1 by more than 10 percent."""


@dataclass(eq=False)
class ElementsProfile:
    """Matrix elements and eigenvalues on a uniform periodic y-grid."""

    y_grid: np.ndarray
    sigma: float
    n_max: int
    eigenvalues: np.ndarray  # (n_y, n_max+1)
    f: np.ndarray            # (n_y, n_max+1, n_max+1)
    g: np.ndarray
    ambiguous: dict = field(default_factory=dict)
    # frame[i, n] * phi_n(.|y_i) varies continuously in y; holonomy[n] is the
    # sign picked up by that continuous frame over one period.
    frame: Optional[np.ndarray] = None
    holonomy: Optional[np.ndarray] = None
    modes: list = field(default_factory=list, repr=False)

    def spline(self, arr) -> PeriodicSpline:
        return PeriodicSpline(arr)

    def local_signs(self, y: float, sp) -> np.ndarray:
        """Signs taking the slice eigenvectors ``sp`` at y into the continuous frame."""
        n = len(self.y_grid)
        k = int(round((y % 1.0) * n))
        wrap = self.holonomy if k == n else np.ones(self.n_max + 1)
        k %= n
        x, psi = self.modes[k]
        ov = _overlaps(sp.x, sp.weights, sp.psi[:self.n_max + 1], x, psi)
        return np.where(ov < 0, -1.0, 1.0) * self.frame[k] * wrap


def _overlaps(xa, wa, psia, xb, psib) -> np.ndarray:
    return np.array([np.sum(wa * a * np.interp(xa, xb, b, left=0.0, right=0.0))
                     for a, b in zip(psia, psib)])


def twisted_spline(values, twist: float):
    """Cubic interpolant of grid samples that are periodic (twist +1) or
    antiperiodic (twist -1) over [0, 1)."""
    if twist > 0:
        return PeriodicSpline(values)
    sp = PeriodicSpline(np.concatenate([values, -np.asarray(values)]))
    return lambda y: sp(np.asarray(y, dtype=float) / 2.0)


def build_elements(model: PotentialModel, sigma: float, n_y: int = 64, n_max: int = 8,
                   n_nodes: int = 2048, dy: float = 1e-3) -> ElementsProfile:
    ys = np.arange(n_y) / n_y
    lam, f, g, amb, modes = [], [], [], {}, []
    frame = np.ones((n_y, n_max + 1))
    prev = None
    for i, y in enumerate(ys):
        me = matrix_elements(model, y, sigma, n_max, dy=dy, n_nodes=n_nodes)
        lam.append(me.eigenvalues)
        f.append(me.f)
        g.append(me.g)
        if me.ambiguous_modes:
            amb[float(y)] = me.ambiguous_modes
        sp = eigen_solve(make_slice(model, y, sigma, n_nodes), n_max)
        modes.append((sp.x, sp.psi[:n_max + 1].copy()))
        if prev is not None:
            ov = _overlaps(sp.x, sp.weights, sp.psi[:n_max + 1], *modes[i - 1])
            frame[i] = frame[i - 1] * np.where(ov < 0, -1.0, 1.0)
        prev = sp
    ov = _overlaps(prev.x, prev.weights, prev.psi[:n_max + 1], *modes[0])
    holonomy = frame[-1] * np.where(ov < 0, -1.0, 1.0)
    return ElementsProfile(ys, float(sigma), n_max, np.array(lam), np.array(f), np.array(g), amb,
                           frame, holonomy, modes)


@dataclass(frozen=True)
class Corrections:
    p1: bool = False
    w1: bool = False
    w1tilde: bool = False

    @classmethod
    def all(cls) -> "Corrections":
        return cls(True, True, True)

    @property
    def any(self) -> bool:
        return self.p1 or self.w1 or self.w1tilde


@dataclass
class Delta1Solution:
    grid: np.ndarray
    delta1: np.ndarray
    residual: float
    corrections: Corrections
    w1tilde_shift: float = 0.0

    @property
    def fn(self) -> PeriodicSpline:
        return PeriodicSpline(self.delta1)


def _lambda1_fn(profile: RateProfile, elements: Optional[ElementsProfile], source: str) -> PeriodicSpline:
    if source == "numeric":
        if elements is not None:
            return PeriodicSpline(elements.eigenvalues[:, 1])
        if profile.lambda1_numeric is None:
            raise ValueError("numeric lambda1 requested but not available")
        return PeriodicSpline(profile.lambda1_numeric)
    return profile.lambda1_fn


def quasi_static_alpha(elements: ElementsProfile, A, B, delta1, eps: float) -> np.ndarray:
    """alpha_n* on the elements grid for n = 2..n_max; shape (n_y, n_max-1)."""
    s2 = elements.sigma**2
    alpha1 = (A - delta1) / B
    lam = elements.eigenvalues[:, 2:]
    f0 = elements.f[:, 2:, 0]
    f1 = elements.f[:, 2:, 1]
    return -(eps / s2) / lam * (f0 + alpha1[:, None] * f1)


def solve_delta1_first_order(profile: RateProfile, elements: Optional[ElementsProfile] = None,
                             include_corrections: Corrections = Corrections(),
                             lambda1_source: str = "profile", max_iter: int = 20) -> Delta1Solution:
    """Periodic solution of

        eps d1' = -(lam1 - (eps/s^2) p1)(d1 - A) + (eps/s^2)(w1 + w1tilde),

    p1 = -f11 - DeltaBar' A, w1 = DeltaBar' B^2 + B f10,
    w1tilde = B sum_{m>=2} f1m alpha_m, with alpha_m quasi-static.
    Corrections that are switched off are set to zero.
    """
    eps = profile.epsilon
    corr = include_corrections
    if corr.any and elements is None:
        raise ValueError("matrix elements are required for the corrections")
    lam1 = _lambda1_fn(profile, elements, lambda1_source)
    A, B = profile.A_fn, profile.B_fn
    if not corr.any:
        sol = solve_periodic_linear(lam1, lambda y: lam1(y) * A(y), eps)
        return Delta1Solution(sol.grid, sol.values, sol.residual, corr)

    s2 = profile.sigma**2
    ye = elements.y_grid
    Ae, Be = A(ye), B(ye)
    dDB = profile.DeltaBar_fn(ye, 1)
    f = elements.f
    p1 = (-f[:, 1, 1] - dDB * Ae) if corr.p1 else np.zeros_like(ye)
    w1 = (dDB * Be**2 + Be * f[:, 1, 0]) if corr.w1 else np.zeros_like(ye)
    rate = PeriodicSpline(lam1(ye) - (eps / s2) * p1)
    if rate.min() <= 0:
        raise SingularSystem("corrected decay rate is not positive")

    def solve(wt):
        src = PeriodicSpline(w1 + wt)
        return solve_periodic_linear(rate, lambda y: rate(y) * A(y) + (eps / s2) * src(y), eps)

    sol = solve(np.zeros_like(ye))
    shift = 0.0
    if corr.w1tilde and elements.n_max >= 2:
        base = sol.values
        wt = np.zeros_like(ye)
        for _ in range(max_iter):
            d1 = PeriodicSpline(sol.values)(ye)
            alpha = quasi_static_alpha(elements, Ae, Be, d1, eps)
            wt_new = Be * np.nansum(f[:, 1, 2:] * alpha, axis=1)
            sol = solve(wt_new)
            if np.max(np.abs(wt_new - wt)) < 1e-13:
                break
            wt = wt_new
        scale = max(np.max(np.abs(base)), 1e-300)
        shift = float(np.max(np.abs(sol.values - base)) / scale)
        if shift > 0.1:
            warnings.warn(f"higher-mode coupling shifts delta1 by {shift:.1%}", TruncationWarning)
    return Delta1Solution(sol.grid, sol.values, sol.residual, corr, shift)


def solve_delta1_shooting(profile: RateProfile, lambda1_source: str = "profile",
                          elements: Optional[ElementsProfile] = None) -> PeriodicSpline:
    """Independent check: periodic solution by integrating one period."""
    eps = profile.epsilon
    lam1 = _lambda1_fn(profile, elements, lambda1_source)
    A = profile.A_fn

    def rhs(y, u):
        return (-lam1(y) * (u - A(y))) / eps

    def endpoint(u0):
        r = solve_ivp(rhs, (0.0, 1.0), [u0], method="DOP853", rtol=1e-12, atol=1e-14,
                      dense_output=True)
        return r

    r0 = endpoint(0.0)
    r1 = endpoint(1.0)
    a = r0.y[0, -1]
    slope = r1.y[0, -1] - a
    u0 = a / (1.0 - slope)
    r = endpoint(u0)
    grid = np.arange(len(profile.y_grid) * 8) / (len(profile.y_grid) * 8)
    return PeriodicSpline(r.sol(grid)[0])


def fourier_diff_matrices(n: int):
    """First and second Fourier differentiation matrices on k/n, k < n."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    I = np.eye(n)
    F = np.fft.fft(I, axis=0)
    w = 2j * np.pi * k
    k1 = w.copy()
    if n % 2 == 0:
        k1[n // 2] = 0.0
    D1 = np.real(np.fft.ifft(k1[:, None] * F, axis=0))
    D2 = np.real(np.fft.ifft((w**2)[:, None] * F, axis=0))
    return D1, D2


def solve_delta1_second_order(profile: RateProfile, elements: Optional[ElementsProfile] = None,
                              rho: float = 0.0, n_points: int = 256,
                              lambda1_source: str = "profile") -> Delta1Solution:
    """Periodic collocation for (rho^2/2) eps s^2 d1'' - eps d1' - lam1 (d1 - A) = 0."""
    eps, s2 = profile.epsilon, profile.sigma**2
    lam1 = _lambda1_fn(profile, elements, lambda1_source)
    y = np.arange(n_points) / n_points
    D1, D2 = fourier_diff_matrices(n_points)
    L = lam1(y)
    M = 0.5 * rho**2 * eps * s2 * D2 - eps * D1 - np.diag(L)
    rhs = -L * profile.A_fn(y)
    if np.linalg.cond(M) > 1e13:
        raise SingularSystem("collocation matrix is numerically singular")
    d1 = np.linalg.solve(M, rhs)
    res = float(np.max(np.abs(M @ d1 - rhs)))
    return Delta1Solution(y, d1, res, Corrections())


def solve_alpha_perp(profile: RateProfile, elements: ElementsProfile, delta1: Delta1Solution,
                     refine: bool = False, n_points: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients alpha_n, n = 2..n_max.

    Returns (y_grid, alpha) with alpha of shape (len(y_grid), n_max-1).
    Values are on the elements grid in each slice's own eigenvector
    convention. Quasi-static by default; with ``refine`` the truncated
    periodic system
        eps alpha_n' = -lam_n alpha_n - (eps/s^2) f_n0 - (eps/s^2) sum_{m>=1} f_nm alpha_m
    is solved by the implicit trapezoid rule on ``n_points`` nodes.
    """
    eps, s2 = profile.epsilon, elements.sigma**2
    ye = elements.y_grid
    A, B = profile.A_fn, profile.B_fn
    d1 = delta1.fn
    if not refine:
        return ye, quasi_static_alpha(elements, A(ye), B(ye), d1(ye), eps)

    d = elements.n_max - 1
    n_y = len(ye)
    n_points = max(n_y, n_points // n_y * n_y)
    y = np.arange(n_points) / n_points
    h = 1.0 / n_points
    # Work in the continuous eigenvector frame; a mode whose frame flips
    # over one period makes its coefficient antiperiodic.
    fr = elements.frame
    hol = elements.holonomy
    H = np.diag(hol[2:])

    def interp(arr, twist):
        return twisted_spline(arr, twist)(y)

    lam = np.stack([interp(elements.eigenvalues[:, n], 1.0) for n in range(2, elements.n_max + 1)], axis=1)
    fnm = np.empty((n_points, d, d))
    for i in range(d):
        for j in range(d):
            a, b = i + 2, j + 2
            fnm[:, i, j] = interp(fr[:, a] * fr[:, b] * elements.f[:, a, b], hol[a] * hol[b])
    f0 = np.stack([interp(fr[:, n] * elements.f[:, n, 0], hol[n]) for n in range(2, elements.n_max + 1)],
                  axis=1)
    f1 = np.stack([interp(fr[:, n] * fr[:, 1] * elements.f[:, n, 1], hol[n] * hol[1])
                   for n in range(2, elements.n_max + 1)], axis=1)
    alpha1 = (A(y) - d1(y)) / B(y)
    F = -(eps / s2) * (f0 + alpha1[:, None] * f1)
    G = -np.einsum("kn,nm->knm", lam, np.eye(d)) - (eps / s2) * fnm

    rhs = np.empty(n_points * d)
    I = np.eye(d)
    blocks = {}
    for k in range(n_points):
        kp = (k + 1) % n_points
        if kp:
            Gp, Fp, W = G[kp], F[kp], I
        else:
            Gp, Fp, W = H @ G[0] @ H, H @ F[0], H
        blocks[(k, k)] = -(eps / h) * I - 0.5 * G[k]
        blocks[(k, kp)] = ((eps / h) * I - 0.5 * Gp) @ W
        rhs[k * d:(k + 1) * d] = 0.5 * (F[k] + Fp)
    M = sparse.bmat([[blocks.get((i, j)) for j in range(n_points)] for i in range(n_points)],
                    format="csc")
    sol = spla.spsolve(M, rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("periodic system for the higher modes is singular")
    cont = sol.reshape(n_points, d)[::n_points // n_y]
    return ye, cont * fr[:, 2:]


@dataclass(eq=False)
class InvariantExpansion:
    model: PotentialModel
    profile: RateProfile
    elements: ElementsProfile
    delta1: Delta1Solution
    alpha_grid: np.ndarray
    alpha: np.ndarray
    n_max: int
    refined: bool = False
    n_nodes: int = 2048

    @property
    def sigma(self) -> float:
        return self.profile.sigma

    @property
    def epsilon(self) -> float:
        return self.profile.epsilon

    def alpha1(self, y):
        return (self.profile.A_fn(y) - self.delta1.fn(y)) / self.profile.B_fn(y)

    def _alpha_at(self, y: float, sp) -> np.ndarray:
        if self.n_max < 2:
            return np.zeros(0)
        i = np.nonzero(np.isclose(self.alpha_grid, y % 1.0, rtol=0, atol=1e-12))[0]
        if len(i):
            return self.alpha[i[0]]
        if self.refined:
            el = self.elements
            hol = el.holonomy[2:]
            cont = self.alpha * el.frame[:, 2:]
            a = np.array([float(twisted_spline(cont[:, j], hol[j])(y % 1.0)) for j in range(cont.shape[1])])
            return a * el.local_signs(y, sp)[2:]
        me = matrix_elements(self.model, y, self.sigma, self.n_max, n_nodes=self.n_nodes)
        A, B = float(self.profile.A_fn(y)), float(self.profile.B_fn(y))
        a1 = (A - float(self.delta1.fn(y))) / B
        return -(self.epsilon / self.sigma**2) / me.eigenvalues[2:] * (me.f[2:, 0] + a1 * me.f[2:, 1])

    def slice_density(self, y: float):
        """(x, pi(x, y), p_minus) on the slice grid at y."""
        return _slice_density(self, float(y))

    def p_minus(self, y) -> np.ndarray:
        return np.array([self.slice_density(v)[2] for v in np.atleast_1d(y)])


def _slice_density(exp: InvariantExpansion, y: float):
    cache = exp.__dict__.setdefault("_slices", {})
    key = round(y % 1.0, 14)
    if key in cache:
        return cache[key]
    s = make_slice(exp.model, y, exp.sigma, exp.n_nodes)
    sp = eigen_solve(s, max(exp.n_max, 1))
    Phi = 1.0 + float(exp.alpha1(y)) * sp.phi[1]
    if exp.n_max >= 2:
        a = exp._alpha_at(y, sp)
        Phi = Phi + a @ sp.phi[2:exp.n_max + 1]
    dens = sp.pi0 * Phi
    i0 = int(np.argmin(np.abs(s.x_grid - s.geometry.x_saddle)))
    mass = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s.x_grid))])
    out = (s.x_grid, dens, float(mass[i0] / mass[-1]), float(mass[-1]), Phi, sp)
    if len(cache) > 512:
        cache.clear()
    cache[key] = out
    return out


def build_expansion(model: PotentialModel, profile: RateProfile, elements: Optional[ElementsProfile] = None,
                    n_max: int = 8, corrections: Corrections = Corrections(), refine: bool = False,
                    lambda1_source: str = "profile", rho: float = 0.0, n_y: int = 64,
                    n_nodes: int = 2048) -> InvariantExpansion:
    if elements is None:
        elements = build_elements(model, profile.sigma, n_y=n_y, n_max=max(n_max, 1), n_nodes=n_nodes)
    if rho > 0:
        d1 = solve_delta1_second_order(profile, elements, rho, lambda1_source=lambda1_source)
    else:
        d1 = solve_delta1_first_order(profile, elements, corrections, lambda1_source)
    if n_max >= 2:
        ag, al = solve_alpha_perp(profile, elements, d1, refine=refine)
    else:
        ag, al = elements.y_grid, np.zeros((len(elements.y_grid), 0))
    return InvariantExpansion(model, profile, elements, d1, ag, al, n_max, refine, n_nodes)


@dataclass
class AssembledDensity:
    x_edges: np.ndarray
    y_edges: np.ndarray
    prob: np.ndarray         # bin probabilities, shape (nx, ny)
    normalization: float
    negative: bool


def assemble_pi(expansion: InvariantExpansion, x, y):
    """Density pi(x, y), normalised so that it integrates to one."""
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    out = np.empty(x.shape)
    norm = total_mass(expansion)
    for yv in np.unique(y):
        xs, dens, _, _, _, _ = expansion.slice_density(float(yv))
        sel = y == yv
        out[sel] = np.interp(x[sel], xs, dens, left=0.0, right=0.0) / norm
    return out


def total_mass(expansion: InvariantExpansion, n_y: int | None = None) -> float:
    """Integral of the unnormalised expansion over the unit cell in y."""
    ys = expansion.alpha_grid if n_y is None else np.arange(n_y) / n_y
    return float(np.mean([expansion.slice_density(v)[3] for v in ys]))


def binned_pi(expansion: InvariantExpansion, x_edges, y_edges, n_sub: int = 4) -> AssembledDensity:
    """Probability of each (x, y) bin under the assembled density."""
    x_edges = np.asarray(x_edges, dtype=float)
    y_edges = np.asarray(y_edges, dtype=float)
    prob = np.zeros((len(x_edges) - 1, len(y_edges) - 1))
    negative = False
    for j in range(len(y_edges) - 1):
        a, b = y_edges[j], y_edges[j + 1]
        ys = a + (np.arange(n_sub) + 0.5) * (b - a) / n_sub
        acc = np.zeros(len(x_edges) - 1)
        for yv in ys:
            xs, dens, _, _, _, _ = expansion.slice_density(float(yv))
            negative |= bool(np.any(dens < 0))
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(xs))])
            acc += np.diff(np.interp(x_edges, xs, cum))
        prob[:, j] = acc * (b - a) / n_sub
    norm = prob.sum()
    return AssembledDensity(x_edges, y_edges, prob / norm, float(norm), negative)
