"""Frozen-slice quantities: partition function, committor, Kramers rates,
numerical eigenpairs of the generator in x, y-derivative matrix elements
and reference values from Laplace asymptotics.

Boltzmann factors are always formed relative to a reference energy
(the lowest minimum or the saddle) and the offset is carried separately
as a logarithm, so nothing overflows for large h/sigma**2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .errors import ConvergenceFailure, QuadratureFailure, SignAmbiguity
from .potential import PotentialModel, WellGeometry, find_critical_points

TRUNCATION_EXPONENT = 60.0
DEFAULT_NODES = 2048
QUAD_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class FrozenSlice:
    """Discretisation of one frozen-y slice on a graded grid."""

    model: PotentialModel
    y: float
    sigma: float
    geometry: WellGeometry
    x_grid: np.ndarray
    x_lo: float
    x_hi: float
    V_ref: float  # lowest well energy, used as the Boltzmann reference

    @property
    def V(self) -> np.ndarray:
        return self.model.V(self.x_grid, self.y)

    @property
    def cell_widths(self) -> np.ndarray:
        """Control-volume widths (trapezoid weights) of the grid nodes."""
        x = self.x_grid
        w = np.empty_like(x)
        w[1:-1] = 0.5 * (x[2:] - x[:-2])
        w[0] = 0.5 * (x[1] - x[0])
        w[-1] = 0.5 * (x[-1] - x[-2])
        return w


def _truncation_point(model, y, x_start, V_ref, sigma, direction):
    target = TRUNCATION_EXPONENT * sigma**2 / 2.0
    f = lambda x: float(model.V(x, y)) - V_ref - target
    step = 0.5
    x_far = x_start
    for _ in range(200):
        x_far = x_far + direction * step
        if f(x_far) > 0:
            break
        step *= 1.5
    else:
        raise QuadratureFailure("potential does not grow enough to truncate the domain")
    lo, hi = sorted((x_start, x_far))
    return brentq(f, lo, hi, xtol=1e-12)


def _graded_grid(x_lo, crit, x_hi, sigma, n_nodes):
    """Nodes with density proportional to sum_k 1/(sigma + |x - c_k|).

    The critical abscissas ``crit`` are always nodes.
    """
    crit = np.asarray(crit, dtype=float)

    def F(x):
        d = np.asarray(x, dtype=float)[..., None] - crit
        return np.sum(np.sign(d) * np.log1p(np.abs(d) / sigma), axis=-1)

    breaks = np.concatenate([[x_lo], crit, [x_hi]])
    Fb = F(breaks)
    total = Fb[-1] - Fb[0]
    n_int = n_nodes - 1  # number of intervals
    counts = np.maximum(8, np.round(n_int * np.diff(Fb) / total).astype(int))
    counts[np.argmax(counts)] += n_int - counts.sum()
    pieces = []
    for k in range(len(breaks) - 1):
        a, b = breaks[k], breaks[k + 1]
        fine = np.linspace(a, b, 40 * counts[k] + 1)
        Ff = F(fine)
        targets = np.linspace(Ff[0], Ff[-1], counts[k] + 1)
        xs = np.interp(targets, Ff, fine)
        xs[0], xs[-1] = a, b
        pieces.append(xs[:-1])
    pieces.append(np.array([x_hi]))
    return np.concatenate(pieces)


def make_slice(model: PotentialModel, y: float, sigma: float,
               n_nodes: int = DEFAULT_NODES, x_grid: Optional[np.ndarray] = None) -> FrozenSlice:
    """Build a frozen slice at ``y``.

    Passing ``x_grid`` reuses an existing grid (used for y-differences
    between neighbouring slices).
    """
    geo = find_critical_points(model, y, sigma)
    Vm = float(model.V(geo.x_minus, y))
    Vp = float(model.V(geo.x_plus, y))
    V_ref = min(Vm, Vp)
    if x_grid is None:
        x_lo = _truncation_point(model, y, geo.x_minus, V_ref, sigma, -1)
        x_hi = _truncation_point(model, y, geo.x_plus, V_ref, sigma, +1)
        x_grid = _graded_grid(x_lo, (geo.x_minus, geo.x_saddle, geo.x_plus), x_hi, sigma, n_nodes)
    else:
        x_grid = np.asarray(x_grid, dtype=float)
        x_lo, x_hi = float(x_grid[0]), float(x_grid[-1])
    return FrozenSlice(model, float(y), float(sigma), geo, x_grid, x_lo, x_hi, V_ref)


def _quad(f, a, b, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=points, epsabs=0.0,
                                      epsrel=1e-12, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not np.isfinite(val) or (val != 0 and err > QUAD_RTOL * abs(val)):
        raise QuadratureFailure(f"quadrature error {err:.3g} too large for value {val:.3g}")
    return val


def log_partition_Z0(s: FrozenSlice) -> float:
    """log of the integral of exp(-2 V0 / sigma^2) over the truncated domain."""
    g = s.geometry
    c = 2.0 / s.sigma**2
    f = lambda x: math.exp(-c * (float(s.model.V(x, s.y)) - s.V_ref))
    pts = [p for p in (g.x_minus, g.x_saddle, g.x_plus) if s.x_lo < p < s.x_hi]
    return math.log(_quad(f, s.x_lo, s.x_hi, pts)) - c * s.V_ref


def partition_Z0(s: FrozenSlice) -> float:
    return math.exp(log_partition_Z0(s))


def log_committor_norm(s: FrozenSlice) -> float:
    """log N, N = integral of exp(2 V0 / sigma^2) between the two minima."""
    g = s.geometry
    c = 2.0 / s.sigma**2
    V0 = float(s.model.V(g.x_saddle, s.y))
    f = lambda x: math.exp(c * (float(s.model.V(x, s.y)) - V0))
    return math.log(_quad(f, g.x_minus, g.x_plus, [g.x_saddle])) + c * V0


def committor_norm(s: FrozenSlice) -> float:
    return math.exp(log_committor_norm(s))


def _committor_table(s: FrozenSlice):
    g = s.geometry
    c = 2.0 / s.sigma**2
    V0 = float(s.model.V(g.x_saddle, s.y))
    x = s.x_grid
    i0 = int(np.searchsorted(x, g.x_minus))
    i1 = int(np.searchsorted(x, g.x_plus))
    xs = x[i0:i1 + 1]
    # refine each interval 4x for the cumulative integral
    fine = np.concatenate([np.linspace(xs[k], xs[k + 1], 5)[:-1] for k in range(len(xs) - 1)] + [xs[-1:]])
    f = np.exp(c * (s.model.V(fine, s.y) - V0))
    G = integrate.cumulative_simpson(f, x=fine, initial=0.0)
    return CubicSpline(fine, G), G[-1]


def committor_h0(s: FrozenSlice, x) -> np.ndarray | float:
    """h0(x|y): probability of reaching the left minimum before the right one.

    Equal to 1 left of x_minus and 0 right of x_plus.
    """
    cache = s.__dict__.setdefault("_cache", {})
    if "committor" not in cache:
        cache["committor"] = _committor_table(s)
    G, total = cache["committor"]
    g = s.geometry
    xa = np.asarray(x, dtype=float)
    xc = np.clip(xa, g.x_minus, g.x_plus)
    h = 1.0 - G(xc) / total
    h = np.clip(h, 0.0, 1.0)
    return float(h) if np.ndim(x) == 0 else h


@dataclass(frozen=True)
class RateSlice:
    y: float
    sigma: float
    r_minus: float
    r_plus: float
    lambda1_kramers: float
    A: float
    B: float
    DeltaBar: float
    Z0: Optional[float] = None
    N: Optional[float] = None

    def z0n_diagnostic(self, lambda1: Optional[float] = None) -> float:
        """Z0 * N * lambda1 * B^2 / (2 sigma^2), close to 1 for small sigma."""
        lam = self.lambda1_kramers if lambda1 is None else lambda1
        return self.Z0 * self.N * lam * self.B**2 / (2.0 * self.sigma**2)


def asymmetry(DeltaBar: float, sigma: float) -> tuple[float, float]:
    """A = tanh(DeltaBar/sigma^2), B = sech(DeltaBar/sigma^2), computed stably."""
    u = DeltaBar / sigma**2
    A = math.tanh(u)
    e = math.exp(-2.0 * abs(u))
    B = 2.0 * math.sqrt(e) / (1.0 + e)
    return A, B


def kramers_rates(geometry: WellGeometry, sigma: float,
                  Z0: Optional[float] = None, N: Optional[float] = None) -> RateSlice:
    g = geometry
    s2 = sigma**2
    r_minus = g.omega_minus * g.omega0 / (2 * math.pi) * math.exp(-2 * g.h_minus / s2)
    r_plus = g.omega_plus * g.omega0 / (2 * math.pi) * math.exp(-2 * g.h_plus / s2)
    db = g.delta_bar(sigma)
    A, B = asymmetry(db, sigma)
    return RateSlice(g.y, sigma, r_minus, r_plus, r_minus + r_plus, A, B, db, Z0, N)


def rate_slice(s: FrozenSlice) -> RateSlice:
    """Kramers rates together with numerically integrated Z0 and N."""
    return kramers_rates(s.geometry, s.sigma, partition_Z0(s), committor_norm(s))


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Lowest eigenpairs of the generator in x on one slice.

    ``phi[n]`` are right eigenfunctions, ``pi[n] = pi0 * phi[n]`` the
    adjoint ones, ``psi[n]`` the L2-normalised Schroedinger states;
    all sampled at ``x``. ``mass`` holds the discrete equilibrium
    weights, so that sum(mass * phi[n] * phi[m]) is the identity.
    """

    y: float
    sigma: float
    x: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    mass: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    pi: np.ndarray

    @property
    def pi0(self) -> np.ndarray:
        return self.pi[0]

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * f * g))


def _tridiagonal(s: FrozenSlice):
    """Symmetric tridiagonal form of the negated generator.

    The discretisation is the reversible nearest-neighbour chain whose
    equilibrium weights are exp(-2V/sigma^2) times the cell widths. Its
    symmetrisation is a discrete version of the Schroedinger operator
    (sigma^2/2) d^2/dx^2 - U0 / (2 sigma^2); constants lie exactly in the
    kernel of the chain.
    """
    x = s.x_grid
    V = s.model.V(x, s.y)
    c = 1.0 / s.sigma**2
    h = np.diff(x)
    w = s.cell_widths
    dV = np.diff(V)
    half = 0.5 * s.sigma**2
    # conductance / mass ratios in log-safe form
    up = half * np.exp(-c * dV) / h          # from node i to i+1, divided by mu_i * w_i
    down = half * np.exp(c * dV) / h         # from node i+1 to i
    diag = np.zeros_like(x)
    diag[:-1] += up / w[:-1]
    diag[1:] += down / w[1:]
    off = -half / (h * np.sqrt(w[:-1] * w[1:]))
    return diag, off, V, w


def eigen_solve(s: FrozenSlice, n_max: int = 8) -> SpectralData:
    """Lowest ``n_max + 1`` eigenpairs; signs fixed so phi_1(x_minus) > 0."""
    diag, off, V, w = _tridiagonal(s)
    try:
        lam, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_max),
                                    check_finite=True)
    except LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    vec = vec.T.copy()
    logmu = -2.0 * (V - s.V_ref) / s.sigma**2 + np.log(w)
    mu = np.exp(logmu - logmu.max())
    mass = mu / mu.sum()
    sq = np.sqrt(mass)
    i_minus = int(np.argmin(np.abs(s.x_grid - s.geometry.x_minus)))
    for n in range(vec.shape[0]):
        if n == 0:
            sgn = np.sign(vec[0] @ sq)
        elif n == 1:
            sgn = np.sign(vec[1, i_minus])
        else:
            sgn = np.sign(vec[n, np.argmax(np.abs(vec[n]))])
        vec[n] *= sgn if sgn != 0 else 1.0
    phi = vec / sq
    pi0 = mass / w
    pi = phi * pi0
    psi = vec / np.sqrt(w)
    return SpectralData(s.y, s.sigma, s.x_grid, w, lam, vec, mass, psi, phi, pi)


def phi1_approx(s: FrozenSlice, x) -> np.ndarray | float:
    """Two-well approximation of the first eigenfunction built from h0."""
    u = s.geometry.delta_bar(s.sigma) / s.sigma**2
    h = committor_h0(s, x)
    return math.exp(u) * h - math.exp(-u) * (1.0 - h)


def deltabar_inner(s: FrozenSlice) -> float:
    """Alternative DeltaBar from the equilibrium mass weighted by h0.

    Solves <pi0, h0> = e^{-D/s^2} / (e^{-D/s^2} + e^{D/s^2}) for D.
    """
    w = s.cell_widths
    logp = -2.0 * (s.V - s.V_ref) / s.sigma**2
    p = np.exp(logp - logp.max()) * w
    h = committor_h0(s, s.x_grid)
    left = float(np.sum(p * h))
    right = float(np.sum(p * (1.0 - h)))
    return 0.25 * s.sigma**2 * math.log(right / left)


# ---------------------------------------------------------------------------
# y-derivative matrix elements

@dataclass(frozen=True, eq=False)
class MatrixElements:
    """f[n, m] = sigma^2 <d_y pi_m, phi_n>, g[n, m] = sigma^4 <d_yy pi_m, phi_n>."""

    y: float
    sigma: float
    eigenvalues: np.ndarray
    f: np.ndarray
    g: np.ndarray
    ambiguous_modes: tuple = ()


def matrix_elements(model: PotentialModel, y: float, sigma: float, n_max: int = 8,
                    dy: float = 1e-3, n_nodes: int = DEFAULT_NODES,
                    overlap_min: float = 0.5, strict: bool = False) -> MatrixElements:
    """Matrix elements at one y by central differences between slices.

    Neighbouring slices share the centre grid. Their eigenvectors are
    matched to the centre ones by sign of the overlap; a mode whose
    overlap magnitude falls below ``overlap_min`` sits at an eigenvalue
    crossing. Such modes are reported in ``ambiguous_modes`` and their
    columns set to NaN, or SignAmbiguity is raised when ``strict``.
    """
    c = make_slice(model, y, sigma, n_nodes)
    sp0 = eigen_solve(c, n_max)
    nb = []
    ambiguous = set()
    for yy in (y - dy, y + dy):
        s = make_slice(model, yy, sigma, x_grid=c.x_grid)
        sp = eigen_solve(s, n_max)
        ov = np.einsum("ni,ni->n", sp.vectors, sp0.vectors)
        pi = sp.pi.copy()
        for n, o in enumerate(ov):
            if abs(o) < overlap_min:
                ambiguous.add(n)
            if o < 0:
                pi[n] = -pi[n]
        nb.append(pi)
    if ambiguous and strict:
        raise SignAmbiguity(f"modes {sorted(ambiguous)} cannot be matched across y={y}")
    pim, pip = nb
    d1 = (pip - pim) / (2 * dy)
    d2 = (pip - 2 * sp0.pi + pim) / dy**2
    wphi = sp0.phi * sp0.weights
    f = sigma**2 * wphi @ d1.T
    g = sigma**4 * wphi @ d2.T
    for m in ambiguous:
        f[:, m] = np.nan
        g[:, m] = np.nan
    return MatrixElements(float(y), float(sigma), sp0.eigenvalues, f, g, tuple(sorted(ambiguous)))


# ---------------------------------------------------------------------------
# Laplace asymptotics

def _default_delta(g: WellGeometry) -> float:
    return min(g.x_saddle - g.x_minus, g.x_plus - g.x_saddle)


def laplace_In(s: FrozenSlice, n: int, delta: Optional[float] = None) -> float:
    """I_n = int_{-delta}^{delta} u^n exp(2 (V0(x0+u) - V0(x0)) / sigma^2) du."""
    g = s.geometry
    d = _default_delta(g) if delta is None else delta
    V0 = float(s.model.V(g.x_saddle, s.y))
    c = 2.0 / s.sigma**2
    f = lambda u: u**n * math.exp(c * (float(s.model.V(g.x_saddle + u, s.y)) - V0))
    return _quad(f, -d, 0.0) + _quad(f, 0.0, d)


def laplace_Jn(s: FrozenSlice, n: int, x: float, delta: Optional[float] = None) -> float:
    """J_n(x) = exp(-2 W(x)/sigma^2) int_x^delta u^n exp(2 W(u)/sigma^2) du, with
    W(u) = V0(x0+u) - V0(x0) and x measured from the saddle."""
    g = s.geometry
    d = _default_delta(g) if delta is None else delta
    c = 2.0 / s.sigma**2
    Wx = float(s.model.V(g.x_saddle + x, s.y))
    f = lambda u: u**n * math.exp(c * (float(s.model.V(g.x_saddle + u, s.y)) - Wx))
    pts = [0.0] if x < 0.0 < d else None
    return _quad(f, x, d, pts)


def laplace_In_reference(g: WellGeometry, sigma: float, n: int) -> float:
    """Leading-order value of I_n; zero for odd n (which are higher order)."""
    if n % 2:
        return 0.0
    return float(gamma_fn((n + 1) / 2.0)) * (sigma / g.omega0) ** (n + 1)


def laplace_J1_reference(g: WellGeometry, sigma: float) -> float:
    return sigma**2 / (2.0 * g.omega0**2)


def log_Z0_laplace(model: PotentialModel, g: WellGeometry, sigma: float) -> float:
    c = 2.0 / sigma**2
    a = -c * float(model.V(g.x_minus, g.y)) - math.log(g.omega_minus)
    b = -c * float(model.V(g.x_plus, g.y)) - math.log(g.omega_plus)
    m = max(a, b)
    return 0.5 * math.log(math.pi) + math.log(sigma) + m + math.log(math.exp(a - m) + math.exp(b - m))


def log_N_laplace(model: PotentialModel, g: WellGeometry, sigma: float) -> float:
    c = 2.0 / sigma**2
    return 0.5 * math.log(math.pi) + math.log(sigma) - math.log(g.omega0) + c * float(model.V(g.x_saddle, g.y))
