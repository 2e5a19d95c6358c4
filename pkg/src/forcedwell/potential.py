"""Forced double-well potentials, slice geometry and assumption checks.

The family implemented here is

    V0(x, y) = x**4/4 - a(y) x**2/2 - lam(y) x + c(y)

with a(y) = base_depth * (1 + depth_modulation * cos(2 pi y)),
lam(y) = tilt_amplitude * cos(2 pi (y - tilt_phase)) and an optional
x-independent offset c(y). All derivatives are analytic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BistabilityLost

TWO_PI = 2.0 * math.pi

FAMILIES = ("tilted_quartic", "free")


def _zero(y):
    return np.zeros_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class PotentialModel:
    """Immutable forced potential, 1-periodic in the slow variable y.

    family ``"free"`` is a zero potential (pure diffusion) used for
    testing the simulator; it is not bistable.
    """

    family: str = "tilted_quartic"
    base_depth: float = 1.0
    tilt_amplitude: float = 0.0
    tilt_phase: float = 0.0
    depth_modulation: float = 0.0
    confinement_M: float = 0.5
    confinement_L: float = 2.0
    offset: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")

    # y-dependent coefficients and their derivatives
    def _a(self, y, k=0):
        w = TWO_PI * np.asarray(y, dtype=float)
        b0, m = self.base_depth, self.depth_modulation
        if k == 0:
            return b0 * (1.0 + m * np.cos(w))
        if k == 1:
            return -TWO_PI * b0 * m * np.sin(w)
        return -(TWO_PI ** 2) * b0 * m * np.cos(w)

    def _lam(self, y, k=0):
        w = TWO_PI * (np.asarray(y, dtype=float) - self.tilt_phase)
        t = self.tilt_amplitude
        if k == 0:
            return t * np.cos(w)
        if k == 1:
            return -TWO_PI * t * np.sin(w)
        return -(TWO_PI ** 2) * t * np.cos(w)

    def _c(self, y, k=0):
        if self.offset is None:
            return _zero(y)
        return np.asarray(self.offset[k](y), dtype=float)

    def V(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float)) + self._c(y)
        return x**4 / 4.0 - self._a(y) * x**2 / 2.0 - self._lam(y) * x + self._c(y)

    def dV_dx(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float))
        return x**3 - self._a(y) * x - self._lam(y)

    def d2V_dx2(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float))
        return 3.0 * x**2 - self._a(y)

    def dV_dy(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float)) + self._c(y, 1)
        return -self._a(y, 1) * x**2 / 2.0 - self._lam(y, 1) * x + self._c(y, 1)

    def d2V_dxdy(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float))
        return -self._a(y, 1) * x - self._lam(y, 1)

    def d2V_dy2(self, x, y):
        x = np.asarray(x, dtype=float)
        if self.family == "free":
            return _zero(x + np.asarray(y, dtype=float)) + self._c(y, 2)
        return -self._a(y, 2) * x**2 / 2.0 - self._lam(y, 2) * x + self._c(y, 2)

    def drift(self, x, y):
        """b(x, y) = -dV0/dx."""
        return -self.dV_dx(x, y)

    def with_offset(self, c: Callable, dc: Callable, d2c: Callable) -> "PotentialModel":
        """Return a copy with an x-independent function c(y) added to V0."""
        return replace(self, offset=(c, dc, d2c))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "base_depth": self.base_depth,
            "tilt_amplitude": self.tilt_amplitude,
            "tilt_phase": self.tilt_phase,
            "depth_modulation": self.depth_modulation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialModel":
        return cls(
            family=d.get("family", "tilted_quartic"),
            base_depth=float(d.get("base_depth", 1.0)),
            tilt_amplitude=float(d.get("tilt_amplitude", 0.0)),
            tilt_phase=float(d.get("tilt_phase", 0.0)),
            depth_modulation=float(d.get("depth_modulation", 0.0)),
        )


def make_tilted_quartic(base_depth: float = 1.0, tilt_amplitude: float = 0.0,
                        tilt_phase: float = 0.0, depth_modulation: float = 0.0) -> PotentialModel:
    """Quartic double well with a periodically oscillating linear tilt."""
    return PotentialModel(
        family="tilted_quartic",
        base_depth=float(base_depth),
        tilt_amplitude=float(tilt_amplitude),
        tilt_phase=float(tilt_phase),
        depth_modulation=float(depth_modulation),
    )


@dataclass(frozen=True)
class WellGeometry:
    y: float
    x_minus: float
    x_saddle: float
    x_plus: float
    h_minus: float
    h_plus: float
    omega_minus: float
    omega_plus: float
    omega0: float
    DeltaBar: Optional[float] = None
    sigma: Optional[float] = None

    @property
    def Delta(self) -> float:
        return self.h_plus - self.h_minus

    def delta_bar(self, sigma: float) -> float:
        """Curvature-corrected depth difference at noise level sigma."""
        return self.Delta + 0.5 * sigma**2 * math.log(self.omega_minus / self.omega_plus)

    def with_sigma(self, sigma: float) -> "WellGeometry":
        return replace(self, sigma=float(sigma), DeltaBar=self.delta_bar(sigma))


SCAN_POINTS = 512
ROOT_TOL = 1e-12


def _polish(model: PotentialModel, y: float, lo: float, hi: float) -> float:
    f = lambda x: float(model.dV_dx(x, y))
    x = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(8):
        fx = f(x)
        if abs(fx) < ROOT_TOL:
            break
        d = float(model.d2V_dx2(x, y))
        if d == 0.0:
            break
        x -= fx / d
    return x


def find_critical_points(model: PotentialModel, y: float, sigma: Optional[float] = None) -> WellGeometry:
    """Locate the two minima and the saddle of V0(., y).

    Scans the drift for sign changes on [-L-1, L+1] and polishes each
    bracket. ``sigma``, when given, fills in ``DeltaBar``.
    """
    y = float(y)
    L = model.confinement_L
    xs = np.linspace(-L - 1.0, L + 1.0, SCAN_POINTS)
    g = model.dV_dx(xs, y)
    s = np.sign(g)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    exact = np.nonzero(s == 0)[0]
    if len(idx) + len(exact) != 3:
        raise BistabilityLost(f"found {len(idx) + len(exact)} zeros of the drift at y={y}")
    roots = []
    for i in idx:
        roots.append(_polish(model, y, xs[i], xs[i + 1]))
    for i in exact:
        roots.append(float(xs[i]))
    xm, x0, xp = sorted(roots)
    V = lambda x: float(model.V(x, y))
    cm, c0, cp = (float(model.d2V_dx2(x, y)) for x in (xm, x0, xp))
    if cm <= 0 or cp <= 0 or c0 >= 0:
        raise BistabilityLost(f"critical points at y={y} are not min/saddle/min")
    geo = WellGeometry(
        y=y, x_minus=xm, x_saddle=x0, x_plus=xp,
        h_minus=V(x0) - V(xm), h_plus=V(x0) - V(xp),
        omega_minus=math.sqrt(cm), omega_plus=math.sqrt(cp), omega0=math.sqrt(-c0),
    )
    return geo.with_sigma(sigma) if sigma is not None else geo


@dataclass
class ValidationReport:
    bistable: bool
    nondegenerate: bool
    confined: bool
    periodic: bool
    M: float
    L: float
    min_curvature: float
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.bistable and self.nondegenerate and self.confined and self.periodic

    def to_dict(self) -> dict:
        return {
            "ok": self.ok, "bistable": self.bistable, "nondegenerate": self.nondegenerate,
            "confined": self.confined, "periodic": self.periodic, "M": self.M, "L": self.L,
            "min_curvature": self.min_curvature, "failures": list(self.failures),
        }


def validate_assumptions(model: PotentialModel, y_grid: Sequence[float] | None = None,
                         curvature_floor: float = 1e-3) -> ValidationReport:
    """Check bistability, nondegeneracy, confinement and periodicity."""
    if y_grid is None:
        y_grid = np.arange(64) / 64.0
    y_grid = np.asarray(y_grid, dtype=float)
    failures = []
    bistable = True
    min_curv = math.inf
    for y in y_grid:
        try:
            g = find_critical_points(model, y)
        except BistabilityLost as exc:
            bistable = False
            failures.append(f"bistability: {exc}")
            continue
        min_curv = min(min_curv, g.omega_minus**2, g.omega_plus**2, g.omega0**2)
    nondegenerate = bistable and min_curv > curvature_floor
    if bistable and not nondegenerate:
        failures.append(f"nondegeneracy: min |db/dx| = {min_curv:.3g}")

    M, L = model.confinement_M, model.confinement_L
    xr = np.concatenate([-np.linspace(L, 10 * L, 200), np.linspace(L, 10 * L, 200)])
    X, Y = np.meshgrid(xr, y_grid)
    confined = bool(np.all(X * model.drift(X, Y) <= -M * X**2))
    if not confined:
        failures.append(f"confinement: x*b <= -{M} x^2 violated for |x| >= {L}")

    xt = np.linspace(-3, 3, 13)
    Xt, Yt = np.meshgrid(xt, y_grid)
    periodic = bool(np.allclose(model.V(Xt, Yt), model.V(Xt, Yt + 1.0), rtol=0, atol=1e-12))
    if not periodic:
        failures.append("periodicity: V0(x, y+1) != V0(x, y)")
    return ValidationReport(bistable, nondegenerate, confined, periodic, M, L,
                            float(min_curv), failures)
