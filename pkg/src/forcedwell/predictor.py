"""Closed-form mean transition times and regime classification.

All times are on the rescaled clock of the simulator (one forcing period
per unit time); multiply by 1/eps for the unscaled clock.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, NoInteriorPeak
from .jump_model import RateProfile
from .periodic import PeriodicSpline
from .potential import WellGeometry

REGIMES = ("super-adiabatic", "intermediate", "fast-forcing-strong", "fast-forcing-weak")
SEPARATION = 10.0


@dataclass(frozen=True)
class Prediction:
    value: float
    law: str
    regime: str
    error_envelope: float
    validity: bool
    low_confidence: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RegimeInfo:
    label: str
    thresholds: dict
    low_confidence: bool


def _geometries(profile: RateProfile) -> list[WellGeometry]:
    if not profile.geometries:
        raise ConfigError("the rate profile carries no well geometry; build it from a potential")
    return profile.geometries


def barrier_extremes(profile: RateProfile) -> dict:
    """h_-^min, h_+^min, h^min, h^max, H and H_- from the sampled geometry."""
    geo = _geometries(profile)
    hm = np.array([g.h_minus for g in geo])
    hp = np.array([g.h_plus for g in geo])
    h_minus_min, h_plus_min = float(hm.min()), float(hp.min())
    return {
        "h_minus_min": h_minus_min,
        "h_plus_min": h_plus_min,
        "h_min": min(h_minus_min, h_plus_min),
        "h_max": float(max(hm.max(), hp.max())),
        "H": abs(h_minus_min - h_plus_min),
        "H_minus": max(h_minus_min - h_plus_min, 0.0),
    }


def ek_static(geometry: WellGeometry, sigma: float) -> float:
    """Eyring-Kramers mean exit time from the left well of a frozen slice."""
    return 2 * math.pi / (geometry.omega0 * geometry.omega_minus) * math.exp(2 * geometry.h_minus / sigma**2)


def classify_regime(profile: RateProfile, epsilon: Optional[float] = None,
                    sigma: Optional[float] = None) -> RegimeInfo:
    """Regime label from the forcing rate against the slice relaxation rates.

    super-adiabatic below min lambda1, fast forcing above max lambda1,
    intermediate in between; fast forcing is strong-noise when eps < sigma^2.
    The label is flagged low-confidence when eps is within a factor
    SEPARATION of the cut that decided it.
    """
    eps = profile.epsilon if epsilon is None else float(epsilon)
    sigma = profile.sigma if sigma is None else float(sigma)
    lam = profile.lambda1
    lo, hi, mean = float(lam.min()), float(lam.max()), profile.average("lambda1")
    s2 = sigma**2
    thr = {"lambda1_min": lo, "lambda1_max": hi, "lambda1_mean": mean,
           "sigma2": s2, "lambda1_mean_quarter": mean**0.25}
    if profile.geometries:
        b = barrier_extremes(profile)
        thr["exp_h_max"] = math.exp(-2 * b["h_max"] / s2)
        thr["exp_h_min"] = math.exp(-2 * b["h_min"] / s2)

    def near(cut):
        return 1.0 / SEPARATION < eps / cut < SEPARATION

    if eps < lo:
        label, low = "super-adiabatic", near(lo)
    elif eps <= hi:
        label, low = "intermediate", True
    else:
        label = "fast-forcing-strong" if eps < s2 else "fast-forcing-weak"
        low = near(hi) or near(s2)
    return RegimeInfo(label, thr, low)


def r1_envelope(profile: RateProfile) -> float:
    """Error scale of the fast-forcing law with all unnamed constants set to 1."""
    eps, sigma = profile.epsilon, profile.sigma
    s2 = sigma**2
    L = math.log(1.0 / sigma)
    lam = profile.average("lambda1")
    b = barrier_extremes(profile)
    eH, eHm = math.exp(2 * b["H"] / s2), math.exp(2 * b["H_minus"] / s2)
    return (s2 + (eps * L**3 / s2 + eps**2 * L / (sigma**3.5 * math.sqrt(lam)) + lam**2 / eps) * eH
            + lam / eps * (1 + eHm))


def fast_forcing_window(profile: RateProfile, slack: float = 1.0) -> tuple[float, float, bool]:
    """(lower, upper, asymmetry condition) for the fast-forcing law."""
    lam = profile.average("lambda1")
    b = barrier_extremes(profile)
    cond = 0.5 * b["h_minus_min"] < b["h_plus_min"] < 2 * b["h_minus_min"]
    return lam * slack, lam**0.25 / slack, cond


def ek_fast_forcing(profile: RateProfile, slack: float = 1.0) -> Prediction:
    """eps / <r_minus>, with the R1 error scale and window test."""
    eps = profile.epsilon
    value = eps / profile.average("r_minus")
    lo, hi, cond = fast_forcing_window(profile, slack)
    valid = bool(lo < eps < hi and cond)
    reg = classify_regime(profile)
    return Prediction(value, "fast-forcing", reg.label, r1_envelope(profile), valid, reg.low_confidence,
                      {"window": [lo, hi], "asymmetry_condition": cond, "out_of_regime": not valid,
                       "slack": slack})


def _h_minus_spline(profile: RateProfile) -> PeriodicSpline:
    return PeriodicSpline([g.h_minus for g in _geometries(profile)])


def ek_laplace_peak(profile: RateProfile, sigma: Optional[float] = None,
                    flat_tol: float = 1e-10) -> Prediction:
    """Laplace approximation of eps / <r_minus> around the lowest barrier.

    The period average of exp(-2 h_-(y)/sigma^2) is dominated by a window
    of width ~sigma around the minimiser y* of h_-. The result differs from
    the frozen-y law at y* by sqrt(h_-''(y*)) / (sigma sqrt(pi)), reported
    as ``details["extra_factor"]``.
    """
    sigma = profile.sigma if sigma is None else float(sigma)
    h = _h_minus_spline(profile)
    vals = h.values
    if np.ptp(vals) < flat_tol:
        raise NoInteriorPeak("h_minus is constant in y")
    n = len(vals)
    k = int(np.argmin(vals))
    y0 = k / n
    res = minimize_scalar(lambda t: float(h(t)), bracket=(y0 - 1.0 / n, y0, y0 + 1.0 / n),
                          method="golden", tol=1e-10)
    ystar = float(res.x)
    for _ in range(8):
        d1, d2 = float(h(ystar, 1)), float(h(ystar, 2))
        if d2 <= 0:
            break
        step = d1 / d2
        ystar -= step
        if abs(step) < 1e-14:
            break
    curv = float(h(ystar, 2))
    if curv <= 0:
        raise NoInteriorPeak("the lowest barrier is not a nondegenerate minimum")
    ystar %= 1.0
    geo = _geometries(profile)
    omega = PeriodicSpline([g.omega0 * g.omega_minus for g in geo])
    frozen = 2 * math.pi * math.exp(2 * float(h(ystar)) / sigma**2) / float(omega(ystar))
    extra = math.sqrt(curv) / (sigma * math.sqrt(math.pi))
    value = profile.epsilon * frozen * extra
    reg = classify_regime(profile)
    return Prediction(value, "laplace-peak", reg.label, r1_envelope(profile), True, reg.low_confidence,
                      {"y_star": ystar, "h_minus_curvature": curv, "extra_factor": extra,
                       "frozen_time": profile.epsilon * frozen})


def superadiabatic_time(profile: RateProfile, y0: float = 0.0) -> Prediction:
    """eps / r_minus(y0): the frozen law at the starting phase."""
    reg = classify_regime(profile)
    value = profile.epsilon / float(profile.r_minus_fn(y0))
    low = reg.low_confidence or reg.label != "super-adiabatic"
    return Prediction(value, "super-adiabatic", reg.label, profile.epsilon / float(profile.lambda1.min()),
                      reg.label == "super-adiabatic", low, {"y0": float(y0)})


def general_equilibrium_time(profile: RateProfile, delta1, n: int = 4096) -> Prediction:
    """2 eps (1 - <delta1>) / <lambda1 (1 - A delta1)> under the equilibrium measure.

    ``delta1`` is a callable of y. ``details["nu_density"]`` holds the
    leading-order density of that measure on the grid k/n_out.
    """
    eps, sigma = profile.epsilon, profile.sigma
    y = np.arange(n) / n
    lam, A = profile.lambda1_fn(y), profile.A_fn(y)
    d = np.asarray(delta1(y), dtype=float)
    denom = float(np.mean(lam * (1.0 - A * d)))
    value = 2 * eps * (1.0 - float(np.mean(d))) / denom
    nu = lam * (1.0 + A) * (1.0 - d) / denom
    env = math.nan
    if sigma is not None:
        s2, L = sigma**2, math.log(1.0 / sigma)
        sq = float(np.mean(np.sqrt(lam)))
        env = (s2 + eps * L * sq / (s2 * (1.0 - float(np.mean(d))))
               + eps * L**2 * float(np.mean(lam)) / (s2 * denom)
               + eps**2 * L * sq / (sigma**3.5 * denom))
    reg = classify_regime(profile) if sigma is not None else RegimeInfo("", {}, True)
    low = reg.low_confidence or reg.label == "intermediate"
    return Prediction(value, "general-equilibrium", reg.label, env, True, low,
                      {"nu_grid": y[:: n // 256].tolist(), "nu_density": nu[:: n // 256].tolist()})


def predict_all(profile: RateProfile, delta1=None) -> dict:
    """Every law that applies to the profile, keyed by law name."""
    out = {"regime": asdict(classify_regime(profile))}
    out["fast-forcing"] = ek_fast_forcing(profile).to_dict()
    try:
        out["laplace-peak"] = ek_laplace_peak(profile).to_dict()
    except NoInteriorPeak as exc:
        out["laplace-peak"] = {"error": str(exc)}
    if out["regime"]["label"] in ("super-adiabatic", "intermediate"):
        out["super-adiabatic"] = superadiabatic_time(profile).to_dict()
    if delta1 is not None:
        out["general-equilibrium"] = general_equilibrium_time(profile, delta1).to_dict()
    out["barriers"] = barrier_extremes(profile)
    return out
