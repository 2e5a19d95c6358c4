"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import record
from forcedwell.capacity import TransitionSets, capacity_bounds
from forcedwell.cli import RunConfig, main
from forcedwell.invariant_solver import binned_pi, build_elements, build_expansion
from forcedwell.jump_model import (RateProfile, build_rate_profile, delta_periodic, mean_jump_time,
                                   simulate_jump)
from forcedwell.mc_simulator import SimConfig, empirical_invariant, first_hit_B, tv_distance
from forcedwell.potential import find_critical_points
from forcedwell.predictor import classify_regime, ek_fast_forcing
from forcedwell.static_spectral import (eigen_solve, kramers_rates, laplace_In, laplace_In_reference,
                                        laplace_J1_reference, laplace_Jn, log_committor_norm,
                                        log_N_laplace, log_partition_Z0, log_Z0_laplace, make_slice)
from forcedwell.stats import ks_critical

Y64 = np.arange(64) / 64


def _random_profile(rng):
    c = rng.uniform(0.5, 2.0, 3)
    ph = rng.uniform(0.0, 1.0, 2)
    eps = 10 ** rng.uniform(-1.5, 0.5)
    rm = 0.05 * c[0] * np.exp(c[1] * np.cos(2 * np.pi * (Y64 - ph[0])))
    rp = 0.05 * c[2] * np.exp(np.sin(2 * np.pi * (Y64 - ph[1])))
    return RateProfile.from_rates(rm, rp, eps), float(rng.uniform())


def test_criterion_1_two_state_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1234)
    z, cases = [], []
    for k in range(10):
        prof, y0 = _random_profile(rng)
        st = simulate_jump(prof, y0, k, 10_000)
        z.append((st.mean - mean_jump_time(prof, y0)) / st.stderr)
        cases.append((prof, y0))
    const = RateProfile.from_rates(np.full(64, 0.04), np.full(64, 0.1), 0.3)
    const_err = abs(mean_jump_time(const, 0.6) - 0.3 / 0.04)
    elapsed = time.perf_counter() - t0
    ok = max(abs(v) for v in z) <= 3 and const_err <= 1e-10 and elapsed < 10
    # reported only: the worst profile again with 100x the samples
    k = int(np.argmax(np.abs(z)))
    prof, y0 = cases[k]
    big = simulate_jump(prof, y0, 100 + k, 1_000_000)
    z_big = (big.mean - mean_jump_time(prof, y0)) / big.stderr
    record(1, ok, f"max|z|={max(abs(v) for v in z):.2f} (profile {k}; z={z_big:.2f} at 1e6 samples) "
                  f"const_err={const_err:.1e} t={elapsed:.1f}s")
    assert ok


def test_criterion_2_spectral_oracle(symmetric):
    t0 = time.perf_counter()
    err = {}
    for s in (0.45, 0.35):
        lam = eigen_solve(make_slice(symmetric, 0.0, s), 1).eigenvalues[1]
        kr = kramers_rates(find_critical_points(symmetric, 0.0), s).lambda1_kramers
        err[s] = abs(lam / kr - 1)
    elapsed = time.perf_counter() - t0
    ok = err[0.45] <= 0.25 and err[0.35] <= 0.15 and err[0.35] < err[0.45] and elapsed < 30
    record(2, ok, f"rel err {err[0.45]:.4f} (0.45), {err[0.35]:.4f} (0.35); decreasing={err[0.35] < err[0.45]}")
    assert ok


def test_criterion_3_laplace_suite(symmetric, tilted):
    t0 = time.perf_counter()
    worst = 0.0
    ok = True
    for s in (0.3, 0.2):
        for model, y in ((symmetric, 0.0), (tilted, 0.2)):
            sl = make_slice(model, y, s)
            g = sl.geometry
            ratios = [
                math.exp(log_partition_Z0(sl) - log_Z0_laplace(model, g, s)),
                math.exp(log_committor_norm(sl) - log_N_laplace(model, g, s)),
                laplace_In(sl, 0) / laplace_In_reference(g, s, 0),
                laplace_In(sl, 2) / laplace_In_reference(g, s, 2),
                laplace_Jn(sl, 1, 0.0) / laplace_J1_reference(g, s),
            ]
            dev = max(abs(r - 1) for r in ratios) / s**2
            worst = max(worst, dev)
            ok &= dev <= 8
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    record(3, ok, f"max |ratio-1|/sigma^2 = {worst:.2f} (limit 8)")
    assert ok


def test_criterion_4_regime_limits(tilted_profile):
    t0 = time.perf_counter()
    p = tilted_profile
    lam_mean = p.average("lambda1")
    target = float(np.mean(p.lambda1 * p.A) / np.mean(p.lambda1))
    eps_fast = 100 * lam_mean
    d = delta_periodic(p.with_epsilon(eps_fast))
    fast = np.max(np.abs(d.delta - target)) / (lam_mean / eps_fast)
    lam_min = float(p.lambda1.min())
    eps_slow = 0.01 * lam_min
    d = delta_periodic(p.with_epsilon(eps_slow))
    slow = np.max(np.abs(d.delta_fn(Y64) - p.A_fn(Y64))) / (eps_slow / lam_min)
    elapsed = time.perf_counter() - t0
    ok = fast <= 2 and slow <= 2 and elapsed < 5
    record(4, ok, f"fast-forcing dev = {fast:.3f} <lambda1>/eps; superadiabatic dev = {slow:.2f} eps/min lambda1")
    assert ok


def test_criterion_5_static_eyring_kramers(symmetric):
    t0 = time.perf_counter()
    sigma = 0.45
    cfg = SimConfig(symmetric, 1.0, sigma, dt=1e-3, seed=2024, n_paths=4000, start=(-1.0, 0.0),
                    max_time=5000.0)
    st = first_hit_B(cfg)
    ek = math.sqrt(2) * math.pi * math.exp(0.5 / sigma**2)
    ratio = st.mean / ek
    crit = ks_critical(st.n - st.censored)
    elapsed = time.perf_counter() - t0
    ok = abs(ratio - 1) <= 0.25 and st.ks_stat < crit and elapsed < 180
    record(5, ok, f"mean/EK = {ratio:.3f}; KS = {st.ks_stat:.4f} vs {crit:.4f}; t={elapsed:.0f}s")
    assert ok


def test_criterion_6_mean_hitting_time_at_default_point(tilted, tilted_profile):
    t0 = time.perf_counter()
    cfg = SimConfig(tilted, 0.2, 0.45, rho=0.5, seed=0, n_paths=12_000, start="A:0")
    st = first_hit_B(cfg)
    pred = ek_fast_forcing(tilted_profile)
    ratio = st.mean / pred.value
    label = classify_regime(tilted_profile).label
    elapsed = time.perf_counter() - t0
    ok = abs(ratio - 1) <= 0.25 and label == "fast-forcing-strong" and elapsed < 300
    record(6, ok, f"MC/law = {ratio:.3f} ({st.mean:.2f} +- {st.stderr:.2f} vs {pred.value:.2f}); "
                  f"regime {label}; t={elapsed:.0f}s")
    assert ok


def test_criterion_7_invariant_measure(tilted, tilted_profile):
    t0 = time.perf_counter()
    el = build_elements(tilted, 0.45, n_y=64, n_max=8)
    ex = build_expansion(tilted, tilted_profile, el, n_max=8, rho=0.5)
    cfg = SimConfig(tilted, 0.2, 0.45, rho=0.5, seed=11, n_paths=8, start=(-1.0, 0.0))
    hist = empirical_invariant(cfg, burn_in=20.0, total=5e4, bins=(40, 8), x_range=(-2.5, 2.5))
    theory = binned_pi(ex, hist.x_edges, hist.y_edges)
    tv = tv_distance(hist.counts, theory.prob)
    mc_left = hist.left_mass(0.0)
    ye = hist.y_edges
    sub = (np.arange(100) + 0.5) / 100
    th_left = np.array([np.mean(0.5 * (1 - ex.delta1.fn(ye[j] + sub * (ye[j + 1] - ye[j]))))
                        for j in range(8)])
    gap = float(np.max(np.abs(mc_left - th_left)))
    elapsed = time.perf_counter() - t0
    ok = tv < 0.05 and gap <= 0.03 and elapsed < 300
    record(7, ok, f"TV = {tv:.4f}; max left-mass gap = {gap:.4f}; t={elapsed:.0f}s")
    assert ok


def test_criterion_8_capacity_bracket(tilted):
    t0 = time.perf_counter()
    parts, ok = [], True
    for sigma, band in ((0.45, (0.5, 2.0)), (0.35, (0.8, 1.25))):
        prof = build_rate_profile(tilted, sigma, 0.1)
        el = build_elements(tilted, sigma, n_y=64, n_max=8)
        ex = build_expansion(tilted, prof, el, n_max=8, rho=0.5)
        est = capacity_bounds(TransitionSets(tilted, 0.3), prof, ex, rho=0.5)
        lo, hi = est.thomson_lower / est.C0, est.dirichlet_upper / est.C0
        ok &= est.thomson_lower <= est.dirichlet_upper and band[0] <= lo and hi <= band[1]
        parts.append(f"sigma={sigma}: T/C0={lo:.4f} D/C0={hi:.4f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    record(8, ok, "; ".join(parts) + f"; t={elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def verify_runs(tmp_path_factory):
    outs = {}
    for workers in (1, 2):
        d = tmp_path_factory.mktemp(f"verify_w{workers}")
        cfg = RunConfig(out=str(d), seed=0)
        path = d / "cfg.json"
        cfg.save(path)
        code = main(["--config", str(path), "--workers", str(workers), "verify"])
        outs[workers] = (code, d)
    return outs


def test_criterion_9_determinism(verify_runs):
    (c1, d1), (c2, d2) = verify_runs[1], verify_runs[2]
    names = sorted(p.name for p in d1.iterdir() if p.suffix in (".csv", ".json") and p.name != "cfg.json")
    same = all((d1 / n).read_bytes() == (d2 / n).read_bytes() for n in names)
    ok = same and c1 == c2 and len(names) >= 4
    record(9, ok, f"{len(names)} files byte-identical across 1 and 2 workers: {same}; verify exit {c1}")
    assert ok
