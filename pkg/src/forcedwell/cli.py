"""Command-line harness: spectral, jump, invariant, capacity, simulate, predict, verify, plot."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ForcedWellError, MissingArtifact
from .potential import PotentialModel, validate_assumptions

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    potential: dict = field(default_factory=lambda: {
        "family": "tilted_quartic", "base_depth": 1.0, "tilt_amplitude": 0.1,
        "tilt_phase": 0.0, "depth_modulation": 0.0})
    sigma: float = 0.45
    epsilon: float = 0.2
    rho: float = 0.5
    rho_hat: float = 0.3
    y_points: int = 64
    x_points: int = 2048
    n_max: int = 8
    paths: int = 12000
    dt: Optional[float] = None
    seed: int = 0
    max_time: float = 1000.0
    jump_samples: int = 10000
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.model()
        except (TypeError, ValueError, ConfigError) as exc:
            raise ConfigError(f"bad potential block: {exc}") from exc
        for name in ("sigma", "epsilon", "rho_hat", "max_time"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.rho < 0:
            raise ConfigError("rho must be non-negative")
        if self.y_points < 16:
            raise ConfigError("y_points must be at least 16")
        if self.x_points < 64 or self.n_max < 1 or self.paths < 1 or self.workers < 1:
            raise ConfigError("x_points, n_max, paths and workers must be positive (x_points >= 64)")
        if self.dt is not None and not (0 < self.dt <= 0.01 * self.epsilon):
            raise ConfigError("dt must lie in (0, 0.01*epsilon]")

    def model(self) -> PotentialModel:
        return PotentialModel.from_dict(self.potential)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        base = cls().potential
        pot = dict(base, **d.get("potential", {}))
        return cls(**{**d, "potential": pot})

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def save(self, path):
        Path(path).write_text(dumps(self.to_dict()) + "\n")


# ---------------------------------------------------------------------------
# output helpers; every float goes out with 17 significant digits

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        return "null"
    return "%.17g" % v


def dumps(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(dumps(v, indent + 1) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, int, float, np.number, np.bool_)):
        return _fmt(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj):
    path.write_text(dumps(obj) + "\n")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# stages

def run_spectral(cfg: RunConfig) -> dict:
    from .jump_model import build_rate_profile
    from .static_spectral import eigen_solve, make_slice

    model = cfg.model()
    prof = build_rate_profile(model, cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
    rows = []
    for i, y in enumerate(prof.y_grid):
        g = prof.geometries[i]
        lam_num = eigen_solve(make_slice(model, y, cfg.sigma, cfg.x_points), 1).eigenvalues[1]
        rows.append([y, g.x_minus, g.x_saddle, g.x_plus, g.h_minus, g.h_plus, prof.r_minus[i],
                     prof.r_plus[i], prof.lambda1[i], lam_num, prof.A[i], prof.B[i], prof.DeltaBar[i]])
    header = ["y", "x_minus", "x_saddle", "x_plus", "h_minus", "h_plus", "r_minus", "r_plus",
              "lambda1_kramers", "lambda1_numeric", "A", "B", "DeltaBar"]
    arr = np.array(rows)
    write_csv(_out(cfg) / "spectral.csv", header, rows)
    return {"rows": len(rows), "lambda1_ratio_min": float(np.min(arr[:, 9] / arr[:, 8])),
            "lambda1_ratio_max": float(np.max(arr[:, 9] / arr[:, 8]))}


def run_jump(cfg: RunConfig) -> dict:
    from .jump_model import build_rate_profile, delta_periodic, mean_jump_time, simulate_jump

    prof = build_rate_profile(cfg.model(), cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
    sol = delta_periodic(prof)
    ys = prof.y_grid
    d = sol.delta_fn(ys)
    rows = [[y, prof.A[i], d[i], mean_jump_time(prof, y)] for i, y in enumerate(ys)]
    write_csv(_out(cfg) / "jump.csv", ["y", "A", "delta", "mean_jump_time"], rows)
    st = simulate_jump(prof, 0.0, cfg.seed, cfg.jump_samples)
    exact = mean_jump_time(prof, 0.0)
    return {"mean_jump_time_y0": exact, "mc_mean": st.mean, "mc_stderr": st.stderr,
            "z_score": (st.mean - exact) / st.stderr, "residual": sol.residual}


def _expansion(cfg: RunConfig, prof):
    from .invariant_solver import build_elements, build_expansion

    el = build_elements(cfg.model(), cfg.sigma, n_y=cfg.y_points, n_max=cfg.n_max, n_nodes=cfg.x_points)
    return build_expansion(cfg.model(), prof, el, n_max=cfg.n_max, rho=cfg.rho, n_nodes=cfg.x_points)


def run_invariant(cfg: RunConfig) -> dict:
    from .invariant_solver import binned_pi, total_mass
    from .jump_model import build_rate_profile

    prof = build_rate_profile(cfg.model(), cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
    ex = _expansion(cfg, prof)
    ys = prof.y_grid
    d1 = ex.delta1.fn(ys)
    pm = ex.p_minus(ys)
    rows = [[y, prof.A[i], d1[i], 0.5 * (1 - d1[i]), pm[i]] for i, y in enumerate(ys)]
    out = _out(cfg)
    write_csv(out / "invariant.csv", ["y", "A", "delta1", "half_one_minus_delta1", "p_minus"], rows)
    xe, ye = np.linspace(-2.5, 2.5, 41), np.linspace(0, 1, 9)
    pi = binned_pi(ex, xe, ye)
    write_csv(out / "pi.csv", ["x_lo", "x_hi", "y_lo", "y_hi", "prob"],
              [[xe[i], xe[i + 1], ye[j], ye[j + 1], pi.prob[i, j]]
               for i in range(len(xe) - 1) for j in range(len(ye) - 1)])
    return {"delta1_sup": float(np.max(np.abs(d1))), "residual": ex.delta1.residual,
            "total_mass": total_mass(ex), "negative_density": pi.negative}


def run_capacity(cfg: RunConfig, expansion=None, profile=None) -> dict:
    from .capacity import TransitionSets, capacity_bounds
    from .jump_model import build_rate_profile

    prof = profile or build_rate_profile(cfg.model(), cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
    ex = expansion or _expansion(cfg, prof)
    est = capacity_bounds(TransitionSets(cfg.model(), cfg.rho_hat), prof, ex, rho=cfg.rho)
    out = est.to_dict()
    write_json(_out(cfg) / "capacity.json", out)
    return out


def _parse_start(s: str):
    if s.startswith("A:"):
        return s
    try:
        x, y = (float(v) for v in s.split(","))
    except ValueError as exc:
        raise ConfigError(f"--start must be 'A:y0' or 'x,y', got {s!r}") from exc
    return (x, y)


def run_simulate(cfg: RunConfig, start="A:0", tag: str = "simulate") -> dict:
    from .mc_simulator import SimConfig, hitting_times
    from .stats import summarize

    sc = SimConfig(cfg.model(), cfg.epsilon, cfg.sigma, cfg.rho, cfg.dt, cfg.rho_hat, cfg.seed,
                   cfg.paths, cfg.max_time, start, cfg.workers)
    tau, cens = hitting_times(sc)
    st = summarize(tau, cens)
    out = _out(cfg)
    write_csv(out / f"{tag}_tau.csv", ["path", "tau", "censored"],
              [[i, t, int(c)] for i, (t, c) in enumerate(zip(tau, cens))])
    rec = st.to_dict()
    rec.update({"epsilon": cfg.epsilon, "sigma": cfg.sigma, "rho": cfg.rho, "dt": sc.dt,
                "seed": cfg.seed, "start": list(sc.start_point()),
                "clock": "rescaled; multiply by 1/epsilon for the unscaled clock"})
    write_json(out / f"{tag}.json", rec)
    return rec


def run_predict(cfg: RunConfig) -> dict:
    from .invariant_solver import solve_delta1_first_order
    from .jump_model import build_rate_profile
    from .predictor import predict_all

    prof = build_rate_profile(cfg.model(), cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d1 = solve_delta1_first_order(prof)
    out = predict_all(prof, d1.fn)
    write_json(_out(cfg) / "predict.json", out)
    return out


# ---------------------------------------------------------------------------
# verify

@dataclass
class Check:
    stage: str
    name: str
    value: float
    tolerance: str
    passed: bool


@dataclass
class VerifyReport:
    checks: list
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "failed_stage": self.failed_stage, "error": self.error,
                "checks": [dataclasses.asdict(c) for c in self.checks]}


def run_verify(cfg: RunConfig) -> VerifyReport:
    """Spectral sweep, jump law, delta1, capacity bracket and SDE vs fast-forcing law."""
    from .capacity import TransitionSets, capacity_bounds
    from .jump_model import build_rate_profile, delta_periodic, mean_jump_time, simulate_jump
    from .mc_simulator import SimConfig, hitting_times
    from .predictor import classify_regime, ek_fast_forcing
    from .stats import summarize

    checks: list[Check] = []
    rep = VerifyReport(checks)
    model = cfg.model()
    stage = "potential"

    def add(name, value, tol, ok):
        checks.append(Check(stage, name, float(value), tol, bool(ok)))

    try:
        vr = validate_assumptions(model, np.arange(cfg.y_points) / cfg.y_points)
        add("assumptions", float(vr.ok), "bistable, nondegenerate, confined, periodic", vr.ok)
        if not vr.ok:
            rep.failed_stage = stage
            rep.error = "; ".join(vr.failures)
            return rep

        stage = "spectral"
        spec = run_spectral(cfg)
        add("lambda1_numeric_over_kramers_min", spec["lambda1_ratio_min"], ">= 0.5", spec["lambda1_ratio_min"] >= 0.5)
        add("lambda1_numeric_over_kramers_max", spec["lambda1_ratio_max"], "<= 2", spec["lambda1_ratio_max"] <= 2)

        stage = "jump"
        prof = build_rate_profile(model, cfg.sigma, cfg.epsilon, n_y=cfg.y_points)
        st = simulate_jump(prof, 0.0, cfg.seed, cfg.jump_samples)
        exact = mean_jump_time(prof, 0.0)
        z = (st.mean - exact) / st.stderr
        add("jump_mc_z_score", z, "|z| <= 4", abs(z) <= 4)
        sol = delta_periodic(prof)
        add("delta_residual", sol.residual, "<= 1e-8", sol.residual <= 1e-8)

        stage = "invariant"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ex = _expansion(cfg, prof)
        d1 = ex.delta1.fn(prof.y_grid)
        add("delta1_sup", np.max(np.abs(d1)), "< 1", np.max(np.abs(d1)) < 1)
        add("delta1_residual", ex.delta1.residual, "<= 1e-6", ex.delta1.residual <= 1e-6)
        if model.tilt_amplitude == 0 and model.depth_modulation == 0:
            add("static_delta1_vanishes", np.max(np.abs(d1)), "<= 1e-10", np.max(np.abs(d1)) <= 1e-10)

        stage = "capacity"
        est = capacity_bounds(TransitionSets(model, cfg.rho_hat), prof, ex, rho=cfg.rho)
        write_json(_out(cfg) / "capacity.json", est.to_dict())
        add("thomson_over_C0", est.thomson_lower / est.C0, "in [0.5, 2]", 0.5 <= est.thomson_lower / est.C0 <= 2)
        add("dirichlet_over_C0", est.dirichlet_upper / est.C0, "in [0.5, 2]",
            0.5 <= est.dirichlet_upper / est.C0 <= 2)
        add("bracket_with_defects", est.dirichlet_upper + est.defect_upper - est.thomson_lower + est.defect_lower,
            ">= 0", est.bracket_ok)

        stage = "simulate"
        pred = ek_fast_forcing(prof)
        sc = SimConfig(model, cfg.epsilon, cfg.sigma, cfg.rho, cfg.dt, cfg.rho_hat, cfg.seed,
                       cfg.paths, cfg.max_time, "A:0", cfg.workers)
        tau, cens = hitting_times(sc)
        hs = summarize(tau, cens)
        write_csv(_out(cfg) / "verify_tau.csv", ["path", "tau", "censored"],
                  [[i, t, int(c)] for i, (t, c) in enumerate(zip(tau, cens))])
        ratio = hs.mean / pred.value
        add("mc_over_fast_forcing", ratio, "in [0.75, 1.25]", 0.75 <= ratio <= 1.25)
        add("censored_fraction", hs.censored_fraction, "< 0.01", hs.censored_fraction < 0.01)
        reg = classify_regime(prof)
        add("regime:" + reg.label, float(reg.low_confidence), "low-confidence flag, reported only", True)
    except ConfigError:
        raise
    except (ForcedWellError, ValueError, FloatingPointError) as exc:
        rep.failed_stage = stage
        rep.error = f"{type(exc).__name__}: {exc}"
    return rep


def _write_verify(cfg: RunConfig, rep: VerifyReport):
    out = _out(cfg)
    write_json(out / "verify.json", rep.to_dict())
    write_csv(out / "verify.csv", ["stage", "check", "value", "tolerance", "result"],
              [[c.stage, c.name, c.value, c.tolerance, "pass" if c.passed else "fail"] for c in rep.checks])


# ---------------------------------------------------------------------------
# plots

def _read_csv(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifact(f"{path} does not exist")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise MissingArtifact(f"{path} has no data rows")
    head, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(head):
        try:
            cols[name] = np.array([float(r[j]) for r in body])
        except ValueError:
            cols[name] = [r[j] for r in body]
    return cols


def render_plots(directory) -> list[Path]:
    """SVG figures for every recognised CSV artifact in ``directory``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    d = Path(directory)
    plt.rcParams["svg.hashsalt"] = "forcedwell"
    plt.rcParams["svg.fonttype"] = "none"
    meta = {"Date": None, "Creator": None}
    made = []

    def save(fig, name):
        p = d / name
        fig.savefig(p, format="svg", metadata=meta)
        plt.close(fig)
        made.append(p)

    if (d / "spectral.csv").exists():
        c = _read_csv(d / "spectral.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(c["y"], c["lambda1_kramers"], label="Kramers")
        ax.plot(c["y"], c["lambda1_numeric"], "--", label="numeric")
        ax.set_xlabel("y")
        ax.set_ylabel("lambda1")
        ax.legend()
        save(fig, "lambda1.svg")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy(c["y"], c["r_minus"], label="r-")
        ax.semilogy(c["y"], c["r_plus"], label="r+")
        ax.set_xlabel("y")
        ax.legend()
        save(fig, "rates.svg")
    if (d / "jump.csv").exists():
        c = _read_csv(d / "jump.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(c["y"], c["A"], ":", label="A")
        ax.plot(c["y"], c["delta"], label="delta")
        if (d / "invariant.csv").exists():
            inv = _read_csv(d / "invariant.csv")
            ax.plot(inv["y"], inv["delta1"], "--", label="delta1")
        ax.set_xlabel("y")
        ax.legend()
        save(fig, "delta.svg")
    for name in ("simulate_tau.csv", "verify_tau.csv"):
        if (d / name).exists():
            c = _read_csv(d / name)
            t = np.sort(c["tau"][c["censored"] == 0])
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.semilogy(t, 1.0 - np.arange(len(t)) / len(t), drawstyle="steps-post")
            ax.set_xlabel("tau (rescaled clock)")
            ax.set_ylabel("survival")
            save(fig, name.replace("_tau.csv", "_survival.svg"))
    if (d / "pi.csv").exists():
        c = _read_csv(d / "pi.csv")
        xe = np.unique(np.concatenate([c["x_lo"], c["x_hi"]]))
        ye = np.unique(np.concatenate([c["y_lo"], c["y_hi"]]))
        grid = c["prob"].reshape(len(xe) - 1, len(ye) - 1)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        m = ax.pcolormesh(ye, xe, grid, shading="flat")
        fig.colorbar(m, ax=ax)
        ax.set_xlabel("y")
        ax.set_ylabel("x")
        save(fig, "pi_heatmap.svg")
    if not made:
        raise MissingArtifact(f"no CSV artifacts found in {d}")
    return made


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="forcedwell", description=__doc__)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--workers", type=int, help="threads for Monte Carlo stages")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("spectral", "jump", "invariant", "capacity", "predict", "verify", "plot"):
        sub.add_parser(name)
    sim = sub.add_parser("simulate", help="first hitting times of B")
    sim.add_argument("--epsilon", type=float)
    sim.add_argument("--sigma", type=float)
    sim.add_argument("--rho", type=float)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--paths", type=int)
    sim.add_argument("--seed", type=int, dest="sim_seed")
    sim.add_argument("--start", default="A:0", help="'A:y0' or 'x,y'")
    sim.add_argument("--max-time", type=float, dest="max_time")
    return ap


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    if args.out:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if args.command == "simulate":
        for k in ("epsilon", "sigma", "rho", "dt", "paths", "max_time"):
            if getattr(args, k) is not None:
                over[k] = getattr(args, k)
        if args.sim_seed is not None:
            over["seed"] = args.sim_seed
    return dataclasses.replace(cfg, **over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        out = _out(cfg)
        if args.command == "verify":
            rep = run_verify(cfg)
            _write_verify(cfg, rep)
            for c in rep.checks:
                print(f"{'pass' if c.passed else 'FAIL'}  {c.stage:<10} {c.name} = {c.value:.6g} ({c.tolerance})")
            if rep.failed_stage:
                print(f"FAIL  stage {rep.failed_stage}: {rep.error}")
            return EXIT_OK if rep.ok else EXIT_FAIL
        if args.command == "plot":
            for p in render_plots(out):
                print(p)
            return EXIT_OK
        run = {"spectral": run_spectral, "jump": run_jump, "invariant": run_invariant,
               "capacity": run_capacity, "predict": run_predict}
        if args.command == "simulate":
            res = run_simulate(cfg, _parse_start(args.start))
        else:
            res = run[args.command](cfg)
        print(dumps(res))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ForcedWellError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
