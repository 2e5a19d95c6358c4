"""Euler-Maruyama simulation of the forced fast-slow diffusion

    dx = (b(x, y)/eps) dt + (sigma/sqrt(eps)) dW^x
    dy = dt + sigma rho dW^y

in the rescaled clock (multiply times by 1/eps for the original clock).
Noise for step k of path p comes from the Philox counter (k, p, stream),
so every path is reproducible on its own and results do not depend on
how paths are split between workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numba import njit, uint64

from .errors import Blowup, ConfigError, ExcessCensoring
from .potential import PotentialModel, find_critical_points
from .rng import philox4x32, split_seed, words_to_unit
from .stats import HittingStats, summarize

FAMILY_CODES = {"tilted_quartic": 0, "free": 1}
STREAM_HITTING = 0
STREAM_COMMITTOR = 1
STREAM_INVARIANT = 2
TABLE_SIZE = 2048

HIT_B, HIT_A, CENSORED, BLOWUP = 0, 1, 2, 3


@dataclass(frozen=True)
class SimConfig:
    model: PotentialModel
    epsilon: float
    sigma: float
    rho: float = 0.0
    dt: Optional[float] = None
    rho_hat: float = 0.3
    seed: int = 0
    n_paths: int = 1000
    max_time: float = 1000.0
    start: Union[tuple, str] = "A:0"
    workers: int = 1

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-3 * self.epsilon)
        if not (self.epsilon > 0 and self.sigma >= 0 and self.rho >= 0 and self.dt > 0):
            raise ConfigError("epsilon, dt must be positive and sigma, rho non-negative")
        if self.dt > 0.01 * self.epsilon * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} exceeds 0.01*epsilon")
        if self.n_paths < 1 or self.max_time <= 0:
            raise ConfigError("n_paths and max_time must be positive")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt))

    def start_point(self, tables=None) -> tuple[float, float]:
        """Resolve the start; "A:y0" means the boundary of A at y0."""
        if isinstance(self.start, str):
            tag, _, val = self.start.partition(":")
            y0 = float(val or 0.0)
            if tag != "A":
                raise ConfigError(f"unknown symbolic start {self.start!r}")
            g = find_critical_points(self.model, y0)
            return g.x_minus + self.rho_hat, y0
        x, y = self.start
        return float(x), float(y)


def _params(model: PotentialModel) -> np.ndarray:
    return np.array([FAMILY_CODES[model.family], model.base_depth, model.tilt_amplitude,
                     model.tilt_phase, model.depth_modulation, 10.0 * model.confinement_L])


def boundary_tables(model: PotentialModel, rho_hat: float, n: int = TABLE_SIZE):
    """a(y) = x_minus(y) + rho_hat and b(y) = x_plus(y) - rho_hat on k/n."""
    a = np.empty(n)
    b = np.empty(n)
    for k in range(n):
        g = find_critical_points(model, k / n)
        a[k] = g.x_minus + rho_hat
        b[k] = g.x_plus - rho_hat
    return a, b


_TABLE_CACHE: dict = {}


def _tables(model: PotentialModel, rho_hat: float):
    key = (model.family, model.base_depth, model.tilt_amplitude, model.tilt_phase,
           model.depth_modulation, rho_hat)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = boundary_tables(model, rho_hat)
    return _TABLE_CACHE[key]


@njit(cache=True, inline="always")
def _drift(p, x, y):
    if p[0] == 1.0:
        return 0.0
    two_pi = 2.0 * math.pi
    a = p[1] * (1.0 + p[4] * math.cos(two_pi * y))
    lam = p[2] * math.cos(two_pi * (y - p[3]))
    return -(x * x * x) + a * x + lam


@njit(cache=True, inline="always")
def _table(tab, y):
    n = tab.shape[0]
    u = (y - math.floor(y)) * n
    i = int(u)
    if i >= n:
        i = n - 1
    f = u - i
    j = i + 1
    if j == n:
        j = 0
    return tab[i] * (1.0 - f) + tab[j] * f


@njit(cache=True, inline="always")
def _normals(step, path, stream, k0, k1):
    c0, c1, c2, c3 = philox4x32(uint64(step) & uint64(0xFFFFFFFF), uint64(step) >> uint64(32),
                                uint64(path), uint64(stream), k0, k1)
    u1 = words_to_unit(c0, c1)
    u2 = words_to_unit(c2, c3)
    r = math.sqrt(-2.0 * math.log(u1))
    t = 2.0 * math.pi * u2
    return r * math.cos(t), r * math.sin(t)


@njit(cache=True, nogil=True)
def _hit_kernel(p, eps, sigma, rho, dt, a_tab, b_tab, use_a, x0s, y0s, paths, stream,
                k0, k1, max_steps, tau, status):
    sx = sigma / math.sqrt(eps) * math.sqrt(dt)
    sy = sigma * rho * math.sqrt(dt)
    bound = p[5]
    for i in range(paths.shape[0]):
        x = x0s[i]
        y = y0s[i]
        path = paths[i]
        status[i] = CENSORED
        tau[i] = max_steps * dt
        gb = x - _table(b_tab, y)
        ga = x - _table(a_tab, y)
        for k in range(max_steps):
            xi, eta = _normals(k, path, stream, k0, k1)
            x = x + _drift(p, x, y) / eps * dt + sx * xi
            y = y + dt + sy * eta
            if abs(x) > bound:
                status[i] = BLOWUP
                tau[i] = (k + 1) * dt
                break
            gb1 = x - _table(b_tab, y)
            if gb1 >= 0.0:
                tau[i] = (k + gb / (gb - gb1)) * dt
                status[i] = HIT_B
                break
            gb = gb1
            if use_a:
                ga1 = x - _table(a_tab, y)
                if ga1 <= 0.0:
                    tau[i] = (k + ga / (ga - ga1)) * dt
                    status[i] = HIT_A
                    break
                ga = ga1


@njit(cache=True, nogil=True)
def _path_kernel(p, eps, sigma, rho, dt, x0, y0, path, stream, k0, k1, n_steps, stride, out):
    sx = sigma / math.sqrt(eps) * math.sqrt(dt)
    sy = sigma * rho * math.sqrt(dt)
    x = x0
    y = y0
    out[0, 0] = 0.0
    out[0, 1] = x
    out[0, 2] = y
    j = 1
    for k in range(n_steps):
        xi, eta = _normals(k, path, stream, k0, k1)
        x = x + _drift(p, x, y) / eps * dt + sx * xi
        y = y + dt + sy * eta
        if abs(x) > p[5]:
            return -(k + 1)
        if (k + 1) % stride == 0:
            out[j, 0] = (k + 1) * dt
            out[j, 1] = x
            out[j, 2] = y
            j += 1
    return j


@njit(cache=True, nogil=True)
def _hist_kernel(p, eps, sigma, rho, dt, x0s, y0s, paths, stream, k0, k1, burn, n_steps, stride,
                 x_lo, x_hi, nx, ny, counts):
    sx = sigma / math.sqrt(eps) * math.sqrt(dt)
    sy = sigma * rho * math.sqrt(dt)
    wx = nx / (x_hi - x_lo)
    for i in range(paths.shape[0]):
        x = x0s[i]
        y = y0s[i]
        path = paths[i]
        for k in range(burn + n_steps):
            xi, eta = _normals(k, path, stream, k0, k1)
            x = x + _drift(p, x, y) / eps * dt + sx * xi
            y = y + dt + sy * eta
            if abs(x) > p[5]:
                return -1
            if k >= burn and (k - burn + 1) % stride == 0:
                ix = int(math.floor((x - x_lo) * wx))
                if ix < 0:
                    ix = 0
                elif ix >= nx:
                    ix = nx - 1
                iy = int((y - math.floor(y)) * ny)
                if iy >= ny:
                    iy = ny - 1
                counts[ix, iy] += 1
    return 0


def _chunks(n: int, workers: int):
    workers = max(1, min(int(workers), n))
    edges = np.linspace(0, n, workers + 1).astype(np.int64)
    return [(edges[i], edges[i + 1]) for i in range(workers)]


def _run_hits(config: SimConfig, x0s, y0s, paths, stream, use_a):
    a_tab, b_tab = _tables(config.model, config.rho_hat)
    k0, k1 = (np.uint64(v) for v in split_seed(config.seed))
    p = _params(config.model)
    tau = np.empty(len(paths))
    status = np.empty(len(paths), dtype=np.int64)

    def work(lo_hi):
        lo, hi = lo_hi
        _hit_kernel(p, config.epsilon, config.sigma, config.rho, config.dt, a_tab, b_tab, use_a,
                    x0s[lo:hi], y0s[lo:hi], paths[lo:hi], stream, k0, k1, config.steps,
                    tau[lo:hi], status[lo:hi])

    chunks = _chunks(len(paths), config.workers)
    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as ex:
            list(ex.map(work, chunks))
    if np.any(status == BLOWUP):
        raise Blowup(f"{int(np.sum(status == BLOWUP))} paths left |x| <= {p[5]}; reduce dt")
    return tau, status


def hitting_times(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-path tau_B (rescaled clock) and a censoring mask."""
    x0, y0 = config.start_point()
    n = config.n_paths
    paths = np.arange(n, dtype=np.int64)
    tau, status = _run_hits(config, np.full(n, x0), np.full(n, y0), paths, STREAM_HITTING, False)
    return tau, status == CENSORED


def first_hit_B(config: SimConfig, allow_censoring: bool = False) -> HittingStats:
    """Statistics of the first time x >= b(y), started from ``config.start``."""
    tau, cens = hitting_times(config)
    st = summarize(tau, cens)
    if st.censored_fraction > 0.01 and not allow_censoring:
        raise ExcessCensoring(f"{st.censored} of {st.n} paths reached max_time", st)
    return st


def empirical_committor(config: SimConfig, x: float, y: float, n: int) -> float:
    """Fraction of n paths from (x, y) that reach A before B."""
    paths = np.arange(n, dtype=np.int64)
    _, status = _run_hits(config, np.full(n, float(x)), np.full(n, float(y)), paths,
                          STREAM_COMMITTOR, True)
    done = status != CENSORED
    return float(np.sum(status == HIT_A) / max(1, np.sum(done)))


def simulate_path(config: SimConfig, path_index: int, stride: int = 1,
                  n_steps: Optional[int] = None) -> np.ndarray:
    """Trajectory of one path as rows (t, x, y), recorded every ``stride`` steps.

    This reproduces the noise used for the same path in first_hit_B.
    """
    x0, y0 = config.start_point()
    n_steps = config.steps if n_steps is None else int(n_steps)
    out = np.empty((n_steps // stride + 1, 3))
    k0, k1 = (np.uint64(v) for v in split_seed(config.seed))
    j = _path_kernel(_params(config.model), config.epsilon, config.sigma, config.rho, config.dt,
                     x0, y0, int(path_index), STREAM_HITTING, k0, k1, n_steps, stride, out)
    if j < 0:
        raise Blowup(f"path {path_index} blew up at step {-j}")
    return out[:j]


@dataclass
class Histogram:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray  # integer counts, shape (nx, ny)

    @property
    def prob(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def left_mass(self, x_split) -> np.ndarray:
        """Per y-bin fraction of samples in x-bins left of x_split (array per y-bin)."""
        xc = 0.5 * (self.x_edges[1:] + self.x_edges[:-1])
        split = np.broadcast_to(np.asarray(x_split, dtype=float), (self.counts.shape[1],))
        out = np.empty(self.counts.shape[1])
        for j in range(self.counts.shape[1]):
            col = self.counts[:, j]
            out[j] = col[xc < split[j]].sum() / col.sum()
        return out


def empirical_invariant(config: SimConfig, burn_in: float, total: float, bins=(40, 8),
                        x_range=(-2.5, 2.5), stride: int = 10) -> Histogram:
    """Time-averaged occupation of (x, y mod 1) bins over n_paths independent paths.

    Each path runs for burn_in + total/n_paths time units. Samples beyond
    ``x_range`` are counted in the outermost bins.
    """
    nx, ny = bins
    n = config.n_paths
    per_path = total / n
    burn = int(round(burn_in / config.dt))
    steps = int(round(per_path / config.dt))
    x0, y0 = config.start_point()
    paths = np.arange(n, dtype=np.int64)
    x0s, y0s = np.full(n, x0), np.full(n, y0)
    k0, k1 = (np.uint64(v) for v in split_seed(config.seed))
    p = _params(config.model)
    chunks = _chunks(n, config.workers)
    parts = [np.zeros((nx, ny), dtype=np.int64) for _ in chunks]

    def work(i):
        lo, hi = chunks[i]
        return _hist_kernel(p, config.epsilon, config.sigma, config.rho, config.dt, x0s[lo:hi],
                            y0s[lo:hi], paths[lo:hi], STREAM_INVARIANT, k0, k1, burn, steps, stride,
                            float(x_range[0]), float(x_range[1]), nx, ny, parts[i])

    if len(chunks) == 1:
        codes = [work(0)]
    else:
        with ThreadPoolExecutor(len(chunks)) as ex:
            codes = list(ex.map(work, range(len(chunks))))
    if any(c < 0 for c in codes):
        raise Blowup("a path escaped the confinement region; reduce dt")
    counts = sum(parts)
    return Histogram(np.linspace(x_range[0], x_range[1], nx + 1), np.linspace(0, 1, ny + 1), counts)


def tv_distance(p, q) -> float:
    """Total-variation distance between two discrete distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.sum(np.abs(p / p.sum() - q / q.sum())))
