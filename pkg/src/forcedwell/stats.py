"""Summary statistics for first-passage samples."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class HittingStats:
    n: int
    mean: float
    stderr: float
    ci95_low: float
    ci95_high: float
    censored: int
    ks_stat: float

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n if self.n else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic critical value of the one-sample Kolmogorov statistic."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c / math.sqrt(n)


def summarize(samples, censored_mask=None) -> HittingStats:
    """Statistics over uncensored samples, in their given order."""
    t = np.asarray(samples, dtype=float)
    if censored_mask is None:
        censored_mask = np.zeros(t.shape, dtype=bool)
    ok = t[~censored_mask]
    n = len(ok)
    if n == 0:
        return HittingStats(len(t), math.nan, math.nan, math.nan, math.nan,
                            int(censored_mask.sum()), math.nan)
    mean = math.fsum(ok) / n
    var = math.fsum((ok - mean) ** 2) / (n - 1) if n > 1 else 0.0
    se = math.sqrt(var / n)
    ks = float(sps.kstest(ok / mean, "expon").statistic) if n > 1 and mean > 0 else math.nan
    return HittingStats(len(t), mean, se, mean - 1.96 * se, mean + 1.96 * se,
                        int(censored_mask.sum()), ks)
