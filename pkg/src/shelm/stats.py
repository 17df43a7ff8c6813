"""Run-level evaluation statistics: interquartile mean, percentile bootstrap
confidence intervals, and Welch's unequal-variance t-test.

IQM trimming rule: sort, drop floor(n/4) values from each tail, average the
rest. The bootstrap interval is the plain percentile interval of the IQM
over resamples drawn with replacement.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import stats as sps

from .errors import ArgumentError, DegenerateInputError


def _as_scores(values, minimum: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < minimum:
        raise ArgumentError(f"need at least {minimum} values, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ArgumentError("scores must be finite")
    return arr


def iqm(values) -> float:
    """Mean of the values strictly inside the interquartile range."""
    arr = np.sort(_as_scores(values, minimum=4))
    drop = arr.size // 4
    return float(arr[drop: arr.size - drop].mean())


def bootstrap_ci(values, n_boot: int = 10_000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the IQM; deterministic given seed."""
    arr = _as_scores(values, minimum=4)
    if not 0.0 < level < 1.0:
        raise ArgumentError(f"level must be in (0, 1), got {level}")
    if n_boot < 100:
        raise ArgumentError(f"n_boot must be >= 100, got {n_boot}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(n_boot, arr.size))
    boots = np.sort(arr[idx], axis=1)
    drop = arr.size // 4
    boot_iqms = boots[:, drop: arr.size - drop].mean(axis=1)
    alpha = 1.0 - level
    lo = float(np.quantile(boot_iqms, alpha / 2))
    hi = float(np.quantile(boot_iqms, 1 - alpha / 2))
    return lo, hi


class WelchResult(NamedTuple):
    t: float
    dof: float
    p: float
    significant: bool


def welch_t(a, b, alpha: float = 0.025) -> WelchResult:
    """Welch's two-sided t-test with Welch-Satterthwaite degrees of freedom."""
    xa = _as_scores(a, minimum=2)
    xb = _as_scores(b, minimum=2)
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must be in (0, 1), got {alpha}")
    va, vb = xa.var(ddof=1), xb.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise DegenerateInputError("both samples have zero variance")
    na, nb = xa.size, xb.size
    se_a, se_b = va / na, vb / nb
    t = (xa.mean() - xb.mean()) / np.sqrt(se_a + se_b)
    dof = (se_a + se_b) ** 2 / (
        (se_a**2 / (na - 1) if se_a else 0.0) + (se_b**2 / (nb - 1) if se_b else 0.0)
    )
    p = float(2.0 * sps.t.sf(abs(t), dof))
    return WelchResult(t=float(t), dof=float(dof), p=p, significant=p < alpha)
