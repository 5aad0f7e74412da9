"""Normality diagnostics for the normalized estimator statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

#: one-sample Kolmogorov-Smirnov critical coefficient at alpha = 0.01
KS_COEFF_ALPHA_01 = 1.628


def normal_cdf(x):
    """Standard normal CDF (machine accurate, well under 1e-7 error)."""
    return ndtr(x)


@dataclass
class KSResult:
    statistic: float
    sample_mean: float
    sample_variance: float
    n: int


def ks_distance(sample) -> KSResult:
    """sup_x |F_n(x) - Phi(x)| against the standard normal, plus sample
    mean and variance."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    cdf = normal_cdf(x)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1)) if n > 1 else 0.0
    return KSResult(statistic=float(max(d_plus, d_minus)),
                    sample_mean=mean, sample_variance=var, n=n)


@dataclass
class NormalitySummary:
    ks: float
    ks_critical: float
    ks_pass: bool
    sample_mean: float
    sample_variance: float
    n: int


def normality_summary(sample, alpha: float = 0.01) -> NormalitySummary:
    """KS test at the requested level with mean/variance sanity values.

    Only alpha = 0.01 (coefficient 1.628) and alpha = 0.05 (1.358) are
    tabulated; other levels fall back to the 0.01 coefficient.
    """
    res = ks_distance(sample)
    coeff = {0.01: KS_COEFF_ALPHA_01, 0.05: 1.358}.get(alpha, KS_COEFF_ALPHA_01)
    crit = coeff / math.sqrt(res.n)
    return NormalitySummary(ks=res.statistic, ks_critical=crit,
                            ks_pass=res.statistic < crit,
                            sample_mean=res.sample_mean,
                            sample_variance=res.sample_variance, n=res.n)
