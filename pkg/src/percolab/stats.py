"""Binomial intervals and small statistical helpers."""

import math

from scipy.stats import binomtest, norm


def wilson_interval(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    ci = binomtest(int(successes), int(trials)).proportion_ci(level, method="wilson")
    return (float(ci.low), float(ci.high))


def z_value(level=0.95):
    return float(norm.ppf(0.5 + level / 2.0))


def mean_ci(mean, sd, n, level=0.95):
    half = z_value(level) * sd / math.sqrt(n) if n > 1 else math.inf
    return (mean - half, mean + half)


def intervals_disjoint(a, b):
    return a[1] < b[0] or b[1] < a[0]
