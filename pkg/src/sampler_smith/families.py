"""Target distribution families: closed-form moments and bin probabilities."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import stats


class MomentVector(NamedTuple):
    mean: float
    std: float
    skew: float
    kurt: float  # excess kurtosis


FAMILY_PARAMS = {
    "bernoulli": ("p",),
    "geometric": ("p",),
    "poisson": ("rate",),
    "normal": ("mean", "std"),
    "gamma": ("alpha",),
    "beta": ("alpha", "beta"),
}
DISCRETE = frozenset({"bernoulli", "geometric", "poisson"})


class DomainError(ValueError):
    pass


def check_params(family: str, params) -> tuple[float, ...]:
    if family not in FAMILY_PARAMS:
        raise DomainError(f"unknown family {family!r}")
    params = tuple(float(x) for x in np.atleast_1d(params))
    if len(params) != len(FAMILY_PARAMS[family]):
        raise DomainError(f"{family} takes {len(FAMILY_PARAMS[family])} parameters, got {len(params)}")
    ok = {
        "bernoulli": lambda p: 0.0 <= p <= 1.0,
        "geometric": lambda p: 0.0 < p <= 1.0,
        "poisson": lambda r: r > 0.0,
        "normal": lambda m, s: math.isfinite(m) and s > 0.0,
        "gamma": lambda a: a > 0.0,
        "beta": lambda a, b: a > 0.0 and b > 0.0,
    }[family]
    if not all(math.isfinite(x) for x in params) or not ok(*params):
        raise DomainError(f"parameters {params} outside the domain of {family}")
    return params


def analytic_moments(family: str, params) -> MomentVector:
    """Exact mean, std, skewness and excess kurtosis."""
    params = check_params(family, params)
    if family == "bernoulli":
        (p,) = params
        v = p * (1 - p)
        if v == 0:
            return MomentVector(p, 0.0, 0.0, 0.0)
        return MomentVector(p, math.sqrt(v), (1 - 2 * p) / math.sqrt(v), (1 - 6 * v) / v)
    if family == "geometric":
        (p,) = params
        if p == 1.0:
            return MomentVector(1.0, 0.0, 0.0, 0.0)
        q = 1 - p
        return MomentVector(1 / p, math.sqrt(q) / p, (2 - p) / math.sqrt(q), 6 + p * p / q)
    if family == "poisson":
        (r,) = params
        return MomentVector(r, math.sqrt(r), 1 / math.sqrt(r), 1 / r)
    if family == "normal":
        m, s = params
        return MomentVector(m, s, 0.0, 0.0)
    if family == "gamma":
        (a,) = params
        return MomentVector(a, math.sqrt(a), 2 / math.sqrt(a), 6 / a)
    a, b = params
    s = a + b
    mean = a / s
    var = a * b / (s * s * (s + 1))
    skew = 2 * (b - a) * math.sqrt(s + 1) / ((s + 2) * math.sqrt(a * b))
    kurt = 6 * ((a - b) ** 2 * (s + 1) - a * b * (s + 2)) / (a * b * (s + 2) * (s + 3))
    return MomentVector(mean, math.sqrt(var), skew, kurt)


def frozen(family: str, params):
    """The matching scipy.stats distribution."""
    params = check_params(family, params)
    if family == "bernoulli":
        return stats.bernoulli(params[0])
    if family == "geometric":
        return stats.geom(params[0])
    if family == "poisson":
        return stats.poisson(params[0])
    if family == "normal":
        return stats.norm(params[0], params[1])
    if family == "gamma":
        return stats.gamma(params[0])
    return stats.beta(params[0], params[1])


def exact_sampler(family: str, params):
    """Callable (n, rng) -> i.i.d. draws from the family (for oracles and tests)."""
    params = check_params(family, params)
    if family == "bernoulli":
        return lambda n, rng: (rng.random(n) < params[0]).astype(float)
    if family == "geometric":
        return lambda n, rng: rng.geometric(params[0], n).astype(float)
    if family == "poisson":
        return lambda n, rng: rng.poisson(params[0], n).astype(float)
    if family == "normal":
        return lambda n, rng: rng.normal(params[0], params[1], n)
    if family == "gamma":
        return lambda n, rng: rng.gamma(params[0], 1.0, n)
    return lambda n, rng: rng.beta(params[0], params[1], n)
