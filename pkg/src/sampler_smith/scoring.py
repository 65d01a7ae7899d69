"""ABC scoring of program candidates against a target distribution.

A candidate is run ``N`` times; the draws are summarized (four sample moments,
or a G-test p-value per family parameter) and compared with the target
through a noise kernel.  The resulting log-score is the kernel factor of the
search target; the grammar prior is added by the search engines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import special

from .evaluator import DEFAULT_CAP, sample_program
from .expr import INT, REAL, Lambda, TypeTag
from .families import DISCRETE, FAMILY_PARAMS, MomentVector, analytic_moments, check_params, frozen

DEGENERATE_M2 = 1e-12
INTEGER_TOL = 1e-9
TAIL_QUANTILE = 0.999
P_FLOOR = 1e-300


class InvalidSamples(ValueError):
    """Sample set contains non-finite values."""


def sample_moments(xs) -> MomentVector:
    """Population (1/N) moments: mean, std, skewness, excess kurtosis."""
    x = np.asarray(xs, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not np.isfinite(x).all():
        raise InvalidSamples("non-finite sample")
    with np.errstate(all="ignore"):
        mean = x.mean()
        d = x - mean
        m2 = np.mean(d * d)
        std = math.sqrt(m2)
        if m2 < DEGENERATE_M2:
            return MomentVector(float(mean), std, 0.0, 0.0)
        m3 = np.mean(d**3)
        m4 = np.mean(d**4)
        return MomentVector(float(mean), std, float(m3 / m2**1.5), float(m4 / m2**2 - 3.0))


def moment_log_kernel(observed: MomentVector, target: "MomentTarget") -> float:
    """Sum of Normal log-densities of the target statistics centred on the observed ones."""
    total = []
    for o, t, s in zip(observed, target.moments, target.noise):
        r = (t - o) / s
        total.append(-0.5 * r * r - math.log(s) - 0.5 * math.log(2 * math.pi))
    return math.fsum(total)


def g_statistic(counts, probs) -> float:
    """G = 2 sum c ln(c / (p n)); empty bins contribute nothing."""
    c = np.asarray(counts, dtype=float)
    p = np.asarray(probs, dtype=float)
    n = c.sum()
    if n < 1:
        raise ValueError("need at least one observation")
    nz = c > 0
    if (p[nz] <= 0).any():
        return math.inf
    return float(2.0 * np.sum(c[nz] * np.log(c[nz] / (p[nz] * n))))


def chi_square_sf(x: float, df: int) -> float:
    """Chi-square survival function, via the regularized upper incomplete gamma."""
    if df < 1:
        raise ValueError("df must be a positive integer")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def family_bins(family: str, params, n_continuous_bins: int = 10):
    """Bin edges/probabilities for the G-test.

    Returns (kind, support, probs, has_tail).  For discrete families
    ``support`` lists the integer values with their own bin, and when
    ``has_tail`` one extra bin collects everything above them; for continuous
    families it holds the interior cut points of equiprobable bins.
    """
    return _family_bins(family, check_params(family, params), n_continuous_bins)


@lru_cache(maxsize=1024)
def _family_bins(family: str, params: tuple, n_continuous_bins: int):
    if family == "bernoulli":
        p = params[0]
        return "discrete", _frozen_array([0, 1]), _frozen_array([1 - p, p]), False
    dist = frozen(family, params)
    if family in DISCRETE:
        lo = int(dist.support()[0])
        hi = int(dist.ppf(TAIL_QUANTILE))
        ks = np.arange(lo, hi + 1)
        probs = dist.pmf(ks)
        tail = dist.sf(hi)
        return "discrete", _frozen_array(ks), _frozen_array(np.append(probs, tail)), True
    cuts = dist.ppf(np.arange(1, n_continuous_bins) / n_continuous_bins)
    return "continuous", _frozen_array(cuts), _frozen_array(np.full(n_continuous_bins, 1.0 / n_continuous_bins)), False


def _frozen_array(x) -> np.ndarray:
    a = np.array(x)
    a.flags.writeable = False
    return a


def g_test_p_value(samples, family: str, params, n_continuous_bins: int = 10) -> float:
    """p-value of the G-test of ``samples`` against ``family(params)``.

    Discrete families: one bin per support value up to the 0.999 quantile plus
    a tail bin (Bernoulli: {0, 1}).  Samples that are not support integers
    give p = 0.  Continuous families use equiprobable bins.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if not np.isfinite(x).all():
        return 0.0
    kind, support, probs, has_tail = family_bins(family, params, n_continuous_bins)
    if kind == "discrete":
        r = np.rint(x)
        if (np.abs(x - r) > INTEGER_TOL).any() or (r < support[0]).any():
            return 0.0
        if not has_tail and (r > support[-1]).any():
            return 0.0
        idx = np.minimum(r - support[0], len(probs) - 1).astype(int)
        counts = np.bincount(idx, minlength=len(probs))
    else:
        counts = np.bincount(np.searchsorted(support, x, side="right"), minlength=len(probs))
    g = g_statistic(counts, probs)
    return chi_square_sf(g, len(probs) - 1)


# ---------------------------------------------------------------------------
# targets


def _noise4(noise) -> tuple[float, ...]:
    v = tuple(float(s) for s in np.broadcast_to(np.asarray(noise, float), (4,)))
    if any(not (s > 0) for s in v):
        raise ValueError("noise levels must be positive")
    return v


@dataclass(frozen=True)
class MomentTarget:
    moments: MomentVector
    noise: tuple[float, ...] = (0.001,) * 4

    def __post_init__(self):
        object.__setattr__(self, "moments", MomentVector(*map(float, self.moments)))
        object.__setattr__(self, "noise", _noise4(self.noise))

    @property
    def log_score_ceiling(self) -> float:
        return math.fsum(-math.log(s) - 0.5 * math.log(2 * math.pi) for s in self.noise)


@dataclass(frozen=True)
class FamilyTarget:
    family: str
    params: tuple  # one parameter tuple per training lambda

    def __post_init__(self):
        ps = tuple(check_params(self.family, p) for p in self.params)
        if not ps:
            raise ValueError("a family target needs at least one parameter setting")
        object.__setattr__(self, "params", ps)

    log_score_ceiling = 0.0


@dataclass(frozen=True)
class EmpiricalTarget:
    data: tuple
    noise: tuple[float, ...] = (0.001,) * 4
    moments: MomentVector = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(float(x) for x in self.data))
        object.__setattr__(self, "noise", _noise4(self.noise))
        object.__setattr__(self, "moments", sample_moments(self.data))

    @property
    def log_score_ceiling(self) -> float:
        return MomentTarget(self.moments, self.noise).log_score_ceiling


TargetSpec = Union[MomentTarget, FamilyTarget, EmpiricalTarget]


def target_signature(target: TargetSpec) -> tuple[tuple, TypeTag]:
    """(parameters, return type) a candidate program must have."""
    if isinstance(target, FamilyTarget):
        k = len(FAMILY_PARAMS[target.family])
        ret = INT if target.family in DISCRETE else REAL
        return tuple((f"p{i}", REAL) for i in range(k)), ret
    return (), REAL


def moment_target_for(family: str, params, noise=0.001) -> MomentTarget:
    return MomentTarget(analytic_moments(family, params), noise)


def target_to_dict(target: TargetSpec) -> dict:
    if isinstance(target, MomentTarget):
        return {"kind": "moment", "moments": list(target.moments), "noise": list(target.noise)}
    if isinstance(target, FamilyTarget):
        return {"kind": "family", "family": target.family, "params": [list(p) for p in target.params]}
    return {"kind": "empirical", "data": list(target.data), "noise": list(target.noise)}


def target_from_dict(d: dict) -> TargetSpec:
    kind = d.get("kind")
    if kind == "moment":
        if "family" in d:
            return moment_target_for(d["family"], d["params"], d.get("noise", 0.001))
        return MomentTarget(MomentVector(*d["moments"]), d.get("noise", 0.001))
    if kind == "family":
        return FamilyTarget(d["family"], tuple(tuple(np.atleast_1d(p)) for p in d["params"]))
    if kind == "empirical":
        return EmpiricalTarget(tuple(d["data"]), d.get("noise", 0.001))
    raise ValueError(f"unknown target kind {kind!r}")


def target_to_json(target: TargetSpec) -> str:
    return json.dumps(target_to_dict(target), indent=2)


def target_from_json(text: str) -> TargetSpec:
    return target_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# program scoring


@dataclass(frozen=True)
class ScoreConfig:
    n_samples: int = 100
    cap: int = DEFAULT_CAP
    max_cap_fraction: float = 0.5
    continuous_bins: int = 10
    max_steps: int = 20_000  # interpreter node visits per batch; corpus samplers need < 2000

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


def _draws(program: Lambda, args, n: int, cfg: ScoreConfig, rng) -> np.ndarray | None:
    s = sample_program(program, n, args, rng, cfg.cap, cfg.max_steps)
    if s.out_of_steps or not s.finite.all():
        return None
    # the cap budget applies per parameter setting
    if s.capped.reshape(-1, cfg.n_samples).mean(axis=1).max() > cfg.max_cap_fraction:
        return None
    return s.values


def score_program(program: Lambda, target: TargetSpec, cfg: ScoreConfig, rng: np.random.Generator) -> float:
    """Log kernel score of one fresh sample set (per parameter setting for families).

    Family targets run all parameter settings in one batch, in sorted order,
    so the score does not depend on how the settings are listed.
    """
    n = cfg.n_samples
    if isinstance(target, FamilyTarget):
        settings = sorted(target.params)
        cols = np.array(settings, dtype=float).T
        x = _draws(program, [np.repeat(c, n) for c in cols], n * len(settings), cfg, rng)
        if x is None:
            return -math.inf
        logs = []
        for k, params in enumerate(settings):
            p = g_test_p_value(x[k * n : (k + 1) * n], target.family, params, cfg.continuous_bins)
            logs.append(math.log(max(p, P_FLOOR)))
        return math.fsum(logs)
    x = _draws(program, [], n, cfg, rng)
    if x is None:
        return -math.inf
    if isinstance(target, EmpiricalTarget):
        target = MomentTarget(target.moments, target.noise)
    s = moment_log_kernel(sample_moments(x), target)
    # overflowing moments (huge but finite draws) carry no usable signal
    return s if math.isfinite(s) else -math.inf


def penalty(log_score: float, target: TargetSpec) -> float:
    """Unnormalised penalty: the score's shortfall from a perfect match (>= 0)."""
    return target.log_score_ceiling - log_score
