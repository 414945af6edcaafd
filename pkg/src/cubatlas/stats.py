"""Kruskal-Wallis rank tests with tie correction and effect sizes.

H = [12/(n(n+1)) * sum_j R_j^2/n_j - 3(n+1)] / (1 - sum(t^3 - t)/(n^3 - n))
with mid-ranks for ties; p-values from the chi-square asymptotic
(permutation option for small samples); effect size eps^2 = H/(n-1) with
the interpretation bins of Mangiafico (negligible/small/moderate/large).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

INTERPRETATION_BINS = (
    (0.01, "negligible"),
    (0.08, "small"),
    (0.26, "moderate"),
    (float("inf"), "large"),
)


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class GroupedSample:
    labels: tuple
    values: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        values = tuple(float(v) for v in self.values)
        if len(labels) != len(values):
            raise ValueError("labels and values must have equal length")
        if not all(np.isfinite(values)):
            raise ValueError("values must be finite")
        groups = set(labels)
        if len(groups) < 2:
            raise ValueError(f"need at least 2 groups, got {len(groups)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_groups(cls, *groups) -> "GroupedSample":
        labels = []
        values = []
        for i, g in enumerate(groups):
            labels.extend([i] * len(g))
            values.extend(g)
        return cls(tuple(labels), tuple(values))


@dataclass
class TestResult:
    H: float
    df: int
    n: int
    p: float
    epsilon_sq: float
    interpretation: str
    method: str = "chi2"


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail chi-square probability Q(df/2, x/2)."""
    if x < 0 or df < 1:
        raise ValueError(f"need x >= 0 and df >= 1, got x={x}, df={df}")
    return float(gammaincc(df / 2.0, x / 2.0))


def epsilon_sq(H: float, n: int) -> float:
    """Effect size H/(n-1)."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return H / (n - 1)


def interpret(eps2: float) -> str:
    if eps2 < 0:
        raise ValueError(f"effect size must be nonnegative, got {eps2}")
    for upper, name in INTERPRETATION_BINS:
        if eps2 < upper:
            return name
    raise AssertionError("unreachable")


def reported_interpretation(eps2: float, decimals: int = 2) -> str:
    """Interpretation of the effect size as reported (rounded) in tables."""
    return interpret(round(eps2, decimals))


def _h_statistic(values: np.ndarray, labels: np.ndarray) -> tuple:
    n = len(values)
    ranks = rankdata(values)  # mid-ranks for ties
    groups = np.unique(labels)
    rank_sums = np.array([ranks[labels == g].sum() for g in groups])
    sizes = np.array([(labels == g).sum() for g in groups])
    h = 12.0 / (n * (n + 1)) * float((rank_sums**2 / sizes).sum()) - 3.0 * (n + 1)
    _, counts = np.unique(values, return_counts=True)
    correction = 1.0 - float((counts**3 - counts).sum()) / (n**3 - n)
    if correction == 0.0:
        raise DegenerateSampleError("all values identical; H is undefined")
    return h / correction, len(groups)


def kruskal_wallis(
    sample: GroupedSample, method: str = "chi2", permutations: int = 9999, seed: int = 0
) -> TestResult:
    """Kruskal-Wallis test over the grouped sample.

    method 'chi2' uses the asymptotic null; 'permutation' estimates the
    p-value by seeded label shuffling (intended for n < 50).
    """
    values = np.asarray(sample.values, dtype=float)
    labels = np.asarray(sample.labels)
    H, k = _h_statistic(values, labels)
    H = max(H, 0.0)  # tiny negative roundoff for near-constant samples
    n = len(values)
    df = k - 1
    if method == "chi2":
        p = chi2_sf(H, df)
    elif method == "permutation":
        rng = np.random.Generator(np.random.Philox(key=np.uint64([seed, 0])))
        hits = 0
        for _ in range(permutations):
            shuffled = rng.permutation(labels)
            h_perm, _ = _h_statistic(values, shuffled)
            if h_perm >= H - 1e-12:
                hits += 1
        p = (hits + 1) / (permutations + 1)
    else:
        raise ValueError(f"unknown method {method!r}")
    eps2 = epsilon_sq(H, n)
    # interpretation follows the two-decimal reported effect size, matching
    # the convention of summary tables
    return TestResult(
        H=H,
        df=df,
        n=n,
        p=p,
        epsilon_sq=eps2,
        interpretation=reported_interpretation(eps2),
        method=method,
    )
