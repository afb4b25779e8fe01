"""Statistical kernel: reference step-size law, KS tests, geometric-tail
fits, and the mutual-information privacy estimator.

The source-free step-size law is a mixture: with probability ``1 - delta``
the step is Uniform[0, c_U], with probability ``delta`` (the chance of a
spuriously anomalous count) it is Uniform[0, c_L].  Normalized by ``c_U``
this has the closed-form CDF ``F(s) = (1-delta)*s + delta*min(s/c_L', 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Hashable, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# Reference distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceCDF:
    """Analytic CDF of the normalized source-free step size on [0, 1]."""

    c_l_prime: float  # c_L / c_U in [0, 1)
    delta: float      # small-step branch probability in [0, 1]

    def __post_init__(self):
        if not (0.0 <= self.c_l_prime < 1.0):
            raise ValueError("c_l_prime must lie in [0, 1)")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError("delta must lie in [0, 1]")

    def __call__(self, s_prime):
        return reference_cdf_eval(self, s_prime)

    def sample(self, rng, size: int) -> np.ndarray:
        """Inverse-CDF sampling of normalized step sizes."""
        u = rng.random(size)
        small = rng.random(size) < self.delta
        widths = np.where(small, self.c_l_prime, 1.0)
        return u * widths


def reference_cdf_eval(ref: ReferenceCDF, s_prime):
    """Evaluate the reference CDF at normalized step sizes in [0, 1].

    For ``c_l_prime == 0`` the small-step branch degenerates to a point mass
    at zero, so F(0) = delta there.
    """
    s = np.asarray(s_prime, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("normalized step size outside [0, 1]")
    if ref.c_l_prime == 0.0:
        small = np.ones_like(s)
    else:
        small = np.minimum(s / ref.c_l_prime, 1.0)
    out = (1.0 - ref.delta) * s + ref.delta * small
    if np.isscalar(s_prime):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n_effective: float


def kolmogorov_pvalue(statistic: float, n_effective: float) -> float:
    """Asymptotic two-sided KS P-value, 2*sum_k (-1)^(k-1) exp(-2 k^2 lam^2).

    ``lam = sqrt(n_effective) * statistic``.  The alternating series is
    truncated once a term is negligible relative to the partial sum; the
    result is clamped to (0, 1].
    """
    if statistic < 0.0 or n_effective <= 0.0:
        raise ValueError("need statistic >= 0 and n_effective > 0")
    lam = math.sqrt(n_effective) * statistic
    if lam < 1e-4:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 100_001):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term <= 1e-10 * max(total, 1e-100) or term < 5e-324:
            break
        sign = -sign
    p = 2.0 * total
    return min(max(p, 1e-300), 1.0)


def ks_one_sample(sample: Sequence[float], cdf: Callable) -> KSResult:
    """One-sample KS statistic and asymptotic P-value against an analytic CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    if m == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, m + 1) / m
    d = float(max((grid - f).max(), (f - (grid - 1.0 / m)).max()))
    d = min(max(d, 0.0), 1.0)
    return KSResult(d, kolmogorov_pvalue(d, m), float(m))


# Below this pooled size the two-sample P-value is computed exactly; the
# asymptotic series is too coarse for tiny samples.
_EXACT_TWO_SAMPLE_LIMIT = 30


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KSResult:
    """Two-sample KS statistic with P-value at n_eff = |a||b|/(|a|+|b|).

    Small pooled samples get the exact conditional null distribution
    (lattice-path counting over equally likely label assignments);
    everything else uses the asymptotic Kolmogorov series.
    """
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    na, nb = xa.size, xb.size
    if na == 0 or nb == 0:
        raise ValueError("empty sample")
    d = _ks_two_sample_statistic(xa, xb)
    n_eff = na * nb / (na + nb)
    if na + nb <= _EXACT_TWO_SAMPLE_LIMIT:
        p = _ks_exact_two_sample_pvalue(na, nb, d)
    else:
        p = kolmogorov_pvalue(d, n_eff)
    return KSResult(d, p, n_eff)


def _ks_exact_two_sample_pvalue(na: int, nb: int, d: float) -> float:
    """P(D >= d) under random labeling of an untied pooled sample.

    Counts monotone lattice paths (one step per pooled observation) whose
    running |F_a - F_b| stays strictly below d; the complement is the exact
    conditional P-value.
    """
    thresh = d - 1e-12
    # paths[i] = number of orderings of i a's and (k - i) b's seen so far
    # with every prefix gap below the threshold.
    paths = [0] * (na + 1)
    paths[0] = 1
    for k in range(1, na + nb + 1):
        new = [0] * (na + 1)
        i_min = max(0, k - nb)
        for i in range(i_min, min(k, na) + 1):
            if abs(i / na - (k - i) / nb) >= thresh:
                continue
            total = 0
            if i > 0:
                total += paths[i - 1]
            if k - i > 0 and i <= na:
                total += paths[i]
            new[i] = total
        paths = new
    good = paths[na]
    return 1.0 - good / math.comb(na + nb, na)


def _ks_two_sample_statistic(xa: np.ndarray, xb: np.ndarray) -> float:
    pooled = np.concatenate([xa, xb])
    pooled.sort(kind="mergesort")
    fa = np.searchsorted(xa, pooled, side="right") / xa.size
    fb = np.searchsorted(xb, pooled, side="right") / xb.size
    return float(np.abs(fa - fb).max())


def ks_two_sample_permutation_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact permutation P-value P(D_perm >= D_obs) by full enumeration.

    Only meant for small samples (it enumerates C(|a|+|b|, |a|) splits); the
    independent oracle for the asymptotic two-sample P-value.
    """
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    na, nb = xa.size, xb.size
    if na + nb > 20:
        raise ValueError("permutation enumeration limited to |a|+|b| <= 20")
    d_obs = _ks_two_sample_statistic(xa, xb)
    pooled = np.concatenate([xa, xb])
    idx = range(na + nb)
    hits = 0
    total = 0
    for pick in combinations(idx, na):
        mask = np.zeros(na + nb, dtype=bool)
        mask[list(pick)] = True
        d = _ks_two_sample_statistic(np.sort(pooled[mask]), np.sort(pooled[~mask]))
        hits += d >= d_obs - 1e-12
        total += 1
    return hits / total


def dkw_epsilon(m: int, alpha: float = 0.05) -> float:
    """Half-width of the DKW band for an m-sample empirical CDF."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * m))


# ---------------------------------------------------------------------------
# Geometric-tail fitting of first-passage times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    """Fitted survival S(t) ~ lam ** (t / r_scale) over the upper tail."""

    lam: float
    r_scale: float
    r_squared: float


def fit_geometric_tail(first_passage_times: Sequence[int], r_scale: float) -> TailFit:
    """Least-squares fit of log-survival against non-dimensionalized time.

    Uses the empirical survival at unique values above the median (points
    with zero survival are dropped since their log diverges).
    """
    times = np.asarray(first_passage_times, dtype=float)
    if times.size < 50:
        raise ValueError("need at least 50 samples")
    if r_scale <= 0.0:
        raise ValueError("r_scale must be positive")
    if np.all(times == times[0]):
        raise ValueError("no tail")
    times = np.sort(times)
    n = times.size
    median = float(np.median(times))
    values, counts = np.unique(times, return_counts=True)
    survival = 1.0 - np.cumsum(counts) / n  # S(v) = P(T > v)
    keep = (values > median) & (survival > 0.0)
    if keep.sum() < 3:
        # Fall back to the whole positive-survival range for very
        # concentrated samples.
        keep = survival > 0.0
    if keep.sum() < 2:
        raise ValueError("no tail")
    tau = values[keep] / r_scale
    log_s = np.log(survival[keep])
    slope, intercept = np.polyfit(tau, log_s, 1)
    pred = slope * tau + intercept
    ss_res = float(np.sum((log_s - pred) ** 2))
    ss_tot = float(np.sum((log_s - log_s.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    lam = math.exp(min(slope, -1e-12))
    return TailFit(lam=lam, r_scale=r_scale, r_squared=r2)


# ---------------------------------------------------------------------------
# Mutual-information privacy estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MIReport:
    mi_nats: float
    permutation_p: float
    sample_count: int
    bin_count: int


def mi_estimate(
    samples: Sequence[tuple[float, Hashable]],
    step_bins: int = 20,
    permutations: int = 200,
    rng=None,
    value_range: tuple[float, float] | None = None,
) -> MIReport:
    """Plug-in discrete mutual information between binned step sizes and
    map labels, with a label-permutation null.

    ``permutation_p`` is (1 + #{MI_perm >= MI_obs}) / (1 + permutations),
    which keeps it in (0, 1].  Labels must be balanced within 10%.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    values = np.asarray([v for v, _ in samples], dtype=float)
    labels_raw = [lab for _, lab in samples]
    uniq = sorted(set(labels_raw), key=repr)
    if len(uniq) < 2:
        raise ValueError("need at least 2 distinct labels")
    label_ids = np.asarray([uniq.index(lab) for lab in labels_raw], dtype=int)
    counts = np.bincount(label_ids, minlength=len(uniq))
    if counts.max() > 1.1 * counts.min():
        raise ValueError("labels unbalanced beyond 10%")
    if value_range is None:
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = value_range
    binned = np.clip(((values - lo) / (hi - lo) * step_bins).astype(int), 0, step_bins - 1)
    mi_obs = _plugin_mi(binned, label_ids, step_bins, len(uniq))
    exceed = 0
    shuffled = label_ids.copy()
    for _ in range(permutations):
        rng.shuffle(shuffled)
        if _plugin_mi(binned, shuffled, step_bins, len(uniq)) >= mi_obs:
            exceed += 1
    p = (1 + exceed) / (1 + permutations)
    return MIReport(
        mi_nats=mi_obs,
        permutation_p=p,
        sample_count=values.size,
        bin_count=step_bins,
    )


def _plugin_mi(binned: np.ndarray, labels: np.ndarray, nbins: int, nlabels: int) -> float:
    joint = np.zeros((nbins, nlabels))
    np.add.at(joint, (binned, labels), 1.0)
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(joint > 0.0, joint / (px * py), 1.0)
        terms = np.where(joint > 0.0, joint * np.log(ratio), 0.0)
    return float(max(terms.sum(), 0.0))
