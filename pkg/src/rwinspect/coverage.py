"""Omniscient coverage instrumentation and cover-time analysis.

Everything here sits outside the inspector: visit tracking against a
compressed map, empirical cover times and coverage curves, first-passage
sampling for the geometric-tail property, and the hierarchical pairing
procedure that turns pairwise traversal quantiles into a high-probability
cover-time bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvariantViolation, MapError
from .geometry import TWO_PI, InspectorSpec, MapSpec, collision_context
from .grid import CompressedMap
from .policy import AlgoParams, _motion
from .sensing import DetectorModel

_COUNT_CHUNK = 512


class VisitTracker:
    """Per-free-bin first visits and visit counts over one rollout.

    Positions that land in conservatively occupied bins are legal (free
    space can survive inside a bin that merely touches an obstacle), so by
    default they are only tallied; ``strict=True`` turns them into an
    invariant violation for maps where they cannot occur.
    """

    def __init__(self, cm: CompressedMap, strict: bool = False):
        self.cm = cm
        self.strict = strict
        self.first_visit = np.full(cm.n_free, -1, dtype=np.int64)
        self.visits = np.zeros(cm.n_free, dtype=np.int64)
        self.occupied_hits = 0
        self._unseen = cm.n_free
        self.cover_step: Optional[int] = None
        self._index = cm._bin_index

    def record(self, x: float, y: float, t: int) -> None:
        if not self.cm.map_spec.contains(x, y):
            raise InvariantViolation(f"position ({x}, {y}) outside map bounds")
        k = self._index.get(self.cm.bin_of(x, y))
        if k is None:
            if self.strict:
                raise InvariantViolation(f"position ({x}, {y}) maps to an occupied bin")
            self.occupied_hits += 1
            return
        self.visits[k] += 1
        if self.first_visit[k] < 0:
            self.first_visit[k] = t
            self._unseen -= 1
            if self._unseen == 0:
                self.cover_step = t

    @property
    def all_visited(self) -> bool:
        return self._unseen == 0


@dataclass
class CoverageStats:
    """Coverage curve and cover time extracted from a tracker."""

    cover_time: Optional[int]
    total_bins: int
    first_visits: np.ndarray  # sorted step indices of first visits (visited bins only)
    wall_clock: Optional[float]  # seconds elapsed at cover time, when covered

    def fraction_at(self, t: int) -> float:
        return float(np.searchsorted(self.first_visits, t, side="right")) / self.total_bins

    def curve(self, t_max: int) -> tuple[np.ndarray, np.ndarray]:
        ts = np.arange(t_max + 1)
        fracs = np.searchsorted(self.first_visits, ts, side="right") / self.total_bins
        return ts, fracs


def cover_statistics(tracker: VisitTracker, step_seconds: Optional[Sequence[float]] = None) -> CoverageStats:
    """Summarize a tracker; ``step_seconds`` are per-step durations
    (measurement time plus realized travel over speed) used for the
    wall-clock conversion."""
    fv = tracker.first_visit
    visited = np.sort(fv[fv >= 0])
    cover = tracker.cover_step
    wall = None
    if cover is not None and step_seconds is not None:
        durations = np.asarray(step_seconds, dtype=float)
        wall = float(durations[: min(cover, durations.size)].sum())
    return CoverageStats(
        cover_time=cover,
        total_bins=tracker.cm.n_free,
        first_visits=visited,
        wall_clock=wall,
    )


# ---------------------------------------------------------------------------
# Source-free walk rollouts
# ---------------------------------------------------------------------------


class _SourceFreeWalker:
    """Minimal source-free policy walker for coverage and passage rollouts."""

    __slots__ = ("ctx", "cm", "x", "y", "heading", "c_L", "c_U", "threshold",
                 "background", "g_counts", "g_act", "g_redir", "buf", "buf_pos", "t")

    def __init__(self, map_spec, cm, params, detector, inspector, seed, start_bin=None):
        ss = np.random.SeedSequence(seed)
        g_init, self.g_counts, self.g_act, self.g_redir = (
            np.random.default_rng(s) for s in ss.spawn(4)
        )
        self.ctx = collision_context(map_spec, inspector.r_I)
        self.cm = cm
        if start_bin is None:
            for _ in range(100_000):
                x = g_init.uniform(0.0, map_spec.l_x)
                y = g_init.uniform(0.0, map_spec.l_y)
                if self.ctx.is_free(x, y):
                    break
            else:
                raise MapError("map has no free space")
        else:
            x0, y0, x1, y1 = cm.bin_rect(*cm.free_bins[start_bin])
            for _ in range(100_000):
                x = g_init.uniform(x0, x1)
                y = g_init.uniform(y0, y1)
                if self.ctx.is_free(x, y):
                    break
            else:
                raise MapError(f"no free placement inside bin {start_bin}")
        self.x, self.y = x, y
        self.heading = g_init.uniform(0.0, TWO_PI)
        self.c_L, self.c_U = params.c_L, params.c_U
        self.background = detector.background
        self.threshold = detector.threshold
        self.buf: list[int] = []
        self.buf_pos = 0
        self.t = 0

    def bin_index(self) -> Optional[int]:
        return self.cm._bin_index.get(self.cm.bin_of(self.x, self.y))

    def step(self) -> float:
        """Advance one step; returns the realized path length."""
        if self.buf_pos == len(self.buf):
            self.buf = self.g_counts.poisson(self.background, _COUNT_CHUNK).tolist()
            self.buf_pos = 0
        counts = self.buf[self.buf_pos]
        self.buf_pos += 1
        c = self.c_L if counts > self.threshold else self.c_U
        ds = c * float(self.g_act.random())
        heading = (self.heading + TWO_PI * float(self.g_act.random())) % TWO_PI
        self.x, self.y, self.heading, _, _, realized = _motion(
            self.ctx, self.x, self.y, heading, ds, self.g_redir, None
        )
        self.t += 1
        return realized


@dataclass
class FirstPassageSample:
    """First-passage rollout results; censored rollouts hit the step cap."""

    times: np.ndarray
    cap: int
    censored: int

    @property
    def censored_fraction(self) -> float:
        total = self.times.size + self.censored
        return self.censored / total if total else 0.0


def sample_first_passage(
    map_spec: MapSpec,
    cm: CompressedMap,
    params: AlgoParams,
    detector: DetectorModel,
    inspector: InspectorSpec,
    target_bin: int,
    rollouts: int,
    seed: int,
    cap: int = 100_000,
    start_bin: Optional[int] = None,
) -> FirstPassageSample:
    """Steps until the walker first enters ``target_bin`` (free-bin index).

    Starts are uniform over free space (or over ``start_bin``); a start
    already inside the target records zero.  Rollout seeds are
    ``seed + rollout_index``.
    """
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    if not (0 <= target_bin < cm.n_free):
        raise MapError("target bin is not free")
    if np.any(cm.bfs_distances(target_bin) < 0):
        raise MapError("target bin unreachable from part of the free space")
    times = []
    censored = 0
    for k in range(rollouts):
        walker = _SourceFreeWalker(map_spec, cm, params, detector, inspector, seed + k, start_bin)
        if walker.bin_index() == target_bin:
            times.append(0)
            continue
        while walker.t < cap:
            walker.step()
            if walker.bin_index() == target_bin:
                times.append(walker.t)
                break
        else:
            censored += 1
    return FirstPassageSample(np.asarray(times, dtype=np.int64), cap, censored)


def sample_cover_time(
    map_spec: MapSpec,
    cm: CompressedMap,
    params: AlgoParams,
    detector: DetectorModel,
    inspector: InspectorSpec,
    seed: int,
    cap: int = 200_000,
) -> Optional[int]:
    """Cover time (steps until every free bin visited) of one rollout."""
    walker = _SourceFreeWalker(map_spec, cm, params, detector, inspector, seed)
    tracker = VisitTracker(cm)
    tracker.record(walker.x, walker.y, 0)
    while walker.t < cap:
        walker.step()
        tracker.record(walker.x, walker.y, walker.t)
        if tracker.all_visited:
            return tracker.cover_step
    return None


# ---------------------------------------------------------------------------
# Hierarchical high-probability cover-time bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundResult:
    T_bound: float
    confidence: float
    rounds: int
    union_bounds_used: int


def hierarchical_bound(
    cm: CompressedMap,
    pairwise_quantiles: Callable[[int, int, float], float],
    delta: float,
) -> BoundResult:
    """Combine pairwise traversal quantiles into a cover-time bound.

    Groups of bins are repeatedly merged in proximity-ordered pairs; a merge
    of groups A and B carries max(q(A->B) + t_B, q(B->A) + t_A) where t_X is
    the group's accumulated value and q uses the groups' closest member
    bins.  Each of the <= N merges consumes two union bounds, so every
    traversal quantile is taken at confidence 1 - delta/(2N) and the final
    value holds with probability at least 1 - delta.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    n = cm.n_free
    if n == 0:
        raise MapError("no free bins")
    dist0 = cm.bfs_distances(0)
    if np.any(dist0 < 0):
        raise MapError("free bins are disconnected")
    if n == 1:
        return BoundResult(0.0, 1.0 - delta, 0, 2 * n)
    conf = 1.0 - delta / (2.0 * n)
    # All-pairs hop distances for proximity-based pairing.
    dists = np.vstack([cm.bfs_distances(k) for k in range(n)])
    groups: list[dict] = [{"bins": [k], "value": 0.0} for k in range(n)]
    rounds = 0
    while len(groups) > 1:
        rounds += 1
        groups = _merge_round(groups, dists, pairwise_quantiles, conf)
    return BoundResult(
        T_bound=float(groups[0]["value"]),
        confidence=1.0 - delta,
        rounds=rounds,
        union_bounds_used=2 * n,
    )


def _merge_round(groups, dists, pairwise_quantiles, conf):
    # Greedy min-distance matching; physically close pairs merge first.
    m = len(groups)
    pair_costs = []
    for a in range(m):
        for b in range(a + 1, m):
            d = min(int(dists[i, j]) for i in groups[a]["bins"] for j in groups[b]["bins"])
            pair_costs.append((d, a, b))
    pair_costs.sort()
    used = [False] * m
    merged = []
    for _, a, b in pair_costs:
        if used[a] or used[b]:
            continue
        used[a] = used[b] = True
        ga, gb = groups[a], groups[b]
        ia, ib = _closest_members(ga["bins"], gb["bins"], dists)
        forward = pairwise_quantiles(ia, ib, conf) + gb["value"]
        backward = pairwise_quantiles(ib, ia, conf) + ga["value"]
        merged.append({"bins": ga["bins"] + gb["bins"], "value": max(forward, backward)})
    for a in range(m):
        if not used[a]:
            merged.append(groups[a])  # odd leftover, folded into a later round
    return merged


def _closest_members(bins_a, bins_b, dists):
    best = None
    for i in bins_a:
        for j in bins_b:
            d = int(dists[i, j])
            if best is None or d < best[0]:
                best = (d, i, j)
    return best[1], best[2]


def monte_carlo_quantile_estimator(
    map_spec: MapSpec,
    cm: CompressedMap,
    params: AlgoParams,
    detector: DetectorModel,
    inspector: InspectorSpec,
    rollouts: int = 400,
    seed: int = 0,
    cap: int = 100_000,
) -> Callable[[int, int, float], float]:
    """Pairwise traversal-quantile callable backed by cached MC rollouts.

    Quantiles are empirical order statistics of first-passage times from a
    uniform start inside the origin bin to first entry into the target bin.
    """
    cache: dict[tuple[int, int], np.ndarray] = {}

    def quantile(from_bin: int, to_bin: int, confidence: float) -> float:
        key = (from_bin, to_bin)
        if key not in cache:
            sub_seed = seed + 7919 * (from_bin * cm.n_free + to_bin)
            sample = sample_first_passage(
                map_spec, cm, params, detector, inspector,
                target_bin=to_bin, rollouts=rollouts, seed=sub_seed,
                cap=cap, start_bin=from_bin,
            )
            if sample.censored:
                raise InvariantViolation("censored traversal rollouts; raise the cap")
            cache[key] = np.sort(sample.times)
        times = cache[key]
        k = min(max(math.ceil(confidence * times.size), 1), times.size)
        return float(times[k - 1])

    return quantile


# ---------------------------------------------------------------------------
# Exact small-graph cover-time oracle
# ---------------------------------------------------------------------------


def exact_cover_oracle(
    transition: np.ndarray,
    start: int = 0,
    tol: float = 1e-13,
    t_max: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact cover-time pmf of a Markov chain by (node, visited-set) dynamic
    programming.  Returns (ts, probs) with the residual mass below ``tol``.

    Limited to <= 8 strongly connected nodes with row-stochastic rows.
    """
    P = np.asarray(transition, dtype=float)
    n = P.shape[0]
    if P.ndim != 2 or P.shape[1] != n:
        raise ValueError("transition matrix must be square")
    if n > 8:
        raise ValueError("oracle limited to 8 nodes")
    if np.any(P < -1e-15) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("matrix must be row-stochastic")
    reach = np.linalg.matrix_power((P > 0).astype(int) + np.eye(n, dtype=int), n)
    if np.any(reach == 0):
        raise ValueError("chain must be strongly connected")
    full = (1 << n) - 1
    # prob[(mask, node)] over non-absorbed states
    state = {(1 << start, start): 1.0}
    ts = []
    probs = []
    if 1 << start == full:
        return np.array([0]), np.array([1.0])
    residual = 1.0
    for t in range(1, t_max + 1):
        new: dict[tuple[int, int], float] = {}
        absorbed = 0.0
        for (mask, node), p in state.items():
            row = P[node]
            for nxt in range(n):
                q = row[nxt]
                if q == 0.0:
                    continue
                nmask = mask | (1 << nxt)
                w = p * q
                if nmask == full:
                    absorbed += w
                else:
                    key = (nmask, nxt)
                    new[key] = new.get(key, 0.0) + w
        if absorbed > 0.0:
            ts.append(t)
            probs.append(absorbed)
            residual -= absorbed
        state = new
        if residual < tol or not state:
            break
    return np.asarray(ts, dtype=np.int64), np.asarray(probs, dtype=float)
