"""The measurement-encoded random walk with sequential KS verification.

Each step measures the scalar field at the current position, draws a step
length from Uniform[0, c] where c is c_U for nominal counts and c_L for
anomalous ones, rotates by a uniform angle, and travels.  Only the drawn
step lengths are remembered; every T/n steps the realized step-length
sample is KS-tested against the reference law, and the walk stops early
when the running minimum P-value drops to p_star / n.

The decision logic consumes nothing but (V_e, p_min, t, params).  Poses,
counts, visit times, and path segments live in a separate omniscient record
that the deciding code never reads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import (
    TWO_PI,
    MapSpec,
    InspectorSpec,
    Pose,
    collision_context,
    normalize_heading,
    sample_free_pose,
)
from .grid import CompressedMap
from .sensing import DetectorModel
from .stats import KSResult, ReferenceCDF, ks_one_sample, ks_two_sample
from . import sensing

# Redirect attempts per commanded step before giving up on the remaining
# distance (pathological corners only).
K_MAX = 100

_COUNT_CHUNK = 256


class Decision(enum.Enum):
    CONTINUE = "continue"
    ABSENCE_CONFIRMED = "absence_confirmed"
    ANOMALY_DETECTED = "anomaly_detected"


Reference = Union[ReferenceCDF, np.ndarray]


@dataclass(frozen=True)
class AlgoParams:
    """All inputs of the verification walk."""

    background: float
    l_x: float
    l_y: float
    p_star: float
    T: int
    n: int
    z: float
    c_L: float
    c_U: float
    reference: Optional[Reference] = None

    def __post_init__(self):
        if not (0.0 < self.p_star < 1.0):
            raise ValueError("p_star must lie in (0, 1)")
        if not (0.0 <= self.c_L < self.c_U):
            raise ValueError("need 0 <= c_L < c_U")
        if self.T < 0 or self.n < 1:
            raise ValueError("need T >= 0 and n >= 1")
        if self.T > 0 and (self.T < self.n or self.T % self.n != 0):
            raise ValueError("n must divide T")
        if self.background < 0.0 or self.z < 0.0:
            raise ValueError("background and z must be >= 0")

    @property
    def trigger(self) -> float:
        """Per-test significance p_star / n (Bonferroni allocation)."""
        return self.p_star / self.n

    def analytic_reference(self) -> ReferenceCDF:
        """Reference CDF implied by (background, z, c_L, c_U)."""
        return ReferenceCDF(
            c_l_prime=self.c_L / self.c_U,
            delta=sensing.exceedance_probability(self.background, self.z),
        )

    def resolved_reference(self) -> Reference:
        return self.reference if self.reference is not None else self.analytic_reference()


def default_params(
    background: float,
    map_spec: MapSpec,
    *,
    p_star: float = 0.005,
    T: int = 2000,
    n: int = 20,
    z: float = 3.0,
    c_U: float = 4.0,
    c_L: Optional[float] = None,
    reference: Optional[Reference] = None,
) -> AlgoParams:
    """AlgoParams with the conventional reduced step c_L = c_U / 10."""
    return AlgoParams(
        background=background,
        l_x=map_spec.l_x,
        l_y=map_spec.l_y,
        p_star=p_star,
        T=T,
        n=n,
        z=z,
        c_L=c_U / 10.0 if c_L is None else c_L,
        c_U=c_U,
        reference=reference,
    )


@dataclass
class InspectorMemory:
    """Everything the inspector is allowed to retain."""

    V_e: list[float] = field(default_factory=list)
    p_min: float = 1.0
    t: int = 0


@dataclass
class OmniscientRecord:
    """Harness-side instrumentation; never read by the decision logic."""

    poses: list[tuple[float, float, float]] = field(default_factory=list)
    realized: list[float] = field(default_factory=list)  # per-step realized path length
    redirects: int = 0
    truncated_steps: list[int] = field(default_factory=list)
    segments: Optional[list[float]] = None  # turn-to-turn straight pieces
    first_visit: Optional[np.ndarray] = None
    visits: Optional[np.ndarray] = None
    occupied_hits: int = 0
    cover_step: Optional[int] = None

    def step_seconds(self, inspector: InspectorSpec) -> np.ndarray:
        """Per-step wall-clock durations: measurement plus travel time."""
        realized = np.asarray(self.realized, dtype=float)
        return inspector.measure_seconds + realized / inspector.speed


@dataclass
class TrialResult:
    decision: Decision
    steps: int
    memory: InspectorMemory
    p_trace: list[tuple[int, float]]
    omniscient: Optional[OmniscientRecord] = None


def ks_against_reference(step_sizes: Sequence[float], reference: Reference, c_U: float) -> KSResult:
    """KS test of realized step sizes against the reference law.

    Analytic references use the one-sample test on sizes normalized by c_U;
    empirical references (an array of raw step sizes) use the two-sample
    test.
    """
    if isinstance(reference, ReferenceCDF):
        sample = np.asarray(step_sizes, dtype=float) / c_U
        return ks_one_sample(sample, reference)
    return ks_two_sample(step_sizes, reference)


def _decide(memory: InspectorMemory, params: AlgoParams) -> Decision:
    # The decision function: consumes only inspector-visible state.
    if memory.p_min <= params.trigger:
        return Decision.ANOMALY_DETECTED
    if memory.t >= params.T:
        return Decision.ABSENCE_CONFIRMED
    return Decision.CONTINUE


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------


def _motion(ctx, x, y, heading, ds, redirect_rng, segments):
    """Travel ds with uniform redirects at collisions.

    Returns (x, y, heading, redirects, truncated, realized).  ``segments``,
    when not None, receives each straight piece (turn-to-turn distance).
    """
    remaining = ds
    redirects = 0
    truncated = False
    realized = 0.0
    ux = math.cos(heading)
    uy = math.sin(heading)
    while True:
        hit = ctx.first_hit(x, y, ux, uy, remaining)
        if hit == math.inf or hit >= remaining:
            x += remaining * ux
            y += remaining * uy
            realized += remaining
            if segments is not None:
                segments.append(remaining)
            break
        moved = hit - 1e-9
        if moved > 0.0:
            x += moved * ux
            y += moved * uy
            remaining -= moved
            realized += moved
        if segments is not None:
            segments.append(max(moved, 0.0))
        if redirects >= K_MAX:
            truncated = True
            break
        heading = TWO_PI * redirect_rng.random()
        ux = math.cos(heading)
        uy = math.sin(heading)
        redirects += 1
    return x, y, heading, redirects, truncated, realized


class MotionOutcome:
    __slots__ = ("pose", "redirects", "truncated", "segments")

    def __init__(self, pose, redirects, truncated, segments):
        self.pose = pose
        self.redirects = redirects
        self.truncated = truncated
        self.segments = segments


def execute_motion(
    map_spec: MapSpec,
    pose: Pose,
    ds: float,
    dtheta: float,
    r_I: float,
    rng,
) -> MotionOutcome:
    """Rotate by dtheta, then travel ds, redirecting uniformly at collisions."""
    if ds < 0.0:
        raise ValueError("ds must be >= 0")
    ctx = collision_context(map_spec, r_I)
    if not ctx.is_free(pose.x, pose.y):
        raise ValueError("start pose in collision")
    heading = normalize_heading(pose.heading + dtheta)
    segments: list[float] = []
    x, y, heading, redirects, truncated, _ = _motion(ctx, pose.x, pose.y, heading, ds, rng, segments)
    return MotionOutcome(Pose(x, y, normalize_heading(heading)), redirects, truncated, segments)


# ---------------------------------------------------------------------------
# Step-at-a-time API
# ---------------------------------------------------------------------------


@dataclass
class TrialState:
    """Explicit walk state for advancing one step at a time."""

    params: AlgoParams
    map_spec: MapSpec
    detector: DetectorModel
    inspector: InspectorSpec
    pose: Pose
    memory: InspectorMemory
    rng_counts: np.random.Generator
    rng_actions: np.random.Generator
    rng_redirect: np.random.Generator
    p_trace: list[tuple[int, float]] = field(default_factory=list)
    record: Optional[OmniscientRecord] = None


def start_trial_state(
    params: AlgoParams,
    map_spec: MapSpec,
    detector: DetectorModel,
    inspector: InspectorSpec,
    seed: int,
    record: bool = True,
) -> TrialState:
    """Initial state with the same stream layout run_trial uses."""
    ss = np.random.SeedSequence(seed)
    g_init, g_counts, g_act, g_redir = (np.random.default_rng(s) for s in ss.spawn(4))
    pose = sample_free_pose(map_spec, inspector.r_I, g_init)
    rec = OmniscientRecord(segments=[]) if record else None
    if rec is not None:
        rec.poses.append((pose.x, pose.y, pose.heading))
    return TrialState(
        params=params,
        map_spec=map_spec,
        detector=detector,
        inspector=inspector,
        pose=pose,
        memory=InspectorMemory(),
        rng_counts=g_counts,
        rng_actions=g_act,
        rng_redirect=g_redir,
        record=rec,
    )


def step(state: TrialState) -> Decision:
    """Advance the walk one step in place and return the current decision."""
    params = state.params
    if state.memory.t >= params.T:
        raise ValueError("trial already exhausted its step budget")
    mu = sensing.expected_counts(state.detector, state.map_spec, (state.pose.x, state.pose.y))
    counts = int(state.rng_counts.poisson(mu))
    c = params.c_L if counts > state.detector.threshold else params.c_U
    ds = c * float(state.rng_actions.random())
    dtheta = TWO_PI * float(state.rng_actions.random())
    ctx = collision_context(state.map_spec, state.inspector.r_I)
    heading = normalize_heading(state.pose.heading + dtheta)
    segments = state.record.segments if state.record is not None else None
    x, y, heading, redirects, truncated, realized = _motion(
        ctx, state.pose.x, state.pose.y, heading, ds, state.rng_redirect, segments
    )
    state.pose = Pose(x, y, heading)
    state.memory.V_e.append(ds)
    state.memory.t += 1
    t = state.memory.t
    if state.record is not None:
        state.record.poses.append((x, y, heading))
        state.record.realized.append(realized)
        state.record.redirects += redirects
        if truncated:
            state.record.truncated_steps.append(t)
    if t % (params.T // params.n) == 0:
        res = ks_against_reference(state.memory.V_e, params.resolved_reference(), params.c_U)
        state.p_trace.append((t, res.p_value))
        if res.p_value < state.memory.p_min:
            state.memory.p_min = res.p_value
    return _decide(state.memory, params)


# ---------------------------------------------------------------------------
# Whole-trial runner
# ---------------------------------------------------------------------------


def run_trial(
    params: AlgoParams,
    map_spec: MapSpec,
    detector: DetectorModel,
    inspector: InspectorSpec,
    seed: int,
    *,
    grid: Optional[CompressedMap] = None,
    record_omniscient: bool = True,
    record_poses: bool = False,
    record_segments: bool = False,
) -> TrialResult:
    """Run the verification walk to completion; deterministic given the seed.

    The omniscient record (poses, visits, cover time, segments) is optional
    instrumentation: disabling it must not change the inspector-visible
    result, which a test asserts.
    """
    ss = np.random.SeedSequence(seed)
    g_init, g_counts, g_act, g_redir = (np.random.default_rng(s) for s in ss.spawn(4))
    r_I = inspector.r_I
    ctx = collision_context(map_spec, r_I)
    pose = sample_free_pose(map_spec, r_I, g_init)
    x, y, heading = pose.x, pose.y, pose.heading

    T, n = params.T, params.n
    c_L, c_U = params.c_L, params.c_U
    background = detector.background
    threshold = detector.threshold
    reference = params.resolved_reference()
    source = map_spec.effective_source
    test_every = T // n if T > 0 else 0

    record = OmniscientRecord() if record_omniscient else None
    segments: Optional[list[float]] = [] if (record_segments and record is not None) else None
    if record is not None:
        record.segments = segments
        if record_poses:
            record.poses.append((x, y, heading))
    tracker = None
    if record is not None and grid is not None:
        from .coverage import VisitTracker

        tracker = VisitTracker(grid)
        tracker.record(x, y, 0)

    memory = InspectorMemory()
    V_e = memory.V_e
    p_trace: list[tuple[int, float]] = []

    if T == 0:
        _finalize_record(record, tracker)
        return TrialResult(Decision.ABSENCE_CONFIRMED, 0, memory, p_trace, record)

    u = g_act.random(2 * T).tolist()
    count_buf: list[int] = []
    buf_pos = 0
    clamp = detector.clamp
    if source is not None:
        sx, sy, strength = source.x, source.y, source.strength

    decision = Decision.ABSENCE_CONFIRMED
    steps_taken = T
    for t in range(1, T + 1):
        if source is None:
            if buf_pos == len(count_buf):
                count_buf = g_counts.poisson(background, _COUNT_CHUNK).tolist()
                buf_pos = 0
            counts = count_buf[buf_pos]
            buf_pos += 1
        else:
            mu = background
            if sensing.line_of_sight(map_spec, (x, y), (sx, sy)):
                r = math.hypot(x - sx, y - sy)
                r = r if r > clamp else clamp
                mu = background + strength / (r * r)
            counts = int(g_counts.poisson(mu))
        c = c_L if counts > threshold else c_U
        ds = c * u[2 * t - 2]
        heading = (heading + TWO_PI * u[2 * t - 1]) % TWO_PI
        x, y, heading, redirects, truncated, realized = _motion(
            ctx, x, y, heading, ds, g_redir, segments
        )
        V_e.append(ds)
        memory.t = t
        if record is not None:
            record.realized.append(realized)
            record.redirects += redirects
            if truncated:
                record.truncated_steps.append(t)
            if record_poses:
                record.poses.append((x, y, heading))
            if tracker is not None:
                tracker.record(x, y, t)
        if t % test_every == 0:
            res = ks_against_reference(V_e, reference, c_U)
            p_trace.append((t, res.p_value))
            if res.p_value < memory.p_min:
                memory.p_min = res.p_value
            if memory.p_min <= params.trigger:
                decision = Decision.ANOMALY_DETECTED
                steps_taken = t
                break

    _finalize_record(record, tracker)
    return TrialResult(decision, steps_taken, memory, p_trace, record)


def _finalize_record(record: Optional[OmniscientRecord], tracker) -> None:
    if record is None or tracker is None:
        return
    record.first_visit = tracker.first_visit.copy()
    record.visits = tracker.visits.copy()
    record.occupied_hits = tracker.occupied_hits
    record.cover_step = tracker.cover_step
