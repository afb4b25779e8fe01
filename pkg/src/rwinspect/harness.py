"""Experiment orchestration: config-driven Monte Carlo batches, the privacy
audit (including the leaky counterexample recorder), coverage sweeps, and
tidy plot-data emission.

Reproducibility contract: trial k (numbered over maps x source conditions x
trials, in config order) uses seed ``seed_base + k``.  Results are
byte-identical across reruns and across worker counts because every trial
owns its seed and rows are reduced in task order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, MapError
from .geometry import InspectorSpec, MapSpec, SourceSpec, load_map, sample_free_point, sample_free_pose
from .grid import discretize, validate
from .policy import AlgoParams, Decision, run_trial
from .sensing import DetectorModel
from .stats import dkw_epsilon, ks_two_sample, mi_estimate
from . import coverage as cov

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# p_star used when a run must never self-terminate (privacy-audit data
# collection wants full-length records).
_NEVER_TRIGGER = 1e-300


@dataclass(frozen=True)
class SourceCondition:
    """One experimental source arm: absent, fixed, or randomly placed."""

    strength: float = 0.0
    x: Optional[float] = None
    y: Optional[float] = None
    random_position: bool = False

    @property
    def present(self) -> bool:
        return self.strength > 0.0

    @property
    def label(self) -> str:
        if not self.present:
            return "none"
        if self.random_position:
            return f"s{self.strength:g}@random"
        return f"s{self.strength:g}@({self.x:g},{self.y:g})"

    def place(self, map_spec: MapSpec, seed: int) -> MapSpec:
        """Map with this condition applied; random placement is seeded."""
        if not self.present:
            return map_spec.without_source()
        if self.random_position:
            rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5E0)))
            point = sample_free_point(map_spec, rng)
            return map_spec.with_source(SourceSpec(point.x, point.y, self.strength))
        return map_spec.with_source(SourceSpec(self.x, self.y, self.strength))


@dataclass(frozen=True)
class CoverageSweep:
    c_u_values: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)
    trials: int = 50
    max_steps: int = 100_000
    discretizations: tuple[float, ...] = (2.0, 1.0, 0.5)


@dataclass
class ExperimentConfig:
    maps: list[Path]
    inspector: InspectorSpec
    detector: DetectorModel
    algorithm: AlgoParams
    trials_per_condition: int
    source_conditions: list[SourceCondition]
    seed_base: int
    discretizations: list[float] = field(default_factory=list)
    coverage: CoverageSweep = field(default_factory=CoverageSweep)

    def load_maps(self) -> list[tuple[str, MapSpec]]:
        out = []
        for path in self.maps:
            out.append((Path(path).stem, load_map(path)))
        return out


def _algo_from_doc(doc: dict, background: float, z: float) -> AlgoParams:
    c_u = float(doc["c_U"])
    return AlgoParams(
        background=background,
        l_x=float(doc.get("l_x", 0.0)) or 10.0,
        l_y=float(doc.get("l_y", 0.0)) or 10.0,
        p_star=float(doc["p_star"]),
        T=int(doc["T"]),
        n=int(doc["n"]),
        z=z,
        c_L=float(doc.get("c_L", c_u / 10.0)),
        c_U=c_u,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        det_doc = doc["detector"]
        algo_doc = doc["algorithm"]
        # z may appear in either section but must be one value: the branch
        # threshold and the reference law share it.
        z = float(algo_doc.get("z", det_doc.get("z", 3.0)))
        if "z" in det_doc and "z" in algo_doc and float(det_doc["z"]) != float(algo_doc["z"]):
            raise ConfigError("detector.z and algorithm.z disagree")
        detector = DetectorModel(
            background=float(det_doc["background"]),
            z=z,
            clamp=float(det_doc.get("clamp", 0.1)),
        )
        insp_doc = doc["inspector"]
        inspector = InspectorSpec(
            r_I=float(insp_doc["r_I"]),
            r_D=float(insp_doc["r_D"]),
            speed=float(insp_doc.get("speed", 0.1)),
            measure_seconds=float(insp_doc.get("measure_seconds", 3.0)),
        )
        algorithm = _algo_from_doc(algo_doc, detector.background, z)
        conditions = []
        for entry in doc.get("source_conditions", [None]):
            if entry is None:
                conditions.append(SourceCondition())
            else:
                conditions.append(
                    SourceCondition(
                        strength=float(entry["strength"]),
                        x=entry.get("x"),
                        y=entry.get("y"),
                        random_position=bool(entry.get("random_position", False)),
                    )
                )
        sweep_doc = doc.get("coverage", {})
        sweep = CoverageSweep(
            c_u_values=tuple(float(v) for v in sweep_doc.get("c_u_values", (2.0, 4.0, 6.0, 8.0, 10.0))),
            trials=int(sweep_doc.get("trials", 50)),
            max_steps=int(sweep_doc.get("max_steps", 100_000)),
            discretizations=tuple(float(v) for v in sweep_doc.get("discretizations", (2.0, 1.0, 0.5))),
        )
        config = ExperimentConfig(
            maps=[path.parent / m for m in doc["maps"]],
            inspector=inspector,
            detector=detector,
            algorithm=algorithm,
            trials_per_condition=int(doc["trials_per_condition"]),
            source_conditions=conditions,
            seed_base=int(doc.get("seed_base", 0)),
            discretizations=[float(e) for e in doc.get("discretizations", [])],
            coverage=sweep,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if config.trials_per_condition < 0:
        raise ConfigError("trials_per_condition must be >= 0")
    if detector.clamp > inspector.r_I / 2.0:
        raise ConfigError("detector clamp must not exceed r_I / 2")
    for cond in config.source_conditions:
        if cond.present and not cond.random_position and (cond.x is None or cond.y is None):
            raise ConfigError("fixed source condition needs x and y")
    return config


def warn_on_invalid_discretizations(config: ExperimentConfig, maps) -> None:
    for eps in set(config.discretizations) | set(config.coverage.discretizations):
        for name, map_spec in maps:
            try:
                report = validate(eps, config.inspector, discretize(map_spec, eps, config.inspector.r_I))
            except MapError as exc:
                log.warning("discretization %.3g unusable on map %s: %s", eps, name, exc)
                continue
            if not report.valid:
                log.warning(
                    "discretization %.3g on map %s violates validity "
                    "(lower=%s upper=%s traversable=%s)",
                    eps, name, report.satisfies_lower, report.satisfies_upper, report.traversable,
                )


# ---------------------------------------------------------------------------
# Batch runner
# ---------------------------------------------------------------------------


@dataclass
class _TrialTask:
    condition: str
    map_spec: MapSpec
    detector: DetectorModel
    inspector: InspectorSpec
    params: AlgoParams
    seed: int
    epsilon: Optional[float]
    source_present: bool
    keep_steps: bool


def _run_trial_task(task: _TrialTask) -> dict:
    grid = None
    if task.epsilon is not None:
        grid = discretize(task.map_spec, task.epsilon, task.inspector.r_I)
    result = run_trial(
        task.params, task.map_spec, task.detector, task.inspector, task.seed, grid=grid
    )
    anomaly = result.decision is Decision.ANOMALY_DETECTED
    row = {
        "condition": task.condition,
        "seed": task.seed,
        "decision": result.decision.value,
        "steps": result.steps,
        "cover_steps": result.omniscient.cover_step if result.omniscient else None,
        "detect_steps": result.steps if anomaly else None,
        "p_min": result.memory.p_min,
        "p_trace": result.p_trace,
        "source_present": task.source_present,
    }
    if task.keep_steps:
        row["V_e"] = list(result.memory.V_e)
    return row


@dataclass
class BatchSummary:
    rows: list[dict]
    conditions: dict[str, dict]
    params: AlgoParams
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "algorithm": {
                "p_star": self.params.p_star,
                "T": self.params.T,
                "n": self.params.n,
                "z": self.params.z,
                "c_L": self.params.c_L,
                "c_U": self.params.c_U,
                "background": self.params.background,
            },
            "conditions": self.conditions,
            "skipped": sorted(self.skipped),
        }


def _summarize_condition(rows: list[dict], source_present: bool) -> dict:
    n = len(rows)
    anomalies = sum(r["decision"] == Decision.ANOMALY_DETECTED.value for r in rows)
    absences = n - anomalies
    covers = [r["cover_steps"] for r in rows if r["cover_steps"] is not None]
    detects = [r["detect_steps"] for r in rows if r["detect_steps"] is not None]
    out = {
        "trials": n,
        "decisions": {"absence_confirmed": absences, "anomaly_detected": anomalies},
        "source_present": source_present,
        "mean_cover_steps": float(np.mean(covers)) if covers else None,
        "median_cover_steps": float(np.median(covers)) if covers else None,
        "max_cover_steps": int(max(covers)) if covers else None,
        "covered_trials": len(covers),
        "mean_detect_steps": float(np.mean(detects)) if detects else None,
        "median_detect_steps": float(np.median(detects)) if detects else None,
    }
    if n:
        if source_present:
            out["fnr"] = absences / n
        else:
            out["fpr"] = anomalies / n
    return out


def run_batch(
    config: ExperimentConfig,
    workers: int = 1,
    out_dir=None,
    save_steps: bool = False,
) -> BatchSummary:
    """Execute every (map x source condition x trial) combination.

    Decision accounting is exhaustive per condition; conditions whose map
    has no free space are skipped with a logged error.
    """
    maps = config.load_maps()
    warn_on_invalid_discretizations(config, maps)
    epsilon = config.discretizations[0] if config.discretizations else None
    tasks: list[_TrialTask] = []
    cond_meta: dict[str, bool] = {}
    skipped: list[str] = []
    k = 0
    for map_name, map_spec in maps:
        if map_spec.l_x <= config.inspector.r_I or map_spec.l_y <= config.inspector.r_I:
            raise ConfigError(f"inspector too large for map {map_name}")
        for cond in config.source_conditions:
            condition = f"{map_name}|{cond.label}"
            try:
                sample_free_pose(map_spec, config.inspector.r_I, np.random.default_rng(0))
            except MapError as exc:
                log.error("skipping condition %s: %s", condition, exc)
                skipped.append(condition)
                k += config.trials_per_condition
                continue
            cond_meta[condition] = cond.present
            for _ in range(config.trials_per_condition):
                seed = config.seed_base + k
                tasks.append(
                    _TrialTask(
                        condition=condition,
                        map_spec=cond.place(map_spec, seed),
                        detector=config.detector,
                        inspector=config.inspector,
                        params=config.algorithm,
                        seed=seed,
                        epsilon=epsilon,
                        source_present=cond.present,
                        keep_steps=save_steps,
                    )
                )
                k += 1
    rows = _execute(tasks, workers)
    conditions = {}
    for condition, present in cond_meta.items():
        cond_rows = [r for r in rows if r["condition"] == condition]
        conditions[condition] = _summarize_condition(cond_rows, present)
    summary = BatchSummary(rows=rows, conditions=conditions, params=config.algorithm, skipped=skipped)
    if out_dir is not None:
        write_batch_outputs(summary, out_dir, save_steps=save_steps)
    return summary


def _execute(tasks, workers: int) -> list[dict]:
    if workers <= 1 or len(tasks) < 2:
        return [_run_trial_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_task, tasks, chunksize=chunk))


def write_batch_outputs(summary: BatchSummary, out_dir, save_steps: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "seed", "decision", "steps", "cover_steps", "detect_steps"])
        for r in summary.rows:
            writer.writerow([
                r["condition"], r["seed"], r["decision"], r["steps"],
                "" if r["cover_steps"] is None else r["cover_steps"],
                "" if r["detect_steps"] is None else r["detect_steps"],
            ])
    with open(out / "pvalues.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "seed", "t", "p_value"])
        for r in summary.rows:
            for t, p in r["p_trace"]:
                writer.writerow([r["condition"], r["seed"], t, repr(p)])
    if save_steps:
        with open(out / "steps.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["condition", "seed", "t", "ds"])
            for r in summary.rows:
                for t, ds in enumerate(r.get("V_e", ()), start=1):
                    writer.writerow([r["condition"], r["seed"], t, repr(ds)])
    with open(out / "summary.json", "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Privacy audit
# ---------------------------------------------------------------------------


@dataclass
class _AuditTask:
    map_name: str
    map_spec: MapSpec
    detector: DetectorModel
    inspector: InspectorSpec
    params: AlgoParams
    seed: int


def _run_audit_task(task: _AuditTask) -> dict:
    result = run_trial(
        task.params, task.map_spec, task.detector, task.inspector, task.seed,
        record_segments=True,
    )
    return {
        "map": task.map_name,
        "seed": task.seed,
        "V_e": np.asarray(result.memory.V_e),
        "segments": np.asarray(result.omniscient.segments),
    }


@dataclass
class AuditReport:
    pairs: dict[str, dict]
    repetitions: int

    def to_dict(self) -> dict:
        doc = {"schema_version": SCHEMA_VERSION, "repetitions": self.repetitions, "pairs": {}}
        for key, data in self.pairs.items():
            doc["pairs"][key] = {
                "ve_rejections_at_0.05": data["ve_rejections"],
                "leaky_rejections_at_0.001": data["leaky_rejections"],
                "mi_p_at_least_0.05": data["mi_nonreject"],
                "median_ve_p": data["median_ve_p"],
                "median_leaky_p": data["median_leaky_p"],
                "median_mi_p": data["median_mi_p"],
            }
        return doc


def privacy_audit(
    config: ExperimentConfig,
    workers: int = 1,
    out_dir=None,
    mi_permutations: int = 200,
) -> AuditReport:
    """Pairwise distribution audit over the config's source-free maps.

    For each map pair and repetition: a two-sample KS on the recorded step
    sizes (expected to look identical), the same test on the leaky
    turn-to-turn record (expected to separate occupancy-differing maps), and
    a mutual-information permutation test on the pooled labeled steps.
    """
    maps = config.load_maps()
    if len(maps) < 2:
        raise ConfigError("privacy audit needs at least 2 maps")
    if config.algorithm.T < 1000:
        raise ConfigError("privacy audit needs at least 1000 steps per map")
    reps = config.trials_per_condition
    params = AlgoParams(
        background=config.algorithm.background,
        l_x=config.algorithm.l_x,
        l_y=config.algorithm.l_y,
        p_star=_NEVER_TRIGGER,  # collect full-length records
        T=config.algorithm.T,
        n=config.algorithm.n,
        z=config.algorithm.z,
        c_L=config.algorithm.c_L,
        c_U=config.algorithm.c_U,
    )
    tasks = []
    k = 0
    for map_name, map_spec in maps:
        for _ in range(reps):
            tasks.append(
                _AuditTask(
                    map_name=map_name,
                    map_spec=map_spec.without_source(),
                    detector=config.detector,
                    inspector=config.inspector,
                    params=params,
                    seed=config.seed_base + k,
                )
            )
            k += 1
    records = _execute_audit(tasks, workers)
    by_map: dict[str, list[dict]] = {}
    for rec in records:
        by_map.setdefault(rec["map"], []).append(rec)

    pairs = {}
    names = [name for name, _ in maps]
    pair_rows = []
    for ai in range(len(names)):
        for bi in range(ai + 1, len(names)):
            a, b = names[ai], names[bi]
            stats = {"ve_rejections": 0, "leaky_rejections": 0, "mi_nonreject": 0}
            ve_ps, leaky_ps, mi_ps = [], [], []
            for r in range(reps):
                ra, rb = by_map[a][r], by_map[b][r]
                ks_ve = ks_two_sample(ra["V_e"], rb["V_e"])
                ks_leaky = ks_two_sample(ra["segments"], rb["segments"])
                samples = [(float(v), a) for v in ra["V_e"]] + [(float(v), b) for v in rb["V_e"]]
                mi = mi_estimate(
                    samples,
                    step_bins=20,
                    permutations=mi_permutations,
                    rng=np.random.default_rng(np.random.SeedSequence((config.seed_base, ai, bi, r))),
                    value_range=(0.0, params.c_U),
                )
                ve_ps.append(ks_ve.p_value)
                leaky_ps.append(ks_leaky.p_value)
                mi_ps.append(mi.permutation_p)
                stats["ve_rejections"] += ks_ve.p_value <= 0.05
                stats["leaky_rejections"] += ks_leaky.p_value < 0.001
                stats["mi_nonreject"] += mi.permutation_p >= 0.05
                pair_rows.append({
                    "map_a": a, "map_b": b, "rep": r,
                    "ve_d": ks_ve.statistic, "ve_p": ks_ve.p_value,
                    "leaky_d": ks_leaky.statistic, "leaky_p": ks_leaky.p_value,
                    "mi_nats": mi.mi_nats, "mi_p": mi.permutation_p,
                })
            stats["median_ve_p"] = float(np.median(ve_ps))
            stats["median_leaky_p"] = float(np.median(leaky_ps))
            stats["median_mi_p"] = float(np.median(mi_ps))
            pairs[f"{a}|{b}"] = stats
    report = AuditReport(pairs=pairs, repetitions=reps)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "audit.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(pair_rows[0].keys()))
            writer.writeheader()
            writer.writerows(pair_rows)
        with open(out / "audit.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        from .plotting import render_audit_cdfs

        render_audit_cdfs(by_map, params.c_U, out / "audit_cdf.png")
    return report


def _execute_audit(tasks, workers: int) -> list[dict]:
    if workers <= 1 or len(tasks) < 2:
        return [_run_audit_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_audit_task, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# Coverage sweep
# ---------------------------------------------------------------------------


@dataclass
class _CoverTask:
    map_name: str
    map_spec: MapSpec
    detector: DetectorModel
    inspector: InspectorSpec
    params: AlgoParams
    seed: int
    trial: int
    epsilons: tuple[float, ...]
    max_steps: int


def _run_cover_task(task: _CoverTask) -> dict:
    grids = {eps: discretize(task.map_spec, eps, task.inspector.r_I) for eps in task.epsilons}
    walker = cov._SourceFreeWalker(
        task.map_spec, next(iter(grids.values())), task.params, task.detector, task.inspector, task.seed
    )
    trackers = {eps: cov.VisitTracker(g) for eps, g in grids.items()}
    seconds = 0.0
    cover_seconds = {eps: None for eps in task.epsilons}
    for tracker in trackers.values():
        tracker.record(walker.x, walker.y, 0)
    measure_s = task.inspector.measure_seconds
    speed = task.inspector.speed
    while walker.t < task.max_steps and not all(tr.all_visited for tr in trackers.values()):
        realized = walker.step()
        seconds += measure_s + realized / speed
        for eps, tracker in trackers.items():
            if not tracker.all_visited:
                tracker.record(walker.x, walker.y, walker.t)
                if tracker.all_visited:
                    cover_seconds[eps] = seconds
    out = {"map": task.map_name, "c_U": task.params.c_U, "trial": task.trial, "per_eps": {}}
    for eps, tracker in trackers.items():
        fv = tracker.first_visit
        out["per_eps"][eps] = {
            "bins": tracker.cm.n_free,
            "cover_steps": tracker.cover_step,
            "cover_seconds": cover_seconds[eps],
            "first_visits": np.sort(fv[fv >= 0]),
        }
    return out


def run_coverage(config: ExperimentConfig, workers: int = 1, out_dir=None) -> list[dict]:
    """Source-free cover-time sweep over maps x c_U values x trials.

    Each trial walks once and is tracked at every requested discretization
    simultaneously, so bin-count comparisons share trajectories.
    """
    maps = config.load_maps()
    warn_on_invalid_discretizations(config, maps)
    sweep = config.coverage
    tasks = []
    k = 0
    for map_name, map_spec in maps:
        for c_u in sweep.c_u_values:
            params = AlgoParams(
                background=config.algorithm.background,
                l_x=map_spec.l_x,
                l_y=map_spec.l_y,
                p_star=config.algorithm.p_star,
                T=config.algorithm.T,
                n=config.algorithm.n,
                z=config.algorithm.z,
                c_L=c_u / 10.0,
                c_U=c_u,
            )
            for trial in range(sweep.trials):
                tasks.append(
                    _CoverTask(
                        map_name=map_name,
                        map_spec=map_spec.without_source(),
                        detector=config.detector,
                        inspector=config.inspector,
                        params=params,
                        seed=config.seed_base + k,
                        trial=trial,
                        epsilons=sweep.discretizations,
                        max_steps=sweep.max_steps,
                    )
                )
                k += 1
    if workers <= 1 or len(tasks) < 2:
        results = [_run_cover_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (8 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cover_task, tasks, chunksize=chunk))
    if out_dir is not None:
        write_coverage_outputs(results, config, out_dir)
    return results


def write_coverage_outputs(results: list[dict], config: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "covertimes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env_id", "c_U", "bins", "trial", "cover_steps", "cover_seconds"])
        for r in results:
            for eps, data in r["per_eps"].items():
                writer.writerow([
                    r["map"], r["c_U"], data["bins"], r["trial"],
                    "" if data["cover_steps"] is None else data["cover_steps"],
                    "" if data["cover_seconds"] is None else repr(data["cover_seconds"]),
                ])
    # Mean coverage-fraction curves on a subsampled step grid.
    curves: dict[tuple[str, float, int], list[tuple[np.ndarray, int]]] = {}
    for r in results:
        for eps, data in r["per_eps"].items():
            curves.setdefault((r["map"], r["c_U"], data["bins"]), []).append(
                (data["first_visits"], data["bins"])
            )
    with open(out / "covercurves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env_id", "c_U", "bins", "t", "mean_fraction"])
        for (map_name, c_u, bins), entries in sorted(curves.items()):
            horizon = max(int(fv[-1]) if fv.size else 0 for fv, _ in entries)
            ts = _curve_grid(horizon)
            fractions = np.zeros(ts.size)
            for fv, total in entries:
                fractions += np.searchsorted(fv, ts, side="right") / total
            fractions /= len(entries)
            for t, frac in zip(ts, fractions):
                writer.writerow([map_name, c_u, bins, int(t), repr(float(frac))])
    seconds_per_step = config.inspector.measure_seconds + (
        np.mean([c for c in config.coverage.c_u_values]) / 2.0
    ) / config.inspector.speed
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seconds_per_step_nominal": seconds_per_step,
        "measure_seconds": config.inspector.measure_seconds,
        "speed": config.inspector.speed,
    }
    with open(out / "coverage_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _curve_grid(horizon: int) -> np.ndarray:
    step = max(1, horizon // 400)
    return np.arange(0, horizon + step, step)


# ---------------------------------------------------------------------------
# Plot data emission
# ---------------------------------------------------------------------------

PLOT_KINDS = ("pvalue_evolution", "coverage_curve", "step_cdf")


def emit_plot_data(in_dir, kind: str, out_dir=None, start_t: int = 10) -> Path:
    """Produce a tidy CSV (and a rendered PNG) for one figure kind.

    ``pvalue_evolution`` floors log10 P-values at log10(p_star/n) and
    extends terminated trials at the floor; ``coverage_curve`` starts at
    ``start_t`` steps; ``step_cdf`` overlays the analytic reference with a
    DKW band.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; options: {PLOT_KINDS}")
    in_dir = Path(in_dir)
    out = Path(out_dir) if out_dir is not None else in_dir
    out.mkdir(parents=True, exist_ok=True)
    if kind == "pvalue_evolution":
        return _emit_pvalue_evolution(in_dir, out)
    if kind == "coverage_curve":
        return _emit_coverage_curve(in_dir, out, start_t)
    return _emit_step_cdf(in_dir, out)


def _read_summary(in_dir: Path) -> dict:
    path = in_dir / "summary.json"
    if not path.exists():
        raise ConfigError(f"{in_dir} has no summary.json (run `batch` first)")
    return json.loads(path.read_text())


def _emit_pvalue_evolution(in_dir: Path, out: Path) -> Path:
    summary = _read_summary(in_dir)
    algo = summary["algorithm"]
    floor = math.log10(algo["p_star"] / algo["n"])
    T, n = algo["T"], algo["n"]
    test_ts = [T // n * i for i in range(1, n + 1)]
    traces: dict[str, dict[int, list[float]]] = {}
    with open(in_dir / "pvalues.csv") as fh:
        per_trial: dict[tuple[str, str], dict[int, float]] = {}
        for row in csv.DictReader(fh):
            key = (row["condition"], row["seed"])
            per_trial.setdefault(key, {})[int(row["t"])] = float(row["p_value"])
    if not per_trial:
        raise ConfigError("pvalues.csv holds no rows")
    for (condition, _seed), trace in per_trial.items():
        bucket = traces.setdefault(condition, {t: [] for t in test_ts})
        for t in test_ts:
            if t in trace:
                value = max(math.log10(trace[t]), floor)
            else:
                value = floor  # trial terminated earlier; holds at the trigger floor
            bucket[t].append(value)
    csv_path = out / "pvalue_evolution.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "t", "mean_log10_p", "n_trials"])
        for condition in sorted(traces):
            for t in test_ts:
                vals = traces[condition][t]
                writer.writerow([condition, t, repr(float(np.mean(vals))), len(vals)])
    from .plotting import render_pvalue_evolution

    render_pvalue_evolution(traces, test_ts, floor, out / "pvalue_evolution.png")
    return csv_path


def _emit_coverage_curve(in_dir: Path, out: Path, start_t: int) -> Path:
    src = in_dir / "covercurves.csv"
    if not src.exists():
        raise ConfigError(f"{in_dir} has no covercurves.csv (run `coverage` first)")
    meta_path = in_dir / "coverage_meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    measure_s = meta.get("measure_seconds", 3.0)
    speed = meta.get("speed", 0.1)
    rows = []
    with open(src) as fh:
        for row in csv.DictReader(fh):
            t = int(row["t"])
            if t < start_t:
                continue
            c_u = float(row["c_U"])
            seconds = t * (measure_s + (c_u / 2.0) / speed)
            rows.append({
                "env_id": row["env_id"],
                "c_U": c_u,
                "bins": int(row["bins"]),
                "t": t,
                "seconds_nominal": seconds,
                "mean_fraction": float(row["mean_fraction"]),
            })
    if not rows:
        raise ConfigError("no coverage rows at or past start_t")
    csv_path = out / "coverage_curve.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    from .plotting import render_coverage_curve

    render_coverage_curve(rows, out / "coverage_curve.png")
    return csv_path


def _emit_step_cdf(in_dir: Path, out: Path) -> Path:
    summary = _read_summary(in_dir)
    algo = summary["algorithm"]
    src = in_dir / "steps.csv"
    if not src.exists():
        raise ConfigError(f"{in_dir} has no steps.csv (run `batch` with step saving)")
    samples: dict[str, list[float]] = {}
    with open(src) as fh:
        for row in csv.DictReader(fh):
            samples.setdefault(row["condition"], []).append(float(row["ds"]))
    if not samples:
        raise ConfigError("steps.csv holds no rows")
    from .policy import AlgoParams as _AP

    params = _AP(
        background=algo["background"], l_x=10.0, l_y=10.0, p_star=algo["p_star"],
        T=algo["T"], n=algo["n"], z=algo["z"], c_L=algo["c_L"], c_U=algo["c_U"],
    )
    ref = params.analytic_reference()
    csv_path = out / "step_cdf.csv"
    plot_data = {}
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "ds", "f_empirical", "f_reference", "dkw_lo", "dkw_hi"])
        for condition in sorted(samples):
            values = np.sort(np.asarray(samples[condition]))
            m = values.size
            eps = dkw_epsilon(m)
            idx = np.unique(np.linspace(0, m - 1, min(m, 400)).astype(int))
            emp = (idx + 1) / m
            refv = ref(np.clip(values[idx] / params.c_U, 0.0, 1.0))
            for x, fe, fr in zip(values[idx], emp, refv):
                writer.writerow([
                    condition, repr(float(x)), repr(float(fe)), repr(float(fr)),
                    repr(float(max(fr - eps, 0.0))), repr(float(min(fr + eps, 1.0))),
                ])
            plot_data[condition] = (values[idx], emp, refv, eps)
    from .plotting import render_step_cdf

    render_step_cdf(plot_data, params.c_U, out / "step_cdf.png")
    return csv_path
