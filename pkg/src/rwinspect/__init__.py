"""Map-free randomized inspection: a 2D simulator and statistical library
for verifying source absence with a measurement-encoded random walk."""

from .errors import ConfigError, InvariantViolation, MapError
from .geometry import (
    Circle,
    InspectorSpec,
    MapSpec,
    Pose,
    Rect,
    SourceSpec,
    Vec2,
    is_free,
    line_of_sight,
    load_map,
    save_map,
    travel,
)
from .grid import CompressedMap, ValidityReport, discretize, fundamental_length, is_traversable, validate
from .sensing import DetectorModel, Measurement, exceedance_probability, expected_counts, sample_counts, threshold_exceeded
from .stats import (
    KSResult,
    MIReport,
    ReferenceCDF,
    TailFit,
    fit_geometric_tail,
    kolmogorov_pvalue,
    ks_one_sample,
    ks_two_sample,
    mi_estimate,
    reference_cdf_eval,
)
from .policy import AlgoParams, Decision, InspectorMemory, TrialResult, default_params, execute_motion, run_trial, step, start_trial_state
from .coverage import (
    BoundResult,
    CoverageStats,
    VisitTracker,
    cover_statistics,
    exact_cover_oracle,
    hierarchical_bound,
    sample_first_passage,
)
from .harness import ExperimentConfig, load_config, privacy_audit, run_batch, run_coverage, emit_plot_data

__version__ = "0.1.0"
