"""Classification-tree hidden semi-Markov models for temporal event logs."""

from .cart import (ClassificationTree, PruningReport, StateRule, TreeGrowthConfig, assign_state,
                   cost_complexity_prune, extract_rules, gini_impurity, grow_tree)
from .duration import DurationDensity, fit_duration_density, geometric_duration_pmf, silverman_bandwidth
from .errors import CthsmmError, NumericError, SchemaError, UnknownObservationError, ValidationError
from .evaluation import EvalMetrics, hit_ratio, horizon_sweep, lmrl_ratio
from .model import (CthsmmModel, ViterbiResult, build_model, estimate_emissions, estimate_initial,
                    estimate_transitions, viterbi_decode)
from .selection import PriorMode, build_candidates, mmie_search, mutual_information, select_model
from .simulator import GroundTruthSpec, StateSpec, sample_dataset, weather_spec
from .temporal_data import (StateSegment, TemporalDataset, TemporalRecord, expand_to_time_units, load_csv,
                            merge_consecutive_states, split_by_entity)

__all__ = [
    "ClassificationTree", "PruningReport", "StateRule", "TreeGrowthConfig", "assign_state",
    "cost_complexity_prune", "extract_rules", "gini_impurity", "grow_tree", "DurationDensity",
    "fit_duration_density", "geometric_duration_pmf", "silverman_bandwidth", "CthsmmError", "NumericError",
    "SchemaError", "UnknownObservationError", "ValidationError", "EvalMetrics", "hit_ratio", "horizon_sweep",
    "lmrl_ratio", "CthsmmModel", "ViterbiResult", "build_model", "estimate_emissions", "estimate_initial",
    "estimate_transitions", "viterbi_decode", "PriorMode", "build_candidates", "mmie_search",
    "mutual_information", "select_model", "GroundTruthSpec", "StateSpec", "sample_dataset", "weather_spec",
    "StateSegment", "TemporalDataset", "TemporalRecord", "expand_to_time_units", "load_csv",
    "merge_consecutive_states", "split_by_entity",
]

__version__ = "0.1.0"
