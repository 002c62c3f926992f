# File Name: __init__.py
# Created By: ZW
# Created On: 2023-03-02
# Purpose: submodule init for operations

# module imports
# ----------------------------------------------------------------------------
from .intersect import intersection_area, iou
from .features import FeatureStore, FileFeatures, OracleConfig, OracleFeatures, store_read, store_write
from .training import TrainedSituationModel, TrainingConfig, train_situation
from .engine import EngineConfig, RunResult, derive_rng, match_score, run_image
from .evaluation import (RecallTable, ScoredImage, aggregate_runs, compare_methods, fit_pairwise_gmms,
                         format_table, grounding_accuracy, irsg_energy, recall_at_n, topbox_score)
from .synth import SynthSpec, SyntheticCorpus, generate_synthetic
from .writers import write_annotations, write_model, write_priors, write_rankings, write_scenes, write_trace
from .readers import load_annotations, load_model, load_priors, load_scenes, load_situation
