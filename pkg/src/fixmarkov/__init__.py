"""Markov point-process models of eye-fixation sequences."""

from .classify import RocCurve, Verdict, classify_at, rank_images, roc
from .clustering import AssignmentRule, ClusterConfig, ClusterModel, Linkage, Metric, hierarchical, kmeans
from .data import (ColourScheme, DataError, Dataset, FixationRecord, FixationSequence, IngestConfig,
                   Orientation, group_sequences, parse_records, split_train_test)
from .density import Kde1D, Kde2D, evaluate_kde2d, fit_kde1d_sj, fit_kde2d, log_likelihood_iid
from .markov import (BayesFactorReport, DirichletMarkovPosterior, MarkovMixtureModel, ScoreConfig,
                     TransitionCounts, closed_form_bf, count_transitions, fit_model, mc_bf,
                     posterior_from_counts, posterior_mean, score_image)
from .simulate import SimSpec, empirical_check, simulate

__version__ = "0.1.0"

__all__ = [
    "RocCurve", "Verdict", "classify_at", "rank_images", "roc",
    "AssignmentRule", "ClusterConfig", "ClusterModel", "Linkage", "Metric", "hierarchical", "kmeans",
    "ColourScheme", "DataError", "Dataset", "FixationRecord", "FixationSequence", "IngestConfig",
    "Orientation", "group_sequences", "parse_records", "split_train_test",
    "Kde1D", "Kde2D", "evaluate_kde2d", "fit_kde1d_sj", "fit_kde2d", "log_likelihood_iid",
    "BayesFactorReport", "DirichletMarkovPosterior", "MarkovMixtureModel", "ScoreConfig",
    "TransitionCounts", "closed_form_bf", "count_transitions", "fit_model", "mc_bf",
    "posterior_from_counts", "posterior_mean", "score_image",
    "SimSpec", "empirical_check", "simulate",
]
