"""Segment boundary detection from class-entropy measures of posteriorgrams."""

from .core import (BoundarySet, EvalReport, GlobalStats, MeasureTrack, Posteriorgram, Region,
                   Utterance)
from .detect import detect, detect_baseline, detect_combined, detect_single
from .evaluation import count_correct, criterion, dp_match, evaluate, evaluate_corpus
from .measures import compute_measures, corpus_stats, entropy, global_stats

__version__ = "0.1.0"

__all__ = [
    "BoundarySet", "EvalReport", "GlobalStats", "MeasureTrack", "Posteriorgram", "Region",
    "Utterance", "compute_measures", "corpus_stats", "count_correct", "criterion", "detect",
    "detect_baseline", "detect_combined", "detect_single", "dp_match", "entropy", "evaluate",
    "evaluate_corpus", "global_stats",
]
