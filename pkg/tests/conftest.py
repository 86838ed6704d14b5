import numpy as np
import pytest

from entseg.core import BoundarySet, MeasureTrack, Posteriorgram
from entseg.measures import compute_measures, corpus_stats
from entseg.synth import SynthSpec, synth_corpus

# density of reference boundaries per candidate gap used for the chance checks
STANDARD_DENSITY = 0.114


def track(values, kind="entropy", lo=None, hi=None):
    v = np.asarray(values, dtype=float)
    return MeasureTrack(v, 0 if lo is None else lo, len(v) - 1 if hi is None else hi, kind)


def bset(indices, T, shift=10.0):
    return BoundarySet(tuple(indices), T, shift)


def one_hot_pg(classes, n_classes=3):
    p = np.zeros((len(classes), n_classes))
    p[np.arange(len(classes)), classes] = 1.0
    return Posteriorgram(p, tuple(f"k{i}" for i in range(n_classes)))


@pytest.fixture(scope="session")
def standard_corpus():
    """100 synthetic utterances tuned to the standard boundary density."""
    return synth_corpus(SynthSpec(seed=1), 100, target_density=STANDARD_DENSITY)


@pytest.fixture(scope="session")
def standard_measures(standard_corpus):
    ms = [compute_measures(u.posteriorgram) for u in standard_corpus]
    return ms, corpus_stats(ms)
