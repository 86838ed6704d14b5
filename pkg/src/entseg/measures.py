"""Entropy of the frame posteriors and its differential measures.

Derivative-family tracks are zero-padded where their stencil leaves the
utterance; the padded frames are excluded through the track's valid range.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import GlobalStats, MeasureTrack, Posteriorgram

# decision measure name -> (source track, sign applied before thresholding)
DECISION_MEASURES = {
    "e": ("entropy", 1.0),
    "d2": ("d2", -1.0),
    "ma": ("ma", -1.0),
    "nn": ("nn", 1.0),
}


def entropy(pg: Posteriorgram) -> MeasureTrack:
    """Frame entropy in bits, with 0 log 0 taken as 0."""
    p = pg.frames
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    e = -terms.sum(axis=1)
    # rounding can leave -0.0 or a hair above log2(N)
    e = np.clip(e, 0.0, np.log2(pg.num_classes))
    return MeasureTrack(e, 0, len(e) - 1, "entropy")


def first_derivative(track: MeasureTrack) -> MeasureTrack:
    e = track.values
    d = np.zeros_like(e)
    d[1:] = e[1:] - e[:-1]
    return MeasureTrack(d, 1, len(e) - 1, "d1")


def second_derivative(track: MeasureTrack) -> MeasureTrack:
    """``e[n-1] - 2 e[n] + e[n+1]`` for interior frames."""
    e = track.values
    if len(e) < 3:
        raise ValueError("track too short for the second derivative (need T >= 3)")
    d = np.zeros_like(e)
    d[1:-1] = e[:-2] - 2.0 * e[1:-1] + e[2:]
    return MeasureTrack(d, 1, len(e) - 2, "d2")


def moving_average(track: MeasureTrack) -> MeasureTrack:
    """Sum of two consecutive second derivatives, centred on a gap.

    ``ma[n] = e[n-1] - e[n] - e[n+1] + e[n+2]`` describes the gap between
    frames n and n+1.
    """
    e = track.values
    if len(e) < 4:
        raise ValueError("track too short for the moving average (need T >= 4)")
    m = np.zeros_like(e)
    m[1:-2] = e[:-3] - e[1:-2] - e[2:-1] + e[3:]
    return MeasureTrack(m, 1, len(e) - 3, "ma")


def compute_measures(pg: Posteriorgram) -> dict:
    """All four hand-built tracks of one utterance, keyed by kind."""
    e = entropy(pg)
    return {
        "entropy": e,
        "d1": first_derivative(e),
        "d2": second_derivative(e),
        "ma": moving_average(e),
    }


def decision_track(method: str, measures: dict) -> MeasureTrack:
    """The signed track a threshold is applied to (``-e''`` and ``-ma`` are negated)."""
    if method == "d1":
        raise ValueError("no decision rule for e' (first derivative)")
    try:
        kind, sign = DECISION_MEASURES[method]
    except KeyError:
        raise ValueError(f"unknown measure {method!r}") from None
    if kind not in measures:
        raise ValueError(f"measure {kind!r} not available for this utterance")
    track = measures[kind]
    return track.negated() if sign < 0 else track


def global_stats(tracks: Iterable[MeasureTrack]) -> GlobalStats:
    """Pooled mean and population standard deviation over all valid frames."""
    total = 0
    s = 0.0
    chunks = []
    for t in tracks:
        v = t.valid_values
        chunks.append(v)
        total += v.size
        s += float(v.sum())
    if total == 0:
        raise ValueError("no valid frames to compute statistics over")
    mean = s / total
    ss = sum(float(np.sum((v - mean) ** 2)) for v in chunks)
    return GlobalStats(mean, float(np.sqrt(ss / total)))


def corpus_stats(measures_list, methods=("e", "d2", "ma")) -> dict:
    """Global statistics of each decision measure, pooled across utterances."""
    measures_list = list(measures_list)
    return {m: global_stats(decision_track(m, ms) for ms in measures_list)
            for m in methods}


def relative_threshold(stats: GlobalStats, r: float) -> float:
    return stats.mean + r * stats.std
