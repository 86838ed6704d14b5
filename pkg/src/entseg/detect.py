"""Boundary decisions on measure tracks.

Two relations are used. ``m > th`` marks every valid frame above the
threshold; the starred relation keeps a single candidate (the in-region
maximum) for each contiguous run of such frames. Candidates name a frame
while boundaries name the gap between two frames, see
:func:`frame_to_boundary`.
"""

from __future__ import annotations

from typing import Mapping, Union

import numpy as np

from .core import BoundarySet, GlobalStats, MeasureTrack, Posteriorgram, Region
from .measures import decision_track, relative_threshold

SINGLE_METHODS = ("e", "d2", "ma", "nn")
COMBINED_METHODS = ("e+d2", "e+ma")
METHODS = ("e", "d2", "ma", "e+d2", "e+ma", "nn", "baseline")

# measures whose value at index n already describes gap n
GAP_ALIGNED = {"ma"}

StatsArg = Union[GlobalStats, Mapping[str, GlobalStats]]


def _runs(mask: np.ndarray):
    """Start and inclusive end indices of the True runs of ``mask``."""
    d = np.diff(mask.astype(np.int8), prepend=0, append=0)
    return np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1


def regions_above(track: MeasureTrack, th: float) -> list:
    """Maximal runs of valid frames with ``m[n] > th``."""
    mask = track.valid_mask() & (track.values > th)
    starts, ends = _runs(mask)
    return [Region(int(s), int(e)) for s, e in zip(starts, ends)]


def pick_peak_per_region(track: MeasureTrack, regions) -> list:
    """One candidate frame per region: its first maximum."""
    v = track.values
    return [int(r.start + np.argmax(v[r.start:r.end + 1])) for r in regions]


def frame_to_boundary(n: int, track: MeasureTrack, gap_aligned: bool = False) -> int:
    """Map a candidate frame to a gap index.

    Gap-aligned measures map ``n`` to gap ``n``. For frame-centred measures
    the boundary goes on the side of the larger neighbour: gap ``n`` if
    ``m[n+1] >= m[n-1]``, else gap ``n-1``. Neighbours outside the valid
    range count as minus infinity.
    """
    T = len(track)
    if gap_aligned:
        b = n
    else:
        v = track.values
        lo, hi = track.valid_from, track.valid_to
        left = v[n - 1] if lo <= n - 1 <= hi else -np.inf
        right = v[n + 1] if lo <= n + 1 <= hi else -np.inf
        b = n if right >= left else n - 1
    return min(max(b, 0), T - 2)


def _run_peaks(v: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Vectorised first in-run argmax; same result as :func:`pick_peak_per_region`."""
    if not len(starts):
        return starts
    lengths = ends - starts + 1
    offsets = np.cumsum(lengths) - lengths
    run_id = np.repeat(np.arange(len(starts)), lengths)
    pos = np.arange(lengths.sum()) - np.repeat(offsets, lengths) + np.repeat(starts, lengths)
    vals = v[pos]
    hits = np.flatnonzero(vals == np.maximum.reduceat(vals, offsets)[run_id])
    _, first = np.unique(run_id[hits], return_index=True)
    return pos[hits[first]]


def _frames_to_gaps(n: np.ndarray, track: MeasureTrack, gap_aligned: bool) -> np.ndarray:
    """Vectorised :func:`frame_to_boundary`."""
    T = len(track)
    if gap_aligned:
        b = n
    else:
        v = track.values
        lo, hi = track.valid_from, track.valid_to
        left_i, right_i = n - 1, n + 1
        left = np.where((left_i >= lo) & (left_i <= hi), v[np.clip(left_i, 0, T - 1)], -np.inf)
        right = np.where((right_i >= lo) & (right_i <= hi), v[np.clip(right_i, 0, T - 1)], -np.inf)
        b = np.where(right >= left, n, n - 1)
    return np.clip(b, 0, T - 2)


def _decide(mask: np.ndarray, track: MeasureTrack, gap_aligned: bool,
            frame_shift_ms: float) -> BoundarySet:
    T = len(track)
    if T < 2:
        return BoundarySet((), T, frame_shift_ms)
    starts, ends = _runs(mask)
    gaps = np.unique(_frames_to_gaps(_run_peaks(track.values, starts, ends), track, gap_aligned))
    return BoundarySet(tuple(gaps.tolist()), T, frame_shift_ms)


def star_decision(track: MeasureTrack, th: float, gap_aligned: bool = False,
                  frame_shift_ms: float = 10.0) -> BoundarySet:
    """Starred relation with an absolute threshold."""
    return _decide(track.valid_mask() & (track.values > th), track, gap_aligned, frame_shift_ms)


def combined_decision(entropy_track: MeasureTrack, second: MeasureTrack,
                      th1: float, th2: float, gap_aligned: bool = False,
                      frame_shift_ms: float = 10.0) -> BoundarySet:
    """``(e > th1) and (second *> th2)`` with absolute thresholds.

    The starred relation is applied to the second measure inside the entropy
    regions, i.e. on the maximal runs where both conditions hold.
    """
    if len(entropy_track) != len(second):
        raise ValueError("entropy and second measure differ in length")
    mask = (entropy_track.valid_mask() & (entropy_track.values > th1)
            & second.valid_mask() & (second.values > th2))
    return _decide(mask, second, gap_aligned, frame_shift_ms)


def _stats_for(stats: StatsArg, method: str) -> GlobalStats:
    if isinstance(stats, GlobalStats):
        return stats
    try:
        return stats[method]
    except KeyError:
        raise ValueError(f"no statistics for measure {method!r}") from None


def detect_single(method: str, measures: Mapping[str, MeasureTrack], th_rel: float,
                  stats: StatsArg, frame_shift_ms: float = 10.0) -> BoundarySet:
    """Single-measure detection (``e``, ``d2``, ``ma`` or ``nn``).

    ``th_rel`` is relative to the global statistics of the signed measure.
    """
    if method == "d1":
        raise ValueError("no decision rule for e' (first derivative)")
    if method not in SINGLE_METHODS:
        raise ValueError(f"unknown single-measure method {method!r}")
    track = decision_track(method, measures)
    th = relative_threshold(_stats_for(stats, method), th_rel)
    return star_decision(track, th, method in GAP_ALIGNED, frame_shift_ms)


def detect_combined(measures: Mapping[str, MeasureTrack], th1_rel: float, th2_rel: float,
                    second: str, stats: Mapping[str, GlobalStats],
                    frame_shift_ms: float = 10.0) -> BoundarySet:
    """Entropy-gated detection on ``-e''`` (second='d2') or ``-ma`` (second='ma')."""
    if second == "d1":
        raise ValueError("no decision rule for e' (first derivative)")
    if second not in ("d2", "ma"):
        raise ValueError(f"second measure must be 'd2' or 'ma', got {second!r}")
    th1 = relative_threshold(stats["e"], th1_rel)
    th2 = relative_threshold(stats[second], th2_rel)
    return combined_decision(decision_track("e", measures), decision_track(second, measures),
                             th1, th2, second in GAP_ALIGNED, frame_shift_ms)


def detect_baseline(pg: Posteriorgram) -> BoundarySet:
    """A boundary wherever the most probable class changes between frames."""
    best = np.argmax(pg.frames, axis=1)
    idx = np.flatnonzero(best[1:] != best[:-1])
    return BoundarySet(tuple(idx.tolist()), pg.num_frames, pg.frame_shift_ms)


def detect(method: str, measures: Mapping[str, MeasureTrack], stats: Mapping[str, GlobalStats],
           th: float = 0.0, th1: float = 0.0, frame_shift_ms: float = 10.0,
           posteriorgram: Posteriorgram = None) -> BoundarySet:
    """Dispatch on a method name from :data:`METHODS`.

    For combined methods ``th1`` gates the entropy and ``th`` is the
    threshold on the second measure. The nn method expects an ``"nn"``
    track in ``measures``.
    """
    if method == "baseline":
        if posteriorgram is None:
            raise ValueError("baseline detection needs the posteriorgram")
        return detect_baseline(posteriorgram)
    if method in COMBINED_METHODS:
        return detect_combined(measures, th1, th, method.split("+")[1], stats, frame_shift_ms)
    return detect_single(method, measures, th, stats, frame_shift_ms)
