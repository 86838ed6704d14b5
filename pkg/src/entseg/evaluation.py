"""Scoring detected boundaries against a reference.

Tolerances are index distances: 1 frame is 10 ms and 2 frames are 20 ms at
the default frame shift.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np

from .core import BoundarySet, EvalReport


def _check_geometry(detected: BoundarySet, reference: BoundarySet) -> None:
    if (detected.num_frames != reference.num_frames
            or detected.frame_shift_ms != reference.frame_shift_ms):
        raise ValueError(
            "mismatched utterance geometry: "
            f"{detected.num_frames} frames @ {detected.frame_shift_ms} ms vs "
            f"{reference.num_frames} frames @ {reference.frame_shift_ms} ms")


def count_correct(detected: BoundarySet, reference: BoundarySet, tolerance_frames: int) -> int:
    """Detections lying within the tolerance of some reference boundary.

    Every detection is checked on its own, so several detections near one
    reference boundary all count and the result may exceed ``len(reference)``.
    """
    _check_geometry(detected, reference)
    if not len(detected) or not len(reference):
        return 0
    ref = reference.as_array()
    det = detected.as_array()
    pos = np.searchsorted(ref, det)
    right = np.abs(ref[np.minimum(pos, len(ref) - 1)] - det)
    left = np.abs(ref[np.maximum(pos - 1, 0)] - det)
    return int(np.count_nonzero(np.minimum(left, right) <= tolerance_frames))


def precision_recall(correct: int, detected: int, reference: int
                     ) -> Tuple[Optional[float], Optional[float]]:
    """Percent precision and recall; None marks an empty denominator."""
    if correct < 0 or detected < 0 or reference < 0:
        raise ValueError("counts must be non-negative")
    p = 100.0 * correct / detected if detected > 0 else None
    r = 100.0 * correct / reference if reference > 0 else None
    return p, r


def criterion(p: float, r: float, weights: Tuple[float, float] = (1.0, 1.0)) -> float:
    """Euclidean distance of (P, R) from (100, 100).

    ``weights`` scale the squared precision and recall terms; the default
    weighs them equally.
    """
    wp, wr = weights
    return math.sqrt(wp * (p - 100.0) ** 2 + wr * (r - 100.0) ** 2)


def make_report(correct: int, detected: int, reference: int, tolerance_frames: int,
                weights: Tuple[float, float] = (1.0, 1.0)) -> EvalReport:
    p, r = precision_recall(correct, detected, reference)
    crit = None if p is None or r is None else criterion(p, r, weights)
    return EvalReport(correct, detected, reference, p, r, crit, tolerance_frames)


def evaluate(detected: BoundarySet, reference: BoundarySet, tolerance_frames: int = 1,
             matching: str = "window") -> EvalReport:
    """Score one utterance.

    ``matching="window"`` counts every detection near a reference boundary;
    ``"dp"`` uses the one-to-one matching of :func:`dp_match`.
    """
    if matching == "window":
        c = count_correct(detected, reference, tolerance_frames)
    elif matching == "dp":
        c = dp_match(detected, reference, tolerance_frames).n_matched
    else:
        raise ValueError(f"unknown matching {matching!r}")
    return make_report(c, len(detected), len(reference), tolerance_frames)


def evaluate_corpus(pairs: Iterable, tolerance_frames: int = 1,
                    matching: str = "window") -> EvalReport:
    """Pool (detected, reference) pairs by summing C, D and T first."""
    c = d = t = 0
    for det, ref in pairs:
        rep = evaluate(det, ref, tolerance_frames, matching)
        c += rep.n_correct
        d += rep.n_detected
        t += rep.n_reference
    return make_report(c, d, t, tolerance_frames)


class Matching(NamedTuple):
    pairs: tuple  # (detected index, reference index) in time order
    n_matched: int
    insertions: int
    deletions: int


def dp_match(detected: BoundarySet, reference: BoundarySet, tolerance_frames: int = 1) -> Matching:
    """Maximum one-to-one matching of detections to references within tolerance.

    On a line, a maximum matching under a distance threshold can always be
    taken non-crossing, so an edit-distance style recursion over the two
    sorted lists finds it.
    """
    _check_geometry(detected, reference)
    det, ref = detected.indices, reference.indices
    nd, nr = len(det), len(ref)
    score = np.zeros((nd + 1, nr + 1), dtype=int)
    for i in range(1, nd + 1):
        for j in range(1, nr + 1):
            best = max(score[i - 1, j], score[i, j - 1])
            if abs(det[i - 1] - ref[j - 1]) <= tolerance_frames:
                best = max(best, score[i - 1, j - 1] + 1)
            score[i, j] = best
    pairs = []
    i, j = nd, nr
    while i > 0 and j > 0:
        if (abs(det[i - 1] - ref[j - 1]) <= tolerance_frames
                and score[i, j] == score[i - 1, j - 1] + 1):
            pairs.append((det[i - 1], ref[j - 1]))
            i, j = i - 1, j - 1
        elif score[i, j] == score[i - 1, j]:
            i -= 1
        else:
            j -= 1
    n = int(score[nd, nr])
    return Matching(tuple(reversed(pairs)), n, nd - n, nr - n)
