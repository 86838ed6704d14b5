"""Level of chance for boundary detection.

Random detections are drawn per utterance by sampling gap positions
without replacement. Each repetition uses its own generator seeded with
``seed + repetition`` so repetitions can run in any order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BoundarySet
from .evaluation import evaluate_corpus
from .io import round_half_up

RNG_ALGORITHM = "numpy.random.PCG64"
MAX_DENSITY = 0.3


def analytic_chance(B: float, M: float, tolerance_frames: int = 1) -> float:
    """Expected precision (percent) of a random detector: ``100 (2 tol + 1) B / M``.

    The approximation ignores utterance edges and overlapping tolerance
    windows, which only holds when ``B`` is small compared to ``M``.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if B < 0:
        raise ValueError("B must be non-negative")
    if B / M > MAX_DENSITY:
        warnings.warn(f"boundary density {B / M:.3f} exceeds {MAX_DENSITY}; "
                      "analytic chance level is unreliable", stacklevel=2)
    return 100.0 * (2 * tolerance_frames + 1) * B / M


def corpus_density(references: Sequence[BoundarySet]) -> float:
    """Pooled boundaries per candidate gap, ``sum(B) / sum(M)``."""
    B = sum(len(r) for r in references)
    M = sum(r.num_gaps for r in references)
    if M == 0:
        raise ValueError("corpus has no candidate gaps")
    return B / M


def sample_count(ratio: float, n_boundaries: int, n_gaps: int) -> int:
    return min(max(round_half_up(ratio * n_boundaries), 0), n_gaps)


def random_detections(references: Sequence[BoundarySet], ratio: float,
                      rng: np.random.Generator) -> list:
    out = []
    for ref in references:
        M = ref.num_gaps
        if M == 0:
            raise ValueError("utterance with no candidate gaps (M = 0)")
        F = sample_count(ratio, len(ref), M)
        pos = rng.choice(M, size=F, replace=False)
        out.append(BoundarySet.from_unsorted(pos.tolist(), ref.num_frames, ref.frame_shift_ms))
    return out


@dataclass(frozen=True)
class ChanceResult:
    ratio: float
    precision: Optional[float]
    recall: float
    repetitions: int
    tolerance_frames: int
    seed: int
    rng: str = RNG_ALGORITHM


def monte_carlo_chance(references: Sequence[BoundarySet], ratio: float, repetitions: int = 50,
                       tolerance_frames: int = 1, seed: int = 0) -> ChanceResult:
    """Average precision and recall of random detections over repetitions.

    Each utterance gets ``round(ratio * B)`` detections (clamped to its
    ``M`` gaps). Repetitions without any detection are left out of the
    precision average; if all are empty the precision is None.
    """
    if ratio < 0:
        raise ValueError("ratio must be non-negative")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    references = list(references)
    ps, rs = [], []
    for rep in range(repetitions):
        rng = np.random.Generator(np.random.PCG64(seed + rep))
        dets = random_detections(references, ratio, rng)
        report = evaluate_corpus(zip(dets, references), tolerance_frames)
        if report.precision is not None:
            ps.append(report.precision)
        rs.append(report.recall if report.recall is not None else 0.0)
    return ChanceResult(ratio, float(np.mean(ps)) if ps else None, float(np.mean(rs)),
                        repetitions, tolerance_frames, seed)


def chance_sweep(references: Sequence[BoundarySet], ratios, repetitions: int = 50,
                 tolerance_frames: int = 1, seed: int = 0) -> list:
    return [monte_carlo_chance(references, r, repetitions, tolerance_frames, seed)
            for r in ratios]
