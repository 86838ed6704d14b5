"""Domain types shared across the toolkit.

All containers are immutable after construction. Numpy arrays held by them
are marked read-only so they can be shared between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

SIMPLEX_ATOL = 1e-6

MEASURE_KINDS = ("entropy", "d1", "d2", "ma", "nn")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    """Per-frame class posteriors, one row per frame.

    Args:
        frames: (T, N) array, every row a probability distribution.
        class_labels: N class names.
        frame_shift_ms: time between consecutive frames.
    """

    frames: np.ndarray
    class_labels: tuple
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2:
            raise ValueError("posteriorgram must be a 2-D array")
        n_frames, n_classes = frames.shape
        if n_frames < 1:
            raise ValueError("posteriorgram needs at least one frame")
        if n_classes < 2:
            raise ValueError("posteriorgram needs at least two classes")
        if len(self.class_labels) != n_classes:
            raise ValueError(
                f"{len(self.class_labels)} class labels for {n_classes} columns")
        if not np.all(np.isfinite(frames)):
            raise ValueError("posteriorgram contains non-finite values")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(frames.sum(axis=1) - 1.0)) > SIMPLEX_ATOL:
            raise ValueError("row not on simplex")
        if not self.frame_shift_ms > 0:
            raise ValueError("frame_shift_ms must be positive")
        object.__setattr__(self, "frames", _frozen(frames))
        object.__setattr__(self, "class_labels", tuple(str(c) for c in self.class_labels))
        object.__setattr__(self, "frame_shift_ms", float(self.frame_shift_ms))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_classes(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class BoundarySet:
    """Sorted inter-frame boundaries of one utterance.

    Index ``b`` denotes the gap between frame ``b`` and frame ``b + 1``, so
    valid indices run from 0 to ``num_frames - 2``.
    """

    indices: tuple
    num_frames: int
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        idx = tuple(int(b) for b in self.indices)
        if any(b2 <= b1 for b1, b2 in zip(idx, idx[1:])):
            raise ValueError("boundary indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] > self.num_frames - 2):
            raise ValueError(
                f"boundary index out of range [0, {self.num_frames - 2}]")
        if self.num_frames < 1:
            raise ValueError("num_frames must be positive")
        if not self.frame_shift_ms > 0:
            raise ValueError("frame_shift_ms must be positive")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "num_frames", int(self.num_frames))
        object.__setattr__(self, "frame_shift_ms", float(self.frame_shift_ms))

    @classmethod
    def from_unsorted(cls, indices: Iterable[int], num_frames: int,
                      frame_shift_ms: float = 10.0) -> "BoundarySet":
        """Build a set from arbitrary indices, sorting and deduplicating."""
        return cls(tuple(sorted({int(b) for b in indices})), num_frames, frame_shift_ms)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def num_gaps(self) -> int:
        return max(self.num_frames - 1, 0)

    def time_ms(self, b: int) -> float:
        return (b + 1) * self.frame_shift_ms

    def times_ms(self) -> list:
        return [self.time_ms(b) for b in self.indices]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


@dataclass(frozen=True, eq=False)
class MeasureTrack:
    """Per-frame scalar series derived from a posteriorgram.

    Frames outside ``[valid_from, valid_to]`` hold padding and are ignored by
    statistics and by the decision rules.
    """

    values: np.ndarray
    valid_from: int
    valid_to: int
    kind: str

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("measure track must be 1-D")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid_from", int(self.valid_from))
        object.__setattr__(self, "valid_to", int(self.valid_to))
        # an empty range (valid_to < valid_from) is allowed for short tracks
        if self.valid_from < 0 or self.valid_to > len(values) - 1 and self.valid_to >= self.valid_from:
            raise ValueError("valid range outside the track")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def valid_values(self) -> np.ndarray:
        if self.valid_to < self.valid_from:
            return self.values[:0]
        return self.values[self.valid_from:self.valid_to + 1]

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        if self.valid_to >= self.valid_from:
            mask[self.valid_from:self.valid_to + 1] = True
        return mask

    def negated(self) -> "MeasureTrack":
        return MeasureTrack(-self.values, self.valid_from, self.valid_to, self.kind)


@dataclass(frozen=True)
class GlobalStats:
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std)):
            raise ValueError("statistics must be finite")
        if self.std < 0:
            raise ValueError("standard deviation must be non-negative")


class Region(NamedTuple):
    """Inclusive run of contiguous frames."""

    start: int
    end: int


@dataclass(frozen=True)
class EvalReport:
    """Detection scores at one tolerance.

    ``precision`` is None when nothing was detected and ``recall`` is None
    when the reference is empty; ``criterion`` is None if either is.
    """

    n_correct: int
    n_detected: int
    n_reference: int
    precision: Optional[float]
    recall: Optional[float]
    criterion: Optional[float]
    tolerance_frames: int

    @property
    def no_detections(self) -> bool:
        return self.n_detected == 0

    @property
    def recall_inflated(self) -> bool:
        """True when several detections near one reference push recall past 100%."""
        return self.recall is not None and self.recall > 100.0


@dataclass(frozen=True)
class Utterance:
    """A posteriorgram together with its reference boundaries."""

    utt_id: str
    posteriorgram: Posteriorgram
    reference: BoundarySet
    classes: Sequence = field(default=())
