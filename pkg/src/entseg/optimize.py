"""Threshold sweeps and exhaustive th1/th2 grid search.

A corpus here is a sequence of ``(measures, reference)`` pairs where
``measures`` is the dict from :func:`entseg.measures.compute_measures`
(plus an ``"nn"`` track when the network method is swept).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core import EvalReport
from .detect import COMBINED_METHODS, GAP_ALIGNED, SINGLE_METHODS, _run_peaks, _runs
from .evaluation import make_report
from .measures import decision_track, relative_threshold


def value_range(lo: float, hi: float, step: float) -> list:
    """Inclusive grid ``lo, lo + step, ..., hi`` rounded to 10 decimals."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round((hi - lo) / step))
    return [float(v) for v in np.round(lo + step * np.arange(n + 1), 10)]


class SweepRow(NamedTuple):
    th: float
    report: EvalReport


class GridCell(NamedTuple):
    th1: float
    th2: float
    report: EvalReport


@dataclass(frozen=True)
class GridResult:
    second: str
    cells: tuple
    best: Optional[GridCell]
    best_th1_per_th2: tuple  # one GridCell per th2 with a defined criterion


class PackedCorpus:
    """A corpus concatenated into single arrays for fast repeated decisions.

    Utterances are separated by invalid padding frames, so runs never cross
    an utterance and tolerance windows never reach a neighbour's boundaries.
    Produces the same detections as running the per-utterance decision on
    every utterance.
    """

    def __init__(self, corpus: Sequence, methods=("e", "d2", "ma")):
        corpus = list(corpus)
        pad = 8
        self.lengths = [len(decision_track(methods[0], ms)) for ms, _ in corpus]
        total = sum(self.lengths) + pad * (len(corpus) + 1)
        self.values = {m: np.zeros(total) for m in methods}
        self.valid = {m: np.zeros(total, dtype=bool) for m in methods}
        self.gap_lo = np.zeros(total, dtype=int)
        self.gap_hi = np.zeros(total, dtype=int)
        refs = []
        self.offsets = []
        off = pad
        for (ms, ref), T in zip(corpus, self.lengths):
            self.offsets.append(off)
            sl = slice(off, off + T)
            for m in methods:
                tr = decision_track(m, ms)
                if len(tr) != T:
                    raise ValueError("measure tracks of one utterance differ in length")
                self.values[m][sl] = tr.values
                if T >= 2:
                    self.valid[m][sl] = tr.valid_mask()
            self.gap_lo[sl] = off
            self.gap_hi[sl] = off + T - 2
            refs.append(ref.as_array() + off)
            off += T + pad
        self.ref = np.concatenate(refs) if refs else np.zeros(0, dtype=int)
        self.n_ref = len(self.ref)

    def decide(self, mask: np.ndarray, method: str) -> np.ndarray:
        """Global gap indices chosen by the starred relation on ``mask`` runs."""
        v = self.values[method]
        starts, ends = _runs(mask)
        n = _run_peaks(v, starts, ends)
        if method in GAP_ALIGNED:
            b = n
        else:
            valid = self.valid[method]
            left = np.where(valid[n - 1], v[n - 1], -np.inf)
            right = np.where(valid[n + 1], v[n + 1], -np.inf)
            b = np.where(right >= left, n, n - 1)
        return np.unique(np.clip(b, self.gap_lo[n], self.gap_hi[n]))

    def single(self, method: str, th: float) -> np.ndarray:
        return self.decide(self.valid[method] & (self.values[method] > th), method)

    def combined(self, second: str, th1: float, th2: float) -> np.ndarray:
        mask = (self.valid["e"] & (self.values["e"] > th1)
                & self.valid[second] & (self.values[second] > th2))
        return self.decide(mask, second)

    def score(self, gaps: np.ndarray, tol: int, weights=(1.0, 1.0)) -> EvalReport:
        c = 0
        if len(gaps) and self.n_ref:
            pos = np.searchsorted(self.ref, gaps)
            right = np.abs(self.ref[np.minimum(pos, self.n_ref - 1)] - gaps)
            left = np.abs(self.ref[np.maximum(pos - 1, 0)] - gaps)
            c = int(np.count_nonzero(np.minimum(left, right) <= tol))
        return make_report(c, len(gaps), self.n_ref, tol, weights)

    def split(self, gaps: np.ndarray) -> list:
        """Per-utterance local gap indices."""
        out = []
        for off, T in zip(self.offsets, self.lengths):
            sel = gaps[(gaps >= off) & (gaps < off + T)]
            out.append((sel - off).tolist())
        return out


def _check(corpus):
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    return corpus


def _methods_for(method: str) -> tuple:
    if method in COMBINED_METHODS:
        return ("e", method.split("+")[1])
    return (method,)


def threshold_sweep(method: str, corpus: Sequence, stats, th_values=None,
                    tolerance_frames: int = 1, th1: Optional[float] = None,
                    weights: Tuple[float, float] = (1.0, 1.0),
                    packed: Optional[PackedCorpus] = None) -> list:
    """Evaluate one method at each relative threshold.

    Combined methods sweep th2 with the entropy gate fixed at ``th1``.
    Rows come back in ascending threshold order.
    """
    corpus = _check(corpus)
    th_values = sorted(value_range(-1.0, 2.0, 0.1) if th_values is None else th_values)
    if method not in SINGLE_METHODS and method not in COMBINED_METHODS:
        raise ValueError(f"cannot sweep method {method!r}")
    if packed is None:
        packed = PackedCorpus(corpus, _methods_for(method))
    if method in SINGLE_METHODS:
        rows = []
        for r in th_values:
            gaps = packed.single(method, relative_threshold(stats[method], r))
            rows.append(SweepRow(r, packed.score(gaps, tolerance_frames, weights)))
        return rows
    if th1 is None:
        raise ValueError("combined sweep needs a fixed th1")
    second = method.split("+")[1]
    return [SweepRow(c.th2, c.report) for c in _grid_row(
        packed, second, stats, th1, th_values, tolerance_frames, weights)]


def _grid_row(packed, second, stats, th1_rel, th2_values, tol, weights) -> list:
    th1 = relative_threshold(stats["e"], th1_rel)
    out = []
    for r2 in th2_values:
        gaps = packed.combined(second, th1, relative_threshold(stats[second], r2))
        out.append(GridCell(th1_rel, r2, packed.score(gaps, tol, weights)))
    return out


def _grid_row_star(args):
    return _grid_row(*args)


def grid_search_combined(second: str, corpus: Sequence, stats, th1_values=None, th2_values=None,
                         tolerance_frames: int = 1, weights: Tuple[float, float] = (1.0, 1.0),
                         jobs: int = 1) -> GridResult:
    """Exhaustive search of (th1, th2) minimising the criterion.

    Ties go to the lower th1, then the lower th2. Cells without detections
    have no criterion and never win.
    """
    if second not in ("d2", "ma"):
        raise ValueError(f"second measure must be 'd2' or 'ma', got {second!r}")
    corpus = _check(corpus)
    th1_values = sorted(value_range(-2.0, 2.0, 0.1) if th1_values is None else th1_values)
    th2_values = sorted(value_range(-2.0, 2.0, 0.1) if th2_values is None else th2_values)
    packed = PackedCorpus(corpus, ("e", second))
    args = [(packed, second, stats, t1, th2_values, tolerance_frames, weights) for t1 in th1_values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_grid_row_star, args))
    else:
        rows = [_grid_row(*a) for a in args]
    cells = tuple(c for row in rows for c in row)

    best = None
    for c in cells:
        crit = c.report.criterion
        if crit is not None and (best is None or crit < best.report.criterion):
            best = c
    per_th2 = []
    for j in range(len(th2_values)):
        col = [row[j] for row in rows if row[j].report.criterion is not None]
        if col:
            per_th2.append(min(col, key=lambda c: (c.report.criterion, c.th1)))
    return GridResult(second, cells, best, tuple(per_th2))


def best_row(rows) -> Optional[SweepRow]:
    """Sweep row with the lowest criterion (first one on ties)."""
    best = None
    for row in rows:
        crit = row.report.criterion
        if crit is not None and (best is None or crit < best.report.criterion):
            best = row
    return best
