"""Readers and writers for posteriorgram, label, boundary and report files.

Formats:

* posteriorgram: UTF-8 CSV, header row of class labels, one row per frame
* labels: ``start_ms end_ms label`` per line, contiguous segments
* boundaries: ``index time_ms`` per line
* report: ``key value`` per line
"""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Optional

import numpy as np

from .core import BoundarySet, EvalReport, Posteriorgram, Utterance

RENORM_TOL = 1e-4
TIME_ATOL = 1e-6


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _fmt(x: float) -> str:
    return repr(float(x))


# -- posteriorgrams ---------------------------------------------------------

def load_posteriorgram(path, frame_shift_ms: float = 10.0) -> Posteriorgram:
    """Read a posteriorgram CSV.

    Rows whose sum is within 1e-4 of one are renormalised; anything further
    off raises ``ValueError``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    labels = [c.strip() for c in rows[0]]
    if len(rows) < 2:
        raise ValueError(f"{path}: no frames after header")
    n = len(labels)
    frames = np.empty((len(rows) - 1, n))
    for i, row in enumerate(rows[1:]):
        if len(row) != n:
            raise ValueError(
                f"{path}: malformed row width at frame {i}: {len(row)} != {n}")
        try:
            frames[i] = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"{path}: frame {i}: {exc}") from None
    if not np.all(np.isfinite(frames)):
        raise ValueError(f"{path}: non-finite probability")
    neg = np.nonzero((frames < 0).any(axis=1))[0]
    if neg.size:
        raise ValueError(f"{path}: negative probability at frame {neg[0]}")
    sums = frames.sum(axis=1)
    off = np.nonzero(np.abs(sums - 1.0) > RENORM_TOL)[0]
    if off.size:
        raise ValueError(
            f"{path}: row not on simplex at frame {off[0]} (sum {sums[off[0]]!r})")
    frames = frames / sums[:, None]
    return Posteriorgram(frames, tuple(labels), frame_shift_ms)


def write_posteriorgram(pg: Posteriorgram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(pg.class_labels) + "\n")
        for row in pg.frames:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


# -- label files ------------------------------------------------------------

def read_segments(path) -> list:
    """Return the ``(start_ms, end_ms, label)`` triples of a label file."""
    segments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected 'start_ms end_ms label'")
            start, end = float(parts[0]), float(parts[1])
            label = " ".join(parts[2:])
            if start < 0 or end < 0:
                raise ValueError(f"{path}:{lineno}: negative time")
            if end <= start:
                raise ValueError(f"{path}:{lineno}: segment end <= start")
            if segments and abs(start - segments[-1][1]) > TIME_ATOL:
                raise ValueError(
                    f"{path}:{lineno}: segments not contiguous "
                    f"({segments[-1][1]} -> {start})")
            segments.append((start, end, label))
    return segments


def segments_to_boundaries(segments, frame_shift_ms: float = 10.0,
                           num_frames: Optional[int] = None) -> BoundarySet:
    """Convert contiguous segments to inter-frame boundary indices.

    The end time of every segment but the last maps to
    ``round(end_ms / frame_shift_ms) - 1`` (halves round up). Indices that
    fall outside the utterance after quantisation are dropped.
    """
    if num_frames is None:
        if not segments:
            raise ValueError("cannot infer utterance length from an empty label file")
        num_frames = round_half_up(segments[-1][1] / frame_shift_ms)
    idx = {round_half_up(end / frame_shift_ms) - 1 for _, end, _ in segments[:-1]}
    idx = [b for b in idx if 0 <= b <= num_frames - 2]
    return BoundarySet.from_unsorted(idx, num_frames, frame_shift_ms)


def load_labels(path, frame_shift_ms: float = 10.0,
                num_frames: Optional[int] = None) -> BoundarySet:
    """Read a label file as a BoundarySet.

    The utterance length defaults to the end of the last segment.
    """
    return segments_to_boundaries(read_segments(path), frame_shift_ms, num_frames)


def write_labels(path, durations, labels, frame_shift_ms: float = 10.0) -> None:
    """Write contiguous segments given their durations in frames."""
    t = 0
    with open(path, "w", encoding="utf-8") as fh:
        for dur, lab in zip(durations, labels):
            fh.write(f"{_fmt(t * frame_shift_ms)} {_fmt((t + dur) * frame_shift_ms)} {lab}\n")
            t += dur


# -- boundary files ---------------------------------------------------------

def write_boundaries(bs: BoundarySet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in bs.indices:
            fh.write(f"{b} {_fmt(bs.time_ms(b))}\n")


def load_boundaries(path, num_frames: int, frame_shift_ms: float = 10.0) -> BoundarySet:
    idx = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                idx.append(int(parts[0]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad boundary index {parts[0]!r}") from None
    return BoundarySet(tuple(idx), num_frames, frame_shift_ms)


# -- reports ----------------------------------------------------------------

_REPORT_INT = ("C", "D", "T", "tolerance_frames")
_REPORT_FLOAT = ("precision", "recall", "criterion")


def _opt(x) -> str:
    return "none" if x is None else _fmt(x)


def write_report(report: EvalReport, path) -> None:
    lines = [
        ("C", report.n_correct),
        ("D", report.n_detected),
        ("T", report.n_reference),
        ("precision", _opt(report.precision)),
        ("recall", _opt(report.recall)),
        ("criterion", _opt(report.criterion)),
        ("tolerance_frames", report.tolerance_frames),
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in lines:
            fh.write(f"{key} {val}\n")


def load_report(path) -> EvalReport:
    kv = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2:
                kv[parts[0]] = parts[1]
    missing = [k for k in _REPORT_INT + _REPORT_FLOAT if k not in kv]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")

    def opt(s):
        return None if s == "none" else float(s)

    return EvalReport(
        n_correct=int(kv["C"]), n_detected=int(kv["D"]), n_reference=int(kv["T"]),
        precision=opt(kv["precision"]), recall=opt(kv["recall"]),
        criterion=opt(kv["criterion"]), tolerance_frames=int(kv["tolerance_frames"]))


def list_files(spec, suffix: str) -> list:
    """Expand a directory (files ending in ``suffix``) or a list file."""
    if os.path.isdir(spec):
        return sorted(os.path.join(spec, f) for f in os.listdir(spec) if f.endswith(suffix))
    base = os.path.dirname(os.path.abspath(spec))
    with open(spec, encoding="utf-8") as fh:
        paths = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    return [p if os.path.isabs(p) else os.path.join(base, p) for p in paths]


# -- corpus manifests -------------------------------------------------------

def load_corpus(manifest_path) -> list:
    """Load every utterance listed in a JSON corpus manifest.

    The manifest holds ``frame_shift_ms`` and a list of ``utterances`` with
    ``id``, ``posteriorgram`` and ``labels`` paths (relative to the
    manifest's directory).
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    shift = float(manifest.get("frame_shift_ms", 10.0))
    out = []
    for entry in sorted(manifest["utterances"], key=lambda e: e["id"]):
        pg = load_posteriorgram(os.path.join(base, entry["posteriorgram"]), shift)
        ref = load_labels(os.path.join(base, entry["labels"]), shift, pg.num_frames)
        out.append(Utterance(entry["id"], pg, ref))
    return out
