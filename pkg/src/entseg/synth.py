"""Synthetic posteriorgrams with known segment boundaries.

Each segment gives its class a high logit. Around every junction the logits
of the two neighbouring classes are cross-faded linearly, so the frames
there are genuine mixtures and their entropy rises. Per-class temperatures
make the within-segment entropy class dependent.

Two optional effects imitate an imperfect recogniser: ``confusion`` gives
every segment a competing class with a random share of the logit gap, and
``misalignment`` is the probability that a transition in the posteriors is
displaced by one frame from the reference junction.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import BoundarySet, Posteriorgram, Utterance
from .io import round_half_up, write_labels, write_posteriorgram

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 50
    min_segments: int = 20
    max_segments: int = 40
    min_duration: int = 4
    max_duration: int = 14
    transition_width: int = 2
    temperature: float = 1.0
    temperature_jitter: float = 0.2
    noise_level: float = 0.5
    logit_gap: float = 8.0
    confusion: float = 0.0
    misalignment: float = 0.0
    frame_shift_ms: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 1 <= self.min_segments <= self.max_segments:
            raise ValueError("need 1 <= min_segments <= max_segments")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ValueError("need 1 <= min_duration <= max_duration")
        if not 0 <= self.transition_width < self.min_duration:
            raise ValueError("transition_width must be in [0, min_duration)")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.temperature_jitter < 0 or self.noise_level < 0:
            raise ValueError("temperature_jitter and noise_level must be non-negative")
        if not 0 <= self.confusion <= 1:
            raise ValueError("confusion must be in [0, 1]")
        if not 0 <= self.misalignment <= 1:
            raise ValueError("misalignment must be in [0, 1]")
        if not self.frame_shift_ms > 0:
            raise ValueError("frame_shift_ms must be positive")

    def class_temperatures(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 1])
        return self.temperature * np.exp(self.temperature_jitter * rng.standard_normal(self.num_classes))

    @property
    def class_labels(self) -> tuple:
        width = len(str(self.num_classes - 1))
        return tuple(f"c{i:0{width}d}" for i in range(self.num_classes))


def _partition(total: int, n: int, lo: int, hi: int, rng) -> np.ndarray:
    """Split ``total`` frames into ``n`` durations within ``[lo, hi]``."""
    if not n * lo <= total <= n * hi:
        raise ValueError(f"cannot split {total} frames into {n} segments of {lo}..{hi}")
    d = lo + rng.multinomial(total - n * lo, np.full(n, 1.0 / n))
    while d.max() > hi:
        over = int(np.sum(np.maximum(d - hi, 0)))
        d = np.minimum(d, hi)
        room = hi - d
        d += rng.multinomial(over, room / room.sum())
    return d


def _durations(spec: SynthSpec, n_seg: int, rng, target_density: Optional[float]) -> np.ndarray:
    if target_density is None:
        return rng.integers(spec.min_duration, spec.max_duration + 1, size=n_seg)
    if n_seg < 2:
        return rng.integers(spec.min_duration, spec.max_duration + 1, size=n_seg)
    gaps = round_half_up((n_seg - 1) / target_density)
    total = min(max(gaps + 1, n_seg * spec.min_duration), n_seg * spec.max_duration)
    return _partition(total, n_seg, spec.min_duration, spec.max_duration, rng)


def crossfade_weights(durations, width: int) -> tuple:
    """Per-frame (own class segment, neighbour segment, neighbour weight).

    The weight of the neighbouring class grows linearly through a window of
    ``width`` frames centred on each junction; it is 0.5 exactly on the gap.
    """
    ends = np.cumsum(durations)
    T = int(ends[-1])
    seg = np.repeat(np.arange(len(durations)), durations)
    other = seg.copy()
    lam = np.zeros(T)
    if width > 0:
        f = np.arange(T, dtype=float)
        for k, g in enumerate(ends[:-1] - 1):  # gap g lies between frames g and g+1
            w = np.clip(0.5 + (f - (g + 0.5)) / width, 0.0, 1.0)
            left = (seg == k) & (w > 0)
            right = (seg == k + 1) & (w < 1)
            other[left] = k + 1
            lam[left] = w[left]
            other[right] = k
            lam[right] = 1.0 - w[right]
    return seg, other, lam


def mixed_posteriors(own, neighbour, lam, temperatures, num_classes: int,
                     logit_gap: float, noise, rival=None, rival_own=None,
                     rival_neighbour=None) -> np.ndarray:
    """Softmax rows of cross-faded one-hot logits.

    ``own``/``neighbour`` are class ids per frame and ``lam`` the weight of
    the neighbour; ``noise`` is added to the logits before scaling. Optional
    ``rival`` (per-frame class pair) adds competing logits of strength
    ``rival_own`` and ``rival_neighbour`` under the same cross-fade.
    """
    T = len(own)
    rows = np.arange(T)
    z = np.zeros((T, num_classes))
    z[rows, own] += logit_gap * (1.0 - lam)
    z[rows, neighbour] += logit_gap * lam
    if rival is not None:
        z[rows, rival[0]] += rival_own * (1.0 - lam)
        z[rows, rival[1]] += rival_neighbour * lam
    z += noise
    tau = (1.0 - lam) * temperatures[own] + lam * temperatures[neighbour]
    z /= tau[:, None]
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def _misalign(durations: np.ndarray, spec: SynthSpec, rng) -> np.ndarray:
    """Shift internal junctions by one frame with probability ``misalignment``."""
    ends = np.cumsum(durations)
    n = len(ends) - 1
    move = rng.random(n) < spec.misalignment
    shift = np.where(move, rng.choice([-1, 1], size=n), 0)
    for k in range(n):
        if not shift[k]:
            continue
        start = ends[k - 1] if k else 0
        new_end = ends[k] + shift[k]
        # keep every displaced segment longer than the fade
        if new_end - start > spec.transition_width and ends[k + 1] - new_end > spec.transition_width:
            ends[k] = new_end
    return np.diff(np.concatenate([[0], ends]))


def generate_utterance(spec: SynthSpec, seed, target_density: Optional[float] = None):
    """One synthetic utterance.

    Returns:
        (Posteriorgram, BoundarySet of true gaps, class id per segment,
        segment durations in frames)
    """
    rng = np.random.default_rng(seed)
    n_seg = int(rng.integers(spec.min_segments, spec.max_segments + 1))
    classes = _class_sequence(n_seg, spec.num_classes, rng)
    durations = _durations(spec, n_seg, rng, target_density)
    seen = durations
    if spec.misalignment > 0:
        seen = _misalign(durations, spec, rng)
    seg, other, lam = crossfade_weights(seen, spec.transition_width)
    T = len(seg)
    noise = spec.noise_level * rng.standard_normal((T, spec.num_classes))
    rival = strength = None
    if spec.confusion > 0:
        rivals = np.array([_other_class(c, spec.num_classes, rng) for c in classes])
        strength = spec.confusion * spec.logit_gap * rng.random(n_seg)
        rival = (rivals[seg], rivals[other])
        strength = (strength[seg], strength[other])
    p = mixed_posteriors(classes[seg], classes[other], lam, spec.class_temperatures(),
                         spec.num_classes, spec.logit_gap, noise, rival,
                         *(strength or (None, None)))
    pg = Posteriorgram(p, spec.class_labels, spec.frame_shift_ms)
    truth = BoundarySet(tuple((np.cumsum(durations)[:-1] - 1).tolist()), T, spec.frame_shift_ms)
    return pg, truth, classes.tolist(), durations.tolist()


def _other_class(c: int, n: int, rng) -> int:
    k = int(rng.integers(n - 1))
    return k + (k >= c)


def _class_sequence(n_seg: int, n_classes: int, rng) -> np.ndarray:
    classes = np.empty(n_seg, dtype=int)
    classes[0] = rng.integers(n_classes)
    for k in range(1, n_seg):
        classes[k] = _other_class(classes[k - 1], n_classes, rng)
    return classes


def utterance_seed(seed: int, index: int) -> list:
    return [int(seed), int(index)]


def synth_corpus(spec: SynthSpec, num_utterances: int, seed: Optional[int] = None,
                 target_density: Optional[float] = None) -> list:
    """In-memory corpus of :class:`Utterance`."""
    seed = spec.seed if seed is None else seed
    out = []
    for i in range(num_utterances):
        pg, truth, classes, _ = generate_utterance(spec, utterance_seed(seed, i), target_density)
        out.append(Utterance(f"utt{i:04d}", pg, truth, tuple(classes)))
    return out


def generate_corpus(spec: SynthSpec, num_utterances: int, out_dir, seed: Optional[int] = None,
                    target_density: Optional[float] = None) -> dict:
    """Write posteriorgram and label files plus a JSON manifest to ``out_dir``."""
    seed = spec.seed if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    labels = spec.class_labels
    entries = []
    n_b = n_g = 0
    for i in range(num_utterances):
        utt_id = f"utt{i:04d}"
        pg, truth, classes, durations = generate_utterance(
            spec, utterance_seed(seed, i), target_density)
        write_posteriorgram(pg, os.path.join(out_dir, utt_id + ".csv"))
        write_labels(os.path.join(out_dir, utt_id + ".lab"), durations,
                     [labels[c] for c in classes], spec.frame_shift_ms)
        entries.append({"id": utt_id, "posteriorgram": utt_id + ".csv", "labels": utt_id + ".lab",
                        "num_frames": pg.num_frames, "num_boundaries": len(truth)})
        n_b += len(truth)
        n_g += truth.num_gaps
    manifest = {
        "frame_shift_ms": spec.frame_shift_ms,
        "seed": seed,
        "target_density": target_density,
        "num_boundaries": n_b,
        "num_gaps": n_g,
        "boundary_density": n_b / n_g if n_g else None,
        "spec": asdict(spec),
        "utterances": entries,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest
