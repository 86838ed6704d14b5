"""Time-delay network regressing boundary proximity from the entropy measures.

The network reads the four tracks (entropy, first and second derivative,
moving average) through a window of frame offsets, has one tanh hidden
layer and a logistic output. Windows that leave the utterance replicate the
edge frames. Everything is plain numpy with hand-written backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import BoundarySet, MeasureTrack
from .detect import detect_single
from .measures import compute_measures, global_stats

INPUT_KINDS = ("entropy", "d1", "d2", "ma")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class TdnnConfig:
    n_inputs: int = 4
    n_hidden: int = 11
    n_outputs: int = 1
    input_delays: tuple = (-2, -1, 0, 1, 2)
    output_delays: tuple = (0,)

    def __post_init__(self):
        if min(self.n_inputs, self.n_hidden, self.n_outputs) < 1:
            raise ValueError("layer sizes must be positive")
        if not self.input_delays or not self.output_delays:
            raise ValueError("delay sets must be non-empty")
        for d in (self.input_delays, self.output_delays):
            if len(set(d)) != len(d):
                raise ValueError("delay offsets must be distinct")


@dataclass
class TdnnModel:
    config: TdnnConfig
    w1: np.ndarray  # (hidden, len(input_delays) * inputs)
    b1: np.ndarray
    w2: np.ndarray  # (outputs, len(output_delays) * hidden)
    b2: np.ndarray
    norm_mean: np.ndarray = field(default=None)
    norm_std: np.ndarray = field(default=None)

    def __post_init__(self):
        c = self.config
        if self.norm_mean is None:
            self.norm_mean = np.zeros(c.n_inputs)
        if self.norm_std is None:
            self.norm_std = np.ones(c.n_inputs)
        shapes = {
            "w1": (c.n_hidden, len(c.input_delays) * c.n_inputs),
            "b1": (c.n_hidden,),
            "w2": (c.n_outputs, len(c.output_delays) * c.n_hidden),
            "b2": (c.n_outputs,),
            "norm_mean": (c.n_inputs,),
            "norm_std": (c.n_inputs,),
        }
        for name, shape in shapes.items():
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            setattr(self, name, a)

    @property
    def sizes(self) -> tuple:
        c = self.config
        return c.n_inputs, c.n_hidden, c.n_outputs

    @property
    def context(self) -> int:
        """Largest frame offset an output can see."""
        c = self.config
        return max(abs(d) for d in c.input_delays) + max(abs(d) for d in c.output_delays)

    def params(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "TdnnModel":
        return TdnnModel(self.config, self.w1.copy(), self.b1.copy(), self.w2.copy(),
                         self.b2.copy(), self.norm_mean.copy(), self.norm_std.copy())

    def identical_to(self, other: "TdnnModel") -> bool:
        a = [self.w1, self.b1, self.w2, self.b2, self.norm_mean, self.norm_std]
        b = [other.w1, other.b1, other.w2, other.b2, other.norm_mean, other.norm_std]
        return self.config == other.config and all(
            x.shape == y.shape and x.tobytes() == y.tobytes() for x, y in zip(a, b))


def tdnn_init(config: TdnnConfig = TdnnConfig(), seed: int = 0) -> TdnnModel:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    k1 = len(config.input_delays) * config.n_inputs
    k2 = len(config.output_delays) * config.n_hidden
    w1 = rng.uniform(-1, 1, (config.n_hidden, k1)) / np.sqrt(k1)
    w2 = rng.uniform(-1, 1, (config.n_outputs, k2)) / np.sqrt(k2)
    return TdnnModel(config, w1, np.zeros(config.n_hidden), w2, np.zeros(config.n_outputs))


def zero_model(config: TdnnConfig = TdnnConfig()) -> TdnnModel:
    m = tdnn_init(config)
    m.w1[:] = 0
    m.w2[:] = 0
    return m


# -- targets and inputs -----------------------------------------------------

def proximity_target(boundaries: BoundarySet, num_frames: Optional[int] = None) -> np.ndarray:
    """``exp(-d)`` with ``d`` the frame distance to the nearest boundary.

    Frames ``b`` and ``b + 1`` flank boundary ``b`` and have ``d = 0``.
    Without boundaries every frame gets 0.
    """
    T = boundaries.num_frames if num_frames is None else num_frames
    if not len(boundaries):
        return np.zeros(T)
    f = np.arange(T)[:, None]
    b = boundaries.as_array()[None, :]
    d = np.maximum(np.maximum(b - f, f - (b + 1)), 0).min(axis=1)
    return np.exp(-d.astype(float))


def input_matrix(measures: Mapping[str, MeasureTrack]) -> np.ndarray:
    """Stack the four input tracks into a (T, 4) array."""
    tracks = [measures[k].values for k in INPUT_KINDS]
    if len({len(t) for t in tracks}) != 1:
        raise ValueError("track length mismatch between network inputs")
    return np.stack(tracks, axis=1)


def fit_normalization(model: TdnnModel, measures_list: Sequence[Mapping]) -> TdnnModel:
    """Copy of ``model`` with per-input mean/std taken over valid frames."""
    measures_list = list(measures_list)
    mean, std = [], []
    for k in INPUT_KINDS:
        s = global_stats(ms[k] for ms in measures_list)
        mean.append(s.mean)
        std.append(s.std if s.std > 0 else 1.0)
    return replace(model.copy(), norm_mean=np.array(mean), norm_std=np.array(std))


# -- forward / backward -----------------------------------------------------

def _delay_index(T: int, delays) -> np.ndarray:
    return np.clip(np.arange(T)[None, :] + np.asarray(delays)[:, None], 0, T - 1)


def _stack(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # (T, len(delays) * dim), delay-major blocks
    return np.concatenate([x[i] for i in idx], axis=1)


def _unstack(g: np.ndarray, idx: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((idx.shape[1], dim))
    for k, i in enumerate(idx):
        np.add.at(out, i, g[:, k * dim:(k + 1) * dim])
    return out


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _forward(model: TdnnModel, x: np.ndarray):
    T = x.shape[0]
    xn = (x - model.norm_mean) / model.norm_std
    idx1 = _delay_index(T, model.config.input_delays)
    idx2 = _delay_index(T, model.config.output_delays)
    X = _stack(xn, idx1)
    h = np.tanh(X @ model.w1.T + model.b1)
    H = _stack(h, idx2)
    y = _sigmoid(H @ model.w2.T + model.b2)
    return y, (X, h, H, idx2)


def forward(model: TdnnModel, x: np.ndarray) -> np.ndarray:
    """Network output (T, outputs) for raw inputs ``x`` of shape (T, inputs)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.config.n_inputs:
        raise ValueError(f"expected (T, {model.config.n_inputs}) inputs, got {x.shape}")
    return _forward(model, x)[0]


def tdnn_forward(model: TdnnModel, measures: Mapping[str, MeasureTrack]) -> MeasureTrack:
    y = forward(model, input_matrix(measures))[:, 0]
    return MeasureTrack(y, 0, len(y) - 1, "nn")


def _accumulate(model: TdnnModel, x: np.ndarray, target: np.ndarray, scale: float, grads):
    """Add ``scale * d(sum sq. err)/d(params)`` for one utterance; return the sum sq. err."""
    y, (X, h, H, idx2) = _forward(model, x)
    err = y - target.reshape(y.shape)
    da2 = 2.0 * scale * err * y * (1.0 - y)
    grads[2] += da2.T @ H
    grads[3] += da2.sum(axis=0)
    dh = _unstack(da2 @ model.w2, idx2, model.config.n_hidden)
    da1 = dh * (1.0 - h ** 2)
    grads[0] += da1.T @ X
    grads[1] += da1.sum(axis=0)
    return float(np.sum(err ** 2))


def loss_and_grads(model: TdnnModel, dataset: Sequence) -> tuple:
    """Mean squared error over all frames of ``dataset`` and its gradients.

    ``dataset`` holds ``(inputs (T, 4), target (T,))`` pairs.
    """
    n = sum(len(t) for _, t in dataset)
    if n == 0:
        raise ValueError("empty dataset")
    grads = [np.zeros_like(p) for p in model.params()]
    sse = sum(_accumulate(model, x, t, 1.0 / n, grads) for x, t in dataset)
    return sse / n, grads


def mse(model: TdnnModel, dataset: Sequence) -> float:
    n = sum(len(t) for _, t in dataset)
    if n == 0:
        raise ValueError("empty dataset")
    return sum(float(np.sum((forward(model, x)[:, 0] - t) ** 2)) for x, t in dataset) / n


# -- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    rate: float = 0.5
    momentum: float = 0.0
    batch_utterances: Optional[int] = None  # None: full batch
    shuffle: bool = False
    seed: int = 0


def make_dataset(utterances, measures_list=None) -> list:
    """(inputs, proximity target) pairs for a list of :class:`Utterance`."""
    if measures_list is None:
        measures_list = [compute_measures(u.posteriorgram) for u in utterances]
    return [(input_matrix(ms), proximity_target(u.reference))
            for u, ms in zip(utterances, measures_list)]


def tdnn_train(model: TdnnModel, dataset: Sequence, hp: TrainConfig = TrainConfig()):
    """Gradient-descent training on mean squared error.

    Returns the trained copy and the dataset MSE after every epoch. Raises
    :class:`TrainingDiverged` if the loss stops being finite.
    """
    dataset = list(dataset)
    if not dataset or sum(len(t) for _, t in dataset) == 0:
        raise ValueError("empty dataset")
    if hp.rate < 0:
        raise ValueError("learning rate must be non-negative")
    if hp.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not 0 <= hp.momentum < 1:
        raise ValueError("momentum must be in [0, 1)")
    model = model.copy()
    rng = np.random.default_rng(hp.seed)
    bsize = hp.batch_utterances or len(dataset)
    velocity = [np.zeros_like(p) for p in model.params()]
    losses = []
    order = np.arange(len(dataset))
    for epoch in range(hp.epochs):
        if hp.shuffle:
            order = rng.permutation(len(dataset))
        for start in range(0, len(order), bsize):
            batch = [dataset[i] for i in order[start:start + bsize]]
            _, grads = loss_and_grads(model, batch)
            for p, g, v in zip(model.params(), grads, velocity):
                v *= hp.momentum
                v -= hp.rate * g
                p += v
        loss = mse(model, dataset)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        losses.append(loss)
    return model, losses


# -- detection --------------------------------------------------------------

def with_nn(model: TdnnModel, measures: Mapping[str, MeasureTrack]) -> dict:
    out = dict(measures)
    out["nn"] = tdnn_forward(model, measures)
    return out


def nn_stats(model: TdnnModel, measures_list):
    return global_stats(tdnn_forward(model, ms) for ms in measures_list)


def detect_nn(model: TdnnModel, measures: Mapping[str, MeasureTrack], th_rel: float, stats,
              frame_shift_ms: float = 10.0) -> BoundarySet:
    """Starred threshold on the network output; ``stats`` describe nn outputs."""
    return detect_single("nn", with_nn(model, measures), th_rel, stats, frame_shift_ms)


# -- model files ------------------------------------------------------------

def _row(a) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(a))


def save_model(model: TdnnModel, path) -> None:
    """Text format: sizes, delays (input | output), normalisation, then
    w1 rows, b1, w2 rows, b2 with one row per line."""
    c = model.config
    lines = [
        " ".join(str(s) for s in model.sizes),
        " ".join(map(str, c.input_delays)) + " | " + " ".join(map(str, c.output_delays)),
        _row(np.column_stack([model.norm_mean, model.norm_std])),
    ]
    lines += [_row(r) for r in model.w1]
    lines.append(_row(model.b1))
    lines += [_row(r) for r in model.w2]
    lines.append(_row(model.b2))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> TdnnModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    try:
        n_in, n_hid, n_out = (int(v) for v in lines[0])
        bar = lines[1].index("|")
        d_in = tuple(int(v) for v in lines[1][:bar])
        d_out = tuple(int(v) for v in lines[1][bar + 1:])
        config = TdnnConfig(n_in, n_hid, n_out, d_in, d_out)
        norm = np.array(lines[2], dtype=float).reshape(n_in, 2)
        rows = [np.array(r, dtype=float) for r in lines[3:]]
        w1 = np.array(rows[:n_hid])
        b1 = rows[n_hid]
        w2 = np.array(rows[n_hid + 1:n_hid + 1 + n_out])
        b2 = rows[n_hid + 1 + n_out]
        if len(rows) != n_hid + n_out + 2:
            raise ValueError("unexpected number of weight rows")
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed model file ({exc})") from None
    return TdnnModel(config, w1, b1, w2, b2, norm[:, 0].copy(), norm[:, 1].copy())
