"""Training loop, evaluation (ROC-AUC), and the feature pipeline.

Features are log-compressed power spectrograms, ``log10(1 + power)``,
computed with the default STFT (129 x 200 for 2 s at 8 kHz).  The
transform name is recorded in checkpoint metadata so extraction applies
the identical preprocessing.

RNG discipline: one root stream per training run, split as
``child(0)`` parameter init, ``child(1)`` batch shuffling, ``child(2)``
dropout masks.  With a fixed seed the whole run, including the saved
checkpoint bytes, is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, checkpoint_from_network
from .corpus import CorpusSpec, LabeledClip, label_matrix
from .errors import NeuralogramError, ShapeError, TrainingDivergedError
from .layers import LayerSpec, euclid_softmax_loss
from .network import Network, desk_network
from .optim import AdamState, adam_step
from .ranking import tie_average_ranks
from .rng import Rng
from .stft import DESK_STFT, StftConfig, power_spectrogram

INPUT_TRANSFORM = "log10_1p_power"
SMOOTH_WINDOW = 101


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    steps: int = 3000
    seed: int = 42

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0:
            raise NeuralogramError("invalid training hyperparameters")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "batch_size": self.batch_size,
                "steps": self.steps, "seed": self.seed}


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_history: np.ndarray
    smoothed_initial: float
    smoothed_final: float


def clip_features(clip: LabeledClip, stft: StftConfig = DESK_STFT) -> np.ndarray:
    """One clip -> (1, bins, frames) float32 log-compressed spectrogram."""
    spec = power_spectrogram(clip.wave, stft)
    return np.log10(1.0 + spec.data).astype(np.float32)[None, :, :]


def corpus_features(corpus: list[LabeledClip],
                    stft: StftConfig = DESK_STFT) -> np.ndarray:
    """Stacked features, shape (n_clips, 1, bins, frames) float32."""
    if not corpus:
        raise NeuralogramError("corpus is empty")
    return np.stack([clip_features(clip, stft) for clip in corpus])


def smoothed_loss(losses: np.ndarray, window: int = SMOOTH_WINDOW
                  ) -> tuple[float, float]:
    """Mean of the first and last ``window`` raw losses (clamped to len)."""
    if len(losses) == 0:
        return float("nan"), float("nan")
    w = min(window, len(losses))
    return float(np.mean(losses[:w])), float(np.mean(losses[-w:]))


def train(corpus: list[LabeledClip], corpus_spec: CorpusSpec,
          config: TrainConfig = TrainConfig(),
          architecture: list[LayerSpec] | None = None,
          embedding_layer_index: int | None = None,
          stft: StftConfig = DESK_STFT,
          progress=None, log_every: int = 100) -> TrainResult:
    """Train a classifier on the corpus and return it as a checkpoint.

    ``architecture`` defaults to the desk preset sized to the corpus's
    class count.  Raises :class:`TrainingDivergedError` if the loss goes
    non-finite.  ``progress(step, loss)`` is called every ``log_every``
    steps when given.
    """
    if not corpus:
        raise NeuralogramError("corpus is empty")
    labels = label_matrix(corpus)
    n_classes = labels.shape[1]
    if architecture is None:
        architecture, embedding_layer_index = desk_network(n_classes=n_classes)
    if embedding_layer_index is None:
        raise NeuralogramError(
            "embedding_layer_index is required with a custom architecture")

    x_all = corpus_features(corpus, stft)
    n = len(corpus)
    if n < config.batch_size:
        raise NeuralogramError(
            f"corpus of {n} clips is smaller than one batch "
            f"({config.batch_size})")

    root = Rng(config.seed)
    init_rng, shuffle_rng, dropout_rng = (root.child(0), root.child(1),
                                          root.child(2))
    net = Network(architecture, tuple(x_all.shape[1:]))
    net.init_params(init_rng, np.float32)
    net.set_dropout_rng(dropout_rng)

    state = AdamState(lr=config.lr)
    losses = np.zeros(config.steps)
    perm = shuffle_rng.permutation(n)
    pos = 0
    for step in range(config.steps):
        if pos + config.batch_size > n:
            perm = shuffle_rng.permutation(n)
            pos = 0
        idx = perm[pos: pos + config.batch_size]
        pos += config.batch_size

        xb = x_all[idx]
        tb = labels[idx]
        logits = net.forward_logits(xb, train=True)
        loss, dlogits = euclid_softmax_loss(logits, tb)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became non-finite at step {step} "
                f"(lr={config.lr}, batch={config.batch_size})")
        losses[step] = loss
        net.backward(dlogits)
        adam_step(net.param_items(), net.grad_items(), state)
        if progress is not None and log_every and (step % log_every == 0
                                                   or step == config.steps - 1):
            progress(step, loss)

    first, last = smoothed_loss(losses)
    metadata = {
        "classes": list(corpus_spec.classes),
        "corpus": corpus_spec.to_dict(),
        "training": config.to_dict(),
        "stft": stft.to_dict(),
        "sample_rate": corpus_spec.sample_rate,
        "clip_dur": corpus_spec.clip_dur,
        "input_transform": INPUT_TRANSFORM,
        "loss_smoothed_initial": first,
        "loss_smoothed_final": last,
        "loss_tail": [float(v) for v in losses[-50:]],
    }
    ckpt = checkpoint_from_network(net, embedding_layer_index,
                                   rng_spec=root.spec(), metadata=metadata)
    net.release_buffers()
    return TrainResult(checkpoint=ckpt, loss_history=losses,
                       smoothed_initial=first, smoothed_final=last)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def roc_auc(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """Tie-averaged rank ROC-AUC; None when a class lacks pos or neg."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be 1-D and equal length")
    n_pos = int(positives.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = tie_average_ranks(scores)
    pos_rank_sum = ranks[positives].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalReport:
    per_class: dict[str, float | None]
    mean_auc: float
    n_clips: int

    def to_dict(self) -> dict:
        return {"per_class": dict(self.per_class), "mean_auc": self.mean_auc,
                "n_clips": self.n_clips}


def evaluate(net: Network, corpus: list[LabeledClip],
             class_names: tuple[str, ...],
             stft: StftConfig = DESK_STFT, batch_size: int = 32) -> EvalReport:
    """Per-class ROC-AUC of softmax scores against multi-hot truth.

    Classes missing positives or negatives in the held-out set get a
    ``None`` AUC and are excluded from the mean.
    """
    if not corpus:
        raise NeuralogramError("evaluation corpus is empty")
    labels = label_matrix(corpus)
    if labels.shape[1] != len(class_names):
        raise ShapeError(
            f"corpus has {labels.shape[1]} classes, expected {len(class_names)}")
    x_all = corpus_features(corpus, stft)
    scores = np.zeros((len(corpus), len(class_names)), dtype=np.float64)
    for lo in range(0, len(corpus), batch_size):
        batch = x_all[lo: lo + batch_size]
        scores[lo: lo + len(batch)] = net.forward(batch, train=False)

    per_class: dict[str, float | None] = {}
    defined = []
    for ci, name in enumerate(class_names):
        auc = roc_auc(scores[:, ci], labels[:, ci] > 0)
        per_class[name] = auc
        if auc is not None:
            defined.append(auc)
    mean = float(np.mean(defined)) if defined else float("nan")
    return EvalReport(per_class=per_class, mean_auc=mean, n_clips=len(corpus))


def evaluate_checkpoint(ckpt: Checkpoint, corpus: list[LabeledClip],
                        batch_size: int = 32) -> EvalReport:
    from .checkpoint import network_from_checkpoint

    net = network_from_checkpoint(ckpt)
    classes = tuple(ckpt.metadata.get("classes", ()))
    if not classes:
        classes = tuple(f"class_{i}" for i in range(net.output_shape[0]))
    stft = StftConfig.from_dict(ckpt.metadata["stft"]) \
        if "stft" in ckpt.metadata else DESK_STFT
    return evaluate(net, corpus, classes, stft=stft, batch_size=batch_size)
