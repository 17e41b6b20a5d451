"""Stacked-embedding audio analysis.

A Neuralogram is built by sliding a trained convolutional classifier
over an audio signal and stacking the embedding-layer activations into
a (dimension x time) matrix.  This package covers the whole pipeline:
signal synthesis, spectrograms, the CNN and its training on a seeded
synthetic corpus, checkpointing, extraction, rendering, and the probe
experiments (chirp/pitch, impulse-train/rhythm, embedding size, PCA)
that characterise what the representation captures.
"""

from .audio_io import read_wav, write_wav
from .checkpoint import (
    Checkpoint,
    checkpoint_from_network,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
)
from .corpus import (
    CLASS_NAMES,
    CorpusSpec,
    LabeledClip,
    export_corpus,
    make_clip,
    make_corpus,
)
from .errors import (
    AliasingError,
    CheckpointFormatError,
    CheckpointIntegrityError,
    CheckpointVersionError,
    FilterbankError,
    NeuralogramError,
    ShapeError,
    SingularTransformError,
    TrainingDivergedError,
)
from .extractor import (
    Neuralogram,
    NeuralogramConfig,
    extract,
    frame_count,
    load_neuralogram,
    load_neuralogram_csv,
    save_neuralogram,
    save_neuralogram_csv,
    window_starts,
)
from .network import Network, deep_network, desk_network, gradient_check
from .probes import (
    PCAProjection,
    ProbeReport,
    SortedNeuralogram,
    bin_rate_curve,
    chirp_metrics,
    chirp_probe,
    chirp_wave,
    comb_energy_reference,
    embedding_size_study,
    estimate_cutoff,
    pca_project,
    rhythm_probe,
    sort_rows_by_peak_time,
)
from .ranking import linear_fit_r2, spearman, tie_average_ranks
from .render import RenderSpec, read_pgm, render_matrix
from .rng import Rng
from .signals import (
    Waveform,
    gen_impulse_train,
    gen_linear_chirp,
    gen_sine,
    resample,
)
from .stft import DESK_STFT, Spectrogram, StftConfig, power_spectrogram
from .training import (
    EvalReport,
    TrainConfig,
    TrainResult,
    evaluate,
    evaluate_checkpoint,
    roc_auc,
    train,
)
from .transforms import (
    LinearTransform,
    apply_transform,
    learn_transform,
    load_transform_csv,
    mel_filterbank,
    save_transform_csv,
)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
