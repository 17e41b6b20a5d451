"""Probe experiments on trained embeddings.

Each probe feeds a synthetic stimulus through a checkpoint's network,
stacks the embeddings into a matrix, and quantifies the structure that
emerges: peak-time row sorting, linearity under a frequency sweep,
activation collapse under accelerating impulse trains, the effect of
embedding width, and PCA of embedding collections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint
from .corpus import CorpusSpec, LabeledClip, label_matrix
from .errors import NeuralogramError, ShapeError
from .extractor import Neuralogram, NeuralogramConfig, extract, window_starts
from .network import desk_network
from .ranking import linear_fit_r2, spearman
from .signals import Waveform, gen_impulse_train, gen_linear_chirp
from .stft import DESK_STFT, StftConfig, power_spectrogram
from .training import TrainConfig, evaluate_checkpoint, train

# Rows count as "active" when their peak reaches this fraction of the
# matrix-wide maximum (used when no absolute threshold is given).
DEFAULT_ACTIVATION_FRAC = 0.1
# A row "tracks" the rhythm stimulus when its activation correlates at
# least this much with the input's per-window energy-modulation curve.
TRACKING_CORR_MIN = 0.3
# |Spearman| below this is indistinguishable from a random row order.
CHANCE_SPEARMAN = 0.3
# Cutoff estimation: median-smoothing width, the rate span (as a factor
# of the lowest rate) that defines the low-rate plateau, and the energy
# fraction below which the curve counts as collapsed.
CUTOFF_SMOOTH_FRAMES = 5
CUTOFF_DROP_FRAC = 0.5
RATE_BIN_HZ = 1.0


# ---------------------------------------------------------------------------
# Row sorting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SortedNeuralogram:
    """Rows of a Neuralogram matrix reordered by peak-activation time.

    ``data[i] == original[permutation[i]]``; the first ``n_active`` rows
    are the active ones in peak-time order, the rest keep their original
    relative order.
    """

    data: np.ndarray = field(repr=False)
    permutation: np.ndarray
    criterion: str
    n_active: int


def _as_matrix(ng) -> np.ndarray:
    data = ng.data if isinstance(ng, Neuralogram) else np.asarray(ng)
    if data.ndim != 2 or data.size == 0:
        raise ShapeError(f"need a nonempty 2-D matrix, got shape {data.shape}")
    return data


def sort_rows_by_peak_time(ng, min_activation: float) -> SortedNeuralogram:
    """Order active rows by the frame of their maximum activation.

    A row is active when its maximum is at least ``min_activation``.
    Active rows are sorted by peak frame (ties keep row-index order) and
    dormant rows are appended in their original order.
    """
    data = _as_matrix(ng)
    row_max = data.max(axis=1)
    active_idx = np.flatnonzero(row_max >= min_activation)
    dormant_idx = np.flatnonzero(row_max < min_activation)
    peaks = np.argmax(data[active_idx], axis=1)
    order = np.lexsort((active_idx, peaks))
    permutation = np.concatenate([active_idx[order], dormant_idx])
    return SortedNeuralogram(
        data=data[permutation],
        permutation=permutation,
        criterion="peak_time",
        n_active=len(active_idx),
    )


# ---------------------------------------------------------------------------
# Probe reports
# ---------------------------------------------------------------------------

@dataclass
class ProbeReport:
    """Outcome of one probe: scalar metrics plus supporting curves.

    ``metrics`` values are finite floats, ints, bools, or None (for
    quantities the probe could not determine).  ``curves`` holds raw
    arrays for plotting/rendering and is excluded from serialization;
    ``artifacts`` maps artifact names to file paths once written.
    """

    kind: str
    config: dict
    metrics: dict
    notes: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        for name, value in self.metrics.items():
            if isinstance(value, float) and not np.isfinite(value):
                raise NeuralogramError(f"metric {name!r} is not finite")
        return {
            "kind": self.kind,
            "config": dict(self.config),
            "metrics": dict(self.metrics),
            "notes": list(self.notes),
            "artifacts": dict(self.artifacts),
        }


def _checkpoint_of(ckpt) -> Checkpoint:
    if isinstance(ckpt, Checkpoint):
        return ckpt
    return load_checkpoint(ckpt)


def _checkpoint_rate(ckpt: Checkpoint) -> int:
    return int(ckpt.metadata.get("sample_rate", 8000))


# ---------------------------------------------------------------------------
# Chirp probe: linear frequency sweep down to f_lo and back up
# ---------------------------------------------------------------------------

def chirp_wave(f_hi: float, f_lo: float, dur: float,
               sample_rate: int) -> Waveform:
    """Sweep ``f_hi`` -> ``f_lo`` over the first half, then back up."""
    if f_lo >= f_hi:
        raise NeuralogramError(f"need f_lo < f_hi, got {f_lo} >= {f_hi}")
    down = gen_linear_chirp(f_hi, f_lo, dur / 2.0, sample_rate)
    up = gen_linear_chirp(f_lo, f_hi, dur / 2.0, sample_rate)
    return Waveform(np.concatenate([down.samples, up.samples]), sample_rate)


def chirp_metrics(ng: Neuralogram, dur: float,
                  min_activation: float | None = None) -> dict:
    """Quantify how linearly sorted rows peak along the up-sweep half.

    Rows are sorted by overall peak time; the score is the Spearman
    correlation between each active row's sorted position and the time
    of its peak within the up-sweep (second) half of the stimulus,
    plus the R-squared of a straight-line fit of that peak time against
    sorted position.
    """
    data = _as_matrix(ng)
    if min_activation is None:
        top = float(data.max())
        min_activation = DEFAULT_ACTIVATION_FRAC * top if top > 0 else 0.0
    srt = sort_rows_by_peak_time(ng, min_activation)
    centers = ng.frame_centers()
    up_start = int(np.searchsorted(centers, dur / 2.0))
    up_start = min(up_start, ng.n_frames - 1)

    m = srt.n_active
    metrics = {
        "spearman": 0.0,
        "r2": 0.0,
        "active_fraction": m / data.shape[0],
        "n_active": m,
        "min_activation": float(min_activation),
        "up_half_start_frame": up_start,
    }
    if m >= 2:
        active = srt.data[:m]
        peak_up = up_start + np.argmax(active[:, up_start:], axis=1)
        peak_times = centers[peak_up]
        metrics["spearman"] = spearman(np.arange(m), peak_times)
        metrics["r2"] = linear_fit_r2(np.arange(m, dtype=np.float64),
                                      peak_times)
    return metrics


def chirp_probe(ckpt, f_hi: float = 4000.0, f_lo: float = 1.0,
                dur: float = 60.0, cfg: NeuralogramConfig = NeuralogramConfig(),
                min_activation: float | None = None) -> ProbeReport:
    """Run the down-then-up chirp through a checkpoint and score it."""
    ckpt = _checkpoint_of(ckpt)
    sr = _checkpoint_rate(ckpt)
    wave = chirp_wave(f_hi, f_lo, dur, sr)
    ng = extract(wave, ckpt, cfg)
    metrics = chirp_metrics(ng, dur, min_activation)
    srt = sort_rows_by_peak_time(ng, metrics["min_activation"])

    notes = []
    if metrics["n_active"] < 2:
        notes.append("fewer than two active rows; scores are degenerate")
    elif abs(metrics["spearman"]) < CHANCE_SPEARMAN:
        notes.append("chance-level monotonicity; the checkpoint looks "
                     "untrained or the embedding does not order frequency")
    return ProbeReport(
        kind="chirp",
        config={"f_hi": f_hi, "f_lo": f_lo, "dur_s": dur,
                "window_s": cfg.window_s, "hop_s": cfg.hop_s,
                "sample_rate": sr},
        metrics=metrics,
        notes=notes,
        curves={"neuralogram": ng.data,
                "sorted_rows": srt.data,
                "permutation": srt.permutation,
                "frame_centers": ng.frame_centers()},
    )


# ---------------------------------------------------------------------------
# Rhythm probe: accelerating impulse train and activation cutoff
# ---------------------------------------------------------------------------

def _median_smooth(values: np.ndarray, width: int) -> np.ndarray:
    half = width // 2
    out = np.empty_like(values)
    for i in range(len(values)):
        lo = max(0, i - half)
        out[i] = np.median(values[lo: i + half + 1])
    return out


def estimate_cutoff(activation: np.ndarray,
                    rates: np.ndarray) -> float | None:
    """Largest rate up to which activation stays above half its plateau.

    The curve is median-smoothed over ``CUTOFF_SMOOTH_FRAMES`` frames.
    The plateau level is taken as the smoothed maximum — for a
    plateau-then-drop response this equals the plateau, and unlike a
    median over a window anchored at the lowest rate it does not depend
    on where the sweep happened to start.  The cutoff is the last rate
    before the smoothed curve first falls below ``CUTOFF_DROP_FRAC`` of
    that level past the peak.  Returns None when the curve is
    non-positive or never collapses (undefined / inconclusive).
    """
    activation = np.asarray(activation, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if activation.shape != rates.shape or activation.ndim != 1:
        raise ShapeError("activation and rates must be equal-length 1-D")
    if len(rates) < 2:
        raise ShapeError("cutoff estimation needs at least two frames")
    if not np.all(np.diff(rates) > 0):
        raise NeuralogramError("rates must be strictly increasing")

    smoothed = _median_smooth(activation, CUTOFF_SMOOTH_FRAMES)
    plateau = float(smoothed.max())
    if plateau <= 0.0:
        return None
    peak = int(np.argmax(smoothed))
    below = np.flatnonzero(smoothed[peak + 1:] < CUTOFF_DROP_FRAC * plateau)
    if len(below) == 0:
        return None
    return float(rates[peak + below[0]])


def comb_energy_reference(wave: Waveform, stft: StftConfig,
                          window_s: float, hop_s: float) -> np.ndarray:
    """Per-window rhythm strength of the raw input.

    For each extraction window this is the coefficient of variation of
    the spectrogram's per-frame energies: sparse clicks make frame
    energy fluctuate strongly, while click rates beyond the frame rate
    flatten it out.
    """
    starts = window_starts(len(wave.samples), wave.sample_rate,
                           window_s, hop_s)
    win_len = round(window_s * wave.sample_rate)
    ref = np.empty(len(starts), dtype=np.float64)
    for j, start in enumerate(starts):
        clip = Waveform(wave.samples[start: start + win_len],
                        wave.sample_rate)
        frame_energy = power_spectrogram(clip, stft).data.sum(axis=0)
        mean = frame_energy.mean()
        ref[j] = frame_energy.std() / mean if mean > 0 else 0.0
    return ref


def _row_correlations(rows: np.ndarray, ref: np.ndarray) -> np.ndarray:
    rows = rows.astype(np.float64)
    dref = ref - ref.mean()
    ref_norm = float(np.sqrt(np.dot(dref, dref)))
    if ref_norm == 0.0:
        return np.zeros(rows.shape[0])
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    corr = np.zeros(rows.shape[0])
    ok = norms > 0
    corr[ok] = (centered[ok] @ dref) / (norms[ok] * ref_norm)
    return corr


def bin_rate_curve(energy: np.ndarray, rates: np.ndarray,
                   bin_hz: float = RATE_BIN_HZ
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Average an energy curve onto an absolute rate grid.

    Bin k covers [k*bin_hz, (k+1)*bin_hz); its value is the mean energy
    of the frames falling inside, and empty bins are dropped.  Because
    the grid is anchored at 0 Hz rather than at the sweep's first frame,
    curves from sweeps with different starting periods land on the same
    axis and their cutoffs become directly comparable.

    Returns (binned_energy, bin_center_rates).
    """
    energy = np.asarray(energy, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if energy.shape != rates.shape or energy.ndim != 1:
        raise ShapeError("energy and rates must be equal-length 1-D")
    if bin_hz <= 0:
        raise NeuralogramError(f"bin width must be positive, got {bin_hz}")
    idx = np.floor(rates / bin_hz).astype(np.int64)
    first = int(idx.min())
    idx -= first
    sums = np.bincount(idx, weights=energy)
    counts = np.bincount(idx)
    filled = counts > 0
    centers = (np.flatnonzero(filled) + first + 0.5) * bin_hz
    return sums[filled] / counts[filled], centers


def _rhythm_curve(ckpt: Checkpoint, p0: float, p1: float, dur: float,
                  cfg: NeuralogramConfig) -> dict:
    sr = _checkpoint_rate(ckpt)
    wave = gen_impulse_train(p0, p1, dur, sr)
    ng = extract(wave, ckpt, cfg)
    stft = StftConfig.from_dict(ckpt.metadata["stft"]) \
        if "stft" in ckpt.metadata else DESK_STFT
    ref = comb_energy_reference(wave, stft, cfg.window_s, cfg.hop_s)
    corr = _row_correlations(ng.data, ref)
    tracking = corr >= TRACKING_CORR_MIN
    energy = (ng.data[tracking].astype(np.float64) ** 2).sum(axis=0)
    centers = ng.frame_centers()
    rates = 1.0 / (p0 + (p1 - p0) * centers / dur)
    binned, bin_rates = bin_rate_curve(energy, rates)
    cutoff = estimate_cutoff(binned, bin_rates) if len(binned) >= 2 else None
    return {"rates": rates, "energy": energy,
            "n_tracking": int(tracking.sum()),
            "cutoff": cutoff, "ng": ng}


def rhythm_probe(ckpt, p0: float = 0.1, p1: float = 0.001,
                 dur: float = 300.0,
                 cfg: NeuralogramConfig = NeuralogramConfig()) -> ProbeReport:
    """Estimate the rate where rhythm-tracking activation collapses.

    Runs the accelerating impulse train twice — starting periods ``p0``
    and ``p0/2`` — estimating each cutoff from the energy curve averaged
    onto ``RATE_BIN_HZ``-wide rate bins, and reports both cutoffs plus
    whether they agree to within two bins (start-period invariance).
    """
    ckpt = _checkpoint_of(ckpt)
    if not 0 < p1 < p0:
        raise NeuralogramError(f"need 0 < p1 < p0, got p0={p0}, p1={p1}")
    run_a = _rhythm_curve(ckpt, p0, p1, dur, cfg)
    run_b = _rhythm_curve(ckpt, p0 / 2.0, p1, dur, cfg)

    cutoff_a, cutoff_b = run_a["cutoff"], run_b["cutoff"]
    notes = []
    invariant = None
    if cutoff_a is None or cutoff_b is None:
        for label, run in (("p0", run_a), ("p0/2", run_b)):
            if run["cutoff"] is None:
                notes.append(
                    f"inconclusive ({label} start): no collapse below "
                    f"{run['rates'][-1]:.1f} Hz — the sweep may be too "
                    "short or no rows track the rhythm")
    else:
        invariant = bool(abs(cutoff_a - cutoff_b) <= 2.0 * RATE_BIN_HZ)
    return ProbeReport(
        kind="rhythm",
        config={"p0_s": p0, "p1_s": p1, "dur_s": dur,
                "window_s": cfg.window_s, "hop_s": cfg.hop_s,
                "tracking_corr_min": TRACKING_CORR_MIN},
        metrics={"cutoff_hz": cutoff_a,
                 "cutoff_hz_half_start": cutoff_b,
                 "rate_bin_hz": RATE_BIN_HZ,
                 "start_period_invariant": invariant,
                 "n_tracking_rows": run_a["n_tracking"],
                 "n_tracking_rows_half_start": run_b["n_tracking"],
                 "max_rate_hz": float(run_a["rates"][-1])},
        notes=notes,
        curves={"rates": run_a["rates"], "energy": run_a["energy"],
                "rates_half_start": run_b["rates"],
                "energy_half_start": run_b["energy"],
                "neuralogram": run_a["ng"].data},
    )


# ---------------------------------------------------------------------------
# Embedding-size study
# ---------------------------------------------------------------------------

def embedding_size_study(train_corpus: list[LabeledClip],
                         corpus_spec: CorpusSpec,
                         eval_corpus: list[LabeledClip],
                         sizes: list[int],
                         config: TrainConfig = TrainConfig(),
                         stft: StftConfig = DESK_STFT,
                         chirp_dur: float = 60.0,
                         progress=None) -> list[dict]:
    """Train one model per distinct embedding width and compare them.

    Returns one row per requested size (duplicates reuse the cached
    training) with the held-out mean AUC and the chirp monotonicity.
    """
    if len(sizes) < 2:
        raise NeuralogramError("study needs at least two sizes")
    if any(int(n) < 1 for n in sizes):
        raise NeuralogramError("embedding sizes must be positive")
    n_classes = label_matrix(train_corpus).shape[1]

    cache: dict[int, dict] = {}
    for size in sizes:
        size = int(size)
        if size in cache:
            continue
        architecture, emb_index = desk_network(embedding_size=size,
                                               n_classes=n_classes)
        result = train(train_corpus, corpus_spec, config, architecture,
                       emb_index, stft, progress=progress)
        report = evaluate_checkpoint(result.checkpoint, eval_corpus)
        chirp = chirp_probe(result.checkpoint,
                            f_hi=corpus_spec.sample_rate / 2.0,
                            dur=chirp_dur)
        cache[size] = {
            "embedding_size": size,
            "mean_auc": report.mean_auc,
            "chirp_spearman": chirp.metrics["spearman"],
        }
    return [dict(cache[int(n)]) for n in sizes]


# ---------------------------------------------------------------------------
# PCA projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PCAProjection:
    """Coordinates in the top-k principal directions plus the share of
    total variance each direction explains."""

    coordinates: np.ndarray
    explained_variance_ratio: np.ndarray


def pca_project(vectors, k: int) -> PCAProjection:
    """Mean-centered PCA of row vectors via the covariance eigenbasis.

    Component signs are fixed by making each direction's largest-loading
    entry positive.  Raises when ``k`` exceeds the data's rank or there
    are fewer than ``k + 1`` vectors.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"need a 2-D collection of vectors, got {x.shape}")
    n, dim = x.shape
    if k < 1:
        raise NeuralogramError("k must be at least 1")
    if n < k + 1:
        raise NeuralogramError(f"need at least {k + 1} vectors for k={k}")

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals[::-1], 0.0, None)
    eigvecs = eigvecs[:, ::-1]

    total = float(eigvals.sum())
    rank = int(np.sum(eigvals > max(n, dim) * np.finfo(np.float64).eps
                      * max(eigvals[0], 1e-300)))
    if k > rank:
        raise NeuralogramError(
            f"k={k} exceeds the data rank ({rank})")

    basis = eigvecs[:, :k].copy()
    anchor = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[anchor, np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs
    return PCAProjection(
        coordinates=centered @ basis,
        explained_variance_ratio=eigvals[:k] / total if total > 0
        else np.zeros(k),
    )
