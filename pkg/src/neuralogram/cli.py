"""Command-line surface: synthesize data, train, evaluate, extract
neuralograms, run probes, render matrices, and gradient-check presets.

Exit codes: 0 success, 1 usage error, 2 data/model error.  Every
command appends machine-readable JSON lines to ``run_log.jsonl`` in its
output directory.  The ``NLG_THREADS`` environment variable caps BLAS
thread pools (0 or unset = library default).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import CorpusSpec, export_corpus, make_corpus
from .errors import NeuralogramError
from .extractor import (NeuralogramConfig, extract, load_neuralogram,
                        load_neuralogram_csv, save_neuralogram,
                        save_neuralogram_csv)
from .network import Network, deep_network, desk_network, gradient_check
from .probes import chirp_probe, embedding_size_study, rhythm_probe
from .render import RenderSpec, render_matrix
from .rng import Rng
from .stft import DESK_STFT, power_spectrogram
from .training import TrainConfig, evaluate_checkpoint, train

_THREAD_LIMITER = None          # keeps the threadpoolctl cap alive


def _apply_thread_cap() -> None:
    global _THREAD_LIMITER
    raw = os.environ.get("NLG_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise NeuralogramError(f"NLG_THREADS must be an integer, got {raw!r}")
    if n > 0:
        import threadpoolctl
        _THREAD_LIMITER = threadpoolctl.threadpool_limits(limits=n)


class RunLog:
    """JSON-lines event log written next to a command's artifacts."""

    def __init__(self, out_path, command: str):
        out_path = Path(out_path)
        directory = out_path if out_path.suffix == "" else out_path.parent
        directory.mkdir(parents=True, exist_ok=True)
        self.path = directory / "run_log.jsonl"
        self.command = command
        self.t0 = time.time()
        self.write(event="start", argv=sys.argv[1:])

    def write(self, **fields) -> None:
        record = {"command": self.command,
                  "elapsed_s": round(time.time() - self.t0, 3), **fields}
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")


def _load_json(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise NeuralogramError(f"{path}: expected a JSON object")
    return data


def _corpus_spec(args, spec_attr: str = "spec") -> CorpusSpec:
    """Corpus recipe from an optional JSON file plus flag overrides."""
    data = _load_json(getattr(args, spec_attr)) if getattr(args, spec_attr) \
        else {}
    overrides = {
        "n_clips": getattr(args, "n_clips", None),
        "clip_dur": getattr(args, "clip_dur", None),
        "max_active": getattr(args, "max_active", None),
        "seed": getattr(args, "corpus_seed", None),
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    classes = getattr(args, "classes", None)
    if classes:
        data["classes"] = [c.strip() for c in classes.split(",")]
    return CorpusSpec.from_dict(data)


def _train_config(args) -> TrainConfig:
    data = _load_json(args.config) if args.config else {}
    for key in ("lr", "batch_size", "steps", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return TrainConfig(lr=float(data.get("lr", 1e-3)),
                       batch_size=int(data.get("batch_size", 16)),
                       steps=int(data.get("steps", 3000)),
                       seed=int(data.get("seed", 42)))


def _write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = _corpus_spec(args)
    log = RunLog(args.out, "synth")
    corpus = make_corpus(spec)
    manifest = export_corpus(corpus, spec, args.out)
    log.write(event="done", clips=len(corpus), manifest=str(manifest))
    print(f"wrote {len(corpus)} clips and {manifest}")
    return 0


def cmd_train(args) -> int:
    spec = _corpus_spec(args)
    config = _train_config(args)
    out = Path(args.out)
    log = RunLog(out, "train")
    corpus = make_corpus(spec)
    log.write(event="corpus", clips=len(corpus))

    architecture = emb_index = None
    if args.embedding_size is not None:
        architecture, emb_index = desk_network(
            embedding_size=args.embedding_size,
            n_classes=len(spec.classes))

    def progress(step, loss):
        log.write(event="progress", step=step, loss=loss)
        print(f"step {step}: loss {loss:.4f}")

    result = train(corpus, spec, config, architecture, emb_index,
                   progress=progress)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.nlg"
    save_checkpoint(result.checkpoint, model_path)
    with open(out / "loss_history.csv", "w") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(result.loss_history):
            fh.write(f"{step},{loss:.9g}\n")
    log.write(event="done", model=str(model_path),
              smoothed_initial=result.smoothed_initial,
              smoothed_final=result.smoothed_final)
    print(f"saved {model_path} (smoothed loss "
          f"{result.smoothed_initial:.4f} -> {result.smoothed_final:.4f})")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    spec = _corpus_spec(args)
    out = Path(args.out)
    log = RunLog(out, "eval")
    corpus = make_corpus(spec)
    report = evaluate_checkpoint(ckpt, corpus)
    payload = {"mean_auc": report.mean_auc, "per_class": report.per_class,
               "n_clips": report.n_clips}
    _write_json(out if out.suffix else out / "eval.json", payload)
    log.write(event="done", mean_auc=report.mean_auc)
    print(json.dumps(payload, indent=2))
    return 0


def cmd_extract(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    wave = read_wav(args.infile)
    cfg = NeuralogramConfig(window_s=args.window, hop_s=args.hop,
                            layer=args.layer)
    log = RunLog(args.out, "extract")
    ng = extract(wave, ckpt, cfg)
    if Path(args.out).suffix.lower() == ".csv":
        save_neuralogram_csv(ng, args.out)
    else:
        save_neuralogram(ng, args.out)
    log.write(event="done", rows=ng.n_rows, frames=ng.n_frames,
              out=str(args.out))
    print(f"wrote {ng.n_rows}x{ng.n_frames} matrix to {args.out}")
    return 0


def cmd_probe_chirp(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    log = RunLog(args.out, "probe-chirp")
    report = chirp_probe(ckpt, f_hi=args.f_hi, f_lo=args.f_lo, dur=args.dur,
                         min_activation=args.min_activation)
    if args.render:
        render_matrix(report.curves["sorted_rows"], RenderSpec(), args.render)
        report.artifacts["sorted_pgm"] = str(args.render)
    _write_json(args.out, report.to_dict())
    log.write(event="done", **report.metrics)
    print(json.dumps(report.to_dict()["metrics"], indent=2))
    return 0


def cmd_probe_rhythm(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    log = RunLog(args.out, "probe-rhythm")
    report = rhythm_probe(ckpt, p0=args.p0, p1=args.p1, dur=args.dur)
    if args.curves:
        with open(args.curves, "w") as fh:
            fh.write("run,frame,rate_hz,energy\n")
            for run, rates, energy in (
                    ("p0", report.curves["rates"], report.curves["energy"]),
                    ("p0_half", report.curves["rates_half_start"],
                     report.curves["energy_half_start"])):
                for j, (rate, value) in enumerate(zip(rates, energy)):
                    fh.write(f"{run},{j},{rate:.9g},{value:.9g}\n")
        report.artifacts["curves_csv"] = str(args.curves)
    _write_json(args.out, report.to_dict())
    log.write(event="done", **report.metrics)
    print(json.dumps(report.to_dict()["metrics"], indent=2))
    return 0


def cmd_study_embedding(args) -> int:
    sizes = [int(tok) for tok in args.sizes.split(",") if tok.strip()]
    train_spec = _corpus_spec(args)
    eval_spec = CorpusSpec.from_dict(_load_json(args.eval_spec)) \
        if args.eval_spec else CorpusSpec.from_dict(
            {**train_spec.to_dict(), "n_clips": 400,
             "seed": train_spec.seed + 1})
    config = _train_config(args)
    out = Path(args.out)
    log = RunLog(out, "study-embedding")
    train_corpus = make_corpus(train_spec)
    eval_corpus = make_corpus(eval_spec)
    rows = embedding_size_study(train_corpus, train_spec, eval_corpus,
                                sizes, config=config)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "study.csv", "w") as fh:
        fh.write("embedding_size,mean_auc,chirp_spearman\n")
        for row in rows:
            fh.write(f"{row['embedding_size']},{row['mean_auc']:.9g},"
                     f"{row['chirp_spearman']:.9g}\n")
            log.write(event="row", **row)
    log.write(event="done", out=str(out / "study.csv"))
    print((out / "study.csv").read_text(), end="")
    return 0


def cmd_render(args) -> int:
    suffix = Path(args.infile).suffix.lower()
    if suffix == ".wav":
        matrix = power_spectrogram(read_wav(args.infile), DESK_STFT).data
    elif suffix == ".csv":
        matrix = load_neuralogram_csv(args.infile).data
    else:
        matrix = load_neuralogram(args.infile).data
    spec = RenderSpec(scale=args.scale, floor_db=args.floor_db,
                      normalize=args.normalize)
    log = RunLog(args.out, "render")
    render_matrix(matrix, spec, args.out)
    log.write(event="done", rows=matrix.shape[0], cols=matrix.shape[1],
              out=str(args.out))
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} image to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.preset == "desk":
        specs, _ = desk_network(embedding_size=args.embedding_size)
    else:
        specs, _ = deep_network()
    net = Network(specs, input_shape=(1, 129, 200))
    rng = Rng(args.seed)
    net.init_params(rng.child(0))
    data_rng = rng.child(1)
    x = data_rng.uniform(129 * 200).reshape(1, 1, 129, 200)
    targets = np.zeros((1, net.output_shape[0]))
    targets[0, int(data_rng.integers(0, net.output_shape[0], 1)[0])] = 1.0
    result = gradient_check(net, x.astype(np.float32), targets,
                            n_samples=args.n_samples, rng=rng.child(2))
    payload = {"max_rel_err": result["max_rel_err"],
               "mean_rel_err": result["mean_rel_err"],
               "n_samples": result["n_samples"],
               "tolerance": args.tol,
               "passed": bool(result["max_rel_err"] < args.tol)}
    if args.out:
        _write_json(args.out, payload)
        RunLog(args.out, "gradcheck").write(event="done", **payload)
    print(json.dumps(payload, indent=2))
    if not payload["passed"]:
        raise NeuralogramError(
            f"gradient check failed: max relative error "
            f"{payload['max_rel_err']:.3g} >= {args.tol:g}")
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="corpus recipe JSON (flags override)")
    p.add_argument("--n-clips", type=int, dest="n_clips")
    p.add_argument("--clip-dur", type=float, dest="clip_dur")
    p.add_argument("--max-active", type=int, dest="max_active")
    p.add_argument("--corpus-seed", type=int, dest="corpus_seed")
    p.add_argument("--classes", help="comma-separated class names")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="training config JSON (flags override)")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlg",
        description="Stacked-embedding audio analysis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a labeled corpus as WAVs")
    _add_corpus_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a classifier on a corpus")
    _add_corpus_flags(p)
    _add_train_flags(p)
    p.add_argument("--embedding-size", type=int, dest="embedding_size")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ROC-AUC of a checkpoint on a corpus")
    _add_corpus_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True,
                   help="report path (*.json) or output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="neuralogram of a WAV file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--window", type=float, default=2.0)
    p.add_argument("--hop", type=float, default=0.5)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--out", required=True,
                   help=".csv for text, anything else for binary")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("probe-chirp", help="frequency-sweep linearity probe")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--f-hi", type=float, default=4000.0, dest="f_hi")
    p.add_argument("--f-lo", type=float, default=1.0, dest="f_lo")
    p.add_argument("--dur", type=float, default=60.0)
    p.add_argument("--min-activation", type=float, default=None,
                   dest="min_activation")
    p.add_argument("--render", help="also write the sorted rows as PGM")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_probe_chirp)

    p = sub.add_parser("probe-rhythm", help="impulse-train cutoff probe")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--p0", type=float, default=0.1)
    p.add_argument("--p1", type=float, default=0.001)
    p.add_argument("--dur", type=float, default=300.0)
    p.add_argument("--curves", help="also write rate/energy curves as CSV")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_probe_rhythm)

    p = sub.add_parser("study-embedding",
                       help="train per embedding size and compare")
    _add_corpus_flags(p)
    _add_train_flags(p)
    p.add_argument("--eval-spec", dest="eval_spec",
                   help="held-out corpus JSON (default: train spec, "
                        "400 clips, seed+1)")
    p.add_argument("--sizes", required=True,
                   help="comma-separated embedding sizes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_study_embedding)

    p = sub.add_parser("render", help="matrix (or WAV spectrogram) to PGM")
    p.add_argument("--in", dest="infile", required=True,
                   help=".csv/.nlgm matrix or .wav")
    p.add_argument("--scale", choices=["linear", "log10-clamped"],
                   default="linear")
    p.add_argument("--floor-db", type=float, default=-60.0, dest="floor_db")
    p.add_argument("--normalize", choices=["global", "per-row"],
                   default="global")
    p.add_argument("--out", required=True, help="PGM path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of a preset")
    p.add_argument("--preset", choices=["desk", "deep"], default="desk")
    p.add_argument("--embedding-size", type=int, default=500,
                   dest="embedding_size")
    p.add_argument("--n-samples", type=int, default=100, dest="n_samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", help="optional report JSON path")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:                   # argparse uses code 2
        return 0 if exc.code in (0, None) else 1
    try:
        _apply_thread_cap()
        return args.func(args)
    except (NeuralogramError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
