"""Command-line entry point: ``edgepress <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric error. Logs go to stderr as JSON lines; artifacts go to ``--out``.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .exceptions import ConfigError, DataError, MetricError, NumericError, ParameterError, ParseError, ShapeError
from .model import Model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "EDGEPRESS_THREADS"

log = logging.getLogger("edgepress")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: error: {message}")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        entry = {"ts": round(record.created, 3), "level": record.levelname.lower(), "event": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, default=str)


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def _info(event, **fields):
    log.info(event, extra={"fields": fields})


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} is outside [0, 1]")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"{v} must be >= 1")
    return v


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=1234, help="random seed (default: 1234)")
    g.add_argument("--config", help="config file or shipped model name, per subcommand")
    g.add_argument("--out", default=".", help="output directory (default: current directory)")
    g.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker/BLAS threads (default: ${THREADS_ENV} or 1)")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="edgepress", description="Pruning and quantization toolkit for cough classifiers.")
    parser.add_argument("--version", action="version", version=f"edgepress {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="write a synthetic WAV corpus and manifest",
                       description="Write a balanced synthetic corpus (WAV files plus manifest.csv) to --out.")
    p.add_argument("--n", type=_positive_int, default=400, help="number of clips (>= 8, default: 400)")

    p = sub.add_parser("features", parents=[common], help="extract features into a tensor container",
                       description="Split a manifest by source id, extract and augment features, standardize on "
                                   "the training split and write features.eprs to --out.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--manifest", help="CSV with path,label,source_id[,split] columns")
    src.add_argument("--synthetic", type=_positive_int, metavar="N", help="generate N synthetic clips instead")
    p.add_argument("--mode", choices=("mfcc", "melspec"), default="mfcc", help="feature type (default: mfcc)")
    p.add_argument("--augment", choices=("none", "default"), default="none",
                   help="per-split augmentation plan (default: none)")
    p.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"),
                   help="split ratios (default: 0.7 0.15 0.15 for mfcc, 0.6 0.2 0.2 for melspec)")

    p = sub.add_parser("train", parents=[common], help="train a model on extracted features",
                       description="Train the network named by --config (default: cnn_coswara) and write model.eprs.")
    p.add_argument("--features", required=True, help="features.eprs from the features subcommand")
    p.add_argument("--epochs", type=_positive_int, help="override the config epochs")
    p.add_argument("--batch-size", type=_positive_int, help="override the config batch size")
    p.add_argument("--lr", type=float, help="override the config learning rate")

    p = sub.add_parser("prune", parents=[common], help="prune and fine-tune a trained model",
                       description="Magnitude-prune --model with mask-preserving fine-tuning; writes pruned.eprs "
                                   "and prune_report.json.")
    p.add_argument("--model", required=True, help="trained model (.eprs)")
    p.add_argument("--features", required=True, help="features.eprs used for fine-tuning")
    p.add_argument("--sparsity", type=_fraction, required=True, help="final sparsity in [0, 1]")
    p.add_argument("--schedule", choices=("constant", "polynomial"), default="polynomial",
                   help="sparsity schedule (default: polynomial)")
    p.add_argument("--epochs", type=_positive_int, default=10, help="fine-tuning epochs (default: 10)")
    p.add_argument("--frequency", type=_positive_int, default=100, help="steps between mask updates (default: 100)")
    p.add_argument("--exclude", action="append", default=[], metavar="LAYER", help="layer to leave dense (repeatable)")

    p = sub.add_parser("quantize", parents=[common], help="min-max quantize a model",
                       description="Zero-shot min-max quantization of --model; writes model_q<bits>.eprs.")
    p.add_argument("--model", required=True, help="float model (.eprs)")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8, help="integer width (default: 8)")
    p.add_argument("--features", help="optional features.eprs to report test AUC before and after")

    p = sub.add_parser("bench", parents=[common], help="time single-sample inference",
                       description="Time single-sample inference of one or more models; writes bench.json.")
    p.add_argument("--model", required=True, nargs="+", help="model files (.eprs)")
    p.add_argument("--features", help="take inputs from the test split of this features.eprs")
    p.add_argument("--samples", type=_positive_int, default=100, help="timed samples (default: 100)")
    p.add_argument("--warmup", type=int, default=10, help="untimed warmup calls (default: 10)")
    p.add_argument("--sparse", action="store_true", help="also time float models with CSR dense layers")

    p = sub.add_parser("sweep", parents=[common], help="run the pruning x quantization sweep",
                       description="Run the sweep described by --config (a SweepConfig JSON; defaults otherwise) "
                                   "and write results.csv, summary.md, rows.json and three SVG charts.")
    p.add_argument("--seeds", type=_positive_int, help="override the number of seeds")
    p.add_argument("--no-timing", action="store_true", help="skip latency measurement")

    p = sub.add_parser("report", parents=[common], help="re-emit reports from saved sweep rows",
                       description="Regenerate results.csv, summary.md and the charts from rows.json or results.csv.")
    p.add_argument("--rows", required=True, help="rows.json or results.csv from a sweep")
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return _positive_int(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{THREADS_ENV}: {exc}") from None
    return 1


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_features(path):
    from .serialization import load_tensors

    tensors, meta = load_tensors(path)
    try:
        sets = {s: (tensors[f"{s}_X"], tensors[f"{s}_y"].astype(np.int64)) for s in ("train", "val", "test")}
    except KeyError as exc:
        raise DataError(f"{path}: not a features container (missing {exc})") from None
    return sets, meta


def cmd_synth(args, resolved):
    from .features import generate_synthetic_dataset, write_manifest, write_wav
    from .features.dataset import DatasetManifest, ManifestEntry

    manifest, signals = generate_synthetic_dataset(args.n, args.seed)
    wav_dir = os.path.join(args.out, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    entries = []
    for e in manifest.entries:
        rel = os.path.join("wav", f"{e.path}.wav")
        write_wav(os.path.join(args.out, rel), signals[e.path])
        entries.append(ManifestEntry(rel, e.label, e.source_id))
    write_manifest(os.path.join(args.out, "manifest.csv"), DatasetManifest(entries, manifest.ratios, manifest.seed))
    _info("synth.done", clips=len(entries), positives=int(manifest.labels.sum()), out=args.out)


def cmd_features(args, resolved):
    from .features import AugmentPlan, FeatureConfig, FeatureStandardizer, build_dataset, generate_synthetic_dataset
    from .features.dataset import read_manifest
    from .serialization import save_tensors

    ratios = tuple(args.ratios) if args.ratios else ((0.7, 0.15, 0.15) if args.mode == "mfcc" else (0.6, 0.2, 0.2))
    signals = None
    if args.manifest:
        manifest = read_manifest(args.manifest, ratios, args.seed)
    else:
        manifest, signals = generate_synthetic_dataset(args.synthetic or 400, args.seed, ratios)
    plan = AugmentPlan.none()
    if args.augment == "default":
        plan = AugmentPlan.mfcc_default() if args.mode == "mfcc" else AugmentPlan.melspec_default()
    ds = build_dataset(manifest, FeatureConfig(args.mode), plan, signals, n_jobs=_threads(args))
    scaler = FeatureStandardizer(axis=0 if args.mode == "mfcc" else None).fit(ds.train.X)
    tensors = {}
    for name, split in ds.items():
        tensors[f"{name}_X"] = scaler.transform(split.X) if len(split) else split.X
        tensors[f"{name}_y"] = split.y.astype(np.float32)
    tensors.update({f"scaler_{k}": v for k, v in scaler.state().items()})
    meta = {"provenance": ds.provenance, "source_ids": {n: s.source_ids for n, s in ds.items()}, "mode": args.mode}
    path = os.path.join(args.out, "features.eprs")
    save_tensors(path, tensors, meta)
    _info("features.done", path=path, **{n: len(s) for n, s in ds.items()})


def cmd_train(args, resolved):
    from .model import build_model, load_config, make_optimizer, train
    from .serialization import save_model

    sets, _ = _load_features(args.features)
    cfg = load_config(args.config or "cnn_coswara")
    cfg.seed = args.seed
    t = cfg.training
    epochs = args.epochs or int(t.get("epochs", 10))
    batch = args.batch_size or int(t.get("batch_size", 32))
    opt = make_optimizer(t.get("optimizer", "adam"), args.lr if args.lr is not None else float(t.get("learning_rate", 1e-3)))
    resolved.update(epochs=epochs, batch_size=batch, optimizer=opt.kind, learning_rate=opt.learning_rate)
    model, history = train(build_model(cfg), sets["train"], sets["val"], opt, epochs, batch, args.seed)
    path = os.path.join(args.out, "model.eprs")
    save_model(path, model)
    _write_json(os.path.join(args.out, "history.json"), history)
    last = history[-1] if history else {}
    _info("train.done", path=path, loss=last.get("loss"), val_auc=last.get("val_auc"))


def cmd_prune(args, resolved):
    from .pruning import PruningSchedule, prune_fine_tune
    from .serialization import load_model, save_model

    sets, _ = _load_features(args.features)
    model = load_model(args.model)
    if not isinstance(model, Model):
        raise UsageError(f"{args.model} is a quantized model; prune the float model instead")
    sched = PruningSchedule(args.schedule, args.sparsity, frequency=args.frequency)
    pruned, report = prune_fine_tune(model, sets["train"], sets["val"], sched, args.epochs,
                                     exclusions=tuple(args.exclude), seed=args.seed)
    path = os.path.join(args.out, "pruned.eprs")
    save_model(path, pruned)
    with open(os.path.join(args.out, "prune_report.json"), "w") as fh:
        fh.write(report.to_json())
    _info("prune.done", path=path, steps=report.steps,
          zeros={s.name: s.achieved_zero_count for s in report.layers})


def cmd_quantize(args, resolved):
    from .metrics import auc_roc
    from .quantization import quantize_model
    from .serialization import compressed_size, load_model, save_model, serialize

    model = load_model(args.model)
    if not isinstance(model, Model):
        raise UsageError(f"{args.model} is already quantized")
    q = quantize_model(model, args.bits)
    path = os.path.join(args.out, f"model_q{args.bits}.eprs")
    save_model(path, q)
    fields = {"path": path, "size": compressed_size(serialize(model)), "size_quantized": compressed_size(serialize(q))}
    if args.features:
        X, y = _load_features(args.features)[0]["test"]
        fields.update(auc=auc_roc(model.predict_proba(X), y), auc_quantized=auc_roc(q.predict_proba(X), y))
    _write_json(os.path.join(args.out, f"quantize_q{args.bits}.json"), fields)
    _info("quantize.done", **fields)


def cmd_bench(args, resolved):
    from .harness import time_single_inference
    from .serialization import load_model
    from .sparse import sparsify_model

    results = {}
    for path in args.model:
        model = load_model(path)
        if args.features:
            X = _load_features(args.features)[0]["test"][0]
            if len(X) == 0:
                raise DataError(f"{args.features} has an empty test split")
            X = X[np.arange(args.samples) % len(X)]
        else:
            X = np.random.default_rng(args.seed).standard_normal((args.samples,) + tuple(model.input_shape))
            X = X.astype(np.float32)
        variants = {path: model}
        if args.sparse and isinstance(model, Model):
            variants[f"{path}#csr"] = sparsify_model(model)
        for name, m in variants.items():
            t = time_single_inference(m, X, warmup=args.warmup, threads=1)
            results[name] = t.to_dict()
            _info("bench.result", model=name, **t.to_dict())
    _write_json(os.path.join(args.out, "bench.json"), results)


def cmd_sweep(args, resolved):
    from .harness import SweepConfig, emit_all, run_sweep

    cfg = SweepConfig.from_json(args.config) if args.config else SweepConfig()
    if args.seeds:
        cfg = SweepConfig.from_dict({**cfg.to_dict(), "n_seeds": args.seeds})
    if args.seed != 1234:
        cfg = SweepConfig.from_dict({**cfg.to_dict(), "base_seed": args.seed})
    resolved["sweep"] = cfg.to_dict()
    _info("sweep.start", rows=cfg.n_rows)
    rows = run_sweep(cfg, n_jobs=_threads(args), timing=not args.no_timing,
                     log=lambda msg: _info("sweep.progress", detail=msg))
    outputs = emit_all(rows, args.out, cfg)
    failed = sum(not r.ok for r in rows)
    _info("sweep.done", rows=len(rows), failed=failed, **{k: v for k, v in outputs.items() if k != "plots"})


def cmd_report(args, resolved):
    from .harness import emit_all, read_report
    from .harness.report import read_rows_json

    rows = read_rows_json(args.rows) if args.rows.endswith(".json") else read_report(args.rows)
    if not rows:
        raise DataError(f"{args.rows} holds no rows")
    outputs = emit_all(rows, args.out)
    _info("report.done", rows=len(rows), csv=outputs["csv"])


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "prune": cmd_prune,
    "quantize": cmd_quantize,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None):
    """Parse ``argv``, run the subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    _setup_logging(args.verbose)
    resolved = {k: v for k, v in vars(args).items() if k != "verbose"}
    resolved["threads"] = None
    try:
        resolved["threads"] = _threads(args)
        os.makedirs(args.out, exist_ok=True)
        _info("config", command=args.command, resolved=resolved)
        start = time.perf_counter()
        with threadpool_limits(limits=resolved["threads"]):
            COMMANDS[args.command](args, resolved)
        _write_json(os.path.join(args.out, f"{args.command}.run.json"), resolved)
        _info("done", command=args.command, seconds=round(time.perf_counter() - start, 3))
        return EXIT_OK
    except (UsageError, ConfigError, ParameterError) as exc:
        log.error("usage error", extra={"fields": {"error": str(exc)}})
        return EXIT_USAGE
    except (DataError, ParseError, ShapeError, MetricError, OSError) as exc:
        log.error("data error", extra={"fields": {"error": str(exc)}})
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        log.error("numeric error", extra={"fields": {"error": str(exc)}})
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
