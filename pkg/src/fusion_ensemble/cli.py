"""Command-line entry point: ``fusion-ensemble <command> ...``.

Machine-readable results go to stdout as JSON; progress and diagnostics go to
stderr. Exit codes are a stable contract:

====  =========================================================
0     success
2     configuration could not be parsed / invalid usage
3     I/O failure (unreadable or unwritable files, corrupt data)
4     artifacts do not match (checkpoint vs. config or dataset)
5     verification failed (gradient check)
====  =========================================================
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigParseError, load_config
from .data import MANIFEST_NAME, DatasetManifest, generate_synthetic, load_preprocessed
from .errors import ConfigurationError, DataError, TrainingError, UsageError

log = logging.getLogger("fusion_ensemble")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_MISMATCH = 4
EXIT_VERIFY = 5


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=1, sort_keys=False)
    sys.stdout.write("\n")
    sys.stdout.flush()


def _load_manifest(path: str | Path) -> DatasetManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    try:
        manifest = DatasetManifest.load(p)
        manifest.validate(check_files=False)
    except (OSError, ValueError) as exc:  # includes DataError and JSON syntax errors
        raise CommandError(EXIT_IO, f"cannot read dataset manifest {p}: {exc}") from exc
    return manifest


def _load_checkpoint(path: str | Path):
    from .training import Checkpoint

    try:
        return Checkpoint.load(path)
    except ConfigurationError as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(EXIT_IO, f"cannot read checkpoint {path}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> dict:
    cfg = load_config(args.config)
    out = Path(args.out)
    log.info("generating %d classes x %d/%d/%d samples into %s", cfg.data.synth.num_classes,
             cfg.data.synth.train_per_class, cfg.data.synth.valid_per_class, cfg.data.synth.test_per_class, out)
    manifest = generate_synthetic(cfg.data.synth, out)
    return {
        "manifest": str(out / MANIFEST_NAME),
        "n_samples": len(manifest.samples),
        "splits": {s: len(manifest.split(s)) for s in ("train", "valid", "test")},
    }


def cmd_train(args) -> dict:
    from .training import train

    cfg = load_config(args.config)
    manifest = _load_manifest(args.data)
    resume = _load_checkpoint(args.resume) if args.resume else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    try:
        result = train(cfg.model, cfg.train, manifest, out, resume=resume)
    except ConfigurationError as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc
    last = result.log[-1] if result.log else {}
    return {
        "out": str(out),
        "best_checkpoint": str(out / "checkpoints" / "best"),
        "last_checkpoint": str(out / "checkpoints" / "last"),
        "epochs": len(result.log),
        "best_valid_top1_ensemble": result.best.best_valid,
        "final_train_loss": last.get("train_loss"),
    }


def _manifest_for(checkpoint, data: Optional[str]) -> DatasetManifest:
    path = data or checkpoint.manifest_path
    if not path:
        raise CommandError(EXIT_CONFIG, "no --data given and the checkpoint does not record its dataset")
    return _load_manifest(path)


def cmd_eval(args) -> dict:
    from .training import evaluate

    ckpt = _load_checkpoint(args.checkpoint)
    manifest = _manifest_for(ckpt, args.data)
    if not manifest.split(args.split):
        raise CommandError(EXIT_CONFIG, f"split {args.split!r} is empty in {manifest.root}")
    try:
        return evaluate(ckpt, manifest, args.split)
    except ConfigurationError as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc


def cmd_predict(args) -> dict:
    from .ensemble import EnsembleOutput
    from .tensor import Tensor, no_grad
    from .training import check_compatible

    ckpt = _load_checkpoint(args.checkpoint)
    manifest = _manifest_for(ckpt, args.data)
    try:
        check_compatible(ckpt, manifest)
    except ConfigurationError as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc
    record = manifest.find(args.sample)
    model = ckpt.build_model()
    cfg = model.config
    sample = load_preprocessed(manifest, record, (cfg.rgb_size, cfg.rgb_size), (cfg.rdm_size, cfg.rdm_size))
    with no_grad():
        out: EnsembleOutput = model(Tensor(sample.rgb[None]), Tensor(sample.rdm[None]))
    p = out.p_final[0].astype(np.float64)
    top = np.argsort(-p, kind="stable")[:3]
    return {
        "sample_id": record.id,
        "y_hat": int(out.y_hat[0]),
        "y_hat_name": manifest.classes[int(out.y_hat[0])],
        "p_final_top3": [{"class": int(k), "name": manifest.classes[int(k)], "probability": float(p[k])} for k in top],
    }


def cmd_gradcheck(args) -> dict:
    from .verification import model_gradcheck

    log.info("finite-difference check of every parameter (seed %d); this takes about a minute", args.seed)
    report = model_gradcheck(args.seed, max_per_tensor=args.max_per_tensor)
    doc = {"seed": args.seed, **report.as_dict()}
    if not report.passed:
        _emit(doc)
        lines = [f"{o.name}{list(o.index)}: analytic {o.analytic:.6g} numeric {o.numeric:.6g} "
                 f"rel {o.rel_error:.3g}" for o in report.worst(5)]
        raise CommandError(EXIT_VERIFY, "gradient check failed; worst offenders:\n  " + "\n  ".join(lines))
    return doc


def cmd_bench(args) -> dict:
    from .bench import bench, compare_backends

    if args.compare:
        return compare_backends(args.op, args.preset, args.iterations, args.log)
    report = bench(args.op, args.preset, args.iterations, backend=args.backend, log_path=args.log)
    return asdict(report)


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse's own exit code is already 2
        self.print_usage(sys.stderr)
        raise CommandError(EXIT_CONFIG, message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusion-ensemble", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config", help="run config JSON (default: bundled default_config.json)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and keep best/last checkpoints")
    p.add_argument("--config", help="run config JSON (default: bundled default_config.json)")
    p.add_argument("--data", required=True, help="dataset manifest (file or its directory)")
    p.add_argument("--out", required=True, help="run directory for logs and checkpoints")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print an evaluation report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset manifest (default: the one recorded in the checkpoint)")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one sample and print its top-3 classes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True, help="sample id from the manifest")
    p.add_argument("--data", help="dataset manifest (default: the one recorded in the checkpoint)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-per-tensor", type=int, default=None,
                   help="probe at most this many coordinates per parameter (default: all)")
    p.set_defaults(func=cmd_gradcheck)

    from .bench import MIN_ITERATIONS, registered_ops

    p = sub.add_parser("bench", help="time one operation and append to a JSON-lines log")
    p.add_argument("--op", default="conv3d", help=f"one of {registered_ops()}")
    p.add_argument("--preset", default="toy")
    p.add_argument("--iterations", type=int, default=MIN_ITERATIONS)
    p.add_argument("--backend", choices=["compiled", "python"], default=None)
    p.add_argument("--compare", action="store_true", help="time every available kernel backend")
    p.add_argument("--log", default="bench_log.jsonl", help="JSON-lines file to append to")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    logging.basicConfig(stream=sys.stderr, level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, DataError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _emit(doc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
