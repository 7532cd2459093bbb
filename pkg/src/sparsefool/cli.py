"""Command-line front end.

Subcommands: train, attack, clipfail, sweep-lambda, sweep-delta, baseline,
transfer, report. Data sources are either IDX file pairs
("idx:<images>,<labels>") or synthetic ("synth:digits,n=1000,seed=0" /
"synth:blobs,n=200,classes=3,dim=8,margin=1.0,seed=0").

Exit codes: 0 success, 1 usage error, 2 data/model format error,
3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .attack import BoxBounds, SparseFoolConfig, clip_failure_experiment
from .classifiers import (
    MlpClassifier,
    ModelFormatError,
    TrainConfig,
    load_model,
    save_model,
    train_sgd,
)
from .deepfool import DeepFoolConfig, DegenerateClassifierError
from .harness import (
    Dataset,
    IdxFormatError,
    evaluate,
    load_idx,
    random_sparse_baseline,
    read_report,
    sweep_delta,
    sweep_lambda,
    synth_blobs,
    synth_digits,
    transfer_matrix,
    write_report,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_kv(spec: str) -> dict:
    out = {}
    for part in filter(None, spec.split(",")):
        if "=" not in part:
            raise UsageError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k] = v
    return out


def load_dataset(spec: str, limit: int | None = None) -> Dataset:
    if spec.startswith("synth:digits"):
        kv = _parse_kv(spec[len("synth:digits"):].lstrip(","))
        ds = synth_digits(int(kv.get("n", 1000)), int(kv.get("seed", 0)))
    elif spec.startswith("synth:blobs"):
        kv = _parse_kv(spec[len("synth:blobs"):].lstrip(","))
        ds = synth_blobs(
            int(kv.get("n", 200)), int(kv.get("classes", 3)),
            int(kv.get("dim", 8)), float(kv.get("margin", 1.0)),
            int(kv.get("seed", 0)),
        )
    elif spec.startswith("idx:"):
        paths = spec[len("idx:"):].split(",")
        if len(paths) != 2:
            raise UsageError("idx data spec needs <images>,<labels>")
        ds = load_idx(paths[0], paths[1])
    else:
        raise UsageError(f"unrecognized data spec {spec!r}")
    return ds.subset(limit) if limit else ds


def _sf_config(args) -> SparseFoolConfig:
    df = DeepFoolConfig(max_iter=args.max_iter)
    return SparseFoolConfig(lam=args.lam, deepfool_cfg=df)


def _add_common(p: argparse.ArgumentParser, model=True):
    if model:
        p.add_argument("--model", required=True, help="model file path")
    p.add_argument("--data", required=True, help="data spec (idx:...|synth:...)")
    p.add_argument("--limit", type=int, default=None, help="sample cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report output path")
    p.add_argument("--format", choices=["json", "csv"], default="json")


def _add_attack_knobs(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lam", type=float, default=3.0)
    p.add_argument("--delta", type=float, default=None,
                   help="perceptibility bound in domain units")
    p.add_argument("--delta-255", dest="delta255", type=float, default=None,
                   help="perceptibility bound in 0-255 pixel units")
    p.add_argument("--max-iter", type=int, default=50,
                   help="inner boundary-search iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsefool", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the MLP preset and save it")
    _add_common(p, model=False)
    p.add_argument("--model-out", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--val-data", default=None, help="held-out data spec")

    p = sub.add_parser("attack", help="run the sparse attack over a dataset")
    _add_common(p)
    _add_attack_knobs(p)

    p = sub.add_parser("clipfail", help="clipping-failure study for the p=1 walk")
    _add_common(p)
    p.add_argument("--max-iter", type=int, default=50)

    p = sub.add_parser("sweep-lambda", help="evaluate across lambda values")
    _add_common(p)
    _add_attack_knobs(p)
    p.add_argument("--lambdas", default="1,2,3,5", help="comma-separated list")

    p = sub.add_parser("sweep-delta", help="evaluate across delta bounds")
    _add_common(p)
    _add_attack_knobs(p)
    p.add_argument("--deltas", default="0.1,0.2,0.5,1.0", help="comma-separated list")

    p = sub.add_parser("baseline", help="random sparse-flip baseline")
    _add_common(p)
    p.add_argument("--budget", type=int, required=True,
                   help="per-channel element budget")

    p = sub.add_parser("transfer", help="cross-model fooling-rate matrix")
    _add_common(p, model=False)
    _add_attack_knobs(p)
    p.add_argument("--models", required=True, help="comma-separated model paths")

    p = sub.add_parser("report", help="summarize a stored JSON report")
    p.add_argument("path")
    return parser


def _emit(obj, args) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _resolve_delta(args, ds: Dataset):
    if args.delta255 is not None:
        span = ds.domain_hi - ds.domain_lo
        return args.delta255 / 255.0 * span
    return args.delta


def run(args) -> int:
    if args.command == "train":
        ds = load_dataset(args.data, args.limit)
        n = ds.samples[0].size
        model = MlpClassifier.random([n, 128, 64, 10], seed=args.seed,
                                     input_shape=ds.samples[0].shape)
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                          batch_size=args.batch_size, seed=args.seed)
        val_x = val_y = None
        if args.val_data:
            vds = load_dataset(args.val_data)
            val_x, val_y = vds.as_matrix(), np.asarray(vds.labels)
        result = train_sgd(model, ds.as_matrix(), np.asarray(ds.labels), cfg,
                           val_x=val_x, val_labels=val_y)
        save_model(result.model, args.model_out)
        _emit({"train_accuracy": result.train_accuracy,
               "val_accuracy": result.val_accuracy,
               "model": args.model_out}, args)
        return EXIT_OK

    if args.command == "report":
        rep = read_report(args.path)
        print(json.dumps({
            "name": rep.name,
            "fooling_rate": rep.fooling_rate,
            "median_pert_pct": rep.median_pert_pct,
            "mean_time_per_sample": rep.mean_time_per_sample,
            "samples": len(rep.per_sample),
        }, indent=2, sort_keys=True))
        return EXIT_OK

    ds = load_dataset(args.data, args.limit)

    if args.command == "transfer":
        models = [load_model(p.strip(), input_shape=ds.samples[0].shape)
                  for p in args.models.split(",")]
        cfg = _sf_config(args)
        mat = transfer_matrix(models, ds, cfg, delta=_resolve_delta(args, ds))
        _emit({"models": args.models.split(","), "matrix": mat.tolist()}, args)
        return EXIT_OK

    model = load_model(args.model, input_shape=ds.samples[0].shape)

    if args.command == "attack":
        cfg = _sf_config(args)
        rep = evaluate(model, ds, cfg, delta=_resolve_delta(args, ds))
        if args.out:
            write_report(rep, args.out, args.format)
        print(json.dumps({"fooling_rate": rep.fooling_rate,
                          "median_pert_pct": rep.median_pert_pct,
                          "mean_time_per_sample": rep.mean_time_per_sample},
                         indent=2, sort_keys=True))
        return EXIT_OK

    if args.command == "clipfail":
        b = BoxBounds.constant(ds.samples[0].shape, ds.domain_lo, ds.domain_hi)
        rep = clip_failure_experiment(
            model, ds.samples, b, DeepFoolConfig(max_iter=args.max_iter, p=1.0))
        _emit(rep.to_dict(), args)
        return EXIT_OK

    if args.command == "sweep-lambda":
        lambdas = [float(v) for v in args.lambdas.split(",")]
        rows = sweep_lambda(model, ds, lambdas, _sf_config(args),
                            delta=_resolve_delta(args, ds))
        _emit(rows, args)
        return EXIT_OK

    if args.command == "sweep-delta":
        deltas = [float(v) for v in args.deltas.split(",")]
        rows = sweep_delta(model, ds, deltas, _sf_config(args))
        _emit(rows, args)
        return EXIT_OK

    if args.command == "baseline":
        rep = random_sparse_baseline(model, ds, args.budget, args.seed)
        if args.out:
            write_report(rep, args.out, args.format)
        print(json.dumps({"fooling_rate": rep.fooling_rate}, indent=2))
        return EXIT_OK

    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = run(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxFormatError, ModelFormatError, FileNotFoundError) as e:
        print(f"data/model error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (DegenerateClassifierError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
