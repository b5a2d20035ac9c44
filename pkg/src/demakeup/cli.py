"""Command line entry point: ``demakeup <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import age as age_mod
from . import evaluation as ev
from .checkpoint import CheckpointError
from .config import RunConfig, config_from_dict, dump_config, load_config
from .diffusion import ToyNoisePredictor
from .encoders import BackendUnavailableError, UnknownBackendError, build_backend
from .io import (
    ManifestError,
    MetadataError,
    load_age_dataset,
    load_pair_manifest,
    pairs_check,
    read_predictions,
    read_scores,
    write_rows,
)
from .losses import NonFiniteLossError
from .pipeline import (
    Backends,
    ConfigError,
    RunManifest,
    batch_clean,
    finetune,
    load_predictor,
    pair_fingerprint,
    save_predictor,
)

log = logging.getLogger("demakeup")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5

EPILOG = """exit codes:
  0  success
  1  unexpected failure
  2  usage error (unknown subcommand or flag)
  3  invalid configuration or unknown backend
  4  missing or malformed input data (images, manifests, checkpoints)
  5  numerical failure (non-finite loss)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _run_config(args) -> RunConfig:
    if getattr(args, "manifest", None):
        data = json.loads(Path(args.manifest).read_text())
        if not data.get("run_config"):
            raise ConfigError(f"{args.manifest} carries no run configuration")
        cfg = config_from_dict(data["run_config"])
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raise ConfigError("--config (or --manifest) is required")
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_fingerprint(dataset) -> list[str]:
    import hashlib

    h = hashlib.sha256()
    for img, a in dataset:
        h.update(np.ascontiguousarray(img.values).tobytes())
        h.update(repr(a).encode())
    return [h.hexdigest()[:16]]


def cmd_train_age(args) -> int:
    cfg = _run_config(args)
    path = args.dataset or cfg.paths.age_dataset
    if not path:
        raise ConfigError("no age dataset given (--dataset or paths.age_dataset)")
    dataset = load_age_dataset(path, max_age=cfg.age_train.max_age)
    out = _out_dir(args, cfg)
    model, history = age_mod.train_age_estimator(dataset, cfg.age_train)
    ckpt = out / "age_regressor.pt"
    age_mod.save_regressor(model, ckpt, {"seed": cfg.seed})
    write_rows(out / "age_metrics.csv", age_mod.metrics_rows(history), ["epoch", "train_loss", "val_mae", "beta"])
    manifest = RunManifest(config={"age_train": cfg.to_dict()["age_train"], "seed": cfg.seed},
                           dataset_fingerprints=_dataset_fingerprint(dataset),
                           epochs=[dict(r, total=r["train_loss"]) for r in age_mod.metrics_rows(history)],
                           best_epoch=int(np.argmin([h.val_mae for h in history])) + 1,
                           checkpoint_path=str(ckpt), run_config=cfg.to_dict(), command="train-age")
    manifest.to_json(out / "age_manifest.json")
    print(f"best val MAE {min(h.val_mae for h in history):.3f} at epoch {manifest.best_epoch}; wrote {ckpt}")
    return EXIT_OK


def build_backends(cfg: RunConfig, age_model: str | None = None) -> Backends:
    if age_model:
        predictor = age_mod.load_regressor(age_model)
    else:
        predictor = build_backend(cfg.eval.age_predictor, "age_predictor")
    return Backends(
        build_backend(cfg.encoder.image_text, "image_text"),
        build_backend(cfg.encoder.face, "face"),
        build_backend(cfg.encoder.perceptual, "perceptual"),
        predictor,
    )


def cmd_finetune(args) -> int:
    cfg = _run_config(args)
    fcfg = cfg.finetune_config()
    train_path = args.train or cfg.paths.train_manifest
    if not train_path:
        raise ConfigError("no training manifest given (--train or paths.train_manifest)")
    pairs = load_pair_manifest(train_path, "train").load_pairs()
    val_path = args.val or cfg.paths.val_manifest
    val_pairs = load_pair_manifest(val_path, "val").load_pairs() if val_path else None
    if args.resume:
        predictor = load_predictor(args.resume)
    else:
        p = cfg.predictor
        predictor = ToyNoisePredictor(p.width, p.depth, fcfg.T_total, p.emb_dim, p.out_scale, seed=cfg.seed)
    backends = build_backends(cfg, args.age_model or cfg.paths.age_model)
    out = _out_dir(args, cfg)
    predictor, manifest = finetune(pairs, predictor, fcfg, backends, val_pairs)
    ckpt = save_predictor(predictor, out / "predictor.pt", {"seed": cfg.seed})
    manifest.checkpoint_path = str(ckpt)
    manifest.run_config = cfg.to_dict()
    manifest.command = "finetune"
    if val_pairs:
        manifest.dataset_fingerprints += [f"val:{pair_fingerprint(p)}" for p in val_pairs]
    manifest.to_json(out / "run_manifest.json")
    dump_config(cfg, out / "config.yaml")
    for row in manifest.epochs:
        print(f"epoch {row['epoch']}: total {row['total']:.5f}")
    print(f"best epoch {manifest.best_epoch}; wrote {ckpt}")
    return EXIT_OK


def cmd_clean(args) -> int:
    fcfg = load_config(args.config).finetune_config() if args.config else RunConfig().finetune_config()
    predictor = load_predictor(args.ckpt)
    n = batch_clean(args.input, args.output, predictor, fcfg)
    print(f"cleaned {n} image(s) into {args.output}")
    return EXIT_OK


def cmd_eval_age(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    recs = read_predictions(args.pred)
    before = None
    if args.before:
        by_id = {r.id: r.prediction for r in read_predictions(args.before)}
        missing = [r.id for r in recs if r.id not in by_id]
        if missing:
            raise ManifestError(f"{args.before}: no 'before' prediction for ids {missing[:5]}")
        before = [by_id[r.id] for r in recs]
    groups = [r.group for r in recs] if all(r.group for r in recs) else None
    rep = ev.age_report([r.prediction for r in recs], [r.truth for r in recs], groups, before,
                        cfg.age_bins(), cfg.eval.adult_age, cfg.eval.ci_level)
    out = Path(args.out)
    rep.to_csv(out / "age_report.csv")
    text = rep.summary("age estimation")
    (out / "age_summary.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_eval_id(args) -> int:
    scores = read_scores(args.scores)
    rep, curve = ev.identity_report(scores, args.fmr)
    out = Path(args.out)
    rep.to_csv(out / "id_report.csv")
    write_rows(args.roc_out or out / "roc.csv", curve.rows(), ["threshold", "fmr", "tmr"])
    (out / "id_summary.txt").write_text(rep.summary("identity verification") + "\n")
    print(f"TMR@FMR={args.fmr:g}: {rep.metrics['tmr']:.4f} (empirical FMR {rep.metrics['fmr']:.2e}, "
          f"threshold {rep.metrics['threshold']:.4f})")
    return EXIT_OK


def cmd_report(args) -> int:
    labels = args.labels or [Path(p).stem for p in args.inputs]
    if len(labels) != len(args.inputs):
        raise UsageError("--labels must match --inputs in number")
    reports = [ev.EvalReport.from_csv(p) for p in args.inputs]
    keys = list(dict.fromkeys(k for r in reports for k in r.metrics))
    rows = [{"metric": k, **{lab: r.metrics.get(k, "") for lab, r in zip(labels, reports)}} for k in keys]
    out = Path(args.out)
    write_rows(out / "report.csv", rows, ["metric", *labels])
    lines = ["metric".ljust(28) + "".join(lab.rjust(16) for lab in labels)]
    for row in rows:
        lines.append(row["metric"].ljust(28) + "".join(
            (f"{row[lab]:16.4f}" if isinstance(row[lab], float) else str(row[lab]).rjust(16)) for lab in labels))
    if args.predictions:
        recs = read_predictions(args.predictions)
        table = ev.demographic_slice((r.prediction, r.truth, r.group or "all") for r in recs)
        write_rows(out / "groups.csv", [{"group": g, **v} for g, v in table.items()], ["group", "count", "mae"])
        lines.append("")
        lines += [f"{g:<24} n={v['count']:<6} MAE {v['mae']:.3f}" for g, v in table.items()]
    text = "\n".join(lines)
    (out / "report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_pairs_check(args) -> int:
    res = pairs_check(load_pair_manifest(args.manifest))
    print(json.dumps(res, indent=2))
    return EXIT_OK if not res["mismatched"] else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="demakeup", description="Diffusion-based makeup removal and age/identity evaluation.",
                 epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-age", help="train the proxy age regressor")
    p.add_argument("--config")
    p.add_argument("--manifest", help="rerun from a previous run's age_manifest.json")
    p.add_argument("--dataset", help="CSV with columns path, age")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train_age)

    p = sub.add_parser("finetune", help="fine-tune the noise predictor on makeup pairs")
    p.add_argument("--config")
    p.add_argument("--manifest", help="rerun from a previous run's run_manifest.json")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--age-model", help="age regressor checkpoint for the ssrnet age loss")
    p.add_argument("--resume", help="start from this predictor checkpoint (second curriculum stage)")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("clean", help="remove makeup from every image in a directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("eval-age", help="age metrics from a predictions CSV (id, prediction, truth[, group])")
    p.add_argument("--pred", required=True)
    p.add_argument("--before", help="predictions before makeup removal, for shift statistics")
    p.add_argument("--config")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval_age)

    p = sub.add_parser("eval-id", help="ROC and TMR@FMR from a scores CSV (score, label)")
    p.add_argument("--scores", required=True)
    p.add_argument("--fmr", type=float, default=ev.DEFAULT_FMR)
    p.add_argument("--roc-out")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval_id)

    p = sub.add_parser("report", help="merge report CSVs side by side, optionally with group slices")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--labels", nargs="+")
    p.add_argument("--predictions")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pairs-check", help="validate a pair manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_pairs_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"demakeup: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"demakeup: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UnknownBackendError, BackendUnavailableError) as exc:
        print(f"demakeup: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, MetadataError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"demakeup: input error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, FloatingPointError) as exc:
        print(f"demakeup: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
