"""Command-line driver: generate / segment / train / ground / eval / ablate /
adapt.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import adapters, eval_harness, report as report_mod, synthdata, training, \
    treebank
from .config import ExperimentConfig
from .data import DataError, Dataset, load_dataset
from .model import GroundingModel
from .scoring import ABLATION_VARIANTS
from .training import NumericError

log = logging.getLogger("tground")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _load_config(path, seed=None) -> ExperimentConfig:
    config = ExperimentConfig.load(path) if path else ExperimentConfig()
    if seed is not None:
        config = config.from_dict({**config.to_dict(), "seed": seed})
    return config


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    config = synthdata.SynthConfig.load(args.config) if args.config \
        else synthdata.SynthConfig()
    if args.seed is not None:
        config.seed = args.seed
    synthdata.generate(config, args.out)
    log.info("wrote synthetic dataset to %s", args.out)
    return EXIT_OK


def cmd_segment(args):
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        with open(args.dataset) as f:
            for line_no, line in enumerate(f, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    tree = treebank.parse_ptb(rec["ptb"])
                except treebank.PtbParseError as e:
                    raise DataError(f"record {rec.get('id', line_no)}: {e}")
                masks = treebank.segment_clauses(tree)
                out.write(json.dumps({"id": rec["id"],
                                      "masks": masks.tolist()}) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _train_one(config, train_ds, val_ds, modality, out_dir, suffix=""):
    model, train_log = training.train(config, train_ds, val_ds, modality)
    ckpt = os.path.join(out_dir, f"checkpoint{suffix}.npz")
    model.save(ckpt)
    with open(os.path.join(out_dir, f"training_log{suffix}.json"), "w") as f:
        json.dump({"config": config.to_dict(), **train_log}, f, indent=2,
                  sort_keys=True)
        f.write("\n")
    return model, train_log


def cmd_train(args):
    config = _load_config(args.config, args.seed)
    os.makedirs(args.out, exist_ok=True)
    require_tree = config.segmentation == "parser"
    modalities = config.modalities if config.fusion else config.modalities[:1]
    train_ds = load_dataset(args.dataset, modalities, require_tree)
    val_ds = load_dataset(args.val, modalities, require_tree)

    models = {}
    for i, mod in enumerate(modalities):
        suffix = f"_{mod}" if config.fusion else ""
        models[mod], _ = _train_one(config, train_ds, val_ds, mod, args.out,
                                    suffix)
    if config.fusion and len(models) == 2:
        weight = training.select_fusion_weight(models, val_ds)
        with open(os.path.join(args.out, "fusion.json"), "w") as f:
            json.dump({"fusion_weight": weight, "modalities": list(models)}, f,
                      sort_keys=True)
            f.write("\n")
    config.save(os.path.join(args.out, "config.json"))
    return EXIT_OK


def _load_models(config, checkpoint):
    """Single checkpoint file, or a train output dir for fusion runs."""
    if os.path.isdir(checkpoint):
        if config.fusion:
            models = {}
            for mod in config.modalities:
                models[mod] = GroundingModel.load(
                    os.path.join(checkpoint, f"checkpoint_{mod}.npz"), config)
            fusion_path = os.path.join(checkpoint, "fusion.json")
            weight = config.fusion_weight
            if os.path.exists(fusion_path):
                with open(fusion_path) as f:
                    weight = json.load(f)["fusion_weight"]
            return models, weight
        return {config.modalities[0]: GroundingModel.load(
            os.path.join(checkpoint, "checkpoint.npz"), config)}, None
    return {config.modalities[0]: GroundingModel.load(checkpoint, config)}, None


def cmd_ground(args):
    config = _load_config(args.config, args.seed)
    models, weight = _load_models(config, args.checkpoint)
    modalities = list(models)
    dataset = load_dataset(args.dataset, modalities,
                           config.segmentation == "parser")
    predictions = training.predict(models, dataset, weight)
    with open(args.out, "w") as f:
        for pred in predictions:
            f.write(json.dumps({
                "id": pred["id"],
                "ranked_segments": [list(s) for s in pred["ranked_segments"]],
                "scores": pred["scores"],
            }) + "\n")
    return EXIT_OK


def _evaluate_predictions(dataset: Dataset, rankings: dict[str, list]):
    results = []
    hits1 = []
    clause_counts = []
    multi_temporal = 0
    for ex in dataset.examples:
        if ex.id not in rankings:
            raise DataError(f"no prediction for example {ex.id}")
        h1, h5, ic = eval_harness.example_metrics(rankings[ex.id], ex.annotations)
        results.append((ex.label, h1, h5, ic))
        hits1.append(h1)
        if ex.tree is not None:
            clause_counts.append(treebank.count_clauses(ex.tree))
        words = {t.lower() for t in ex.tokens}
        if len(words & set(eval_harness.TEMPORAL_WORDS)) > 1:
            multi_temporal += 1
    report = eval_harness.aggregate(results)
    if len(clause_counts) == len(dataset.examples):
        report["complexity"] = {
            str(k): v for k, v in
            eval_harness.complexity_buckets(clause_counts, hits1).items()}
    report["multiple_temporal_words"] = multi_temporal
    return report, hits1


def _query_mean_embeddings(model: GroundingModel, examples):
    table = model.embedding.table.data
    return np.stack([table[model.embedding.indices(ex.tokens)].mean(axis=0)
                     for ex in examples])


def cmd_eval(args):
    config = _load_config(args.config, args.seed)
    dataset = load_dataset(args.dataset, config.modalities[:1])
    rankings = {}
    with open(args.predictions) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            rankings[rec["id"]] = [tuple(s) for s in rec["ranked_segments"]]
    report, hits1 = _evaluate_predictions(dataset, rankings)

    if args.train_dataset and args.checkpoint:
        models, _ = _load_models(config, args.checkpoint)
        model = next(iter(models.values()))
        train_ds = load_dataset(args.train_dataset, config.modalities[:1])
        test_means = _query_mean_embeddings(model, dataset.examples)
        train_means = _query_mean_embeddings(model, train_ds.examples)
        report["novelty"] = {
            str(k): v for k, v in
            eval_harness.novelty_buckets(test_means, train_means, hits1).items()}

    report["config"] = config.to_dict()
    prefix, _ = os.path.splitext(args.report)
    report_mod.write_report_json(report, args.report)
    report_mod.write_report_csv(report, prefix + ".csv")
    report_mod.render_figures(report, prefix)
    log.info("Average R@1 %.3f R@5 %.3f mIoU %.3f", report["average"]["r1"],
             report["average"]["r5"], report["average"]["miou"])
    return EXIT_OK


def cmd_ablate(args):
    base = _load_config(args.config, args.seed)
    modality = base.modalities[0]
    require_tree = base.segmentation == "parser"
    train_ds = load_dataset(args.dataset, (modality,), require_tree)
    val_ds = load_dataset(args.val, (modality,), require_tree)
    test_ds = load_dataset(args.test, (modality,), require_tree)
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for variant, flags in ABLATION_VARIANTS.items():
        config = base.with_flags(flags)
        model, _ = training.train(config, train_ds, val_ds, modality)
        model.save(os.path.join(args.out, f"checkpoint_{variant}.npz"))
        metrics = training.evaluate({modality: model}, test_ds,
                                    flags=config.flags)["average"]
        rows.append({"variant": variant, "r1": metrics["r1"],
                     "r5": metrics["r5"], "miou": metrics["miou"]})
        log.info("variant %-24s R@1 %.3f", variant, metrics["r1"])

    with open(os.path.join(args.out, "ablation.json"), "w") as f:
        json.dump({"config": base.to_dict(), "rows": rows}, f, indent=2,
                  sort_keys=True)
        f.write("\n")
    report_mod.write_ablation_csv(rows, os.path.join(args.out, "ablation.csv"))
    report_mod.render_ablation_figure(rows, os.path.join(args.out,
                                                         "ablation.png"))
    return EXIT_OK


def cmd_adapt(args):
    adapters.adapt(args.annotations, args.features_dir, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tground",
        description="Compositional temporal grounding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("segment", help="clause-segment queries from trees")
    p.add_argument("--dataset", required=True,
                   help="JSONL with id, tokens, ptb fields")
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train on a dataset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", required=True, help="training JSONL")
    p.add_argument("--val", required=True, help="validation JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ground", help="rank segments for every query")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="predictions JSONL")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval", help="score predictions against annotations")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--train-dataset", help="enables the novelty analysis")
    p.add_argument("--checkpoint", help="embedding source for novelty")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate all ablation variants")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", required=True, help="training JSONL")
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("adapt", help="convert external annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except DataError as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except NumericError as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        log.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
