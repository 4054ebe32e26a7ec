"""
numisnet CLI - pipeline stages as subcommands sharing one configuration
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .config import RunConfig, load_config
from .core.checkpoint import load_checkpoint, save_checkpoint
from .dataset import Manifest, Sample, read_manifest, split, write_manifest
from .errors import ConfigError, DataError, NumisError
from .imaging import crop_reverse, is_suspect_crop, load_image, prepare_image
from .report import ConceptReport, render_saliency_summary, write_metrics_report
from .saliency import multiscale_map, write_outputs
from .synth import generate_corpus, read_ground_truth
from .text import assign_label, lexicon_for, read_tokens, word_frequency
from .trainer import (
    TensorSplit,
    TrainingData,
    early_stop_check,
    evaluate,
    read_history,
    train,
    write_history,
)

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
IMAGE_SUFFIXES = (".png", ".ppm")

Document = Tuple[str, Path, Path]


def version() -> str:
    """Get numisnet version"""
    try:
        from importlib.metadata import version as get_version
        return get_version("numisnet")
    except Exception:
        # Not installed (e.g. running from a checkout)
        from numisnet import __version__
        return __version__


def setup_logging():
    """Configure the package logger from NUMIS_LOG"""
    name = os.environ.get("NUMIS_LOG", "info").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"NUMIS_LOG must be one of {', '.join(LOG_LEVELS)}, got '{name}'")
    package_logger = logging.getLogger("numisnet")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(LOG_LEVELS[name])


def corpus_documents(corpus: Path) -> List[Document]:
    """(id, image path, text path) for every description in the corpus"""
    texts = sorted((corpus / "texts").glob("*.txt"))
    if not texts:
        raise DataError(f"no descriptions found under {corpus / 'texts'}")
    documents = []
    for text_path in texts:
        candidates = [corpus / "images" / f"{text_path.stem}{s}" for s in IMAGE_SUFFIXES]
        image_path = next((p for p in candidates if p.is_file()), None)
        if image_path is None:
            raise DataError(f"no image for description {text_path.name}")
        documents.append((text_path.stem, image_path.resolve(), text_path.resolve()))
    return documents


def cmd_synth(config: RunConfig) -> Path:
    summary = generate_corpus(config.synth, config.corpus_path, tables=config.lexicon(),
                              jobs=config.jobs)
    for concept, count in summary.positives.items():
        logger.info("%s: %d of %d coins depict it", concept, count, summary.n_samples)
    return summary.out_dir


def _log_agreement(corpus: Path, labels: Dict[str, Dict[str, str]]):
    truth_path = corpus / "ground_truth.tsv"
    if not truth_path.is_file():
        return
    truth = read_ground_truth(truth_path)
    ids = sorted({sample_id for per_concept in labels.values() for sample_id in per_concept})
    agreeing = 0
    for sample_id in ids:
        if all((labels[c][sample_id] == "pos") == truth[(sample_id, c)].present
               for c in labels if (sample_id, c) in truth):
            agreeing += 1
    for concept, per_id in labels.items():
        matched = sum((label == "pos") == truth[(i, concept)].present
                      for i, label in per_id.items() if (i, concept) in truth)
        logger.info("%s: text labels agree with ground truth on %d of %d samples",
                    concept, matched, len(per_id))
    logger.info("Sample-level label agreement %.4f", agreeing / len(ids) if ids else 0.0)


def cmd_build_dataset(config: RunConfig) -> Dict[str, Path]:
    """Normalize, label, balance and split one manifest per concept"""
    tables = config.lexicon()
    documents = corpus_documents(config.corpus_path)
    tokens = {sample_id: read_tokens(text) for sample_id, _, text in documents}

    for sample_id, image_path, _ in documents:
        if is_suspect_crop(crop_reverse(load_image(image_path), config.layout)):
            logger.warning("Suspect crop for %s (%s): near-constant pixels", sample_id, image_path)

    written: Dict[str, Path] = {}
    labels: Dict[str, Dict[str, str]] = {}
    for concept in config.concepts:
        lexicon = lexicon_for(concept, tables)
        path = config.manifest_path(concept)
        # sample paths are relative to the manifest's directory
        base = path.parent.resolve()
        samples = [Sample(id=sample_id, image_path=os.path.relpath(image, base),
                          text_path=os.path.relpath(text, base),
                          concept=concept, label=assign_label(tokens[sample_id], lexicon))
                   for sample_id, image, text in documents]
        labels[concept] = {s.id: s.label for s in samples}
        positives = sum(s.label == "pos" for s in samples)
        logger.info("%s: %d positive, %d negative descriptions", concept, positives,
                    len(samples) - positives)
        assigned = split(samples, config.split)
        write_manifest(path, Manifest(samples=assigned))
        written[concept] = path
        logger.info("%s: wrote %d samples to %s", concept, len(assigned), path)
    _log_agreement(config.corpus_path, labels)
    return written


def cmd_words(config: RunConfig, top: int) -> Path:
    documents = corpus_documents(config.corpus_path)
    ranked = word_frequency(read_tokens(text) for _, _, text in documents)
    path = config.reports_path / "word_frequency.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(["word", "documents"])
        writer.writerows(ranked[:top])
    logger.info("Most frequent words: %s", ", ".join(w for w, _ in ranked[:10]))
    return path


def cmd_train(config: RunConfig) -> Dict[str, Path]:
    topology = config.build_topology()
    side = topology.input_shape[0]
    written: Dict[str, Path] = {}
    for concept in config.concepts:
        manifest = read_manifest(config.manifest_path(concept))
        data = TrainingData.from_manifest(manifest, config.layout, side)
        logger.info("%s: training %s topology on %d samples (%d validation)", concept,
                    topology.preset, len(data.train.samples), len(data.val.samples))
        result = train(config.train, data, topology, jobs=config.jobs)
        path = config.checkpoint_path(concept)
        save_checkpoint(path, topology, result.checkpoint.params, result.checkpoint.extras)
        write_history(config.history_path(concept), result.history)
        logger.info("%s: best epoch %d (val acc %.3f), stopped by %s", concept,
                    result.best_epoch, result.best_record.val_accuracy, result.stop_reason)
        written[concept] = path
    return written


def cmd_eval(config: RunConfig) -> List[Path]:
    reports = []
    for concept in config.concepts:
        checkpoint = load_checkpoint(config.checkpoint_path(concept))
        network = checkpoint.network()
        side = checkpoint.topology.input_shape[0]
        manifest = read_manifest(config.manifest_path(concept))
        val = TensorSplit.load(manifest.by_split("val"), manifest, config.layout, side)
        test = TensorSplit.load(manifest.by_split("test"), manifest, config.layout, side)
        history = read_history(config.history_path(concept))
        if not history:
            raise DataError(f"{concept}: empty training history")
        decision = early_stop_check(history, config.train)
        reports.append(ConceptReport.from_history(
            concept, history,
            validation=evaluate(network, val.x, val.y),
            test=evaluate(network, test.x, test.y),
            stop_reason=decision.reason or "",
        ))
    return write_metrics_report(config.reports_path, reports)


def cmd_saliency(config: RunConfig, image: Path, checkpoint_path: Path) -> List[Path]:
    checkpoint = load_checkpoint(checkpoint_path)
    network = checkpoint.network()
    side = checkpoint.topology.input_shape[0]
    x = prepare_image(image, config.layout, side)
    occlusion = config.occlusion.scaled(side)

    fill: Any = occlusion.fill_value
    if occlusion.fill == "dataset-mean":
        if "input.channel_mean" in checkpoint.extras:
            fill = checkpoint.extras["input.channel_mean"]
        else:
            logger.warning("Checkpoint has no channel mean, filling with %.3f", fill)

    merged, raw = multiscale_map(network.positive_probability, x, occlusion, fill=fill,
                                 jobs=config.jobs)
    out_dir = config.out_path / "saliency" / image.stem
    files = write_outputs(merged, raw, x, out_dir)
    summary = out_dir / "summary.txt"
    summary.write_text(render_saliency_summary(
        image=str(image), checkpoint=str(checkpoint_path),
        p_clean=float(network.positive_probability(x[None])[0]),
        kernels={k: heatmap.argmax() for k, heatmap in raw.items()},
        merged=merged.argmax(), files=files,
    ), encoding="utf-8")
    logger.info("Wrote %d heatmap files to %s", len(files) + 1, out_dir)
    return files + [summary]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="numisnet",
        description="Weakly supervised detection of coin reverse motifs from images and text",
    )
    parser.add_argument("--version", "-v", action="version", version=f"numisnet {version()}")
    parser.add_argument("--dry-run", action="store_true",
                        help="Validate the configuration and exit without side effects")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=Path, help="key = value configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="Override one configuration key")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="Output directory")
    common.add_argument("--jobs", "-j", type=int, help="Worker cap")
    common.add_argument("--topology", choices=["paper", "mini"])

    with_concepts = argparse.ArgumentParser(add_help=False)
    with_concepts.add_argument("--concept", action="append",
                               help="Restrict to a concept (repeatable)")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    synth_parser = subparsers.add_parser("synth", parents=[common],
                                         help="Generate a synthetic coin corpus")
    synth_parser.add_argument("--n", type=int, help="Number of coins")
    synth_parser.add_argument("--noise", type=float, help="Label noise rate")
    synth_parser.add_argument("--positive-rate", type=float)
    synth_parser.add_argument("--image-side", type=int)
    synth_parser.add_argument("--layout", choices=["single", "left-right"])

    subparsers.add_parser("build-dataset", parents=[common, with_concepts],
                          help="Label, balance and split per-concept manifests")
    subparsers.add_parser("train", parents=[common, with_concepts],
                          help="Train one model per concept")
    subparsers.add_parser("eval", parents=[common, with_concepts],
                          help="Evaluate trained models and write the results table")

    saliency_parser = subparsers.add_parser("saliency", parents=[common],
                                            help="Occlusion heatmaps for one image")
    saliency_parser.add_argument("--image", type=Path, required=True)
    saliency_parser.add_argument("--checkpoint", type=Path, required=True)

    words_parser = subparsers.add_parser("words", parents=[common],
                                         help="Corpus word-frequency report")
    words_parser.add_argument("--top", type=int, default=50)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    flags: Dict[str, Optional[Any]] = {
        "seed": args.seed,
        "out_dir": args.out,
        "jobs": args.jobs,
        "train.topology": args.topology,
    }
    if getattr(args, "concept", None):
        flags["concepts"] = ",".join(args.concept)
    if args.command == "synth":
        flags.update({
            "synth.n_samples": args.n,
            "synth.label_noise_rate": args.noise,
            "synth.positive_rate": args.positive_rate,
            "synth.image_side": args.image_side,
            "synth.layout": args.layout,
        })
    return load_config(args.config, args.overrides, flags)


def _inputs(args: argparse.Namespace, config: RunConfig) -> List[Path]:
    if args.command == "train":
        return [config.manifest_path(c) for c in config.concepts]
    if args.command == "eval":
        return ([config.manifest_path(c) for c in config.concepts]
                + [config.checkpoint_path(c) for c in config.concepts]
                + [config.history_path(c) for c in config.concepts])
    if args.command == "saliency":
        return [args.image, args.checkpoint]
    return []


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    config.validate(args.command, _inputs(args, config))
    if args.dry_run:
        logger.info("Configuration valid for '%s'", args.command)
        return 0

    if args.command == "synth":
        cmd_synth(config)
    elif args.command == "build-dataset":
        cmd_build_dataset(config)
    elif args.command == "train":
        cmd_train(config)
    elif args.command == "eval":
        cmd_eval(config)
    elif args.command == "saliency":
        cmd_saliency(config, args.image, args.checkpoint)
    elif args.command == "words":
        cmd_words(config, args.top)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1

    try:
        setup_logging()
        return run(args)
    except NumisError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
