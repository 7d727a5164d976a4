#!/usr/bin/env python3
"""
Bi-Modal Captioner

Dense video captioning from audio and visual feature sequences: a bi-modal
transformer captions events found by a multi-headed proposal generator.

Usage:
  main.py estimate-anchors --annotations FILE --modality audio --count 48
  main.py train-captioner --config FILE [--encoder-checkpoint FILE]
  main.py train-proposals --config FILE [--encoder-checkpoint FILE] [--freeze-encoder]
  main.py propose --checkpoint FILE --features-dir DIR --out FILE [--top-k 100]
  main.py caption --checkpoint FILE --features-dir DIR (--proposals FILE | --gt FILE) --out FILE
  main.py evaluate --predictions FILE --ground-truth FILE [--bleu] [--bleu-orders N ...] [--best-prefix]
  main.py synth-data --out DIR [--spec FILE | --config FILE]
  main.py ablation --config FILE --out FILE
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from bimodal_captioner.data.annotations import load_annotations, load_predictions, predictions_to_json
from bimodal_captioner.data.features import AUDIO_CELL_SECONDS, MODALITIES, VISUAL_CELL_SECONDS
from bimodal_captioner.data.synthetic import PROBE_TARGET, SynthSpec, probe_accuracy, synth_dataset, write_dataset
from bimodal_captioner.errors import CaptionerError, ConfigurationError, UsageError
from bimodal_captioner.evaluation.metrics import DEFAULT_THRESHOLDS, dense_caption_bleu, proposal_prf
from bimodal_captioner.model.anchors import estimate_anchors, estimate_kernel_sizes
from bimodal_captioner.pipeline import caption_videos, propose_videos, segments_from_ground_truth
from bimodal_captioner.services.file_service import FileService
from bimodal_captioner.training.ablation import ablation_to_json, run_ablation
from bimodal_captioner.training.datasets import load_video_features
from bimodal_captioner.ui.report_view import ReportView
from bimodal_captioner.utils.config import Config
from bimodal_captioner.utils.logger import configure_logging, get_logger
from bimodal_captioner.workflow import (
    load_captioner, load_encoder_state, load_proposal_generator, load_training_data, run_caption_stage,
    run_proposal_stage, save_captioner, save_proposal_generator, vocabulary_for, write_history,
)

logger = get_logger("main")


def setup_parser():
    """Configure the argument parser."""
    parser = argparse.ArgumentParser(
        description="Bi-Modal Captioner - dense video captioning with a bi-modal transformer"
    )
    parser.add_argument("--log-level", help="Log level (default: $BMT_LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", help="Append timestamped log records to this file")

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Estimate anchors command
    anchors_parser = subparsers.add_parser("estimate-anchors", help="Cluster segment lengths into anchors")
    anchors_parser.add_argument("--annotations", required=True, help="Training annotation file")
    anchors_parser.add_argument("--modality", choices=MODALITIES, default="audio", help="Modality of the anchors")
    anchors_parser.add_argument("--count", type=int, required=True, help="Number of anchors")
    anchors_parser.add_argument("--heads", type=int, default=10, help="Number of proposal heads (kernel sizes)")
    anchors_parser.add_argument("--cell-seconds", type=float, help="Grid cell duration of the modality")
    anchors_parser.add_argument("--seed", type=int, default=0, help="Clustering seed")
    anchors_parser.add_argument("--out", help="Write the anchors and kernel sizes as JSON")

    # Training commands
    captioner_parser = subparsers.add_parser("train-captioner", help="Train the captioning module")
    captioner_parser.add_argument("--config", required=True, help="Configuration file")
    captioner_parser.add_argument("--encoder-checkpoint", help="Proposal checkpoint whose encoder is reused")
    captioner_parser.add_argument("--out", help="Checkpoint path (default: <output_dir>/captioner.ckpt)")

    proposals_parser = subparsers.add_parser("train-proposals", help="Train the proposal generator")
    proposals_parser.add_argument("--config", required=True, help="Configuration file")
    proposals_parser.add_argument("--encoder-checkpoint", help="Captioner checkpoint whose encoder is reused")
    proposals_parser.add_argument("--freeze-encoder", action="store_true",
                                  help="Keep the reused encoder fixed (the cap_then_prop procedure)")
    proposals_parser.add_argument("--out", help="Checkpoint path (default: <output_dir>/proposals.ckpt)")

    # Inference commands
    propose_parser = subparsers.add_parser("propose", help="Generate proposals for every video")
    propose_parser.add_argument("--checkpoint", required=True, help="Proposal generator checkpoint")
    propose_parser.add_argument("--features-dir", required=True, help="Directory with audio/ and visual/ features")
    propose_parser.add_argument("--top-k", type=int, help="Proposals per video (default: from the checkpoint)")
    propose_parser.add_argument("--out", required=True, help="Proposal file")

    caption_parser = subparsers.add_parser("caption", help="Caption proposals or ground-truth segments")
    caption_parser.add_argument("--checkpoint", required=True, help="Captioner checkpoint")
    caption_parser.add_argument("--features-dir", required=True, help="Directory with audio/ and visual/ features")
    source = caption_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--proposals", help="Proposal file to caption")
    source.add_argument("--gt", help="Annotation file whose segments are captioned")
    caption_parser.add_argument("--max-len", type=int, help="Maximum caption length")
    caption_parser.add_argument("--out", required=True, help="Captioned prediction file")

    # Evaluate command
    evaluate_parser = subparsers.add_parser("evaluate", help="Score predictions against ground truth")
    evaluate_parser.add_argument("--predictions", required=True, help="Prediction file")
    evaluate_parser.add_argument("--ground-truth", required=True, help="Annotation file")
    evaluate_parser.add_argument("--tious", type=float, nargs="+", default=list(DEFAULT_THRESHOLDS),
                                 help="tIoU thresholds")
    evaluate_parser.add_argument("--top-k", type=int, help="Only score the most confident predictions per video")
    evaluate_parser.add_argument("--bleu", action="store_true", help="Also score captions with BLEU")
    evaluate_parser.add_argument("--bleu-orders", type=int, nargs="+",
                                 default=list(Config.DEFAULT_CONFIG["evaluation"]["bleu_orders"]),
                                 help="BLEU n-gram orders to report (default: 3 4)")
    evaluate_parser.add_argument("--best-prefix", action="store_true",
                                 help="Use the best precision over confidence-ranked prefixes")
    evaluate_parser.add_argument("--out", help="Write the report as JSON")

    # Synthetic data command
    synth_parser = subparsers.add_parser("synth-data", help="Generate a synthetic dataset")
    synth_parser.add_argument("--spec", help="JSON file of synthetic dataset parameters")
    synth_parser.add_argument("--config", help="Configuration file whose 'synthetic' section is used")
    synth_parser.add_argument("--out", required=True, help="Output directory")

    # Ablation command
    ablation_parser = subparsers.add_parser("ablation", help="Compare training procedures and modalities")
    ablation_parser.add_argument("--config", required=True, help="Configuration file")
    ablation_parser.add_argument("--out", required=True, help="Report file (JSON)")

    return parser


def load_config(path: str) -> Config:
    config = Config(path)
    config.check()
    return config


def default_output(config: Config, given: Optional[str], name: str) -> Path:
    return Path(given) if given else Path(config.get("data.output_dir")) / name


def cmd_estimate_anchors(args, view: ReportView, file_service: FileService) -> None:
    lengths = [length for length in load_annotations(args.annotations).segment_lengths() if length > 0]
    cell = args.cell_seconds or (AUDIO_CELL_SECONDS if args.modality == "audio" else VISUAL_CELL_SECONDS)
    anchors = estimate_anchors(lengths, args.count, cell, args.seed, args.modality)
    kernel_sizes = estimate_kernel_sizes(lengths, args.heads, cell, args.seed)
    view.show_anchors(anchors, kernel_sizes)
    if args.out:
        file_service.write_json_atomic(args.out, {"anchors": anchors.to_json(), "kernel_sizes": kernel_sizes})


def cmd_train_captioner(args, view: ReportView, file_service: FileService) -> None:
    config = load_config(args.config)
    if args.encoder_checkpoint is None and config.get("training.procedure") == "prop_then_cap":
        raise UsageError("prop_then_cap needs --encoder-checkpoint pointing at a trained proposal generator")
    data = load_training_data(config)
    vocab = vocabulary_for(config, data.train)
    encoder_params = load_encoder_state(args.encoder_checkpoint) if args.encoder_checkpoint else None
    model, result = run_caption_stage(config, data, vocab, encoder_params)

    checkpoint = default_output(config, args.out, "captioner.ckpt")
    save_captioner(checkpoint, model, vocab, config, result)
    file_service.write_text_atomic(f"{checkpoint}.vocab.tsv", vocab.dumps())
    write_history(f"{checkpoint}.history.jsonl", result.history)
    config.echo(checkpoint)
    view.show_training("captioner", result, str(checkpoint))


def cmd_train_proposals(args, view: ReportView, file_service: FileService) -> None:
    config = load_config(args.config)
    if args.freeze_encoder:
        config.set("training.procedure", "cap_then_prop")
    if args.encoder_checkpoint is None and config.get("training.procedure") == "cap_then_prop":
        raise UsageError("cap_then_prop needs --encoder-checkpoint pointing at a trained captioner")
    data = load_training_data(config)
    encoder_params = load_encoder_state(args.encoder_checkpoint) if args.encoder_checkpoint else None
    generator, kernel_sizes, result = run_proposal_stage(config, data, encoder_params)

    checkpoint = default_output(config, args.out, "proposals.ckpt")
    save_proposal_generator(checkpoint, generator, config, kernel_sizes, result)
    write_history(f"{checkpoint}.history.jsonl", result.history)
    config.echo(checkpoint)
    view.show_training("proposals", result, str(checkpoint))


def _features(features_dir: str, config: Config, file_service: FileService, video_ids: Optional[List[str]] = None):
    available = file_service.list_videos(features_dir)
    if video_ids is not None:
        wanted = set(video_ids)
        available = [video_id for video_id in available if video_id in wanted]
    if not available:
        raise UsageError(f"no videos with both audio and visual features in '{features_dir}'")
    return load_video_features(features_dir, available, config.get("model.d_a"), config.get("model.d_v"),
                               config.get("training.workers"))


def cmd_propose(args, view: ReportView, file_service: FileService) -> None:
    generator, config = load_proposal_generator(args.checkpoint)
    top_k = args.top_k or config.get("proposals.top_k")
    proposals = propose_videos(generator, _features(args.features_dir, config, file_service), top_k)
    file_service.write_json_atomic(args.out, predictions_to_json(proposals))
    config.echo(args.out)
    view.show_written({"proposals": args.out})


def cmd_caption(args, view: ReportView, file_service: FileService) -> None:
    model, vocab, config = load_captioner(args.checkpoint)
    if args.gt:
        segments = segments_from_ground_truth(load_annotations(args.gt))
    else:
        segments = load_predictions(args.proposals)
    features = _features(args.features_dir, config, file_service, list(segments))
    max_len = args.max_len or config.get("model.max_caption_len")
    captions = caption_videos(model, vocab, features, segments, max_len)
    file_service.write_json_atomic(args.out, predictions_to_json(captions))
    config.echo(args.out)
    view.show_written({"captions": args.out})


def cmd_evaluate(args, view: ReportView, file_service: FileService) -> None:
    predictions = load_predictions(args.predictions)
    ground_truth = load_annotations(args.ground_truth)
    report = proposal_prf(predictions, ground_truth, args.tious, args.best_prefix, args.top_k)
    if args.bleu:
        if any(n < 1 for n in args.bleu_orders):
            raise ConfigurationError(f"BLEU orders must be positive, got {args.bleu_orders}")
        report.bleu = dense_caption_bleu(predictions, ground_truth, args.tious, args.bleu_orders)
        report.notes.append("BLEU per video over captioned predictions, averaged over videos, then thresholds")
    view.show_eval_report(report)
    if args.out:
        file_service.write_json_atomic(args.out, report.to_json())


def cmd_synth_data(args, view: ReportView, file_service: FileService) -> None:
    if args.spec and args.config:
        raise UsageError("pass either --spec or --config, not both")
    if args.spec:
        spec = SynthSpec.from_dict(file_service.read_json(args.spec))
    elif args.config:
        spec = Config(args.config).synth_spec()
    else:
        spec = SynthSpec()
    dataset = synth_dataset(spec)
    accuracy = probe_accuracy(dataset)
    if accuracy < PROBE_TARGET:
        logger.warning("Linear probe separates event cells with %.3f accuracy, below %.2f", accuracy, PROBE_TARGET)
    else:
        logger.info("Linear probe accuracy %.3f", accuracy)
    paths = write_dataset(dataset, args.out, file_service)
    view.show_written({name: str(path) for name, path in paths.items()})


def cmd_ablation(args, view: ReportView, file_service: FileService) -> None:
    config = load_config(args.config)
    cells = run_ablation(config, load_training_data(config))
    file_service.write_json_atomic(args.out, ablation_to_json(cells, config))
    config.echo(args.out)
    view.show_ablation(cells)


COMMANDS = {
    "estimate-anchors": cmd_estimate_anchors,
    "train-captioner": cmd_train_captioner,
    "train-proposals": cmd_train_proposals,
    "propose": cmd_propose,
    "caption": cmd_caption,
    "evaluate": cmd_evaluate,
    "synth-data": cmd_synth_data,
    "ablation": cmd_ablation,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    parser = setup_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return UsageError.exit_code

    configure_logging(args.log_level, args.log_file)
    try:
        COMMANDS[args.command](args, ReportView(), FileService())
    except CaptionerError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
