"""
Workflow - Building, training, saving and restoring models from a configuration
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from bimodal_captioner.data.annotations import AnnotationSet, load_annotations
from bimodal_captioner.data.embeddings import load_glove_matrix
from bimodal_captioner.data.vocabulary import Vocabulary, build_vocab
from bimodal_captioner.errors import ConfigurationError, DataError
from bimodal_captioner.model.anchors import estimate_anchors, estimate_kernel_sizes
from bimodal_captioner.model.captioner import BiModalTransformer
from bimodal_captioner.model.proposal_generator import AnchorSet, MultiHeadedProposalGenerator
from bimodal_captioner.pipeline import VideoFeatures, encoder_state
from bimodal_captioner.services.checkpoint_service import CheckpointService
from bimodal_captioner.services.file_service import FileService
from bimodal_captioner.training.datasets import build_caption_items, build_proposal_items, load_video_features
from bimodal_captioner.training.trainer import EpochRecord, TrainResult, train_captioner, train_proposal_generator
from bimodal_captioner.utils.config import Config
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


@dataclass
class TrainingData:
    train: AnnotationSet
    val: AnnotationSet
    features: VideoFeatures


def load_training_data(config: Config) -> TrainingData:
    """
    Load the annotations and features named by the ``data`` section.

    Args:
        config: Resolved configuration

    Returns:
        Training and validation annotations with the features of every video they mention
    """
    train_path = config.get("data.train_annotations")
    features_dir = config.get("data.features_dir")
    if not train_path or not features_dir:
        raise ConfigurationError("data.train_annotations and data.features_dir must be set")
    train = load_annotations(train_path)
    val_path = config.get("data.val_annotations")
    val = load_annotations(val_path) if val_path else train

    available = set(FileService().list_videos(features_dir))
    wanted = sorted({video.video_id for video in train} | {video.video_id for video in val})
    missing = [video_id for video_id in wanted if video_id not in available]
    if missing:
        logger.warning("%d annotated videos have no feature files (e.g. %s)", len(missing), missing[0])
    features = load_video_features(
        features_dir, [video_id for video_id in wanted if video_id in available],
        config.get("model.d_a"), config.get("model.d_v"), config.get("training.workers"),
    )
    logger.info("Loaded %d training and %d validation videos", len(train), len(val))
    return TrainingData(train, val, features)


def vocabulary_for(config: Config, train: AnnotationSet) -> Vocabulary:
    """The vocabulary file of the configuration when present, otherwise one built from the training captions."""
    path = config.get("data.vocab_path")
    if path and Path(path).is_file():
        return Vocabulary.load(path)
    vocab = build_vocab(train.sentences(), config.get("model.vocab_min_count"))
    logger.info("Built a vocabulary of %d tokens", len(vocab))
    return vocab


def build_captioner(config: Config, vocab: Vocabulary, seed: Optional[int] = None) -> BiModalTransformer:
    """Captioning model shaped by ``config``, with optional pre-trained word vectors."""
    rng = np.random.default_rng(config.get("training.seed") if seed is None else seed)
    model = BiModalTransformer(config.encoder_config(), config.decoder_config(len(vocab)), rng)
    embeddings_path = config.get("model.embeddings_path")
    if embeddings_path:
        matrix = load_glove_matrix(embeddings_path, vocab, config.get("model.d_c"))
        model.embedding.load_pretrained(matrix, freeze=config.get("model.freeze_embeddings"))
    return model


def used_modalities(config: Config) -> List[str]:
    modality = config.get("model.modality")
    return ["audio", "visual"] if modality == "bimodal" else [modality]


def estimate_layout(config: Config, train: AnnotationSet) -> Tuple[Dict[str, AnchorSet], Dict[str, List[int]]]:
    """
    Anchors and head kernel sizes of every used modality from the training segment lengths.

    Args:
        config: Resolved configuration
        train: Training annotations

    Returns:
        (anchor set per modality, kernel sizes per modality)
    """
    lengths = [length for length in train.segment_lengths() if length > 0]
    if not lengths:
        raise DataError("training annotations hold no segments to estimate anchors from")
    seed = config.get("proposals.anchor_seed")
    anchor_sets, kernel_sizes = {}, {}
    for modality in used_modalities(config):
        cell = config.cell_seconds(modality)
        anchor_sets[modality] = estimate_anchors(lengths, config.get(f"proposals.{modality}_anchor_count"), cell,
                                                 seed, modality)
        kernel_sizes[modality] = estimate_kernel_sizes(lengths, config.get(f"proposals.{modality}_heads"), cell, seed)
        logger.info("%s anchors (cells): %s; kernel sizes: %s", modality,
                    ", ".join(f"{a:.2f}" for a in anchor_sets[modality].anchors), kernel_sizes[modality])
    return anchor_sets, kernel_sizes


def build_proposal_generator(config: Config, anchor_sets: Dict[str, AnchorSet], kernel_sizes: Dict[str, List[int]],
                             seed: Optional[int] = None) -> MultiHeadedProposalGenerator:
    rng = np.random.default_rng(config.get("training.seed") if seed is None else seed)
    return MultiHeadedProposalGenerator(config.encoder_config(), anchor_sets, kernel_sizes, rng,
                                        config.get("proposals.hidden"), config.get("proposals.dropout"))


def write_history(path: PathLike, history: Sequence[EpochRecord]) -> Path:
    """Write the training history as JSON lines, one epoch per line."""
    lines = "".join(json.dumps(record.to_json(), sort_keys=True) + "\n" for record in history)
    return FileService().write_text_atomic(path, lines)


def save_captioner(path: PathLike, model: BiModalTransformer, vocab: Vocabulary, config: Config,
                   result: Optional[TrainResult] = None) -> Path:
    extra = {"vocabulary": vocab.to_json()}
    if result is not None:
        extra.update(best_epoch=result.best_epoch, best_score=result.best_score, steps=result.steps)
    return CheckpointService().save(path, model.state_dict(), config.to_json(), "captioner", extra)


def load_captioner(path: PathLike) -> Tuple[BiModalTransformer, Vocabulary, Config]:
    """Rebuild a captioning model, its vocabulary and its configuration from a checkpoint."""
    params, header = CheckpointService().load(path)
    if header.get("kind") != "captioner":
        raise DataError(f"'{path}' is a {header.get('kind')} checkpoint, expected a captioner")
    config = Config.from_dict(header["config"])
    vocab = Vocabulary.from_json(header["vocabulary"])
    model = BiModalTransformer(config.encoder_config(), config.decoder_config(len(vocab)),
                               np.random.default_rng(0))
    model.load_state_dict(params)
    return model, vocab, config


def save_proposal_generator(path: PathLike, generator: MultiHeadedProposalGenerator, config: Config,
                            kernel_sizes: Dict[str, List[int]], result: Optional[TrainResult] = None) -> Path:
    extra = {
        "anchors": {modality: anchors.to_json() for modality, anchors in generator.anchor_sets.items()},
        "kernel_sizes": kernel_sizes,
    }
    if result is not None:
        extra.update(best_epoch=result.best_epoch, best_score=result.best_score, steps=result.steps)
    return CheckpointService().save(path, generator.state_dict(), config.to_json(), "proposals", extra)


def load_proposal_generator(path: PathLike) -> Tuple[MultiHeadedProposalGenerator, Config]:
    """Rebuild a proposal generator and its configuration from a checkpoint."""
    params, header = CheckpointService().load(path)
    if header.get("kind") != "proposals":
        raise DataError(f"'{path}' is a {header.get('kind')} checkpoint, expected a proposal generator")
    config = Config.from_dict(header["config"])
    anchor_sets = {modality: AnchorSet.from_json(raw) for modality, raw in header["anchors"].items()}
    generator = build_proposal_generator(config, anchor_sets, header["kernel_sizes"], seed=0)
    generator.load_state_dict(params)
    return generator, config


def load_encoder_state(path: PathLike) -> Dict[str, np.ndarray]:
    """Encoder parameters of a captioner or proposal-generator checkpoint."""
    params, _ = CheckpointService().load(path)
    return encoder_state(params)


def run_caption_stage(config: Config, data: TrainingData, vocab: Vocabulary,
                      encoder_params: Optional[Dict[str, np.ndarray]] = None) -> Tuple[BiModalTransformer, TrainResult]:
    """Build and train the captioning module on ground-truth segments."""
    model = build_captioner(config, vocab)
    train_items = build_caption_items(data.train, data.features, vocab)
    val_items = build_caption_items(data.val, data.features, vocab)
    result = train_captioner(model, train_items, val_items, config.train_config(), vocab.pad_id, encoder_params)
    return model, result


def run_proposal_stage(config: Config, data: TrainingData,
                       encoder_params: Optional[Dict[str, np.ndarray]] = None
                       ) -> Tuple[MultiHeadedProposalGenerator, Dict[str, List[int]], TrainResult]:
    """Estimate anchors, then build and train the proposal generator on whole videos."""
    anchor_sets, kernel_sizes = estimate_layout(config, data.train)
    generator = build_proposal_generator(config, anchor_sets, kernel_sizes)
    train_items = build_proposal_items(data.train, data.features)
    val_items = build_proposal_items(data.val, data.features)
    result = train_proposal_generator(generator, train_items, val_items, config.train_config(), encoder_params,
                                      config.pad_lengths())
    return generator, kernel_sizes, result
