"""
Ablation - Training-procedure and input-modality comparison grid

Every cell trains both modules under one procedure and one modality, then
scores captions of ground-truth segments, captions of learned proposals and
the proposals themselves on the validation videos.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.evaluation.metrics import dense_caption_bleu, proposal_prf
from bimodal_captioner.model.encoder import MODALITY_CHOICES
from bimodal_captioner.pipeline import caption_videos, encoder_state, propose_videos, segments_from_ground_truth
from bimodal_captioner.training.trainer import PROCEDURES
from bimodal_captioner.utils.config import Config
from bimodal_captioner.utils.logger import get_logger
from bimodal_captioner.workflow import TrainingData, run_caption_stage, run_proposal_stage, vocabulary_for

logger = get_logger(__name__)

# Report order: procedures as compared in the ablation, modalities audio, visual, both
ABLATION_PROCEDURES = ("separate", "prop_then_cap", "cap_then_prop")
ABLATION_MODALITIES = ("audio", "visual", "bimodal")


@dataclass
class AblationCell:
    procedure: str
    modality: str
    gt_bleu: Dict[str, float]
    learned_bleu: Dict[str, float]
    precision: float
    recall: float
    f1: float

    def to_json(self) -> Dict:
        return asdict(self)


def run_cell(config: Config, data: TrainingData, procedure: str, modality: str) -> AblationCell:
    """
    Train and score one procedure/modality combination.

    Args:
        config: Base configuration
        data: Training and validation data
        procedure: One of the training procedures
        modality: Input modality of both modules

    Returns:
        The scores of the cell
    """
    if procedure not in PROCEDURES or modality not in MODALITY_CHOICES:
        raise ConfigurationError(f"unknown ablation cell {procedure}/{modality}")
    cell_config = Config.from_dict(config.to_json())
    cell_config.set("model.modality", modality)
    cell_config.set("training.procedure", procedure)
    logger.info("Ablation cell %s / %s", procedure, modality)

    vocab = vocabulary_for(cell_config, data.train)
    if procedure == "prop_then_cap":
        generator, _, _ = run_proposal_stage(cell_config, data)
        captioner, _ = run_caption_stage(cell_config, data, vocab, encoder_state(generator.state_dict()))
    elif procedure == "cap_then_prop":
        captioner, _ = run_caption_stage(cell_config, data, vocab)
        generator, _, _ = run_proposal_stage(cell_config, data, encoder_state(captioner.state_dict()))
    else:
        captioner, _ = run_caption_stage(cell_config, data, vocab)
        generator, _, _ = run_proposal_stage(cell_config, data)

    thresholds = cell_config.get("evaluation.thresholds")
    orders = cell_config.get("evaluation.bleu_orders")
    max_len = cell_config.get("model.max_caption_len")
    val_features = {video.video_id: data.features[video.video_id] for video in data.val
                    if video.video_id in data.features}

    gt_captions = caption_videos(captioner, vocab, val_features, segments_from_ground_truth(data.val), max_len)
    gt_bleu = dense_caption_bleu(gt_captions, data.val, thresholds, orders)

    proposals = propose_videos(generator, val_features, cell_config.get("proposals.top_k"))
    report = proposal_prf(proposals, data.val, thresholds, cell_config.get("evaluation.best_prefix"))
    learned_captions = caption_videos(captioner, vocab, val_features, proposals, max_len)
    learned_bleu = dense_caption_bleu(learned_captions, data.val, thresholds, orders)

    return AblationCell(procedure, modality, gt_bleu, learned_bleu, report.precision, report.recall, report.f1)


def run_ablation(config: Config, data: TrainingData, procedures: Sequence[str] = ABLATION_PROCEDURES,
                 modalities: Sequence[str] = ABLATION_MODALITIES) -> List[AblationCell]:
    """Every procedure × modality cell, in report order."""
    return [run_cell(config, data, procedure, modality) for procedure in procedures for modality in modalities]


def ablation_to_json(cells: Sequence[AblationCell], config: Optional[Config] = None) -> Dict:
    result = {"cells": [cell.to_json() for cell in cells]}
    if config is not None:
        result["thresholds"] = list(config.get("evaluation.thresholds"))
    return result
