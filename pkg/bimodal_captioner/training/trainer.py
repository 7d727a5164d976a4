"""
Trainer - Caption-module and proposal-generator training loops

Both loops shuffle with a seeded generator, average the per-item losses of a
batch, take one Adam step per batch and keep the parameters of the best
validation epoch. Stopping happens after ``patience`` epochs without
improvement, after the epoch limit, or after ``max_steps`` optimizer steps.
"""

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.module import Module
from bimodal_captioner.core.tensor import Tensor, backward, no_grad
from bimodal_captioner.data.batching import Batch, CaptionItem, ProposalItem, iterate_batches, make_batch
from bimodal_captioner.errors import ConfigurationError, ContractError, DataError, NumericError
from bimodal_captioner.evaluation.metrics import DEFAULT_THRESHOLDS, proposal_prf, validate_thresholds
from bimodal_captioner.model.captioner import BiModalTransformer
from bimodal_captioner.model.proposal_generator import MultiHeadedProposalGenerator
from bimodal_captioner.pipeline import propose_segments
from bimodal_captioner.training.losses import LossCoefficients, caption_loss, proposal_loss
from bimodal_captioner.training.optimizer import Adam
from bimodal_captioner.training.targets import assign_targets
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

PROCEDURES = ("cap_then_prop", "prop_then_cap", "separate")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of both training stages."""

    procedure: str = "cap_then_prop"
    label_smoothing: float = 0.7
    learning_rate: float = 5e-5
    caption_batch_size: int = 32
    proposal_batch_size: int = 16
    loc_coeff: float = 1.0
    obj_coeff: float = 1.0
    noobj_coeff: float = 100.0
    caption_max_epochs: int = 100
    proposal_max_epochs: int = 70
    patience: int = 30
    max_steps: Optional[int] = None
    seed: int = 0
    top_k: int = 100
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    best_prefix: bool = False

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ConfigurationError(f"procedure must be one of {PROCEDURES}, got '{self.procedure}'")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError(f"label smoothing must lie in [0, 1), got {self.label_smoothing}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if min(self.caption_batch_size, self.proposal_batch_size, self.caption_max_epochs,
               self.proposal_max_epochs, self.patience, self.top_k) < 1:
            raise ConfigurationError("batch sizes, epoch limits, patience and top_k must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive when set")
        validate_thresholds(self.thresholds)
        LossCoefficients(self.loc_coeff, self.obj_coeff, self.noobj_coeff)

    @property
    def coefficients(self) -> LossCoefficients:
        return LossCoefficients(self.loc_coeff, self.obj_coeff, self.noobj_coeff)

    @property
    def freeze_for_proposals(self) -> bool:
        return self.procedure == "cap_then_prop"

    @property
    def freeze_for_captioning(self) -> bool:
        return self.procedure == "prop_then_cap"

    def to_dict(self) -> Dict:
        values = asdict(self)
        values["thresholds"] = list(self.thresholds)
        return values


@dataclass
class EpochRecord:
    """One line of the training history."""

    stage: str
    epoch: int
    step: int
    train_loss: float
    val_loss: Optional[float] = None
    val_f1: Optional[float] = None
    breakdown: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    state: "OrderedDict[str, np.ndarray]"
    history: List[EpochRecord]
    best_epoch: int
    best_score: float
    steps: int


def _check_finite(value: float, stage: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise NumericError(f"{stage} loss became {value} at epoch {epoch}, step {step}")


def _assert_unchanged(encoder: Module, snapshot: Dict[str, np.ndarray]) -> None:
    for path, value in encoder.state_dict().items():
        if not np.array_equal(value, snapshot[path]):
            raise ContractError(f"frozen encoder parameter '{path}' changed during training")


class _Loop:
    """Shared epoch bookkeeping of the two trainers."""

    stage = ""

    def __init__(self, model: Module, cfg: TrainConfig, freeze_encoder: bool):
        self.model = model
        self.cfg = cfg
        self.freeze_encoder = freeze_encoder
        if freeze_encoder:
            model.encoder.set_trainable(False)
        self.optimizer = Adam(model.parameters(), cfg.learning_rate)
        self.rng = np.random.default_rng(cfg.seed)
        self.steps = 0
        self.history: List[EpochRecord] = []

    def _train_mode(self) -> None:
        self.model.train()
        if self.freeze_encoder:
            self.model.encoder.eval()

    def _batch_loss(self, batch: Batch, epoch: int, breakdown: Dict[str, float]) -> float:
        raise NotImplementedError

    def _run_epoch(self, items: Sequence, batch_size: int, epoch: int) -> Tuple[float, Dict[str, float]]:
        self._train_mode()
        losses, breakdown = [], {}
        for chunk in iterate_batches(items, batch_size, self.rng):
            batch = self._make_batch(chunk)
            self.optimizer.zero_grad()
            losses.append(self._batch_loss(batch, epoch, breakdown))
            self.optimizer.step()
            self.steps += 1
            if self.step_limit_reached:
                break
        return math.fsum(losses) / len(losses), breakdown

    def _make_batch(self, chunk: List) -> Batch:
        raise NotImplementedError

    @property
    def step_limit_reached(self) -> bool:
        return self.cfg.max_steps is not None and self.steps >= self.cfg.max_steps


class CaptionTrainer(_Loop):
    """Trains the captioning module with teacher forcing on ground-truth segments."""

    stage = "captioner"

    def __init__(self, model: BiModalTransformer, cfg: TrainConfig, pad_id: int = 1,
                 freeze_encoder: bool = False):
        """
        Initialize the caption trainer.

        Args:
            model: Captioning model
            cfg: Training configuration
            pad_id: Pad token id of the vocabulary
            freeze_encoder: Keep the encoder weights fixed
        """
        super().__init__(model, cfg, freeze_encoder)
        self.pad_id = pad_id

    def _make_batch(self, chunk: List[CaptionItem]) -> Batch:
        return make_batch(chunk, pad_id=self.pad_id)

    def item_loss(self, batch: Batch, row: int) -> Tensor:
        """Label-smoothed loss of one caption: inputs drop the last token, targets drop the first."""
        ids = batch.captions[row]
        mask = batch.caption_masks[row]
        audio, visual = batch.audio[row], batch.visual[row]
        probs = self.model(audio.values, visual.values, ids[:-1], audio.mask, visual.mask, token_mask=mask[:-1])
        return caption_loss(probs, ids[1:], self.cfg.label_smoothing, pad_mask=mask[1:], pad_id=self.pad_id)

    def _batch_loss(self, batch: Batch, epoch: int, breakdown: Dict[str, float]) -> float:
        total = 0.0
        for row in range(len(batch)):
            loss = ops.scale(self.item_loss(batch, row), 1.0 / len(batch))
            value = loss.item()
            _check_finite(value, self.stage, epoch, self.steps)
            backward(loss)
            total += value
        return total

    def validation_loss(self, items: Sequence[CaptionItem]) -> float:
        """Mean per-caption loss with dropout disabled."""
        self.model.eval()
        values = []
        with no_grad():
            for chunk in iterate_batches(items, self.cfg.caption_batch_size):
                batch = self._make_batch(chunk)
                values.extend(self.item_loss(batch, row).item() for row in range(len(batch)))
        return math.fsum(values) / len(values)

    def fit(self, train_items: Sequence[CaptionItem], val_items: Sequence[CaptionItem]) -> TrainResult:
        """
        Train until early stopping and restore the best-validation parameters.

        Args:
            train_items: Training captions
            val_items: Validation captions

        Returns:
            The best parameters and the history
        """
        if not train_items:
            raise DataError("caption training set is empty")
        if not val_items:
            logger.warning("No validation captions; validating on the training set")
            val_items = train_items
        snapshot = self.model.encoder.state_dict() if self.freeze_encoder else None

        best_loss, best_epoch, best_state, since_best = math.inf, 0, self.model.state_dict(), 0
        for epoch in range(1, self.cfg.caption_max_epochs + 1):
            train_loss, _ = self._run_epoch(train_items, self.cfg.caption_batch_size, epoch)
            val_loss = self.validation_loss(val_items)
            _check_finite(val_loss, self.stage, epoch, self.steps)
            self.history.append(EpochRecord(self.stage, epoch, self.steps, train_loss, val_loss=val_loss))
            logger.info("captioner epoch %d step %d: train %.4f val %.4f", epoch, self.steps, train_loss, val_loss)

            if val_loss < best_loss:
                best_loss, best_epoch, best_state, since_best = val_loss, epoch, self.model.state_dict(), 0
            else:
                since_best += 1
            if since_best >= self.cfg.patience:
                logger.info("Validation loss has not improved for %d epochs; stopping", since_best)
                break
            if self.step_limit_reached:
                logger.info("Reached max_steps=%d", self.cfg.max_steps)
                break

        self.model.load_state_dict(best_state)
        if snapshot is not None:
            _assert_unchanged(self.model.encoder, snapshot)
        return TrainResult(best_state, self.history, best_epoch, best_loss, self.steps)


class ProposalTrainer(_Loop):
    """Trains every proposal head of both modalities at once, on whole videos."""

    stage = "proposals"

    def __init__(self, generator: MultiHeadedProposalGenerator, cfg: TrainConfig, freeze_encoder: bool = False,
                 pad_to: Optional[Dict[str, int]] = None):
        """
        Initialize the proposal trainer.

        Args:
            generator: Proposal generator
            cfg: Training configuration
            freeze_encoder: Keep the encoder weights fixed and skip its backward pass
            pad_to: Per-modality pad lengths; each batch's longest video when omitted
        """
        super().__init__(generator, cfg, freeze_encoder)
        self.pad_to = pad_to

    def _make_batch(self, chunk: List[ProposalItem]) -> Batch:
        return make_batch(chunk, pad_to=self.pad_to)

    def item_loss(self, batch: Batch, row: int, breakdown: Optional[Dict[str, float]] = None) -> Tensor:
        audio, visual = batch.audio[row], batch.visual[row]
        enc, outputs = self.model(audio.values, visual.values, audio.mask, visual.mask,
                                  encoder_grad=not self.freeze_encoder)
        streams = {"audio": audio, "visual": visual}
        assignments = {
            modality: assign_targets(batch.segments[row], self.model.anchor_sets[modality],
                                     T=streams[modality].values.shape[0],
                                     valid_length=streams[modality].length)
            for modality in outputs
        }
        return proposal_loss(outputs, assignments, self.cfg.coefficients, breakdown)

    def _batch_loss(self, batch: Batch, epoch: int, breakdown: Dict[str, float]) -> float:
        total = 0.0
        for row in range(len(batch)):
            terms: Dict[str, float] = {}
            loss = ops.scale(self.item_loss(batch, row, terms), 1.0 / len(batch))
            value = loss.item()
            _check_finite(value, self.stage, epoch, self.steps)
            backward(loss)
            total += value
            for name, term in terms.items():
                breakdown[name] = breakdown.get(name, 0.0) + term
        return total

    def validation_f1(self, items: Sequence[ProposalItem]) -> float:
        """F1 of the top-k proposals of every validation video."""
        predictions = {
            item.video_id: propose_segments(self.model, item.audio, item.visual, self.cfg.top_k)
            for item in items
        }
        ground_truth = {item.video_id: item.segments for item in items}
        report = proposal_prf(predictions, ground_truth, self.cfg.thresholds, self.cfg.best_prefix, self.cfg.top_k)
        return report.f1

    def fit(self, train_items: Sequence[ProposalItem], val_items: Sequence[ProposalItem]) -> TrainResult:
        """
        Train until early stopping and restore the best-F1 parameters.

        Args:
            train_items: Training videos
            val_items: Validation videos

        Returns:
            The best parameters and the history
        """
        if not train_items:
            raise DataError("proposal training set is empty")
        if not val_items:
            logger.warning("No validation videos; validating on the training set")
            val_items = train_items
        snapshot = self.model.encoder.state_dict() if self.freeze_encoder else None

        best_f1, best_epoch, best_state, since_best = -1.0, 0, self.model.state_dict(), 0
        for epoch in range(1, self.cfg.proposal_max_epochs + 1):
            train_loss, breakdown = self._run_epoch(train_items, self.cfg.proposal_batch_size, epoch)
            val_f1 = self.validation_f1(val_items)
            self.history.append(EpochRecord(self.stage, epoch, self.steps, train_loss, val_f1=val_f1,
                                            breakdown=breakdown))
            logger.info("proposals epoch %d step %d: train %.4f (loc %.3f obj %.3f noobj %.3f) val F1 %.4f",
                        epoch, self.steps, train_loss, breakdown.get("loc", 0.0), breakdown.get("obj", 0.0),
                        breakdown.get("noobj", 0.0), val_f1)

            if val_f1 > best_f1:
                best_f1, best_epoch, best_state, since_best = val_f1, epoch, self.model.state_dict(), 0
            else:
                since_best += 1
            if since_best >= self.cfg.patience:
                logger.info("Validation F1 has not improved for %d epochs; stopping", since_best)
                break
            if self.step_limit_reached:
                logger.info("Reached max_steps=%d", self.cfg.max_steps)
                break

        self.model.load_state_dict(best_state)
        if snapshot is not None:
            _assert_unchanged(self.model.encoder, snapshot)
        return TrainResult(best_state, self.history, best_epoch, best_f1, self.steps)


def train_captioner(model: BiModalTransformer, train_items: Sequence[CaptionItem], val_items: Sequence[CaptionItem],
                    cfg: TrainConfig, pad_id: int = 1,
                    encoder_state: Optional[Dict[str, np.ndarray]] = None) -> TrainResult:
    """
    Train the captioning module.

    In ``prop_then_cap`` the encoder comes from the trained proposal generator
    and stays frozen.

    Args:
        model: Captioning model
        train_items: Training captions
        val_items: Validation captions
        cfg: Training configuration
        pad_id: Pad token id
        encoder_state: Pre-trained encoder parameters

    Returns:
        The best parameters and the history
    """
    if cfg.freeze_for_captioning and encoder_state is None:
        raise ConfigurationError("prop_then_cap needs the encoder of a trained proposal generator")
    if encoder_state is not None:
        model.encoder.load_state_dict(encoder_state)
    trainer = CaptionTrainer(model, cfg, pad_id, freeze_encoder=cfg.freeze_for_captioning)
    return trainer.fit(train_items, val_items)


def train_proposal_generator(generator: MultiHeadedProposalGenerator, train_items: Sequence[ProposalItem],
                             val_items: Sequence[ProposalItem], cfg: TrainConfig,
                             encoder_state: Optional[Dict[str, np.ndarray]] = None,
                             pad_to: Optional[Dict[str, int]] = None) -> TrainResult:
    """
    Train the proposal generator.

    In ``cap_then_prop`` the encoder comes from the trained captioning module
    and stays frozen; its weights are checked to be bit-identical afterwards.

    Args:
        generator: Proposal generator
        train_items: Training videos
        val_items: Validation videos
        cfg: Training configuration
        encoder_state: Pre-trained encoder parameters
        pad_to: Per-modality pad lengths

    Returns:
        The best parameters and the history
    """
    if cfg.freeze_for_proposals and encoder_state is None:
        raise ConfigurationError("cap_then_prop needs the encoder checkpoint of a trained captioner")
    if encoder_state is not None:
        generator.encoder.load_state_dict(encoder_state)
    trainer = ProposalTrainer(generator, cfg, freeze_encoder=cfg.freeze_for_proposals, pad_to=pad_to)
    return trainer.fit(train_items, val_items)
