"""
Losses - Label-smoothed KL caption loss and the YOLO-like proposal loss
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from bimodal_captioner.core import ops
from bimodal_captioner.core.tensor import Tensor
from bimodal_captioner.errors import ConfigurationError, ContractError, DimensionError
from bimodal_captioner.training.targets import TargetAssignment


def smoothed_targets(target_ids: Sequence[int], vocab_size: int, gamma: float, pad_id: int) -> np.ndarray:
    """
    Label-smoothed target distributions.

    The true token receives 1-γ; γ is spread uniformly over the other
    non-pad tokens. The pad column is always 0.

    Args:
        target_ids: Target token per position
        vocab_size: Vocabulary size V (pad included)
        gamma: Smoothing mass γ in [0, 1)
        pad_id: Pad token id

    Returns:
        Array of shape t×V
    """
    if not 0.0 <= gamma < 1.0:
        raise ConfigurationError(f"label smoothing must lie in [0, 1), got {gamma}")
    if vocab_size < 3:
        raise ConfigurationError(f"label smoothing needs at least 2 non-pad tokens, vocabulary has {vocab_size}")
    target_ids = np.asarray(target_ids, dtype=np.int64)
    spread = gamma / (vocab_size - 2)
    targets = np.full((target_ids.size, vocab_size), spread)
    targets[:, pad_id] = 0.0
    targets[np.arange(target_ids.size), target_ids] = 1.0 - gamma
    return targets


def caption_loss(pred_dist: Tensor, target_ids: Sequence[int], gamma: float,
                 pad_mask: Optional[np.ndarray] = None, pad_id: int = 1) -> Tensor:
    """
    Mean over real positions of KL(smoothed target || predicted distribution).

    Args:
        pred_dist: Row-stochastic predictions, t×V
        target_ids: Target token per position, length t
        gamma: Label smoothing γ
        pad_mask: True at real target positions; derived from ``pad_id`` when omitted
        pad_id: Pad token id

    Returns:
        Scalar loss tensor
    """
    target_ids = np.asarray(target_ids, dtype=np.int64)
    if pred_dist.ndim != 2 or pred_dist.shape[0] != target_ids.size:
        raise DimensionError(f"predictions {pred_dist.shape} do not match {target_ids.size} targets")
    real = (target_ids != pad_id) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if not real.any():
        raise ContractError("caption loss needs at least one non-pad target")

    targets = smoothed_targets(target_ids, pred_dist.shape[1], gamma, pad_id)
    targets[~real] = 0.0
    # Σ q·log q is constant with respect to the predictions
    positive = targets > 0
    entropy_term = float((targets[positive] * np.log(targets[positive])).sum())
    cross = ops.sum(ops.mul(Tensor(targets), ops.log(pred_dist)))
    return ops.scale(ops.sub(entropy_term, cross), 1.0 / int(real.sum()))


@dataclass(frozen=True)
class LossCoefficients:
    loc: float = 1.0
    obj: float = 1.0
    noobj: float = 100.0

    def __post_init__(self):
        if min(self.loc, self.obj, self.noobj) < 0:
            raise ConfigurationError(f"loss coefficients must be non-negative: {self}")


def _head_terms(raw: Tensor, assignment: TargetAssignment) -> Dict[str, Tensor]:
    if raw.shape != assignment.objectness.shape + (3,):
        raise DimensionError(f"head output {raw.shape} does not match assignment {assignment.objectness.shape}")
    every = slice(None)
    c, l, o = (ops.getitem(raw, (every, every, i)) for i in range(3))

    positive = Tensor(assignment.objectness * assignment.valid)
    negative = Tensor((1.0 - assignment.objectness) * assignment.valid)

    center_error = ops.sub(ops.sigmoid(c), Tensor(assignment.center_target))
    length_error = ops.sub(l, Tensor(assignment.length_target))
    squared = ops.add(ops.mul(center_error, center_error), ops.mul(length_error, length_error))

    # Binary cross-entropy in logit space: softplus(o) - y·o
    softplus_o = ops.softplus(o)
    return {
        "loc": ops.sum(ops.mul(positive, squared)),
        "obj": ops.sum(ops.mul(positive, ops.sub(softplus_o, o))),
        "noobj": ops.sum(ops.mul(negative, softplus_o)),
    }


def proposal_loss(outputs: Dict[str, List[Tensor]], assignments: Dict[str, TargetAssignment],
                  coeffs: LossCoefficients = LossCoefficients(),
                  breakdown: Optional[Dict[str, float]] = None) -> Tensor:
    """
    Localization, objectness and no-objectness losses summed over every head of both modalities.

    Args:
        outputs: Raw T×|Ψ|×3 head outputs per modality
        assignments: Target assignment per modality, shared by its heads
        coeffs: Loss coefficients
        breakdown: Receives the unweighted loc/obj/noobj sums when given

    Returns:
        Scalar loss tensor
    """
    total: Optional[Tensor] = None
    sums = {"loc": 0.0, "obj": 0.0, "noobj": 0.0}
    for modality, head_outputs in outputs.items():
        if modality not in assignments:
            raise ContractError(f"no target assignment for {modality} heads")
        for raw in head_outputs:
            terms = _head_terms(raw, assignments[modality])
            weighted = ops.add(
                ops.add(ops.scale(terms["loc"], coeffs.loc), ops.scale(terms["obj"], coeffs.obj)),
                ops.scale(terms["noobj"], coeffs.noobj),
            )
            total = weighted if total is None else ops.add(total, weighted)
            for name, value in terms.items():
                sums[name] += value.item()
    if total is None:
        raise ContractError("proposal loss needs at least one head output")
    if breakdown is not None:
        breakdown.update(sums)
    return total
