"""
Targets - Assignment of ground-truth segments to head cells and anchors

A segment is assigned to the grid cell containing its center and to the
anchor with the smallest |ln(length / anchor)|. Targets invert the decode
rule: the center offset within the cell and the log length ratio.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Set, Tuple

import numpy as np

from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.errors import ContractError
from bimodal_captioner.model.proposal_generator import AnchorSet
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)

_TIE_EPS = 1e-12


@dataclass
class TargetAssignment:
    """Per (position, anchor) training targets of one modality."""

    objectness: np.ndarray
    center_target: np.ndarray
    length_target: np.ndarray
    valid: np.ndarray
    collisions: int = 0

    @property
    def positives(self) -> Set[Tuple[int, int]]:
        return {(int(p), int(a)) for p, a in zip(*np.nonzero(self.objectness > 0))}


def closest_anchor(length_cells: float, anchors: Sequence[float]) -> int:
    """Index of the anchor minimising |ln(length/anchor)|; ties go to the smaller anchor."""
    ratios = np.abs(np.log(length_cells / np.asarray(anchors, dtype=np.float64)))
    return int(np.flatnonzero(ratios <= ratios.min() + _TIE_EPS)[0])


def assign_targets(gt: Sequence[EventSegment], anchors: AnchorSet, T: int,
                   cell_seconds: Optional[float] = None, valid_length: Optional[int] = None) -> TargetAssignment:
    """
    Build the objectness and localization targets of one modality.

    Args:
        gt: Ground-truth segments of the video
        anchors: Anchor set of the modality
        T: Number of (possibly padded) grid positions
        cell_seconds: Cell duration; the anchor set's when omitted
        valid_length: Number of real positions; all T when omitted

    Returns:
        The target assignment
    """
    cell = anchors.cell_seconds if cell_seconds is None else cell_seconds
    valid_length = T if valid_length is None else valid_length
    if T < 1 or not 1 <= valid_length <= T:
        raise ContractError(f"invalid grid: T={T}, valid_length={valid_length}")

    shape = (T, len(anchors))
    objectness = np.zeros(shape)
    center_target = np.zeros(shape)
    length_target = np.zeros(shape)
    valid = np.zeros(shape, dtype=bool)
    valid[:valid_length] = True
    owner_length = np.zeros(shape)

    collisions = 0
    for segment in gt:
        center_cells = segment.center / cell
        length_cells = segment.length / cell
        p = int(np.clip(np.floor(center_cells), 0, valid_length - 1))
        a = closest_anchor(length_cells, anchors.anchors)
        if objectness[p, a] > 0:
            collisions += 1
            logger.warning(
                "Segments collide at position %d, anchor %d; keeping the longer one (%.2fs vs %.2fs)",
                p, a, owner_length[p, a] * cell, length_cells * cell,
            )
            if length_cells <= owner_length[p, a]:
                continue
        objectness[p, a] = 1.0
        owner_length[p, a] = length_cells
        center_target[p, a] = float(np.clip(center_cells - p, 0.0, 1.0))
        length_target[p, a] = float(np.log(length_cells / anchors.anchors[a]))
    return TargetAssignment(objectness, center_target, length_target, valid, collisions)
