"""
Tests for assigning ground-truth segments to grid cells and anchors
"""

import math

import pytest
from hypothesis import given, settings, strategies as st

from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.errors import ContractError
from bimodal_captioner.model.proposal_generator import AnchorSet, decode_proposal
from bimodal_captioner.training.targets import assign_targets, closest_anchor


class TestClosestAnchor:
    def test_log_ratio_distance(self):
        # 3 is closer to 2 than to 5 in log space (ln 1.5 < ln 1.67)
        assert closest_anchor(3.0, [2.0, 5.0]) == 0

    def test_tie_goes_to_smaller_anchor(self):
        assert closest_anchor(2.0, [1.0, 4.0]) == 0


class TestAssignTargets:
    """Cell and anchor selection, offsets and collisions."""

    def test_center_cell_and_offset(self):
        anchors = AnchorSet("audio", (2.0,), 1.0)
        assignment = assign_targets([EventSegment(2.2, 4.2)], anchors, T=8)
        assert assignment.positives == {(3, 0)}
        assert assignment.center_target[3, 0] == pytest.approx(0.2)
        assert assignment.length_target[3, 0] == pytest.approx(0.0)

    def test_seconds_are_converted_with_the_cell_duration(self):
        anchors = AnchorSet("visual", (1.0, 3.0), 2.56)
        assignment = assign_targets([EventSegment(0.0, 7.68)], anchors, T=10)
        assert assignment.positives == {(1, 1)}
        assert assignment.length_target[1, 1] == pytest.approx(0.0)

    def test_center_beyond_valid_length_is_clipped(self):
        anchors = AnchorSet("audio", (1.0,), 1.0)
        assignment = assign_targets([EventSegment(8.0, 9.0)], anchors, T=10, valid_length=5)
        assert assignment.positives == {(4, 0)}
        assert assignment.center_target[4, 0] == 1.0

    def test_collision_keeps_longer_segment(self):
        anchors = AnchorSet("audio", (2.0,), 1.0)
        short, long = EventSegment(2.6, 4.0), EventSegment(2.0, 5.0)
        assignment = assign_targets([short, long], anchors, T=6)
        assert assignment.collisions == 1
        assert assignment.length_target[3, 0] == pytest.approx(math.log(3.0 / 2.0))

    def test_valid_mask(self):
        assignment = assign_targets([], AnchorSet("audio", (1.0, 2.0), 1.0), T=5, valid_length=3)
        assert assignment.valid[:3].all() and not assignment.valid[3:].any()
        assert assignment.valid.shape == (5, 2)

    def test_invalid_grid(self):
        with pytest.raises(ContractError):
            assign_targets([], AnchorSet("audio", (1.0,), 1.0), T=3, valid_length=4)

    @given(st.floats(0.0, 20.0), st.floats(0.5, 15.0))
    @settings(max_examples=50, deadline=None)
    def test_targets_invert_the_decode_rule(self, start, length):
        anchors = AnchorSet("audio", (1.0, 4.0, 9.0), 0.96)
        segment = EventSegment(start, start + length)
        assignment = assign_targets([segment], anchors, T=64)
        (p, a), = assignment.positives
        c = assignment.center_target[p, a]
        c_logit = math.log(c / (1 - c)) if 0 < c < 1 else (-50.0 if c == 0 else 50.0)
        proposal = decode_proposal([c_logit, assignment.length_target[p, a], 0.0], p, anchors.anchors[a], 0.96)
        assert proposal.center == pytest.approx(segment.center, abs=1e-6)
        assert proposal.length == pytest.approx(length, rel=1e-9)
