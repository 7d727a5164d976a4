"""
Tests for feature sequences and the BMTF file format
"""

import numpy as np
import pytest

from bimodal_captioner.data.annotations import EventSegment
from bimodal_captioner.data.features import (
    HEADER, FeatureSequence, decode_features, encode_features, feature_paths, load_features,
)
from bimodal_captioner.errors import ContractError, DataError, FormatError
from bimodal_captioner.model.proposal_generator import clip_features


@pytest.fixture
def visual(rng):
    # float32-representable values survive the round trip exactly
    return FeatureSequence("visual", rng.normal(size=(5, 3)).astype(np.float32), 2.56)


class TestFeatureSequence:
    def test_duration(self, visual):
        assert visual.length == 5 and visual.dim == 3
        assert visual.duration == pytest.approx(12.8)

    def test_rejects_bad_inputs(self):
        with pytest.raises(DataError):
            FeatureSequence("text", np.zeros((2, 2)), 1.0)
        with pytest.raises(ContractError):
            FeatureSequence("audio", np.zeros((0, 2)), 1.0)
        with pytest.raises(DataError):
            FeatureSequence("audio", np.zeros((2, 2)), 0.0)


class TestBMTF:
    """Binary layout: 20-byte header followed by float32 rows."""

    def test_round_trip(self, visual):
        payload = encode_features(visual)
        assert len(payload) == HEADER.size + 4 * 15
        assert payload[:4] == b"BMTF"
        decoded = decode_features(payload)
        assert decoded.modality == "visual"
        assert decoded.cell_seconds == 2.56
        np.testing.assert_array_equal(decoded.matrix, visual.matrix)

    def test_decoded_features_clip_like_in_memory_ones(self):
        audio = FeatureSequence("audio", np.zeros((10, 4)), 0.96)
        decoded = decode_features(encode_features(audio))
        assert decoded.cell_seconds == 0.96
        segment = EventSegment(0.0, 0.96)
        assert clip_features(decoded, None, segment)[0].length == clip_features(audio, None, segment)[0].length == 1

    def test_bad_magic(self, visual):
        payload = b"XXXX" + encode_features(visual)[4:]
        with pytest.raises(FormatError) as info:
            decode_features(payload)
        assert info.value.offset == 0

    def test_truncated_payload(self, visual):
        payload = encode_features(visual)[:-4]
        with pytest.raises(FormatError) as info:
            decode_features(payload)
        assert info.value.offset == len(payload)

    def test_short_header(self):
        with pytest.raises(FormatError):
            decode_features(b"BMTF\x01")

    def test_unknown_modality_code(self, visual):
        payload = bytearray(encode_features(visual))
        payload[5] = 7
        with pytest.raises(FormatError):
            decode_features(bytes(payload))

    def test_expected_width(self, visual):
        with pytest.raises(FormatError):
            decode_features(encode_features(visual), expected_dim=4)

    def test_load_from_disk(self, visual, tmp_path):
        path = tmp_path / "clip.bmtf"
        path.write_bytes(encode_features(visual))
        np.testing.assert_array_equal(load_features(path, expected_dim=3).matrix, visual.matrix)

    def test_load_error_names_the_file(self, tmp_path):
        path = tmp_path / "broken.bmtf"
        path.write_bytes(b"nonsense-that-is-long-enough")
        with pytest.raises(FormatError, match="broken.bmtf") as info:
            load_features(path)
        assert info.value.offset == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_features(tmp_path / "absent.bmtf")


def test_feature_paths(tmp_path):
    audio, visual = feature_paths(tmp_path, "v_abc")
    assert audio == tmp_path / "audio" / "v_abc.bmtf"
    assert visual == tmp_path / "visual" / "v_abc.bmtf"
