"""
Tests for the synthetic dataset with planted audio-visual events
"""

import numpy as np
import pytest

from bimodal_captioner.data.annotations import load_annotations
from bimodal_captioner.data.features import load_features
from bimodal_captioner.data.synthetic import (
    PROBE_TARGET, SynthSpec, caption_for, probe_accuracy, synth_dataset, unit_seconds, write_dataset,
)
from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.services.file_service import FileService


def test_unit_is_the_common_multiple_of_both_cells():
    unit, audio_cells, visual_cells = unit_seconds(0.96, 2.56)
    assert unit == pytest.approx(7.68)
    assert (audio_cells, visual_cells) == (8, 3)


class TestSynthDataset:
    def test_shapes(self, synth):
        audio, visual = synth.features["synth_0000"]
        assert audio.matrix.shape == (80, 16)
        assert visual.matrix.shape == (30, 24)
        assert synth.annotations["synth_0000"].duration == pytest.approx(76.8)

    def test_events_are_whole_units_with_template_captions(self, synth):
        for video in synth.annotations:
            assert 1 <= len(video.segments) <= 3
            for segment in video.segments:
                units = segment.length / 7.68
                assert units == pytest.approx(round(units)) and 1 <= round(units) <= 3
                assert segment.sentence.startswith("a ") and " while a " in segment.sentence

    def test_same_seed_same_data(self):
        first = synth_dataset(SynthSpec(num_videos=2, seed=9))
        second = synth_dataset(SynthSpec(num_videos=2, seed=9))
        np.testing.assert_array_equal(first.features["synth_0001"][1].matrix,
                                      second.features["synth_0001"][1].matrix)
        assert first.annotations.to_json_dict() == second.annotations.to_json_dict()

    def test_events_are_linearly_detectable(self, synth):
        assert probe_accuracy(synth) >= PROBE_TARGET

    def test_split_holds_out_last_videos(self):
        dataset = synth_dataset(SynthSpec(num_videos=4, num_val_videos=1))
        train, val = dataset.split()
        assert len(train) == 3 and [video.video_id for video in val] == ["synth_0003"]

    @pytest.mark.parametrize("changes", [
        {"num_videos": 0},
        {"num_val_videos": 5, "num_videos": 5},
        {"units_per_video": 4},
        {"noise": -0.1},
        {"vocab_size": 10},
    ])
    def test_invalid_spec(self, changes):
        with pytest.raises(ConfigurationError):
            SynthSpec(**changes)

    def test_unknown_spec_key(self):
        with pytest.raises(ConfigurationError):
            SynthSpec.from_dict({"videos": 3})

    def test_caption_template(self):
        assert caption_for(0, 0).split()[0] == "a"


def test_write_dataset(tmp_path):
    dataset = synth_dataset(SynthSpec(num_videos=3, num_val_videos=1, seed=1))
    paths = write_dataset(dataset, tmp_path, FileService())
    assert len(load_annotations(paths["train"])) == 2
    assert len(load_annotations(paths["val"])) == 1
    audio = load_features(paths["features"] / "audio" / "synth_0000.bmtf")
    np.testing.assert_array_equal(audio.matrix, dataset.features["synth_0000"][0].matrix)
    assert (tmp_path / "spec.json").is_file()
