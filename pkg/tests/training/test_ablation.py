"""
Tests for the procedure and modality comparison grid
"""

import pytest

from bimodal_captioner.errors import ConfigurationError
from bimodal_captioner.training.ablation import (
    ABLATION_MODALITIES, ABLATION_PROCEDURES, ablation_to_json, run_ablation, run_cell,
)
from bimodal_captioner.workflow import TrainingData


@pytest.fixture
def data(synth):
    return TrainingData(synth.annotations, synth.annotations, synth.features)


@pytest.fixture
def quick_config(make_config):
    return make_config(training__max_steps=1, training__caption_max_epochs=1, training__proposal_max_epochs=1)


def test_cell_scores_are_fractions(quick_config, data):
    cell = run_cell(quick_config, data, "separate", "audio")
    assert (cell.procedure, cell.modality) == ("separate", "audio")
    assert set(cell.gt_bleu) == set(cell.learned_bleu) == {"bleu@3", "bleu@4"}
    for value in [*cell.gt_bleu.values(), *cell.learned_bleu.values(), cell.precision, cell.recall, cell.f1]:
        assert 0.0 <= value <= 1.0


def test_cell_follows_configured_bleu_orders(make_config, data):
    config = make_config(training__max_steps=1, training__caption_max_epochs=1, training__proposal_max_epochs=1,
                         evaluation__bleu_orders=[2])
    cell = run_cell(config, data, "separate", "visual")
    assert list(cell.gt_bleu) == list(cell.learned_bleu) == ["bleu@2"]


def test_cell_leaves_base_config_untouched(quick_config, data):
    run_cell(quick_config, data, "prop_then_cap", "visual")
    assert quick_config.get("model.modality") == "bimodal"
    assert quick_config.get("training.procedure") == "cap_then_prop"


def test_unknown_cell(quick_config, data):
    with pytest.raises(ConfigurationError):
        run_cell(quick_config, data, "joint", "audio")


@pytest.mark.slow
def test_full_grid_report(quick_config, data):
    cells = run_ablation(quick_config, data)
    assert [(cell.procedure, cell.modality) for cell in cells] == [
        (procedure, modality) for procedure in ABLATION_PROCEDURES for modality in ABLATION_MODALITIES
    ]
    assert len(cells) == 9
    payload = ablation_to_json(cells, quick_config)
    assert len(payload["cells"]) == 9
    assert set(payload["cells"][0]) == {"procedure", "modality", "gt_bleu", "learned_bleu", "precision", "recall", "f1"}
    assert payload["cells"][0]["procedure"] == "separate" and payload["cells"][-1]["modality"] == "bimodal"
    assert payload["thresholds"] == [0.3, 0.5, 0.7, 0.9]
