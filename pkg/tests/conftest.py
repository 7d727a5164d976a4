"""
Shared fixtures: seeded generators, a small synthetic dataset and a toy-sized configuration
"""

import numpy as np
import pytest

from bimodal_captioner.core.gradcheck import check_gradients
from bimodal_captioner.data.synthetic import SynthSpec, synth_dataset
from bimodal_captioner.data.vocabulary import build_vocab
from bimodal_captioner.utils.config import Config

# Largest accepted relative error between backward and finite-difference gradients
GRAD_TOLERANCE = 1e-4


@pytest.fixture
def rng():
    """Seeded generator for reproducible weights and inputs."""
    return np.random.default_rng(42)


@pytest.fixture
def assert_gradients():
    """Check the backward pass of a scalar closure against central differences."""
    def check(fn, inputs, tolerance=GRAD_TOLERANCE):
        error = check_gradients(fn, inputs)
        assert error < tolerance, f"relative gradient error {error:.3e}"
    return check


@pytest.fixture(scope="session")
def synth():
    """Six synthetic videos with planted events (80 audio and 30 visual cells each)."""
    return synth_dataset(SynthSpec(num_videos=6, seed=3))


@pytest.fixture(scope="session")
def synth_vocab(synth):
    return build_vocab(synth.annotations.sentences())


def toy_overrides(**changes):
    values = {
        "model.d_a": 16,
        "model.d_v": 24,
        "model.d_c": 16,
        "model.layers": 1,
        "model.heads": 2,
        "model.d_in": 16,
        "model.dropout": 0.0,
        "model.max_caption_len": 12,
        "proposals.audio_anchor_count": 1,
        "proposals.visual_anchor_count": 2,
        "proposals.audio_heads": 2,
        "proposals.visual_heads": 2,
        "proposals.hidden": 16,
        "proposals.dropout": 0.0,
        "proposals.top_k": 10,
        "training.label_smoothing": 0.0,
        "training.learning_rate": 1e-3,
        "training.caption_batch_size": 4,
        "training.proposal_batch_size": 2,
        "training.caption_max_epochs": 2,
        "training.proposal_max_epochs": 2,
        "training.patience": 2,
        "data.audio_pad": 80,
        "data.visual_pad": 40,
    }
    values.update(changes)
    return values


@pytest.fixture
def make_config():
    """Factory for toy configurations with extra dotted-key overrides."""
    def build(**changes):
        return Config(overrides=toy_overrides(**{key.replace("__", "."): value for key, value in changes.items()}))
    return build


@pytest.fixture
def toy_config(make_config):
    """Small, modality-balanced configuration (80 x 1 == 40 x 2)."""
    return make_config()
