"""
Tests for tokenization, the caption vocabulary and pre-trained word vectors
"""

import numpy as np
import pytest

from bimodal_captioner.data.embeddings import load_glove_matrix
from bimodal_captioner.data.vocabulary import SPECIALS, Vocabulary, build_vocab, tokenize
from bimodal_captioner.errors import DataError, FormatError

CORPUS = ["A man plays the guitar.", "The man sings!", "a dog barks"]


@pytest.fixture
def vocab():
    return build_vocab(CORPUS)


def test_tokenize():
    assert tokenize("The dog's BALL, bounces!") == ["the", "dog's", "ball", "bounces"]


class TestVocabulary:
    def test_special_ids(self, vocab):
        assert (vocab.unk_id, vocab.pad_id, vocab.start_id, vocab.end_id) == (0, 1, 2, 3)
        assert vocab.itos[:4] == list(SPECIALS)

    def test_frequency_then_lexicographic_order(self, vocab):
        assert vocab.itos[4:7] == ["a", "man", "the"]

    def test_min_count_maps_rare_words_to_unknown(self):
        vocab = build_vocab(CORPUS, min_count=2)
        assert "dog" not in vocab
        assert vocab.encode("dog")[1] == vocab.unk_id

    def test_encode_frames_with_start_and_end(self, vocab):
        ids = vocab.encode("The man")
        assert ids[0] == vocab.start_id and ids[-1] == vocab.end_id
        assert vocab.decode(ids) == "the man"

    def test_decode_stops_at_end(self, vocab):
        ids = vocab.encode("a dog") + vocab.encode("the man")[1:]
        assert vocab.decode(ids) == "a dog"

    def test_dump_and_load(self, vocab, tmp_path):
        path = tmp_path / "vocab.tsv"
        path.write_text(vocab.dumps(), encoding="utf-8")
        loaded = Vocabulary.load(path)
        assert loaded.itos == vocab.itos
        assert loaded.counts == vocab.counts

    def test_malformed_dump(self, tmp_path):
        path = tmp_path / "vocab.tsv"
        path.write_text("<unk>\t0\t0\n<pad>\tx\t0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            Vocabulary.load(path)

    def test_json_round_trip(self, vocab):
        assert Vocabulary.from_json(vocab.to_json()).itos == vocab.itos

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            build_vocab([])


class TestGloveMatrix:
    def test_known_and_missing_tokens(self, vocab, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text("man 1 2\nzebra 3 4\n", encoding="utf-8")
        matrix = load_glove_matrix(path, vocab, dim=2)
        assert matrix.shape == (len(vocab), 2)
        np.testing.assert_allclose(matrix[vocab.stoi["man"]], [1.0, 2.0])
        np.testing.assert_allclose(matrix[vocab.stoi["dog"]], [2.0, 3.0])

    def test_wrong_width(self, vocab, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text("man 1 2 3\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_glove_matrix(path, vocab, dim=2)

    def test_missing_file(self, vocab, tmp_path):
        with pytest.raises(DataError):
            load_glove_matrix(tmp_path / "none.txt", vocab, 2)
