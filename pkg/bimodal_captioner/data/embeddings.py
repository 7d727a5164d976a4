"""
Embeddings - Pre-trained word vectors in the GloVe text format
"""

from pathlib import Path
from typing import Union

import numpy as np

from bimodal_captioner.data.vocabulary import Vocabulary
from bimodal_captioner.errors import DataError, FormatError
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)


def load_glove_matrix(path: Union[str, Path], vocab: Vocabulary, dim: int) -> np.ndarray:
    """
    Build an embedding matrix for ``vocab`` from a ``token v1 ... vd`` text file.

    Tokens missing from the file receive the average of all vectors in the file.

    Args:
        path: GloVe-format text file
        vocab: Caption vocabulary
        dim: Expected vector width

    Returns:
        Array of shape len(vocab)×dim
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embedding file '{path}' does not exist")

    found = {}
    total = np.zeros(dim)
    count = 0
    offset = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise FormatError(f"{path}: expected {dim} values per line, got {len(parts) - 1}", offset=offset)
            offset += len(line.encode("utf-8"))
            vector = np.asarray(parts[1:], dtype=np.float64)
            total += vector
            count += 1
            if parts[0] in vocab.stoi:
                found[parts[0]] = vector

    if count == 0:
        raise DataError(f"embedding file '{path}' is empty")
    average = total / count
    matrix = np.tile(average, (len(vocab), 1))
    for token, vector in found.items():
        matrix[vocab.stoi[token]] = vector
    logger.info("Loaded %d/%d vocabulary vectors from %s", len(found), len(vocab), path)
    return matrix
