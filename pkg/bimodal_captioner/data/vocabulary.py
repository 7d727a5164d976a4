"""
Vocabulary - Caption tokenization and token/id maps
"""

import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from bimodal_captioner.errors import DataError, FormatError

UNK, PAD, START, END = "<unk>", "<pad>", "<s>", "</s>"
SPECIALS = (UNK, PAD, START, END)

_TOKEN_PATTERN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def tokenize(sentence: str) -> List[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_PATTERN.findall(sentence.lower())


class Vocabulary:
    """Dense token<->id maps with the four special tokens at ids 0-3."""

    def __init__(self, tokens: Sequence[str], counts: Optional[Dict[str, int]] = None):
        """
        Initialize the vocabulary.

        Args:
            tokens: Regular tokens in id order (specials are prepended)
            counts: Corpus frequency of each token, kept for the vocabulary dump
        """
        self.itos: List[str] = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.counts: Dict[str, int] = dict(counts or {})

    @property
    def unk_id(self) -> int:
        return self.stoi[UNK]

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def start_id(self) -> int:
        return self.stoi[START]

    @property
    def end_id(self) -> int:
        return self.stoi[END]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, sentence: str) -> List[int]:
        """Token ids of a sentence framed by the start and end tokens."""
        ids = [self.stoi.get(token, self.unk_id) for token in tokenize(sentence)]
        return [self.start_id] + ids + [self.end_id]

    def decode(self, ids: Iterable[int]) -> str:
        """Join the words of an id sequence, stopping at the end token and skipping specials."""
        words = []
        for i in ids:
            if i == self.end_id:
                break
            token = self.itos[i]
            if token not in (START, PAD):
                words.append(token)
        return " ".join(words)

    def dumps(self) -> str:
        """Render the vocabulary as ``token<TAB>id<TAB>count`` lines."""
        return "".join(f"{token}\t{i}\t{self.counts.get(token, 0)}\n" for i, token in enumerate(self.itos))

    def to_json(self) -> Dict:
        return {"tokens": self.itos[len(SPECIALS):], "counts": self.counts}

    @classmethod
    def from_json(cls, raw: Dict) -> "Vocabulary":
        return cls(raw["tokens"], raw.get("counts"))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        """Read a vocabulary dump written by ``dumps``."""
        path = Path(path)
        if not path.is_file():
            raise DataError(f"vocabulary file '{path}' does not exist")
        tokens, counts = [], {}
        offset = 0
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
            parts = line.split("\t")
            if len(parts) != 3 or not parts[1].isdigit() or int(parts[1]) != line_no:
                raise FormatError(f"{path}: malformed vocabulary line {line_no + 1}", offset=offset)
            offset += len(line.encode("utf-8")) + 1
            token, _, count = parts
            if line_no < len(SPECIALS):
                if token != SPECIALS[line_no]:
                    raise FormatError(f"{path}: expected special token {SPECIALS[line_no]} on line {line_no + 1}")
                continue
            tokens.append(token)
            counts[token] = int(count)
        return cls(tokens, counts)


def build_vocab(sentences: Iterable[str], min_count: int = 1) -> Vocabulary:
    """
    Build a vocabulary from caption sentences.

    Args:
        sentences: Corpus of captions
        min_count: Tokens seen fewer times map to the unknown token

    Returns:
        Vocabulary ordered by frequency (descending), then lexicographically
    """
    counter: Counter = Counter()
    seen_any = False
    for sentence in sentences:
        seen_any = True
        counter.update(tokenize(sentence))
    if not seen_any or not counter:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = [(token, count) for token, count in counter.items() if count >= min_count and token not in SPECIALS]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary([token for token, _ in kept], {token: count for token, count in kept})
