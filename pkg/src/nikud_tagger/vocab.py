"""Character vocabulary: one token id per character."""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass

import numpy as np

from .hebrew import LETTERS

PAD = "<pad>"
OOV = "<oov>"
SPACE = "<space>"
DIGIT = "<digit>"
PUNCT = "<punct>"
LATIN = "<latin>"
MARK = "<mark>"

SPECIALS = (PAD, OOV, SPACE, DIGIT, PUNCT, LATIN, MARK)


@dataclass(frozen=True)
class CharVocab:
    """Maps characters to dense ids; PAD is 0 and unknown characters go to OOV.

    Hebrew letters get their own ids; whitespace, digits, punctuation, Latin
    letters and non-Hebrew combining marks are each bucketed into one symbol.
    """

    symbols: tuple[str, ...]

    @classmethod
    def default(cls) -> "CharVocab":
        return cls(SPECIALS + tuple(LETTERS))

    def __post_init__(self):
        if self.symbols[0] != PAD:
            raise ValueError("PAD must have id 0")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate vocabulary symbols")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        return 0

    def symbol_for(self, ch: str) -> str:
        if ch in self._index:
            return ch
        if ch.isspace():
            return SPACE
        cat = unicodedata.category(ch)
        if cat == "Nd":
            return DIGIT
        if cat.startswith("P") or cat.startswith("S"):
            return PUNCT
        if cat.startswith("M"):
            return MARK
        if ch.isascii() and ch.isalpha():
            return LATIN
        return OOV

    def encode_char(self, ch: str) -> int:
        return self._index.get(self.symbol_for(ch), self._index[OOV])

    def encode(self, text: str) -> np.ndarray:
        return np.fromiter((self.encode_char(c) for c in text), dtype=np.int64, count=len(text))

    def digest(self) -> str:
        payload = json.dumps(list(self.symbols), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()
