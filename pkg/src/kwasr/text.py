"""Byte-level tokenizer and deterministic text normalizer.

The tokenizer maps UTF-8 bytes to ids with a fixed offset of 2 so that two
special ids (begin, end) sit below the byte range. There is no learned
vocabulary and no merge table; every string round-trips exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

LANGUAGES = ("ja", "en")

BYTE_OFFSET = 2
VOCAB_SIZE = 256 + BYTE_OFFSET

# Characters deleted outright by the normalizer.
REMOVABLE_CHARS = '.,!?;:"\'()[]{}「」。、・！？'

_REMOVE_TABLE = {ord(c): None for c in REMOVABLE_CHARS}
_ASCII_LOWER_TABLE = {ord(c): ord(c.lower()) for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ"}
# A space whose two neighbours are both non-ASCII carries no word boundary in ja.
_JA_SPACE_RE = re.compile(r"(?<=[^\x00-\x7f]) (?=[^\x00-\x7f])")


@dataclass(frozen=True)
class NormalizedText:
    text: str
    language: str


def normalize(text: str, language: str) -> NormalizedText:
    """Canonicalize text for prompts and for scoring.

    Lowercases ASCII letters, deletes the removable punctuation set,
    collapses whitespace runs to a single space and strips the ends.
    For ja, spaces flanked by non-ASCII characters on both sides are
    removed as well. The result never has more characters than the input
    and normalizing twice is a no-op.
    """
    if language not in LANGUAGES:
        raise ValueError(f"unknown language {language!r}")
    s = text.translate(_ASCII_LOWER_TABLE)
    s = s.translate(_REMOVE_TABLE)
    s = " ".join(s.split())
    if language == "ja":
        s = _JA_SPACE_RE.sub("", s)
    return NormalizedText(s, language)


@dataclass(frozen=True)
class Tokenizer:
    """Fixed byte tokenizer: id = byte + 2, bos = 0, eos = 1.

    When ``eos_equals_bos`` is set both specials share id 0, which matches
    packed-sequence conventions where one sentinel separates documents.
    """

    eos_equals_bos: bool = False

    @property
    def vocab_size(self) -> int:
        return VOCAB_SIZE

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 0 if self.eos_equals_bos else 1

    def encode(self, text: str) -> np.ndarray:
        data = text.encode("utf-8")
        return np.frombuffer(data, dtype=np.uint8).astype(np.int64) + BYTE_OFFSET

    def decode(self, ids) -> str:
        arr = np.asarray(ids, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= VOCAB_SIZE):
            raise ValueError(f"token id out of range [0, {VOCAB_SIZE})")
        body = arr[arr >= BYTE_OFFSET] - BYTE_OFFSET
        return body.astype(np.uint8).tobytes().decode("utf-8", errors="replace")
