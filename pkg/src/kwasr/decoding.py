"""Greedy transcription generation with the dev-set max-length policy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from kwasr.model import DecoderModel
from kwasr.text import Tokenizer


class EmptyDevSet(ValueError):
    pass


@dataclass(frozen=True)
class GenerationLimits:
    dev_max_tokens: int
    factor: float = 1.25
    # Retained as an upper bound: uncapped generation drowns in insertion
    # errors from meaningless repetition.
    hard_cap: int = 444

    @property
    def effective(self) -> int:
        limit = min(self.hard_cap, math.floor(self.factor * self.dev_max_tokens))
        if limit < 1:
            raise ValueError("effective generation limit must be >= 1")
        return limit


def max_gen_tokens(dev_set, tokenizer: Tokenizer, factor: float = 1.25) -> int:
    """Generation budget from a dev set's longest transcription.

    Token lengths include the single end token, so the budget always
    leaves room to emit it.
    """
    texts = list(dev_set)
    if not texts:
        raise EmptyDevSet("dev set has no transcriptions")
    longest = max(len(tokenizer.encode(t)) + 1 for t in texts)
    return math.floor(factor * longest)


def greedy_decode(model: DecoderModel, prefix_embeds: np.ndarray, limit: int,
                  eos_id: int = 1) -> list[int]:
    """Argmax continuation of a prefix given as embedding rows.

    Emits the argmax token each step (ties resolve to the lowest id),
    stops on the end token or after ``limit`` tokens, and never includes
    the end token in the returned ids.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    if limit == 0:
        return []
    kv, logits = model.prefill(prefix_embeds, max_new=limit)
    out: list[int] = []
    while True:
        token = int(np.argmax(logits))
        if token == eos_id:
            return out
        out.append(token)
        if len(out) >= limit:
            return out
        logits = model.step(kv, token)
