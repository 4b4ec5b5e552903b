"""Prompt rendering and training-example assembly.

Templates are byte-exact contracts shared by training and inference:

    en:  Language: en ; Keywords: <k1, k2, ...> ; Transcription: <text>
    ja:  言語：ja； キーワード：<k1、k2、...>； 書き起こし：<text>

A missing keyword list renders the placeholder (``na`` or ``なし``). The
token layout of an assembled example is [bos] audio sequence, prompt
prefix, target transcription, [eos]; audio embeddings occupy positions
directly after bos and are not materialized as token ids here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kwasr.text import Tokenizer, normalize

TOKEN_BUDGET = 300

_TEMPLATES = {
    "en": ("Language: en ; Keywords: ", " ; Transcription: ", ", ", "na"),
    "ja": ("言語：ja； キーワード：", "； 書き起こし：", "、", "なし"),
}


class BudgetInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class PromptRecord:
    language: str
    keywords: tuple[str, ...] | None
    transcription: str

    def __post_init__(self):
        if self.language not in _TEMPLATES:
            raise ValueError(f"unknown language {self.language!r}")
        if self.keywords is not None:
            kws = tuple(self.keywords)
            if not kws:
                raise ValueError("keywords, when present, must be non-empty")
            if len(set(kws)) != len(kws):
                raise ValueError("keywords must be deduplicated")
            for kw in kws:
                if normalize(kw, self.language).text != kw:
                    raise ValueError(f"keyword {kw!r} is not normalized")
            object.__setattr__(self, "keywords", kws)


@dataclass
class TrainExample:
    audio_embed_count: int
    token_ids: np.ndarray
    loss_mask: np.ndarray
    total_text_tokens: int

    @property
    def seq_len(self) -> int:
        return self.audio_embed_count + len(self.token_ids)


def render_prompt(record: PromptRecord) -> tuple[str, str]:
    """(prefix, target) strings for a record; no truncation applied."""
    head, tail, sep, placeholder = _TEMPLATES[record.language]
    kw_text = sep.join(record.keywords) if record.keywords else placeholder
    return head + kw_text + tail, record.transcription


def shuffle_keywords(keywords: list[str] | tuple[str, ...], seed: int) -> list[str]:
    """Deterministic uniform permutation of the keyword list."""
    kws = list(keywords)
    rng = np.random.default_rng(seed)
    return [kws[i] for i in rng.permutation(len(kws))]


def assemble_example(
    record: PromptRecord,
    audio_embed_count: int,
    tokenizer: Tokenizer,
    budget: int = TOKEN_BUDGET,
) -> TrainExample:
    """Tokenize a record into a training example within the text budget.

    The budget covers prompt plus transcription tokens and excludes bos and
    eos. When over budget, whole keywords are dropped from the end of the
    (caller-shuffled) list; if a single keyword remains and still
    overflows, its tail tokens are cut so the total equals the budget
    exactly. The transcription is never touched. With zero keywords the
    placeholder renders; if even that exceeds the budget the record is
    rejected.
    """
    if audio_embed_count < 0:
        raise ValueError("audio_embed_count must be >= 0")
    head, tail, sep, placeholder = _TEMPLATES[record.language]
    head_t = tokenizer.encode(head)
    tail_t = tokenizer.encode(tail)
    target_t = tokenizer.encode(record.transcription)
    placeholder_t = tokenizer.encode(placeholder)

    fixed = len(head_t) + len(tail_t) + len(target_t)
    if fixed + len(placeholder_t) > budget:
        raise BudgetInfeasible(
            f"prompt needs {fixed + len(placeholder_t)} text tokens with zero "
            f"keywords, budget is {budget}"
        )

    if record.keywords:
        kws = list(record.keywords)
        kw_t = tokenizer.encode(sep.join(kws))
        while fixed + len(kw_t) > budget and len(kws) > 1:
            kws.pop()
            kw_t = tokenizer.encode(sep.join(kws))
        if fixed + len(kw_t) > budget:
            keep = budget - fixed
            kw_t = kw_t[:keep] if keep > 0 else placeholder_t
    else:
        kw_t = placeholder_t

    bos = np.array([tokenizer.bos_id], dtype=np.int64)
    eos = np.array([tokenizer.eos_id], dtype=np.int64)
    token_ids = np.concatenate([bos, head_t, kw_t, tail_t, target_t, eos])
    loss_mask = np.zeros(len(token_ids), dtype=bool)
    loss_mask[-(len(target_t) + 1):] = True
    return TrainExample(
        audio_embed_count=audio_embed_count,
        token_ids=token_ids,
        loss_mask=loss_mask,
        total_text_tokens=len(token_ids) - 2,
    )
