"""Edit-distance alignment and corpus-level recognition metrics.

Rates are corpus level: error counts and reference lengths are summed over
all pairs before dividing, so long utterances weigh more than short ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from kwasr import _kernels


class EmptyReferenceCorpus(ValueError):
    pass


class NoOccurrences(ValueError):
    pass


class ZeroBaseline(ValueError):
    pass


@dataclass(frozen=True)
class EditOps:
    insertions: int
    deletions: int
    substitutions: int
    ref_len: int

    @property
    def distance(self) -> int:
        return self.insertions + self.deletions + self.substitutions


@dataclass(frozen=True)
class MetricReport:
    rate: float
    ops: EditOps
    n_utterances: int
    unit: str
    kwer: float | None = None


def _encode_units(ref: Sequence, hyp: Sequence) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ref, str) and isinstance(hyp, str):
        a = np.fromiter((ord(c) for c in ref), dtype=np.int64, count=len(ref))
        b = np.fromiter((ord(c) for c in hyp), dtype=np.int64, count=len(hyp))
        return a, b
    ids: dict = {}
    def lookup(seq):
        out = np.empty(len(seq), dtype=np.int64)
        for i, u in enumerate(seq):
            out[i] = ids.setdefault(u, len(ids))
        return out
    return lookup(ref), lookup(hyp)


def align(ref: Sequence, hyp: Sequence) -> EditOps:
    """Minimal edit alignment of two unit sequences.

    Units are characters when both arguments are strings, otherwise the
    elements of the given sequences. Among cost-equal paths the backtrace
    prefers substitution over deletion over insertion, which pins down the
    reported op counts.
    """
    a, b = _encode_units(ref, hyp)
    ins, dele, sub = _kernels.levenshtein_ops(a, b)
    return EditOps(int(ins), int(dele), int(sub), len(ref))


def _split_words(text: str) -> list[str]:
    return text.split(" ") if text else []


def error_rate(pairs: Iterable[tuple[str, str]], unit: str = "char") -> MetricReport:
    """Corpus error rate in percent: 100 * (I + D + S) / sum(|ref|).

    ``unit`` is "char" (Unicode scalar values) or "word" (split on single
    spaces). References are expected to be normalized already.
    """
    if unit not in ("char", "word"):
        raise ValueError(f"unit must be 'char' or 'word', got {unit!r}")
    ins = dele = sub = ref_total = n = 0
    for ref, hyp in pairs:
        if unit == "word":
            ref_u: Sequence = _split_words(ref)
            hyp_u: Sequence = _split_words(hyp)
        else:
            ref_u, hyp_u = ref, hyp
        ops = align(ref_u, hyp_u)
        ins += ops.insertions
        dele += ops.deletions
        sub += ops.substitutions
        ref_total += ops.ref_len
        n += 1
    if ref_total == 0:
        raise EmptyReferenceCorpus("total reference length is zero")
    ops_total = EditOps(ins, dele, sub, ref_total)
    return MetricReport(100.0 * ops_total.distance / ref_total, ops_total, n, unit)


def select_eval_keywords(candidates: Iterable, train_texts: Iterable[str]) -> set[str]:
    """Keywords worth scoring: those never seen in the training corpus.

    Frequency is substring occurrence over the training transcriptions;
    only keywords with frequency zero are kept. ``candidates`` may be
    per-utterance keyword lists or an already-flat list of keywords.
    """
    pool = set()
    for kws in candidates:
        if isinstance(kws, str):
            pool.add(kws)
        else:
            pool.update(kws)
    texts = list(train_texts)
    return {kw for kw in pool if not any(kw in t for t in texts)}


def kwer(items: Iterable[tuple[str, str, Iterable[str]]]) -> float:
    """Keyword error rate in percent over (reference, hypothesis, keywords).

    A (utterance, keyword) occurrence exists when the keyword is a
    substring of the reference; it counts at most once per utterance. The
    occurrence is an error when the keyword is absent from the hypothesis.
    """
    occurrences = 0
    errors = 0
    for ref, hyp, kws in items:
        for kw in set(kws):
            if kw and kw in ref:
                occurrences += 1
                if kw not in hyp:
                    errors += 1
    if occurrences == 0:
        raise NoOccurrences("no keyword occurs in any reference")
    return 100.0 * errors / occurrences


def relative_reduction(old: float, new: float) -> float:
    """Percent improvement 100 * (old - new) / old, reported to 2 decimals."""
    if old == 0:
        raise ZeroBaseline("baseline metric is zero")
    return round(100.0 * (old - new) / old, 2)
