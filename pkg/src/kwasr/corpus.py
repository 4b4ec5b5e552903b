"""Synthetic corpus construction: four source roles, simulated keyword
proposal with vote aggregation, quality filtering, and training mixes.

Utterances store a regeneration seed instead of feature arrays. The full
(feature-generating) word sequence, the feature noise, and the stored-text
corruption are all derived from independent streams of that seed, so a
corpus JSONL file plus its lexicon and spec reproduce features exactly.
The stored transcription may deviate from the feature-generating text on
purpose: that mismatch is the label noise under study.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from kwasr.audio import FeatureSequence, synth_features
from kwasr.lexicon import SyntheticLexicon, build_lexicon  # noqa: F401  (factory entry point)
from kwasr.metrics import error_rate
from kwasr.text import LANGUAGES, normalize

ROLES = ("cv_like", "ls_like", "r_like", "y_like")

_ASCII_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class MissingYLikeCorpus(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    id: str
    video_id: str | None
    language: str
    transcription: str
    feat_seed: int
    role: str
    keywords: tuple[str, ...] | None = None


@dataclass(frozen=True)
class KeywordVote:
    candidate: str
    appearances: int
    runs: int

    @property
    def kept(self) -> bool:
        # Exact-rational threshold: appearances/runs >= 1/3.
        return 3 * self.appearances >= self.runs


@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for one source corpus.

    ``word_pool`` and ``homonym_pool`` restrict which surfaces appear
    (defaults: every surface, no forced homonym draws); ``junk_frac``
    makes that fraction of videos filter fodder, either ascii salad or a
    mislabeled transcription. Keyword knobs only matter for y_like.
    """

    role: str
    n_videos: int
    clips_per_video: int
    language: str
    words_per_clip: int = 6
    noise_sigma: float = 0.05
    truncation_prob: float = 0.0
    truncation_frac: float = 0.0
    word_pool: tuple[str, ...] | None = None
    homonym_pool: tuple[str, ...] | None = None
    homonym_rate: float = 0.0
    ensure_homonym: bool = False
    p_hit: float = 0.7
    distractor_rate: float = 1.0
    partner_rate: float = 0.5
    vote_runs: int = 3
    junk_frac: float = 0.0
    id_prefix: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}")
        if self.n_videos < 1 or self.clips_per_video < 1 or self.words_per_clip < 1:
            raise ValueError("counts must be >= 1")
        if self.truncation_prob and self.role != "r_like":
            raise ValueError("truncation is an r_like corruption only")
        for name in ("truncation_prob", "truncation_frac", "homonym_rate",
                     "p_hit", "partner_rate", "junk_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.vote_runs < 1:
            raise ValueError("vote_runs must be >= 1")


def _join(words: list[str], language: str) -> str:
    return "".join(words) if language == "ja" else " ".join(words)


def _draw_words(spec: CorpusSpec, lexicon: SyntheticLexicon,
                rng: np.random.Generator) -> list[str]:
    pool = spec.word_pool if spec.word_pool is not None else tuple(lexicon.surfaces())
    hpool = spec.homonym_pool or ()
    words = []
    for _ in range(spec.words_per_clip):
        if hpool and rng.random() < spec.homonym_rate:
            words.append(hpool[int(rng.integers(len(hpool)))])
        else:
            words.append(pool[int(rng.integers(len(pool)))])
    if spec.ensure_homonym and hpool and not set(words) & set(hpool):
        words[int(rng.integers(len(words)))] = hpool[int(rng.integers(len(hpool)))]
    return words


def full_text_for(utt: Utterance, spec: CorpusSpec, lexicon: SyntheticLexicon) -> str:
    """The feature-generating text, regenerated from the utterance seed."""
    rng = np.random.default_rng((utt.feat_seed, 0))
    return _join(_draw_words(spec, lexicon, rng), spec.language)


def features_for(utt: Utterance, spec: CorpusSpec,
                 lexicon: SyntheticLexicon) -> FeatureSequence:
    full = full_text_for(utt, spec, lexicon)
    return synth_features(full, lexicon, noise_sigma=spec.noise_sigma,
                          seed=(utt.feat_seed, 1))


def _truncated_text(text: str, frac: float) -> str:
    return text[:len(text) - math.ceil(frac * len(text))]


def _ascii_salad(approx_len: int, rng: np.random.Generator) -> str:
    words = []
    size = 0
    while size < max(approx_len, 4):
        n = int(rng.integers(3, 8))
        words.append("".join(_ASCII_LETTERS[int(rng.integers(26))] for _ in range(n)))
        size += n + 1
    return " ".join(words)


def generate_corpus(spec: CorpusSpec, lexicon: SyntheticLexicon, seed: int) -> list[Utterance]:
    """Deterministic utterance list for one source corpus.

    r_like stores, with probability truncation_prob, the transcription
    minus its final ceil(truncation_frac * len) characters while features
    keep encoding the full text. y_like attaches voted keywords shared by
    all clips of a video. Junk videos keep honest features but store
    corrupted text so the quality filter has something to catch.
    """
    rng = np.random.default_rng(seed)
    n_v, n_c = spec.n_videos, spec.clips_per_video
    feat_seeds = rng.integers(1, 2 ** 62, size=(n_v, n_c))
    junk_rolls = rng.random(n_v)
    junk_kinds = rng.integers(0, 2, size=n_v)  # 0 ascii salad, 1 mislabel
    kw_seeds = rng.integers(1, 2 ** 62, size=(n_v, spec.vote_runs))

    out: list[Utterance] = []
    for v in range(n_v):
        video_id = f"{spec.id_prefix}{spec.role}-v{v:04d}"
        junk = junk_rolls[v] < spec.junk_frac
        full_texts = []
        clip_rows = []
        for c in range(n_c):
            fseed = int(feat_seeds[v, c])
            full = _join(_draw_words(spec, lexicon, np.random.default_rng((fseed, 0))),
                         spec.language)
            full_texts.append(full)
            stored = full
            if spec.role == "r_like" and spec.truncation_prob:
                if np.random.default_rng((fseed, 2)).random() < spec.truncation_prob:
                    stored = _truncated_text(full, spec.truncation_frac)
            if junk:
                jrng = np.random.default_rng((fseed, 3))
                if junk_kinds[v] == 0:
                    stored = _ascii_salad(len(full), jrng)
                else:
                    stored = _join(_draw_words(spec, lexicon, jrng), spec.language)
            clip_rows.append((f"{video_id}-c{c:02d}", stored, fseed))

        keywords: tuple[str, ...] | None = None
        if spec.role == "y_like":
            runs = [propose_keywords(full_texts, lexicon, int(kw_seeds[v, r]),
                                     p_hit=spec.p_hit,
                                     distractor_rate=spec.distractor_rate,
                                     partner_rate=spec.partner_rate)
                    for r in range(spec.vote_runs)]
            voted = vote_keywords(runs, spec.language)
            keywords = tuple(voted) if voted else None
        for cid, stored, fseed in clip_rows:
            out.append(Utterance(id=cid, video_id=video_id, language=spec.language,
                                 transcription=stored, feat_seed=fseed,
                                 role=spec.role, keywords=keywords))
    out.sort(key=lambda u: u.id)
    return out


def propose_keywords(video_texts: list[str], lexicon: SyntheticLexicon, seed: int,
                     p_hit: float = 0.7, distractor_rate: float = 1.0,
                     partner_rate: float = 0.5) -> list[str]:
    """One noisy proposal run over a video's feature-generating texts.

    True candidates are homonym-group surfaces occurring in the video;
    each survives with probability p_hit. A Poisson(distractor_rate)
    number of distractors joins them, drawn from a true word's homonym
    partner with probability partner_rate (so keyword lists genuinely
    disambiguate) and uniformly from the lexicon otherwise.
    """
    if not video_texts:
        raise ValueError("video has no utterances")
    rng = np.random.default_rng(seed)
    homset = lexicon.homonym_surfaces
    present: set[str] = set()
    for text in video_texts:
        present.update(w for w in lexicon.segment(text) if w in homset)
    truths = sorted(present)
    proposal = [w for w in truths if rng.random() < p_hit]
    all_surfaces = tuple(lexicon.surfaces())
    for _ in range(int(rng.poisson(distractor_rate))):
        if truths and rng.random() < partner_rate:
            word = truths[int(rng.integers(len(truths)))]
            partners = [p for p in lexicon.partners(word) if p != word]
            if partners:
                proposal.append(partners[int(rng.integers(len(partners)))])
                continue
        proposal.append(all_surfaces[int(rng.integers(len(all_surfaces)))])
    seen: set[str] = set()
    unique = []
    for w in proposal:
        if w not in seen:
            seen.add(w)
            unique.append(w)
    return unique


def tally_votes(runs: list[list[str]], language: str = "ja") -> list[KeywordVote]:
    """Votes are counted per normalized surface, once per run each."""
    if not runs:
        raise ValueError("need at least one proposal run")
    counts: dict[str, int] = {}
    for run in runs:
        surfaces = {normalize(kw, language).text for kw in run}
        surfaces.discard("")
        for kw in surfaces:
            counts[kw] = counts.get(kw, 0) + 1
    return [KeywordVote(candidate=k, appearances=c, runs=len(runs))
            for k, c in counts.items()]


def vote_keywords(runs: list[list[str]], language: str = "ja") -> list[str]:
    """Keywords proposed in at least a third of runs.

    Output ordering is descending appearance count, ties lexicographic.
    """
    votes = [v for v in tally_votes(runs, language) if v.kept]
    votes.sort(key=lambda v: (-v.appearances, v.candidate))
    return [v.candidate for v in votes]


def _corrupt(text: str, q: float, rng: np.random.Generator, glyphs: tuple[str, ...]) -> str:
    chars = list(text)
    for i, ch in enumerate(chars):
        if ch != " " and rng.random() < q:
            chars[i] = glyphs[int(rng.integers(len(glyphs)))]
    return "".join(chars)


def video_quality_stats(utterances: list[Utterance], spec: CorpusSpec,
                        lexicon: SyntheticLexicon, seed: int) -> dict[str, dict[str, float]]:
    """Per-video proxy error rate and alphabetic-character ratio.

    The proxy transcriber is a scratch stand-in for a reference ASR
    system: it reads the feature-generating text and corrupts a random
    per-video fraction (up to 20%) of characters. Videos whose stored
    transcriptions disagree with their own audio thus score high.
    """
    glyphs = tuple(sorted(set("".join(lexicon.surfaces()))))
    by_video: dict[str, list[Utterance]] = {}
    for u in utterances:
        by_video.setdefault(u.video_id or u.id, []).append(u)
    stats: dict[str, dict[str, float]] = {}
    for vid, utts in by_video.items():
        rng = np.random.default_rng((seed, zlib.crc32(vid.encode("utf-8"))))
        q = rng.uniform(0.0, 0.2)
        pairs = []
        alpha = total = 0
        for u in utts:
            full = full_text_for(u, spec, lexicon)
            pairs.append((u.transcription, _corrupt(full, q, rng, glyphs)))
            stripped = u.transcription.replace(" ", "")
            alpha += sum(c.isascii() and c.isalpha() for c in stripped)
            total += len(stripped)
        cer = error_rate(pairs, unit="char").rate / 100.0
        stats[vid] = {
            "proxy_cer": min(1.0, cer),
            "alpha_ratio": alpha / total if total else 0.0,
        }
    return stats


def filter_videos(stats: dict[str, dict[str, float]]) -> list[str]:
    """Video ids passing both quality gates (boundaries are inclusive drops)."""
    kept = []
    for vid, s in stats.items():
        cer, alpha = s["proxy_cer"], s["alpha_ratio"]
        if not 0.0 <= cer <= 1.0 or not 0.0 <= alpha <= 1.0:
            raise ValueError(f"stats for {vid!r} outside [0, 1]")
        if cer >= 0.40 or alpha >= 0.50:
            continue
        kept.append(vid)
    return kept


def compose_training_mix(corpora: list[list[Utterance]], keyword_mode: str) -> list[Utterance]:
    """Final train set with the y_like corpus shown twice.

    none: both copies without keywords. duplicated: one copy with, one
    without. keywords_only: both with. Totals are identical across modes
    so comparisons hold data volume fixed.
    """
    if keyword_mode not in ("none", "duplicated", "keywords_only"):
        raise ValueError(f"unknown keyword_mode {keyword_mode!r}")
    y_lists = [c for c in corpora if c and c[0].role == "y_like"]
    if not y_lists:
        raise MissingYLikeCorpus("mix requires exactly one y_like corpus")
    if len(y_lists) > 1:
        raise ValueError("mix requires exactly one y_like corpus, found several")
    y = y_lists[0]
    others = [u for c in corpora if not (c and c[0].role == "y_like") for u in c]
    with_kw = keyword_mode in ("duplicated", "keywords_only")
    copy_a = [replace(u, id=u.id + "~a", keywords=u.keywords if with_kw else None)
              for u in y]
    both_kw = keyword_mode == "keywords_only"
    copy_b = [replace(u, id=u.id + "~b", keywords=u.keywords if both_kw else None)
              for u in y]
    return others + copy_a + copy_b


def save_corpus(utterances: list[Utterance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in sorted(utterances, key=lambda x: x.id):
            rec = {
                "id": u.id,
                "video_id": u.video_id,
                "lang": u.language,
                "text": u.transcription,
                "keywords": list(u.keywords) if u.keywords is not None else None,
                "feat_seed": u.feat_seed,
                "role": u.role,
            }
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def load_corpus(path: str) -> list[Utterance]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(Utterance(
                id=rec["id"], video_id=rec["video_id"], language=rec["lang"],
                transcription=rec["text"], feat_seed=rec["feat_seed"], role=rec["role"],
                keywords=tuple(rec["keywords"]) if rec["keywords"] is not None else None,
            ))
    return out
