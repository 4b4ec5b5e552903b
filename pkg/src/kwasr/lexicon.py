"""Synthetic lexicon: surfaces, pronunciation codes, homonym groups.

Every word carries a code, a tuple of symbol ids that the audio synthesizer
turns into frames. Surfaces are spelled with one grapheme per code symbol,
so the sound-to-spelling map is compositional and a small model can read
out words it never saw. A homonym group shares one code between a canonical
surface (spelled exactly by the grapheme table) and a variant surface whose
final character comes from a disjoint character pool, making the variant
unrecoverable from audio alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Grapheme tables. Canonical symbols spell with the first list, variants
# draw their divergent final character from the second; the pools are
# disjoint so variant surfaces never collide with canonical spellings.
CANONICAL_GRAPHEMES = "アイウエオカキクケコサシスセソタチツテト"
VARIANT_GRAPHEMES = "ナニヌネノハヒフヘホマミムメモヤユヨラリ"


class UnknownWord(ValueError):
    pass


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class LexiconWord:
    surface: str
    code: tuple[int, ...]


@dataclass
class SyntheticLexicon:
    words: list[LexiconWord]
    homonym_groups: list[tuple[str, ...]]
    alphabet_size: int

    @cached_property
    def _by_surface(self) -> dict[str, tuple[int, ...]]:
        return {w.surface: w.code for w in self.words}

    @cached_property
    def _surface_lengths(self) -> list[int]:
        return sorted({len(w.surface) for w in self.words}, reverse=True)

    @cached_property
    def homonym_surfaces(self) -> frozenset[str]:
        return frozenset(s for group in self.homonym_groups for s in group)

    def surfaces(self) -> list[str]:
        return [w.surface for w in self.words]

    def regular_surfaces(self) -> list[str]:
        hom = self.homonym_surfaces
        return [w.surface for w in self.words if w.surface not in hom]

    def code_of(self, surface: str) -> tuple[int, ...]:
        try:
            return self._by_surface[surface]
        except KeyError:
            raise UnknownWord(f"surface {surface!r} is not in the lexicon") from None

    def partners(self, surface: str) -> list[str]:
        for group in self.homonym_groups:
            if surface in group:
                return [s for s in group if s != surface]
        return []

    def segment(self, text: str) -> list[str]:
        """Split a transcription into lexicon surfaces.

        Whitespace-delimited text segments by splitting; unspaced text is
        matched greedily, longest surface first. Raises UnknownWord when
        the text is empty or cannot be covered.
        """
        if not text:
            raise UnknownWord("empty transcription")
        parts = text.split()
        if parts and all(p in self._by_surface for p in parts):
            return parts
        out: list[str] = []
        i = 0
        while i < len(text):
            if text[i] == " ":
                i += 1
                continue
            for length in self._surface_lengths:
                chunk = text[i : i + length]
                if chunk in self._by_surface:
                    out.append(chunk)
                    i += length
                    break
            else:
                raise UnknownWord(f"no lexicon word matches at offset {i} of {text!r}")
        if not out:
            raise UnknownWord("empty transcription")
        return out

    def to_json(self) -> str:
        payload = {
            "alphabet_size": self.alphabet_size,
            "words": [{"surface": w.surface, "code": list(w.code)} for w in self.words],
            "homonym_groups": [list(g) for g in self.homonym_groups],
        }
        return json.dumps(payload, ensure_ascii=False, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: str) -> "SyntheticLexicon":
        payload = json.loads(data)
        return cls(
            words=[LexiconWord(w["surface"], tuple(w["code"])) for w in payload["words"]],
            homonym_groups=[tuple(g) for g in payload["homonym_groups"]],
            alphabet_size=payload["alphabet_size"],
        )


def _spell(code: tuple[int, ...]) -> str:
    return "".join(CANONICAL_GRAPHEMES[s] for s in code)


def _sample_codes(rng: np.random.Generator, count: int, first_lo: int, first_hi: int,
                  alphabet_size: int, code_len: int) -> list[tuple[int, ...]]:
    """Distinct codes whose first symbol lies in [first_lo, first_hi)."""
    n_first = first_hi - first_lo
    space = n_first * alphabet_size ** (code_len - 1)
    if count > space:
        raise InfeasibleConfig(f"need {count} distinct codes, subspace has {space}")
    if space <= 1_000_000:
        picks = rng.choice(space, size=count, replace=False)
    else:
        seen: set[int] = set()
        while len(seen) < count:
            seen.add(int(rng.integers(space)))
        picks = np.fromiter(sorted(seen), dtype=np.int64)
    codes = []
    for value in picks:
        v = int(value)
        code = [first_lo + v % n_first]
        v //= n_first
        for _ in range(code_len - 1):
            code.append(v % alphabet_size)
            v //= alphabet_size
        codes.append(tuple(code))
    return codes


def build_lexicon(
    n_words: int,
    homonym_group_count: int,
    code_len: int,
    alphabet_size: int,
    seed: int,
) -> SyntheticLexicon:
    """Sample a lexicon with the requested number of homonym groups.

    Each group contributes two surfaces over one shared code; remaining
    words get unique codes. Surfaces are unique across the lexicon.
    Homonym codes are confined to a reserved band of first symbols (the
    top quarter of the alphabet), so "this audio contains a homonym" is a
    structural property of the signal that transfers to groups never seen
    in training, not a fact memorized per code.
    """
    if homonym_group_count * 2 > n_words:
        raise InfeasibleConfig("need n_words >= 2 * homonym_group_count")
    if not (1 <= alphabet_size <= len(CANONICAL_GRAPHEMES)):
        raise InfeasibleConfig(
            f"alphabet_size must be in [1, {len(CANONICAL_GRAPHEMES)}]"
        )
    if code_len < 1:
        raise InfeasibleConfig("code_len must be >= 1")

    rng = np.random.default_rng(seed)
    marker_lo = alphabet_size - max(1, alphabet_size // 4)
    if homonym_group_count > 0 and marker_lo == 0:
        raise InfeasibleConfig("alphabet too small to reserve a homonym band")
    group_codes = _sample_codes(rng, homonym_group_count, marker_lo, alphabet_size,
                                alphabet_size, code_len)
    regular_codes = _sample_codes(rng, n_words - 2 * homonym_group_count, 0, marker_lo,
                                  alphabet_size, code_len)
    codes = group_codes + regular_codes

    words: list[LexiconWord] = []
    groups: list[tuple[str, ...]] = []
    surfaces_seen: set[str] = set()
    for idx, code in enumerate(codes):
        canonical = _spell(code)
        if canonical in surfaces_seen:
            raise InfeasibleConfig("duplicate canonical surface; check grapheme table")
        surfaces_seen.add(canonical)
        words.append(LexiconWord(canonical, code))
        if idx < homonym_group_count:
            variant = None
            for ch in rng.permutation(len(VARIANT_GRAPHEMES)):
                candidate = canonical[:-1] + VARIANT_GRAPHEMES[int(ch)]
                if candidate not in surfaces_seen:
                    variant = candidate
                    break
            if variant is None:
                raise InfeasibleConfig("variant grapheme pool exhausted")
            surfaces_seen.add(variant)
            words.append(LexiconWord(variant, code))
            groups.append((canonical, variant))
    return SyntheticLexicon(words=words, homonym_groups=groups, alphabet_size=alphabet_size)
