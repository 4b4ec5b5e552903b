import functools
import itertools
import time

import numpy as np
import pytest

from kwasr.metrics import (
    EditOps,
    EmptyReferenceCorpus,
    MetricReport,
    NoOccurrences,
    ZeroBaseline,
    align,
    error_rate,
    kwer,
    relative_reduction,
    select_eval_keywords,
)


def _oracle_distance(a: str, b: str) -> int:
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
            d(i - 1, j) + 1,
            d(i, j - 1) + 1,
        )
    return d(len(a), len(b))


class TestAlign:
    def test_exhaustive_oracle_short_strings(self):
        start = time.monotonic()
        alphabet = "abc"
        pool = [
            "".join(p)
            for n in range(0, 7)
            for p in itertools.product(alphabet, repeat=min(n, 3))
        ]
        rng = np.random.default_rng(0)
        lengths = rng.integers(0, 7, size=(1200, 2))
        checked = 0
        for la, lb in lengths:
            a = "".join(rng.choice(list(alphabet), size=la))
            b = "".join(rng.choice(list(alphabet), size=lb))
            ops = align(a, b)
            assert ops.distance == _oracle_distance(a, b), (a, b)
            checked += 1
        assert checked >= 1000
        assert time.monotonic() - start < 10.0
        assert pool  # silence linters about the enumeration aid

    def test_kitten_sitting(self):
        ops = align("kitten", "sitting")
        assert ops.distance == 3
        assert (ops.insertions, ops.deletions, ops.substitutions) == (1, 0, 2)
        assert ops.ref_len == 6

    def test_empty_hypothesis_all_deletions(self):
        ops = align("ab", "")
        assert (ops.insertions, ops.deletions, ops.substitutions) == (0, 2, 0)

    def test_empty_reference_all_insertions(self):
        ops = align("", "xyz")
        assert (ops.insertions, ops.deletions, ops.substitutions) == (3, 0, 0)

    def test_equal_strings_zero_ops(self):
        ops = align("same", "same")
        assert ops.distance == 0 and ops.ref_len == 4

    def test_tie_prefers_substitution(self):
        # "ab" -> "cd" could be 2 subs or del+del+ins+ins; subs win
        ops = align("ab", "cd")
        assert (ops.insertions, ops.deletions, ops.substitutions) == (0, 0, 2)

    def test_word_sequences(self):
        ops = align(["the", "cat", "sat"], ["the", "dog", "sat"])
        assert ops.distance == 1 and ops.substitutions == 1
        assert ops.ref_len == 3

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b, c = (
                "".join(rng.choice(list("abcd"), size=rng.integers(0, 8)))
                for _ in range(3)
            )
            dab = align(a, b).distance
            dbc = align(b, c).distance
            dac = align(a, c).distance
            assert dac <= dab + dbc

    def test_symmetry_of_distance(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = "".join(rng.choice(list("abc"), size=rng.integers(0, 7)))
            b = "".join(rng.choice(list("abc"), size=rng.integers(0, 7)))
            assert align(a, b).distance == align(b, a).distance


class TestErrorRate:
    def test_corpus_weighting(self):
        # 1 error over 4 ref chars + 0 over 6 -> 10 percent
        pairs = [("abcd", "abcx"), ("abcdef", "abcdef")]
        report = error_rate(pairs)
        assert report.rate == pytest.approx(10.0)
        assert report.n_utterances == 2
        assert report.ops.ref_len == 10
        assert report.unit == "char"

    def test_word_unit(self):
        report = error_rate([("a b c", "a x c")], unit="word")
        assert report.rate == pytest.approx(100.0 / 3)
        assert report.ops.ref_len == 3

    def test_rate_can_exceed_100(self):
        report = error_rate([("a", "xyz")])
        assert report.rate > 100.0

    def test_empty_reference_corpus(self):
        with pytest.raises(EmptyReferenceCorpus):
            error_rate([("", "abc")])

    def test_unit_validation(self):
        with pytest.raises(ValueError):
            error_rate([("a", "a")], unit="phoneme")

    def test_report_defaults(self):
        report = MetricReport(1.0, EditOps(0, 0, 0, 1), 1, "char")
        assert report.kwer is None


class TestSelectEvalKeywords:
    def test_flat_candidates(self):
        kept = select_eval_keywords(["foo", "bar"], ["text with foo"])
        assert kept == {"bar"}

    def test_nested_candidates(self):
        kept = select_eval_keywords([["foo", "bar"], ["baz"]], ["say foo and baz"])
        assert kept == {"bar"}

    def test_substring_counts_as_seen(self):
        assert select_eval_keywords(["cat"], ["concatenate"]) == set()

    def test_empty_train_texts_keep_all(self):
        assert select_eval_keywords(["a", "b"], []) == {"a", "b"}


class TestKwer:
    def test_hand_table(self):
        # keyword occurrences: u1 "ab" hit, u1 "cd" missed, u2 "ab" hit,
        # u2 "zz" no occurrence -> 1 error / 3 occurrences
        items = [
            ("ab cd here", "ab only", ["ab", "cd"]),
            ("ab again", "ab again", ["ab", "zz"]),
        ]
        assert kwer(items) == pytest.approx(100.0 / 3)

    def test_two_occurrences_one_missed_is_fifty(self):
        items = [
            ("keyword in ref", "keyword here", ["keyword"]),
            ("keyword again", "nothing", ["keyword"]),
        ]
        assert kwer(items) == pytest.approx(50.0)

    def test_keyword_counts_once_per_utterance(self):
        items = [("kw and kw and kw", "none", ["kw"])]
        assert kwer(items) == pytest.approx(100.0)

    def test_duplicate_keywords_deduped(self):
        items = [("kw here", "kw here", ["kw", "kw"])]
        assert kwer(items) == pytest.approx(0.0)

    def test_no_occurrences_raises(self):
        with pytest.raises(NoOccurrences):
            kwer([("ref text", "hyp", ["absent"])])

    def test_substring_matching(self):
        # keyword inside a longer hypothesis word still counts as found
        items = [("アイウエ", "アイウエオ", ["アイ"])]
        assert kwer(items) == pytest.approx(0.0)


class TestRelativeReduction:
    def test_published_pairs(self):
        assert abs(relative_reduction(12.45, 11.47) - 7.87) <= 0.005
        assert abs(relative_reduction(10.67, 9.48) - 11.15) <= 0.005

    def test_rounding_to_two_decimals(self):
        assert relative_reduction(3.0, 2.0) == 33.33

    def test_zero_baseline(self):
        with pytest.raises(ZeroBaseline):
            relative_reduction(0.0, 1.0)

    def test_negative_improvement_allowed(self):
        assert relative_reduction(2.0, 3.0) == -50.0


class TestNormalizationDirection:
    """Text normalization must never raise the corpus error rate when the
    hypothesis is a corrupted rendering of the normalized reference."""

    def test_normalizing_hypotheses_helps_on_noisy_corpora(self):
        from kwasr.text import normalize

        rng = np.random.default_rng(3)
        glyphs = list("アイウエオカキクケコ")
        punct = list("、。！？")
        improved = worsened = 0
        for trial in range(50):
            pairs_raw, pairs_norm = [], []
            for _ in range(6):
                ref = "".join(rng.choice(glyphs, size=rng.integers(4, 12)))
                # hypothesis: reference plus stray punctuation and spaces
                hyp = ref
                for _ in range(rng.integers(1, 4)):
                    pos = rng.integers(0, len(hyp) + 1)
                    hyp = hyp[:pos] + str(rng.choice(punct + [" "])) + hyp[pos:]
                pairs_raw.append((ref, hyp))
                pairs_norm.append((ref, normalize(hyp, "ja").text))
            raw = error_rate(pairs_raw).rate
            norm = error_rate(pairs_norm).rate
            if norm < raw:
                improved += 1
            elif norm > raw:
                worsened += 1
        assert worsened == 0
        assert improved >= 45
