import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwasr.prompts import (
    TOKEN_BUDGET,
    BudgetInfeasible,
    PromptRecord,
    assemble_example,
    render_prompt,
    shuffle_keywords,
)

# Katakana-ish strings that survive keyword normalization (no ascii upper,
# no removable punctuation, no spaces).
_kw = st.text(alphabet="アイウエオカキク", min_size=1, max_size=6)


class TestRenderPrompt:
    def test_en_golden_bytes(self):
        rec = PromptRecord("en", ("alpha", "beta"), "hello world")
        prefix, target = render_prompt(rec)
        assert prefix == "Language: en ; Keywords: alpha, beta ; Transcription: "
        assert target == "hello world"

    def test_en_placeholder_golden(self):
        rec = PromptRecord("en", None, "hi")
        prefix, _ = render_prompt(rec)
        assert prefix == "Language: en ; Keywords: na ; Transcription: "

    def test_ja_golden_bytes(self):
        rec = PromptRecord("ja", ("アイ", "ウエ"), "アイウエ")
        prefix, target = render_prompt(rec)
        assert prefix == "言語：ja； キーワード：アイ、ウエ； 書き起こし："
        assert target == "アイウエ"

    def test_ja_placeholder_golden(self):
        rec = PromptRecord("ja", None, "アイ")
        prefix, _ = render_prompt(rec)
        assert prefix == "言語：ja； キーワード：なし； 書き起こし："

    def test_rejects_unknown_language(self):
        with pytest.raises(ValueError):
            PromptRecord("fr", None, "x")

    def test_rejects_empty_keyword_tuple(self):
        with pytest.raises(ValueError):
            PromptRecord("en", (), "x")

    def test_rejects_duplicate_keywords(self):
        with pytest.raises(ValueError):
            PromptRecord("en", ("a", "a"), "x")

    def test_rejects_unnormalized_keyword(self):
        with pytest.raises(ValueError):
            PromptRecord("en", ("Upper",), "x")


class TestShuffleKeywords:
    def test_deterministic_permutation(self):
        kws = ["a", "b", "c", "d"]
        assert shuffle_keywords(kws, seed=5) == shuffle_keywords(kws, seed=5)
        assert sorted(shuffle_keywords(kws, seed=5)) == kws

    def test_seed_changes_order(self):
        kws = [f"k{i}" for i in range(12)]
        orders = {tuple(shuffle_keywords(kws, seed=s)) for s in range(8)}
        assert len(orders) > 1


class TestAssembleExample:
    def test_layout_and_mask(self, tokenizer):
        rec = PromptRecord("en", ("ab",), "xy")
        ex = assemble_example(rec, audio_embed_count=3, tokenizer=tokenizer)
        prefix, target = render_prompt(rec)
        want = np.concatenate(
            [[0], tokenizer.encode(prefix), tokenizer.encode(target), [1]]
        )
        assert ex.token_ids.tolist() == want.tolist()
        # loss rows: target bytes plus eos, nothing else
        assert ex.loss_mask.sum() == len(tokenizer.encode(target)) + 1
        assert ex.loss_mask[-1] and not ex.loss_mask[0]
        assert ex.total_text_tokens == len(ex.token_ids) - 2
        assert ex.seq_len == 3 + len(ex.token_ids)

    def test_whole_keyword_dropped_first(self, tokenizer):
        # Budget fits prefix + first keyword but not both keywords.
        rec = PromptRecord("en", ("aaaa", "bbbb"), "t")
        fixed = len(tokenizer.encode("Language: en ; Keywords: ")) + len(
            tokenizer.encode(" ; Transcription: ")
        ) + 1
        ex = assemble_example(rec, 0, tokenizer, budget=fixed + 5)
        text = tokenizer.decode(ex.token_ids)
        assert "aaaa" in text and "bbbb" not in text
        assert ex.total_text_tokens <= fixed + 5

    def test_last_keyword_tail_cut_hits_budget_exactly(self, tokenizer):
        rec = PromptRecord("en", ("abcdefgh",), "t")
        fixed = len(tokenizer.encode("Language: en ; Keywords: ")) + len(
            tokenizer.encode(" ; Transcription: ")
        ) + 1
        budget = fixed + 3
        ex = assemble_example(rec, 0, tokenizer, budget=budget)
        assert ex.total_text_tokens == budget
        assert "abc" in tokenizer.decode(ex.token_ids)

    def test_infeasible_when_transcription_alone_overflows(self, tokenizer):
        rec = PromptRecord("en", None, "x" * 400)
        with pytest.raises(BudgetInfeasible):
            assemble_example(rec, 0, tokenizer)

    def test_negative_audio_count_rejected(self, tokenizer):
        rec = PromptRecord("en", None, "x")
        with pytest.raises(ValueError):
            assemble_example(rec, -1, tokenizer)

    def test_transcription_never_truncated(self, tokenizer):
        target = "z" * 40
        rec = PromptRecord("en", ("aaaa", "bbbb", "cccc"), target)
        fixed = len(tokenizer.encode("Language: en ; Keywords: ")) + len(
            tokenizer.encode(" ; Transcription: ")
        ) + 40
        ex = assemble_example(rec, 0, tokenizer, budget=fixed + 2)
        assert tokenizer.decode(ex.token_ids).endswith(target)

    @given(
        lang=st.sampled_from(["en", "ja"]),
        kws=st.lists(_kw, min_size=0, max_size=40, unique=True),
        target=st.text(alphabet="アイウエオサシスセソ", min_size=1, max_size=60),
        audio=st.integers(min_value=0, max_value=16),
    )
    @settings(max_examples=1000, deadline=None)
    def test_budget_always_respected(self, tokenizer, lang, kws, target, audio):
        rec = PromptRecord(lang, tuple(kws) or None, target)
        try:
            ex = assemble_example(rec, audio, tokenizer)
        except BudgetInfeasible:
            prefix_min, _ = render_prompt(
                PromptRecord(lang, None, target)
            )
            assert len(tokenizer.encode(prefix_min)) + len(
                tokenizer.encode(target)
            ) > TOKEN_BUDGET
            return
        assert ex.total_text_tokens <= TOKEN_BUDGET
        assert ex.token_ids[0] == tokenizer.bos_id
        assert ex.token_ids[-1] == tokenizer.eos_id
        assert len(ex.loss_mask) == len(ex.token_ids)
        assert tokenizer.decode(ex.token_ids).endswith(target)
