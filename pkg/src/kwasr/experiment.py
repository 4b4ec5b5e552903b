"""Experiment orchestration: config tree, data generation, training,
evaluation, the dataset-bias study, and report emission.

Every pipeline stage is a pure function of the config plus previously
written artifacts, so re-running a stage reproduces its outputs byte for
byte. Reports embed the config hash and seed instead of timestamps.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import typing
import zlib
from dataclasses import asdict, dataclass, fields, is_dataclass, replace

import numpy as np

from kwasr.audio import AdapterWeights, FeatureSequence, stack_frames
from kwasr.corpus import (
    CorpusSpec,
    Utterance,
    compose_training_mix,
    features_for,
    filter_videos,
    generate_corpus,
    load_corpus,
    save_corpus,
    video_quality_stats,
)
from kwasr.decoding import GenerationLimits, greedy_decode, max_gen_tokens
from kwasr.lexicon import SyntheticLexicon, build_lexicon
from kwasr.metrics import error_rate, kwer, select_eval_keywords
from kwasr.model import DecoderConfig, DecoderModel, LoraConfig, load_model, save_model
from kwasr.prompts import (
    TOKEN_BUDGET,
    PromptRecord,
    assemble_example,
    render_prompt,
    shuffle_keywords,
)
from kwasr.text import Tokenizer, normalize
from kwasr.training import OptimizerConfig, TrainItem, fit, validate_log_entry


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LexiconSection:
    n_words: int = 72
    homonym_group_count: int = 16
    code_len: int = 4
    alphabet_size: int = 20
    eval_group_count: int = 8
    seed: int = 7


@dataclass(frozen=True)
class DataSection:
    words_per_clip: int = 4
    noise_sigma: float = 0.05
    r_videos: int = 60
    r_clips: int = 5
    cv_videos: int = 15
    cv_clips: int = 3
    ls_videos: int = 15
    ls_clips: int = 3
    # many short videos rather than few long ones: the keyword list is
    # shared across a video's clips, so clip count drives list length and
    # with it the difficulty of matching a homonym to its listed surface
    y_videos: int = 66
    y_clips: int = 3
    y_dev_videos: int = 13
    y_dev_clips: int = 3
    y_test_videos: int = 14
    y_test_clips: int = 3
    truncation_prob: float = 0.7
    truncation_frac: float = 0.4
    homonym_rate: float = 0.5
    junk_frac: float = 0.1
    p_hit: float = 0.7
    distractor_rate: float = 1.0
    partner_rate: float = 0.25
    vote_runs: int = 3
    seed: int = 11


@dataclass(frozen=True)
class ModelSection:
    n_layers: int = 3
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 192
    max_positions: int = 512
    # one frame per code symbol; stacking above 1 folds a whole word into a
    # single row, which lets the decoder memorize words instead of symbols
    stack_k: int = 1
    dtype: str = "float32"
    lora_r: int = 0  # 0 trains the full model; > 0 freezes the base
    lora_alpha: float | None = None
    lora_fused: bool = False
    seed: int = 0

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            n_layers=self.n_layers, n_heads=self.n_heads, d_model=self.d_model,
            d_k=self.d_model // self.n_heads, d_ff=self.d_ff,
            vocab_size=258, max_positions=self.max_positions,
        )

    def lora_config(self) -> LoraConfig | None:
        if self.lora_r <= 0:
            return None
        return LoraConfig(r=self.lora_r, alpha=self.lora_alpha, fused_qkv=self.lora_fused)


@dataclass(frozen=True)
class TrainSection:
    base_lr: float = 5e-4
    per_device_batch: int = 16
    device_count: int = 1
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.01  # conventional default; nothing pins this value
    warmup_frac: float = 0.01
    z_loss_coef: float = 0.0
    batch_policy: str = "random_shuffle"
    keyword_mode: str = "duplicated"
    policy_study_epochs: int = 1
    seed: int = 0


@dataclass(frozen=True)
class EvalSection:
    inference_keywords: bool = True
    factor: float = 1.25
    hard_cap: int = 444


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: str = "runs/exp"
    lexicon: LexiconSection = LexiconSection()
    data: DataSection = DataSection()
    model: ModelSection = ModelSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        # out_dir names where artifacts land, not what the experiment is
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def _check_scalar(value, expected, path: str):
    origin = typing.get_origin(expected)
    if origin is typing.Union:
        args = typing.get_args(expected)
        if value is None and type(None) in args:
            return
        expected = next(a for a in args if a is not type(None))
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is bool:
        ok = isinstance(value, bool)
    elif expected is str:
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f"{path}: expected {getattr(expected, '__name__', expected)}, "
                          f"got {type(value).__name__}")


def _from_dict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        hint = hints[f.name]
        if is_dataclass(hint):
            kwargs[f.name] = _from_dict(hint, value, f"{path}.{f.name}")
        else:
            _check_scalar(value, hint, f"{path}.{f.name}")
            kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data, "config")


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


# ---- corpus recipes ---------------------------------------------------------

def split_homonym_groups(config: ExperimentConfig, lexicon: SyntheticLexicon):
    """Deterministic (train_groups, eval_groups) partition of homonym groups.

    Eval groups are withheld from every training text so their surfaces
    have train frequency zero, which is what makes them usable as eval
    keywords.
    """
    n = len(lexicon.homonym_groups)
    k = config.lexicon.eval_group_count
    if not 0 < k < n:
        raise ConfigError(f"config.lexicon.eval_group_count: need 0 < {k} < {n}")
    perm = np.random.default_rng(config.data.seed).permutation(n)
    eval_idx = sorted(int(i) for i in perm[:k])
    train_idx = sorted(int(i) for i in perm[k:])
    return train_idx, eval_idx


def build_specs(config: ExperimentConfig, lexicon: SyntheticLexicon) -> dict[str, CorpusSpec]:
    d = config.data
    regulars = tuple(lexicon.regular_surfaces())
    train_idx, eval_idx = split_homonym_groups(config, lexicon)
    train_hom = tuple(s for i in train_idx for s in lexicon.homonym_groups[i])
    eval_hom = tuple(s for i in eval_idx for s in lexicon.homonym_groups[i])
    kw = dict(p_hit=d.p_hit, distractor_rate=d.distractor_rate,
              partner_rate=d.partner_rate, vote_runs=d.vote_runs)
    return {
        "r_like": CorpusSpec(
            role="r_like", language="ja", n_videos=d.r_videos, clips_per_video=d.r_clips,
            words_per_clip=d.words_per_clip, noise_sigma=d.noise_sigma,
            truncation_prob=d.truncation_prob, truncation_frac=d.truncation_frac,
            word_pool=regulars),
        "cv_like": CorpusSpec(
            role="cv_like", language="ja", n_videos=d.cv_videos, clips_per_video=d.cv_clips,
            words_per_clip=d.words_per_clip, noise_sigma=d.noise_sigma, word_pool=regulars),
        "ls_like": CorpusSpec(
            role="ls_like", language="en", n_videos=d.ls_videos, clips_per_video=d.ls_clips,
            words_per_clip=d.words_per_clip, noise_sigma=d.noise_sigma, word_pool=regulars),
        "y_train": CorpusSpec(
            role="y_like", language="ja", n_videos=d.y_videos, clips_per_video=d.y_clips,
            words_per_clip=d.words_per_clip, noise_sigma=d.noise_sigma, word_pool=regulars,
            homonym_pool=train_hom, homonym_rate=d.homonym_rate, ensure_homonym=True,
            junk_frac=d.junk_frac, id_prefix="train-", **kw),
        "y_dev": CorpusSpec(
            role="y_like", language="ja", n_videos=d.y_dev_videos, clips_per_video=d.y_dev_clips,
            words_per_clip=d.words_per_clip, noise_sigma=d.noise_sigma, word_pool=regulars,
            homonym_pool=eval_hom, homonym_rate=d.homonym_rate, ensure_homonym=True,
            id_prefix="dev-", **kw),
        "y_test": CorpusSpec(
            role="y_like", language="ja", n_videos=d.y_test_videos,
            clips_per_video=d.y_test_clips, words_per_clip=d.words_per_clip,
            noise_sigma=d.noise_sigma, word_pool=regulars,
            homonym_pool=eval_hom, homonym_rate=d.homonym_rate, ensure_homonym=True,
            id_prefix="test-", **kw),
    }


_CORPUS_SEEDS = {"r_like": 1, "cv_like": 2, "ls_like": 3, "y_train": 4, "y_dev": 5, "y_test": 6}
_TRAIN_NAMES = ("r_like", "cv_like", "ls_like", "y_train")


def _corpus_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, "corpora", f"{name}.jsonl")


def spec_for_utterance(specs: dict[str, CorpusSpec], utt: Utterance) -> CorpusSpec:
    if utt.role != "y_like":
        return specs[utt.role]
    prefix = (utt.video_id or utt.id).split("-", 1)[0]
    return specs[{"train": "y_train", "dev": "y_dev", "test": "y_test"}[prefix]]


def gen_data(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Build the lexicon and all six corpora; filter the y_like train set."""
    os.makedirs(os.path.join(out_dir, "corpora"), exist_ok=True)
    lex = build_lexicon(
        n_words=config.lexicon.n_words,
        homonym_group_count=config.lexicon.homonym_group_count,
        code_len=config.lexicon.code_len,
        alphabet_size=config.lexicon.alphabet_size,
        seed=config.lexicon.seed,
    )
    lex_path = os.path.join(out_dir, "lexicon.json")
    with open(lex_path, "w", encoding="utf-8") as f:
        f.write(lex.to_json())
    specs = build_specs(config, lex)
    artifacts = {"lexicon": lex_path}
    counts = {}
    for name, spec in specs.items():
        seed = config.data.seed + _CORPUS_SEEDS[name]
        utts = generate_corpus(spec, lex, seed)
        if name == "y_train":
            stats = video_quality_stats(utts, spec, lex, seed=config.data.seed + 99)
            kept = set(filter_videos(stats))
            counts["y_train_dropped_videos"] = len(stats) - len(kept)
            utts = [u for u in utts if u.video_id in kept]
        path = _corpus_path(out_dir, name)
        save_corpus(utts, path)
        artifacts[name] = path
        counts[name] = len(utts)
    train_idx, eval_idx = split_homonym_groups(config, lex)
    meta = {
        "config_hash": config.hash(),
        "counts": counts,
        "train_group_indices": train_idx,
        "eval_group_indices": eval_idx,
        "eval_group_surfaces": [list(lex.homonym_groups[i]) for i in eval_idx],
    }
    meta_path = os.path.join(out_dir, "meta.json")
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    artifacts["meta"] = meta_path
    return artifacts


# ---- training ---------------------------------------------------------------

def _load_lexicon(out_dir: str) -> SyntheticLexicon:
    with open(os.path.join(out_dir, "lexicon.json"), "r", encoding="utf-8") as f:
        return SyntheticLexicon.from_json(f.read())


def _stacked_features(utt: Utterance, spec: CorpusSpec, lex: SyntheticLexicon,
                      k: int) -> np.ndarray:
    return stack_frames(features_for(utt, spec, lex), k=k)


def _surface_flips(video_id: str, lex: SyntheticLexicon, seed: int) -> dict[str, str]:
    """Per-video coin flips swapping a homonym group's two surfaces."""
    vid = zlib.crc32(video_id.encode("utf-8"))
    flip: dict[str, str] = {}
    for gi, group in enumerate(lex.homonym_groups):
        if np.random.default_rng((seed, vid, gi)).random() < 0.5:
            flip[group[0]] = group[1]
            flip[group[1]] = group[0]
    return flip


def _apply_flips(text: str, flip: dict[str, str], width: int) -> str:
    chunks = [text[i:i + width] for i in range(0, len(text), width)]
    return "".join(flip.get(c, c) for c in chunks)


def build_train_items(mix: list[Utterance], specs: dict[str, CorpusSpec],
                      lex: SyntheticLexicon, tokenizer: Tokenizer, shuffle_seed: int,
                      stack_k: int = 1):
    """TrainItems for one epoch; noise, keyword order and homonym surfaces
    reshuffle per epoch.

    Two things are redrawn every epoch rather than replayed from the
    utterance seed, because a fixed value is a per-utterance fingerprint
    the model will happily memorize instead of learning to read the
    keyword list:

    - frame noise (fresh Gaussian per epoch, same sigma);
    - the homonym surface choice. Both surfaces of a group share one code,
      so the audio is untouched; the target text and the keyword list are
      rewritten together, consistently across a video. After the swap the
      keyword list is still exactly as informative as the generated one,
      but the word sequence no longer predicts the surface across epochs.

    Clean frames are cached; only noise, flips and token layout rebuild.
    """
    clean_cache: dict[str, FeatureSequence] = {}
    width = len(lex.words[0].surface) if lex.words else 1

    def items_for(seed: int) -> list[TrainItem]:
        flips: dict[str, dict[str, str]] = {}
        items = []
        for utt in mix:
            spec = spec_for_utterance(specs, utt)
            clean = clean_cache.get(utt.id)
            if clean is None:
                clean = features_for(utt, replace(spec, noise_sigma=0.0), lex)
                clean_cache[utt.id] = clean
            frames = clean.frames
            if spec.noise_sigma > 0:
                noise_rng = np.random.default_rng((seed, utt.feat_seed))
                frames = frames + noise_rng.normal(0.0, spec.noise_sigma, frames.shape)
            stacked = stack_frames(FeatureSequence(frames), k=stack_k)
            text = utt.transcription
            kws = utt.keywords
            if spec.homonym_pool:
                video = utt.video_id or utt.id
                flip = flips.get(video)
                if flip is None:
                    flip = _surface_flips(video, lex, seed)
                    flips[video] = flip
                text = _apply_flips(text, flip, width)
                if kws:
                    kws = tuple(flip.get(k, k) for k in kws)
            if kws:
                kws = shuffle_keywords(kws, seed=(seed ^ zlib.crc32(utt.id.encode("utf-8"))))
            record = PromptRecord(language=utt.language, keywords=kws,
                                  transcription=normalize(text, utt.language).text)
            example = assemble_example(record, audio_embed_count=len(stacked),
                                       tokenizer=tokenizer)
            items.append(TrainItem(id=utt.id, stacked=stacked, example=example))
        return items

    return lambda epoch: items_for(shuffle_seed + epoch)


def build_model(config: ExperimentConfig, lex: SyntheticLexicon) -> DecoderModel:
    m = config.model
    dtype = np.dtype(m.dtype)
    model = DecoderModel(m.decoder_config(), seed=m.seed, lora=m.lora_config(), dtype=dtype)
    model.adapter = AdapterWeights.create(
        d_audio=lex.alphabet_size, d_model=m.d_model, k=m.stack_k, seed=m.seed + 1,
        dtype=dtype)
    return model


def optimizer_config(config: ExperimentConfig, policy: str | None = None,
                     seed: int | None = None) -> OptimizerConfig:
    t = config.train
    return OptimizerConfig(
        base_lr=t.base_lr, per_device_batch=t.per_device_batch,
        device_count=t.device_count, beta1=t.beta1, beta2=t.beta2, eps=t.eps,
        weight_decay=t.weight_decay, warmup_frac=t.warmup_frac,
        z_loss_coef=t.z_loss_coef, batch_policy=policy or t.batch_policy,
        seed=t.seed if seed is None else seed)


def _train_once(config: ExperimentConfig, out_dir: str, keyword_mode: str,
                tag: str, policy: str | None = None, epochs: int | None = None,
                seed: int | None = None):
    lex = _load_lexicon(out_dir)
    specs = build_specs(config, lex)
    corpora = [load_corpus(_corpus_path(out_dir, n)) for n in _TRAIN_NAMES]
    mix = compose_training_mix(corpora, keyword_mode)
    tokenizer = Tokenizer()
    opt = optimizer_config(config, policy=policy, seed=seed)
    items = build_train_items(mix, specs, lex, tokenizer, shuffle_seed=opt.seed,
                              stack_k=config.model.stack_k)
    model = build_model(config, lex)
    log = fit(items, model, opt, epochs=config.train.epochs if epochs is None else epochs)
    ckpt = os.path.join(out_dir, f"model_{tag}.ckpt")
    save_model(model, ckpt)
    log_path = os.path.join(out_dir, f"train_log_{tag}.jsonl")
    log.to_jsonl(log_path)
    return model, log, {"checkpoint": ckpt, "train_log": log_path}


def train_cmd(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Fit one model on the configured mix; write checkpoint + loss log."""
    _, _, artifacts = _train_once(config, out_dir, config.train.keyword_mode, tag="main")
    return artifacts


# ---- evaluation -------------------------------------------------------------

def _prefix_embeds(model: DecoderModel, stacked: np.ndarray, prefix_ids: np.ndarray,
                   tokenizer: Tokenizer) -> np.ndarray:
    rows = [model.params["tok_emb"][tokenizer.bos_id][None, :],
            stacked.astype(model.dtype) @ model.adapter.w,
            model.token_embeddings(prefix_ids)]
    return np.concatenate(rows, axis=0)


def decode_corpus(model: DecoderModel, utts: list[Utterance],
                  specs: dict[str, CorpusSpec], lex: SyntheticLexicon,
                  tokenizer: Tokenizer, limit: int, use_keywords: bool) -> list[str]:
    hyps = []
    for utt in utts:
        spec = spec_for_utterance(specs, utt)
        stacked = _stacked_features(utt, spec, lex, model.adapter.k)
        kws = list(utt.keywords) if use_keywords and utt.keywords else None
        norm_text = normalize(utt.transcription, utt.language).text
        record = PromptRecord(language=utt.language, keywords=kws,
                              transcription=norm_text)
        prefix, _ = render_prompt(record)
        # the prefix must fit both the text budget and the position window
        # (bos + audio rows + prefix + generation); drop trailing keywords
        room = model.config.max_positions - 1 - len(stacked) - limit
        budget = min(TOKEN_BUDGET, room)
        while kws and len(tokenizer.encode(prefix)) > budget:
            kws.pop()
            record = PromptRecord(language=utt.language, keywords=kws or None,
                                  transcription=norm_text)
            prefix, _ = render_prompt(record)
        ids = greedy_decode(model, _prefix_embeds(model, stacked,
                                                  tokenizer.encode(prefix), tokenizer),
                            limit, eos_id=tokenizer.eos_id)
        hyps.append(normalize(tokenizer.decode(ids), utt.language).text)
    return hyps


def _train_texts(out_dir: str) -> list[str]:
    texts = []
    for name in _TRAIN_NAMES:
        for utt in load_corpus(_corpus_path(out_dir, name)):
            texts.append(normalize(utt.transcription, utt.language).text)
    return texts


def eval_rows(model: DecoderModel, utts: list[Utterance], specs, lex, tokenizer,
              limit: int, train_texts: list[str], rows: list[bool]) -> list[dict]:
    """One metrics row per inference-keyword setting.

    Keywords scored by KWER are restricted to those with zero substring
    frequency in the training texts, mirroring how held-out keywords are
    chosen.
    """
    refs = [normalize(u.transcription, u.language).text for u in utts]
    candidates = [kw for u in utts if u.keywords for kw in u.keywords]
    eval_kws = select_eval_keywords(candidates, train_texts)
    out = []
    for use_kw in rows:
        hyps = decode_corpus(model, utts, specs, lex, tokenizer, limit, use_kw)
        report = error_rate(list(zip(refs, hyps)), unit="char")
        items = [(ref, hyp, [k for k in (u.keywords or ()) if k in eval_kws])
                 for ref, hyp, u in zip(refs, hyps, utts)]
        kw_rate = kwer(items)
        out.append({
            "inference_keywords": use_kw,
            "cer": report.rate,
            "kwer": kw_rate,
            "insertions": report.ops.insertions,
            "deletions": report.ops.deletions,
            "substitutions": report.ops.substitutions,
            "ref_len": report.ops.ref_len,
            "n_utterances": report.n_utterances,
        })
    return out


def _markdown_table(headers: list[str], rows: list[list]) -> str:
    lines = ["| " + " | ".join(headers) + " |",
             "| " + " | ".join("---" for _ in headers) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def eval_cmd(config: ExperimentConfig, out_dir: str,
             checkpoint: str | None = None) -> dict[str, str]:
    """Decode dev and test sets with and without inference keywords."""
    lex = _load_lexicon(out_dir)
    specs = build_specs(config, lex)
    tokenizer = Tokenizer()
    model = load_model(checkpoint or os.path.join(out_dir, "model_main.ckpt"))
    dev = load_corpus(_corpus_path(out_dir, "y_dev"))
    dev_max = max_gen_tokens([u.transcription for u in dev], tokenizer, factor=1.0)
    limits = GenerationLimits(dev_max_tokens=dev_max, factor=config.eval.factor,
                              hard_cap=config.eval.hard_cap)
    limit = limits.effective
    train_texts = _train_texts(out_dir)
    rows = [False, True] if config.eval.inference_keywords else [False]
    artifacts = {}
    for split in ("y_dev", "y_test"):
        utts = load_corpus(_corpus_path(out_dir, split))
        table = eval_rows(model, utts, specs, lex, tokenizer, limit, train_texts, rows)
        payload = {
            "config_hash": config.hash(),
            "seed": config.train.seed,
            "split": split,
            "generation_limit": limit,
            "keyword_mode": config.train.keyword_mode,
            "rows": table,
        }
        jpath = os.path.join(out_dir, f"eval_{split}.json")
        with open(jpath, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        md_rows = [[config.train.keyword_mode, "yes" if r["inference_keywords"] else "no",
                    _fmt(r["cer"]), _fmt(r["kwer"]), r["insertions"], r["deletions"],
                    r["substitutions"], r["n_utterances"]] for r in table]
        md = (f"# Evaluation: {split}\n\nconfig_hash: {config.hash()}  \n"
              f"seed: {config.train.seed}  \ngeneration_limit: {limit}\n\n"
              + _markdown_table(
                  ["KW@Train", "KW@Inference", "CER", "KWER", "Ins", "Del", "Sub", "N"],
                  md_rows))
        mpath = os.path.join(out_dir, f"eval_{split}.md")
        with open(mpath, "w", encoding="utf-8") as f:
            f.write(md)
        artifacts[f"{split}_json"] = jpath
        artifacts[f"{split}_md"] = mpath
    return artifacts


# ---- dataset-bias study -----------------------------------------------------

def bias_exp(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Train all three keyword mixes and compare dev-set error anatomy.

    Also runs the mini batching-policy study: one short training per
    policy, logged per step, so the spike behavior of length-grouped
    batches can be inspected.
    """
    lex = _load_lexicon(out_dir)
    specs = build_specs(config, lex)
    tokenizer = Tokenizer()
    dev = load_corpus(_corpus_path(out_dir, "y_dev"))
    dev_max = max_gen_tokens([u.transcription for u in dev], tokenizer, factor=1.0)
    limit = GenerationLimits(dev_max_tokens=dev_max, factor=config.eval.factor,
                             hard_cap=config.eval.hard_cap).effective
    train_texts = _train_texts(out_dir)
    artifacts: dict[str, str] = {}
    results = {}
    for mode in ("none", "duplicated", "keywords_only"):
        model, _, arts = _train_once(config, out_dir, mode, tag=f"bias_{mode}")
        artifacts.update({f"{mode}_{k}": v for k, v in arts.items()})
        results[mode] = eval_rows(model, dev, specs, lex, tokenizer, limit,
                                  train_texts, rows=[False, True])
    for policy in ("random_shuffle", "length_grouped"):
        _, log, arts = _train_once(config, out_dir, config.train.keyword_mode,
                                   tag=f"policy_{policy}", policy=policy,
                                   epochs=config.train.policy_study_epochs)
        for entry in log.entries:
            validate_log_entry(entry)
        artifacts[f"policy_{policy}_log"] = arts["train_log"]
    payload = {"config_hash": config.hash(), "seed": config.train.seed,
               "generation_limit": limit, "results": results}
    jpath = os.path.join(out_dir, "bias_exp.json")
    with open(jpath, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    md_rows = []
    for mode, rows in results.items():
        for r in rows:
            md_rows.append([mode, "yes" if r["inference_keywords"] else "no",
                            _fmt(r["kwer"]), _fmt(r["cer"]), r["insertions"],
                            r["deletions"], r["substitutions"]])
    md = (f"# Dataset-bias study (y_dev)\n\nconfig_hash: {config.hash()}  \n"
          f"seed: {config.train.seed}\n\n"
          + _markdown_table(["Mix", "KW@Inference", "KWER", "CER",
                             "Insertions", "Deletions", "Substitutions"], md_rows))
    mpath = os.path.join(out_dir, "bias_exp.md")
    with open(mpath, "w", encoding="utf-8") as f:
        f.write(md)
    artifacts["bias_json"] = jpath
    artifacts["bias_md"] = mpath
    return artifacts


# ---- report -----------------------------------------------------------------

def report_cmd(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Join whatever artifacts exist in out_dir into one Markdown report."""
    sections = [f"# Experiment report\n\nconfig_hash: {config.hash()}  \n"
                f"seed: {config.train.seed}\n"]
    summary: dict = {"config_hash": config.hash(), "seed": config.train.seed}
    meta_path = os.path.join(out_dir, "meta.json")
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        counts = meta.get("counts", {})
        sections.append("## Data\n\n" + _markdown_table(
            ["corpus", "utterances"],
            [[k, v] for k, v in sorted(counts.items()) if isinstance(v, int)]))
        summary["data_counts"] = counts
    for tag in ("main", "bias_none", "bias_duplicated", "bias_keywords_only",
                "policy_random_shuffle", "policy_length_grouped"):
        log_path = os.path.join(out_dir, f"train_log_{tag}.jsonl")
        if not os.path.exists(log_path):
            continue
        entries = []
        with open(log_path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    entries.append(json.loads(line))
        if not entries:
            continue
        spikes = sum(1 for e in entries if e["spike"])
        row = {"steps": len(entries), "final_loss": round(entries[-1]["loss"], 4),
               "min_loss": round(min(e["loss"] for e in entries), 4), "spikes": spikes}
        summary.setdefault("training", {})[tag] = row
    if "training" in summary:
        sections.append("## Training\n\n" + _markdown_table(
            ["run", "steps", "final loss", "min loss", "spikes"],
            [[tag, r["steps"], r["final_loss"], r["min_loss"], r["spikes"]]
             for tag, r in summary["training"].items()]))
    for split in ("y_dev", "y_test"):
        path = os.path.join(out_dir, f"eval_{split}.json")
        if not os.path.exists(path):
            continue
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        rows = [[payload["keyword_mode"], "yes" if r["inference_keywords"] else "no",
                 _fmt(r["cer"]), _fmt(r["kwer"]), r["insertions"], r["deletions"],
                 r["substitutions"], r["n_utterances"]] for r in payload["rows"]]
        sections.append(f"## Evaluation: {split}\n\n" + _markdown_table(
            ["KW@Train", "KW@Inference", "CER", "KWER", "Ins", "Del", "Sub", "N"], rows))
        summary.setdefault("eval", {})[split] = payload["rows"]
    bias_path = os.path.join(out_dir, "bias_exp.json")
    if os.path.exists(bias_path):
        with open(bias_path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        rows = []
        for mode, mode_rows in payload["results"].items():
            for r in mode_rows:
                rows.append([mode, "yes" if r["inference_keywords"] else "no",
                             _fmt(r["kwer"]), _fmt(r["cer"]), r["insertions"],
                             r["deletions"], r["substitutions"]])
        sections.append("## Dataset-bias study\n\n" + _markdown_table(
            ["Mix", "KW@Inference", "KWER", "CER", "Insertions", "Deletions",
             "Substitutions"], rows))
        summary["bias"] = payload["results"]
    md_path = os.path.join(out_dir, "report.md")
    with open(md_path, "w", encoding="utf-8") as f:
        f.write("\n".join(sections))
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return {"report_md": md_path, "report_json": json_path}
