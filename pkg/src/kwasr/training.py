"""AdamW optimization, LR policy, mini-batching, and the epoch driver.

The driver consumes pre-assembled examples (token layout and loss masks
from the prompting module, projected audio frames from the audio module)
and updates whatever the model reports as trainable: the full parameter
set for scratch training, or adapter + low-rank factors when the base is
frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from kwasr import _kernels
from kwasr.model import DecoderModel, transcription_loss_grad, z_loss_grad
from kwasr.prompts import TrainExample


class NonFiniteGradient(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    base_lr: float
    per_device_batch: int
    device_count: int = 1
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    # No published value for weight decay; 0.01 is this lab's default.
    weight_decay: float = 0.01
    warmup_frac: float = 0.01
    z_loss_coef: float = 0.0
    batch_policy: str = "random_shuffle"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must be in (0, 1)")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta2 must be in (0, 1)")
        if self.batch_policy not in ("random_shuffle", "length_grouped"):
            raise ValueError(f"unknown batch_policy {self.batch_policy!r}")
        if self.per_device_batch < 1 or self.device_count < 1:
            raise ValueError("batch and device counts must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.per_device_batch * self.device_count

    @property
    def lr_max(self) -> float:
        return scaled_lr(self.base_lr, self.per_device_batch, self.device_count)


def scaled_lr(base_lr: float, per_device_batch: int, device_count: int) -> float:
    """Square-root batch-size scaling: base_lr * sqrt(global batch)."""
    if base_lr <= 0 or per_device_batch <= 0 or device_count <= 0:
        raise ValueError("scaled_lr inputs must be positive")
    return base_lr * math.sqrt(per_device_batch * device_count)


def schedule_lr(step: int, total_steps: int, warmup_frac: float, lr_max: float) -> float:
    """Linear warmup to lr_max, then cosine annealing to exactly 0."""
    if not 0 <= step <= total_steps:
        raise ValueError("need 0 <= step <= total_steps")
    warm = math.ceil(warmup_frac * total_steps)
    if warm < 1:
        warm = 1
    if step < warm:
        return lr_max * step / warm
    if total_steps == warm:
        return lr_max
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * (step - warm) / (total_steps - warm)))


class AdamWState:
    """First/second moment buffers keyed like the trainable arrays."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.t = 0
        self.m = {k: np.zeros_like(a, dtype=np.float64) for k, a in arrays.items()}
        self.v = {k: np.zeros_like(a, dtype=np.float64) for k, a in arrays.items()}


def adamw_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 state: AdamWState, lr: float, config: OptimizerConfig) -> None:
    """One in-place AdamW step over every array in ``params``.

    Decoupled weight decay multiplies parameters by (1 - lr*wd) before the
    moment update. A non-finite gradient anywhere refuses the whole step,
    leaving parameters and state untouched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {name!r}")
    t = state.t + 1
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        if config.weight_decay != 0.0:
            p *= np.asarray(1.0 - lr * config.weight_decay, dtype=p.dtype)
        if p.dtype == np.float64:
            _kernels.adamw_step(p.reshape(-1), g, state.m[name].reshape(-1),
                                state.v[name].reshape(-1), lr, config.beta1,
                                config.beta2, config.eps, bc1, bc2)
        else:
            # Master copy trick is overkill at desk scale; step in f64 and
            # cast back so moments stay full precision.
            flat = p.reshape(-1).astype(np.float64)
            _kernels.adamw_step(flat, g, state.m[name].reshape(-1),
                                state.v[name].reshape(-1), lr, config.beta1,
                                config.beta2, config.eps, bc1, bc2)
            p.reshape(-1)[:] = flat.astype(p.dtype)
    state.t = t


def make_batches(dataset: list, policy: str, per_device_batch: int,
                 device_count: int, seed: int) -> list[list[int]]:
    """Index batches covering the dataset exactly once.

    random_shuffle chunks a seeded permutation. length_grouped sorts a
    shuffled index list by example length (so near-equal lengths land in
    the same batch), chunks, then shuffles batch order; it exists to
    reproduce an instability study and is not the recommended policy.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if policy not in ("random_shuffle", "length_grouped"):
        raise ValueError(f"unknown batch policy {policy!r}")
    size = per_device_batch * device_count
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    if policy == "length_grouped":
        lengths = np.array([_example_len(dataset[i]) for i in order])
        order = order[np.argsort(lengths, kind="stable")]
    batches = [order[i:i + size].tolist() for i in range(0, len(order), size)]
    if policy == "length_grouped":
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _example_len(item) -> int:
    if hasattr(item, "example"):
        return item.example.seq_len
    if hasattr(item, "seq_len"):
        return item.seq_len
    return len(item)


@dataclass(frozen=True)
class TrainItem:
    """One training utterance: stacked audio frames plus its token layout."""

    id: str
    stacked: np.ndarray  # (rows, k * d_audio)
    example: TrainExample


@dataclass
class TrainingLog:
    entries: list[dict] = field(default_factory=list)

    def record(self, step: int, loss: float, lr: float, grad_norm: float, spike: bool) -> None:
        self.entries.append({
            "step": step, "loss": float(loss), "lr": float(lr),
            "grad_norm": float(grad_norm), "spike": bool(spike),
        })

    def to_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(json.dumps(e, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str) -> "TrainingLog":
        log = cls()
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    log.entries.append(json.loads(line))
        return log


_LOG_KEYS = {"step": int, "loss": float, "lr": float, "grad_norm": float, "spike": bool}


def validate_log_entry(entry: dict) -> None:
    """Schema check for one log line; raises ValueError with the bad field."""
    if set(entry) != set(_LOG_KEYS):
        raise ValueError(f"log entry keys {sorted(entry)} != {sorted(_LOG_KEYS)}")
    for key, typ in _LOG_KEYS.items():
        val = entry[key]
        if typ is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        else:
            ok = isinstance(val, typ)
        if not ok:
            raise ValueError(f"log field {key!r} has type {type(val).__name__}")


def _batch_forward_backward(model: DecoderModel, items: list[TrainItem],
                            z_coef: float):
    """Loss and trainable-array gradients for one padded batch.

    Each row's input sequence is [start token] ++ audio frames ++ text
    tokens (final end token excluded from inputs); the logits at the
    position holding element j score element j+1. Rows are padded at the
    end, which causal attention keeps out of every real position.
    """
    adapter = model.adapter
    if adapter is None:
        raise ValueError("model has no audio adapter attached")
    bsz = len(items)
    # seq_len counts start token + audio rows + text tokens; inputs drop
    # the final end token.
    in_lens = [it.example.seq_len - 1 for it in items]
    max_len = max(in_lens)
    d = model.config.d_model
    embeds = np.zeros((bsz, max_len, d), dtype=model.dtype)
    proj_cache = []
    for r, it in enumerate(items):
        a = len(it.stacked)
        stacked = it.stacked.astype(model.dtype)
        embeds[r, 0] = model.params["tok_emb"][it.example.token_ids[0]]
        embeds[r, 1:1 + a] = stacked @ adapter.w
        embeds[r, 1 + a:in_lens[r]] = model.token_embeddings(it.example.token_ids[1:-1])
        proj_cache.append(stacked)

    logits, cache = model.forward(embeds, want_cache=True)
    rows_idx, pos_idx, target_ids = [], [], []
    for r, it in enumerate(items):
        a = len(it.stacked)
        mask = it.example.loss_mask
        for j in np.flatnonzero(mask):
            rows_idx.append(r)
            pos_idx.append(a + j - 1)
            target_ids.append(it.example.token_ids[j])
    rows_idx = np.array(rows_idx)
    pos_idx = np.array(pos_idx)
    target_ids = np.array(target_ids)
    picked = logits[rows_idx, pos_idx]
    all_on = np.ones(len(target_ids), dtype=bool)
    loss, dpicked = transcription_loss_grad(picked, target_ids, all_on)
    if z_coef:
        zl, zg = z_loss_grad(picked)
        loss += z_coef * zl
        dpicked = dpicked + z_coef * zg
    dlogits = np.zeros(logits.shape, dtype=np.float64)
    np.add.at(dlogits, (rows_idx, pos_idx), dpicked)
    grads, d_embeds = model.backward(cache, dlogits)

    if model.loras is not None:
        grads = {k: v for k, v in grads.items() if ".lora." in k}
    # Input-side gradients: audio rows flow into the adapter; token rows
    # would flow into tok_emb, which trains only in full-model mode.
    g_adapter = np.zeros_like(adapter.w, dtype=np.float64)
    g_tok = None
    if model.loras is None:
        g_tok = np.zeros_like(model.params["tok_emb"], dtype=np.float64)
    for r, it in enumerate(items):
        a = len(it.stacked)
        g_adapter += proj_cache[r].astype(np.float64).T @ d_embeds[r, 1:1 + a]
        if g_tok is not None:
            g_tok[it.example.token_ids[0]] += d_embeds[r, 0]
            np.add.at(g_tok, it.example.token_ids[1:-1], d_embeds[r, 1 + a:in_lens[r]])
    grads["adapter.w"] = g_adapter
    if g_tok is not None:
        grads["tok_emb"] = g_tok
    return loss, grads


def fit(train_set, model: DecoderModel, optimizer_config: OptimizerConfig,
        epochs: int = 1, total_steps: int | None = None,
        log_path: str | None = None) -> TrainingLog:
    """Optimize the model's trainable arrays over the training set.

    ``train_set`` is a list of TrainItem or a callable epoch -> list (for
    mixes resampled per epoch). The LR follows warmup + cosine over the
    full run; batches reshuffle each epoch from config.seed + epoch. A
    step whose loss exceeds 3x the trailing-50-step median is flagged as a
    spike in the log.
    """
    cfg = optimizer_config
    resolve = train_set if callable(train_set) else (lambda epoch: train_set)
    first = resolve(0)
    if not first:
        raise ValueError("training set is empty")
    if total_steps is None:
        per_epoch = math.ceil(len(first) / cfg.batch_size)
        total_steps = per_epoch * epochs
    arrays = model.trainable_arrays()
    state = AdamWState(arrays)
    log = TrainingLog()
    lr_max = cfg.lr_max
    recent: list[float] = []
    step = 0
    for epoch in range(epochs):
        items = first if epoch == 0 else resolve(epoch)
        batches = make_batches(items, cfg.batch_policy, cfg.per_device_batch,
                               cfg.device_count, cfg.seed + epoch)
        for batch in batches:
            lr = schedule_lr(step, total_steps, cfg.warmup_frac, lr_max)
            loss, grads = _batch_forward_backward(
                model, [items[i] for i in batch], cfg.z_loss_coef)
            try:
                adamw_update(arrays, grads, state, lr, cfg)
            except NonFiniteGradient as exc:
                raise NonFiniteGradient(f"step {step}: {exc}") from exc
            gnorm = math.sqrt(sum(float((np.asarray(g, dtype=np.float64) ** 2).sum())
                                  for g in grads.values()))
            window = recent[-50:]
            spike = bool(window) and loss > 3.0 * float(np.median(window))
            log.record(step, loss, lr, gnorm, spike)
            recent.append(loss)
            step += 1
    if log_path is not None:
        log.to_jsonl(log_path)
    return log
