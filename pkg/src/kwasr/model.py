"""Decoder-only transformer with hand-written reverse-mode gradients.

All dense math is plain numpy so a single code path serves the float64
gradient checks and the float32 experiment loop. Blocks are pre-norm with
learned positional embeddings, causal attention, and no dropout. Low-rank
adapters attach to the attention projections only; when they are present
the base weights stay frozen and only adapter weights (plus the audio
projection) receive gradients.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from kwasr.audio import AdapterWeights

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_CKPT_MAGIC = b"KWM1"


class SequenceTooLong(ValueError):
    pass


class EmptyMask(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    n_layers: int
    n_heads: int
    d_model: int
    d_k: int
    d_ff: int
    vocab_size: int = 258
    max_positions: int = 256

    def __post_init__(self):
        for name in ("n_layers", "n_heads", "d_model", "d_k", "d_ff", "vocab_size", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model != self.n_heads * self.d_k:
            raise ValueError("d_model must equal n_heads * d_k")


@dataclass(frozen=True)
class LoraConfig:
    r: int
    alpha: float | None = None  # defaults to 2 * r
    fused_qkv: bool = False

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(2 * self.r))

    @property
    def scale(self) -> float:
        return self.alpha / self.r


def lora_param_count(d_k: int, n_heads: int, d_model: int, r: int, fused: bool) -> int:
    """Low-rank weight count for one attention layer's q/k/v projections.

    Per head, a fused projection shares one input-side factor across q, k
    and v (3*d_k*r + r*d_model) while separate projections pay the input
    factor three times (3 * (d_k*r + r*d_model)). Whole-layer counts are
    per-head counts times n_heads.
    """
    per_head = 3 * d_k * r + r * d_model if fused else 3 * (d_k * r + r * d_model)
    return n_heads * per_head


def trainable_fraction(learnable: int, total: int) -> float:
    """Percentage of learnable weights, reported to 2 decimals."""
    if learnable <= 0 or learnable > total:
        raise ValueError("need 0 < learnable <= total")
    return round(100.0 * learnable / total, 2)


@dataclass
class LoraAdapter:
    """Low-rank update for one layer's attention projections.

    The effective weight is W + (alpha / r) * A @ B. Factors are stored per
    head; ``fused_qkv`` shares one A per head across its q, k and v slices.
    """

    a: np.ndarray
    b: np.ndarray
    r: int
    alpha: float
    fused_qkv: bool

    @classmethod
    def create(cls, config: DecoderConfig, lora: LoraConfig, rng: np.random.Generator,
               dtype=np.float64) -> "LoraAdapter":
        h, d, dk, r = config.n_heads, config.d_model, config.d_k, lora.r
        if lora.fused_qkv:
            a = rng.normal(0.0, 0.02, size=(h, d, r))
            b = np.zeros((h, r, 3 * dk))
        else:
            a = rng.normal(0.0, 0.02, size=(h, 3, d, r))
            b = np.zeros((h, 3, r, dk))
        return cls(a=a.astype(dtype), b=b.astype(dtype), r=r, alpha=lora.alpha,
                   fused_qkv=lora.fused_qkv)

    @property
    def param_count(self) -> int:
        return self.a.size + self.b.size

    def delta_qkv(self) -> np.ndarray:
        """Assembled update in the fused (d_model, 3*d_model) layout."""
        scale = self.alpha / self.r
        if self.fused_qkv:
            dd = scale * np.einsum("hdr,hrc->hdc", self.a, self.b)
            h, d, _ = dd.shape
            dk = dd.shape[2] // 3
            parts = [dd[:, :, i * dk:(i + 1) * dk] for i in range(3)]
        else:
            dd = scale * np.einsum("hpdr,hprc->hpdc", self.a, self.b)
            h, _, d, dk = dd.shape
            parts = [dd[:, i] for i in range(3)]
        blocks = [np.ascontiguousarray(p.transpose(1, 0, 2)).reshape(d, h * dk) for p in parts]
        return np.concatenate(blocks, axis=1)

    def grads_from_qkv(self, g_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Backprop a gradient on the effective weight into the factors."""
        scale = self.alpha / self.r
        d = g_w.shape[0]
        if self.fused_qkv:
            h = self.a.shape[0]
            dk = self.b.shape[2] // 3
        else:
            h = self.a.shape[0]
            dk = self.b.shape[3]
        per_proj = [
            np.ascontiguousarray(
                g_w[:, i * h * dk:(i + 1) * h * dk].reshape(d, h, dk).transpose(1, 0, 2)
            )
            for i in range(3)
        ]
        if self.fused_qkv:
            gd = np.concatenate(per_proj, axis=2)  # (h, d, 3*dk)
            ga = scale * np.einsum("hdc,hrc->hdr", gd, self.b)
            gb = scale * np.einsum("hdr,hdc->hrc", self.a, gd)
        else:
            gd = np.stack(per_proj, axis=1)  # (h, 3, d, dk)
            ga = scale * np.einsum("hpdc,hprc->hpdr", gd, self.b)
            gb = scale * np.einsum("hpdr,hpdc->hprc", self.a, gd)
        return ga, gb


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)

def _ln_backward(dout: np.ndarray, cache, g: np.ndarray):
    xhat, inv = cache
    axes = tuple(range(dout.ndim - 1))
    dg = (dout * xhat).sum(axis=axes)
    db = dout.sum(axis=axes)
    dxhat = dout * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db

def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x * x * x)))

def _gelu_grad(x: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du


class KVCache:
    """Per-layer key/value history for incremental decoding."""

    def __init__(self, model: "DecoderModel", max_len: int):
        cfg = model.config
        self.max_len = max_len
        self.length = 0
        self.keys = [np.zeros((cfg.n_heads, max_len, cfg.d_k), dtype=model.dtype)
                     for _ in range(cfg.n_layers)]
        self.values = [np.zeros((cfg.n_heads, max_len, cfg.d_k), dtype=model.dtype)
                       for _ in range(cfg.n_layers)]
        self.w_eff = [model.effective_qkv(i) for i in range(cfg.n_layers)]


class DecoderModel:
    def __init__(self, config: DecoderConfig, seed: int = 0,
                 lora: LoraConfig | None = None, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.lora_config = lora
        self.adapter: AdapterWeights | None = None
        rng = np.random.default_rng(seed)
        d, ff, v, p = config.d_model, config.d_ff, config.vocab_size, config.max_positions
        res_scale = 0.02 / math.sqrt(2.0 * config.n_layers)
        params: dict[str, np.ndarray] = {
            "tok_emb": rng.normal(0.0, 0.02, size=(v, d)),
            "pos_emb": rng.normal(0.0, 0.01, size=(p, d)),
        }
        for i in range(config.n_layers):
            params[f"l{i}.ln1.g"] = np.ones(d)
            params[f"l{i}.ln1.b"] = np.zeros(d)
            params[f"l{i}.wqkv"] = rng.normal(0.0, 0.02, size=(d, 3 * d))
            params[f"l{i}.wo"] = rng.normal(0.0, res_scale, size=(d, d))
            params[f"l{i}.ln2.g"] = np.ones(d)
            params[f"l{i}.ln2.b"] = np.zeros(d)
            params[f"l{i}.w1"] = rng.normal(0.0, 0.02, size=(d, ff))
            params[f"l{i}.b1"] = np.zeros(ff)
            params[f"l{i}.w2"] = rng.normal(0.0, res_scale, size=(ff, d))
            params[f"l{i}.b2"] = np.zeros(d)
        params["lnf.g"] = np.ones(d)
        params["lnf.b"] = np.zeros(d)
        params["w_out"] = rng.normal(0.0, 0.02, size=(d, v))
        self.params = {k: arr.astype(self.dtype) for k, arr in params.items()}
        self.loras: list[LoraAdapter] | None = None
        if lora is not None:
            self.loras = [LoraAdapter.create(config, lora, rng, self.dtype)
                          for _ in range(config.n_layers)]

    # ---- parameter bookkeeping -------------------------------------------

    def param_count(self) -> int:
        total = sum(a.size for a in self.params.values())
        if self.loras:
            total += sum(la.param_count for la in self.loras)
        if self.adapter is not None:
            total += self.adapter.param_count
        return total

    def trainable_arrays(self) -> dict[str, np.ndarray]:
        """Arrays the optimizer may update; base weights only without LoRA."""
        if self.loras is not None:
            out = {}
            for i, la in enumerate(self.loras):
                out[f"l{i}.lora.a"] = la.a
                out[f"l{i}.lora.b"] = la.b
        else:
            out = dict(self.params)
        if self.adapter is not None:
            out["adapter.w"] = self.adapter.w
        return out

    def effective_qkv(self, i: int) -> np.ndarray:
        w = self.params[f"l{i}.wqkv"]
        if self.loras is not None:
            return w + self.loras[i].delta_qkv().astype(self.dtype)
        return w

    def token_embeddings(self, ids) -> np.ndarray:
        return self.params["tok_emb"][np.asarray(ids, dtype=np.int64)]

    # ---- forward / backward ----------------------------------------------

    def forward(self, embeds: np.ndarray, positions: np.ndarray | None = None,
                want_cache: bool = False):
        """Logits over the vocabulary for a sequence of input embeddings.

        ``embeds`` is (L, d_model) or (B, L, d_model); positions default to
        0..L-1. The returned logits match the input's batchedness.
        """
        squeezed = embeds.ndim == 2
        x_in = embeds[None] if squeezed else embeds
        bsz, seq, d = x_in.shape
        cfg = self.config
        if d != cfg.d_model:
            raise ValueError(f"embedding width {d} != d_model {cfg.d_model}")
        if seq > cfg.max_positions:
            raise SequenceTooLong(f"sequence length {seq} > max_positions {cfg.max_positions}")
        if positions is None:
            positions = np.arange(seq)
        positions = np.asarray(positions, dtype=np.int64)
        if positions.max(initial=0) >= cfg.max_positions:
            raise SequenceTooLong("position index beyond max_positions")

        x = x_in.astype(self.dtype) + self.params["pos_emb"][positions]
        blocked = np.triu(np.ones((seq, seq), dtype=bool), k=1)
        h, dk = cfg.n_heads, cfg.d_k
        inv_sqrt_dk = 1.0 / math.sqrt(dk)
        layer_caches = []
        for i in range(cfg.n_layers):
            p = self.params
            w_eff = self.effective_qkv(i)
            x1, ln1_c = _ln_forward(x, p[f"l{i}.ln1.g"], p[f"l{i}.ln1.b"])
            qkv = x1 @ w_eff
            q = qkv[..., :d].reshape(bsz, seq, h, dk).transpose(0, 2, 1, 3)
            k = qkv[..., d:2 * d].reshape(bsz, seq, h, dk).transpose(0, 2, 1, 3)
            v = qkv[..., 2 * d:].reshape(bsz, seq, h, dk).transpose(0, 2, 1, 3)
            scores = (q @ k.transpose(0, 1, 3, 2)) * inv_sqrt_dk
            scores = np.where(blocked, -np.inf, scores)
            smax = scores.max(axis=-1, keepdims=True)
            attn = np.exp(scores - smax)
            attn /= attn.sum(axis=-1, keepdims=True)
            ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(bsz, seq, d)
            x_att = x + ctx @ p[f"l{i}.wo"]
            x2, ln2_c = _ln_forward(x_att, p[f"l{i}.ln2.g"], p[f"l{i}.ln2.b"])
            h1 = x2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            act = _gelu(h1)
            x = x_att + act @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
            if want_cache:
                layer_caches.append(dict(
                    x1=x1, ln1=ln1_c, q=q, k=k, v=v, attn=attn, ctx=ctx,
                    ln2=ln2_c, x2=x2, h1=h1, act=act, w_eff=w_eff,
                ))
        xf, lnf_c = _ln_forward(x, self.params["lnf.g"], self.params["lnf.b"])
        logits = xf @ self.params["w_out"]
        if not want_cache:
            return logits[0] if squeezed else logits
        cache = dict(layers=layer_caches, xf=xf, lnf=lnf_c, positions=positions,
                     squeezed=squeezed, shape=(bsz, seq, d))
        return (logits[0] if squeezed else logits), cache

    def backward(self, cache: dict, dlogits: np.ndarray):
        """Gradients for model parameters plus the input embeddings.

        Returns (grads, d_embeds). ``grads`` covers every base parameter
        except tok_emb (the caller owns embedding assembly and scatters
        d_embeds itself) and, when LoRA is attached, the factor gradients
        under ``l{i}.lora.a`` / ``l{i}.lora.b``.
        """
        cfg = self.config
        bsz, seq, d = cache["shape"]
        if cache["squeezed"]:
            dlogits = dlogits[None]
        dlogits = dlogits.astype(self.dtype)
        p = self.params
        grads: dict[str, np.ndarray] = {}
        h, dk = cfg.n_heads, cfg.d_k
        inv_sqrt_dk = 1.0 / math.sqrt(dk)

        xf2 = cache["xf"].reshape(-1, d)
        grads["w_out"] = xf2.T @ dlogits.reshape(-1, cfg.vocab_size)
        dxf = dlogits @ p["w_out"].T
        dx, grads["lnf.g"], grads["lnf.b"] = _ln_backward(dxf, cache["lnf"], p["lnf.g"])

        for i in reversed(range(cfg.n_layers)):
            lc = cache["layers"][i]
            # ffn sublayer
            d_out = dx
            d_out2 = d_out.reshape(-1, d)
            grads[f"l{i}.b2"] = d_out2.sum(axis=0)
            grads[f"l{i}.w2"] = lc["act"].reshape(-1, cfg.d_ff).T @ d_out2
            dact = d_out @ p[f"l{i}.w2"].T
            dh1 = dact * _gelu_grad(lc["h1"])
            dh12 = dh1.reshape(-1, cfg.d_ff)
            grads[f"l{i}.b1"] = dh12.sum(axis=0)
            grads[f"l{i}.w1"] = lc["x2"].reshape(-1, d).T @ dh12
            dx2 = dh1 @ p[f"l{i}.w1"].T
            dln2, grads[f"l{i}.ln2.g"], grads[f"l{i}.ln2.b"] = _ln_backward(
                dx2, lc["ln2"], p[f"l{i}.ln2.g"])
            d_att_out = d_out + dln2
            # attention sublayer
            d_att2 = d_att_out.reshape(-1, d)
            grads[f"l{i}.wo"] = lc["ctx"].reshape(-1, d).T @ d_att2
            dctx = (d_att_out @ p[f"l{i}.wo"].T).reshape(bsz, seq, h, dk).transpose(0, 2, 1, 3)
            attn, q, k, v = lc["attn"], lc["q"], lc["k"], lc["v"]
            dattn = dctx @ v.transpose(0, 1, 3, 2)
            dv = attn.transpose(0, 1, 3, 2) @ dctx
            dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
            dq = (dscores @ k) * inv_sqrt_dk
            dk_ = (dscores.transpose(0, 1, 3, 2) @ q) * inv_sqrt_dk
            dqkv = np.concatenate([
                t.transpose(0, 2, 1, 3).reshape(bsz, seq, d) for t in (dq, dk_, dv)
            ], axis=-1)
            dx1 = dqkv @ lc["w_eff"].T
            g_w_eff = lc["x1"].reshape(-1, d).T @ dqkv.reshape(-1, 3 * d)
            grads[f"l{i}.wqkv"] = g_w_eff
            if self.loras is not None:
                ga, gb = self.loras[i].grads_from_qkv(g_w_eff)
                grads[f"l{i}.lora.a"] = ga
                grads[f"l{i}.lora.b"] = gb
            dln1, grads[f"l{i}.ln1.g"], grads[f"l{i}.ln1.b"] = _ln_backward(
                dx1, lc["ln1"], p[f"l{i}.ln1.g"])
            dx = d_att_out + dln1

        gpos = np.zeros_like(p["pos_emb"])
        positions = cache["positions"]
        flat_dx = dx.reshape(-1, d)
        if positions.ndim == 1:
            pos_flat = np.tile(positions, bsz)
        else:
            pos_flat = positions.reshape(-1)
        np.add.at(gpos, pos_flat, flat_dx)
        grads["pos_emb"] = gpos
        d_embeds = dx[0] if cache["squeezed"] else dx
        return grads, d_embeds

    # ---- incremental decoding --------------------------------------------

    def prefill(self, embeds: np.ndarray, max_new: int):
        """Run the prompt once and seed a KV cache for stepping."""
        seq = embeds.shape[0]
        total = seq + max_new
        if total > self.config.max_positions:
            raise SequenceTooLong(
                f"prompt {seq} + generation {max_new} exceeds max_positions "
                f"{self.config.max_positions}")
        kv = KVCache(self, total)
        logits, cache = self.forward(embeds, want_cache=True)
        for i, lc in enumerate(cache["layers"]):
            kv.keys[i][:, :seq] = lc["k"][0]
            kv.values[i][:, :seq] = lc["v"][0]
        kv.length = seq
        return kv, logits[-1]

    def step(self, kv: KVCache, token_id: int) -> np.ndarray:
        """Append one token and return the logits at the new position."""
        cfg = self.config
        pos = kv.length
        if pos >= cfg.max_positions or pos >= kv.max_len:
            raise SequenceTooLong("KV cache exhausted")
        d, h, dk = cfg.d_model, cfg.n_heads, cfg.d_k
        p = self.params
        x = p["tok_emb"][token_id] + p["pos_emb"][pos]
        for i in range(cfg.n_layers):
            x1, _ = _ln_forward(x, p[f"l{i}.ln1.g"], p[f"l{i}.ln1.b"])
            qkv = x1 @ kv.w_eff[i]
            q = qkv[:d].reshape(h, dk)
            kv.keys[i][:, pos] = qkv[d:2 * d].reshape(h, dk)
            kv.values[i][:, pos] = qkv[2 * d:].reshape(h, dk)
            keys = kv.keys[i][:, :pos + 1]
            vals = kv.values[i][:, :pos + 1]
            scores = np.einsum("hd,htd->ht", q, keys) / math.sqrt(dk)
            scores -= scores.max(axis=-1, keepdims=True)
            attn = np.exp(scores)
            attn /= attn.sum(axis=-1, keepdims=True)
            ctx = np.einsum("ht,htd->hd", attn, vals).reshape(d)
            x = x + ctx @ p[f"l{i}.wo"]
            x2, _ = _ln_forward(x, p[f"l{i}.ln2.g"], p[f"l{i}.ln2.b"])
            x = x + _gelu(x2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]) @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
        xf, _ = _ln_forward(x, p["lnf.g"], p["lnf.b"])
        kv.length = pos + 1
        return xf @ p["w_out"]


# ---- losses ---------------------------------------------------------------

def _check_loss_args(logits, token_ids, loss_mask):
    logits = np.asarray(logits)
    token_ids = np.asarray(token_ids, dtype=np.int64)
    loss_mask = np.asarray(loss_mask, dtype=bool)
    if logits.ndim != 2 or len(token_ids) != logits.shape[0] or len(loss_mask) != logits.shape[0]:
        raise ValueError("logits, token_ids and loss_mask must have aligned lengths")
    if not loss_mask.any():
        raise EmptyMask("loss mask selects no positions")
    return logits, token_ids, loss_mask


def transcription_loss(logits: np.ndarray, token_ids: np.ndarray, loss_mask: np.ndarray) -> float:
    """Mean next-token negative log-likelihood over masked positions.

    ``logits[i]`` scores ``token_ids[i]``; positions with a false mask do
    not contribute and their target ids are ignored entirely.
    """
    logits, token_ids, loss_mask = _check_loss_args(logits, token_ids, loss_mask)
    rows = logits[loss_mask].astype(np.float64)
    targets = token_ids[loss_mask]
    m = rows.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(rows - m).sum(axis=1))
    nll = lse - rows[np.arange(len(targets)), targets]
    return float(nll.mean())


def transcription_loss_grad(logits, token_ids, loss_mask):
    """(loss, dlogits) with the gradient zero at masked-out positions."""
    logits, token_ids, loss_mask = _check_loss_args(logits, token_ids, loss_mask)
    rows = logits[loss_mask].astype(np.float64)
    targets = token_ids[loss_mask]
    m = rows.max(axis=1, keepdims=True)
    ex = np.exp(rows - m)
    denom = ex.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    nll = lse - rows[np.arange(len(targets)), targets]
    soft = ex / denom
    soft[np.arange(len(targets)), targets] -= 1.0
    soft /= len(targets)
    dlogits = np.zeros(logits.shape, dtype=np.float64)
    dlogits[loss_mask] = soft
    return float(nll.mean()), dlogits


def z_loss(logits: np.ndarray) -> float:
    """Mean squared log-partition over positions, unscaled.

    The trainer applies its own coefficient; this returns mean(LSE^2) for
    logits shaped (..., vocab).
    """
    arr = np.asarray(logits, dtype=np.float64)
    m = arr.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(arr - m).sum(axis=-1))
    return float((lse * lse).mean())


def z_loss_grad(logits: np.ndarray):
    arr = np.asarray(logits, dtype=np.float64)
    m = arr.max(axis=-1, keepdims=True)
    ex = np.exp(arr - m)
    denom = ex.sum(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(denom[..., 0])
    n = int(np.prod(lse.shape)) if lse.shape else 1
    grad = (2.0 * lse[..., None] / n) * (ex / denom)
    return float((lse * lse).mean()), grad


# ---- checkpoint io ---------------------------------------------------------

def save_model(model: DecoderModel, path: str) -> None:
    """Flat binary checkpoint: magic, JSON header, float64 LE tensors."""
    tensors: list[tuple[str, np.ndarray]] = sorted(model.params.items())
    if model.loras is not None:
        for i, la in enumerate(model.loras):
            tensors.append((f"l{i}.lora.a", la.a))
            tensors.append((f"l{i}.lora.b", la.b))
    if model.adapter is not None:
        tensors.append(("adapter.w", model.adapter.w))
    header = {
        "config": asdict(model.config),
        "lora": asdict(model.lora_config) if model.lora_config else None,
        "dtype": model.dtype.name,
        "adapter_k": model.adapter.k if model.adapter is not None else None,
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, arr in tensors:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str) -> DecoderModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a model checkpoint: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        config = DecoderConfig(**header["config"])
        lora = LoraConfig(**header["lora"]) if header["lora"] else None
        model = DecoderModel(config, seed=0, lora=lora, dtype=np.dtype(header["dtype"]))
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
            arr = arr.astype(model.dtype)
            if name == "adapter.w":
                model.adapter = AdapterWeights(w=arr.copy(), k=header["adapter_k"])
            elif ".lora." in name:
                layer = int(name.split(".")[0][1:])
                la = model.loras[layer]
                if name.endswith(".a"):
                    la.a = arr.copy()
                else:
                    la.b = arr.copy()
            else:
                model.params[name] = arr.copy()
    return model
