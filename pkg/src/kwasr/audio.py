"""Synthetic acoustic features, frame stacking, and the model-space adapter.

A transcription maps to one frame per code symbol: a one-hot row of width
``alphabet_size`` plus i.i.d. Gaussian noise. Homonyms share codes, so
their feature sequences are identical in distribution and nothing in the
audio can tell their surfaces apart. Stacking concatenates k consecutive
frames (zero-padded tail) and a bias-free linear map projects stacked
frames into the decoder embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kwasr.lexicon import SyntheticLexicon, UnknownWord

__all__ = [
    "FeatureSequence",
    "AdapterWeights",
    "DimensionMismatch",
    "UnknownWord",
    "synth_features",
    "stack_frames",
    "project",
]


class DimensionMismatch(ValueError):
    pass


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T, d_audio) float64

    @property
    def d_audio(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class AdapterWeights:
    """Bias-free projection from stacked frames to embedding space."""

    w: np.ndarray  # (k * d_audio, d_model)
    k: int = 4

    @property
    def param_count(self) -> int:
        return self.w.size

    @classmethod
    def create(cls, d_audio: int, d_model: int, k: int = 4, seed: int = 0,
               scale: float = 0.2, dtype=np.float64) -> "AdapterWeights":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, scale, size=(k * d_audio, d_model)).astype(dtype)
        return cls(w=w, k=k)


def synth_features(
    transcription: str,
    lexicon: SyntheticLexicon,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> FeatureSequence:
    """Render a transcription as one noisy one-hot frame per code symbol.

    The transcription must segment into lexicon surfaces (whitespace
    delimited, or greedy longest-match for unspaced text); otherwise
    UnknownWord is raised. noise_sigma=0 gives exact one-hots, so homonym
    surfaces produce bit-identical features.
    """
    words = lexicon.segment(transcription)
    symbols = [s for w in words for s in lexicon.code_of(w)]
    frames = np.zeros((len(symbols), lexicon.alphabet_size), dtype=np.float64)
    frames[np.arange(len(symbols)), symbols] = 1.0
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        frames += rng.normal(0.0, noise_sigma, size=frames.shape)
    return FeatureSequence(frames=frames)


def stack_frames(fs: FeatureSequence, k: int = 4) -> np.ndarray:
    """Group every k frames into one row of width k * d_audio.

    Output length is ceil(T / k); the final group is zero-padded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    t, d = fs.frames.shape
    out_len = -(-t // k)
    padded = np.zeros((out_len * k, d), dtype=fs.frames.dtype)
    padded[:t] = fs.frames
    return padded.reshape(out_len, k * d)


def project(stacked: np.ndarray, aw: AdapterWeights) -> np.ndarray:
    """Map stacked frames (T', k*d_audio) to embeddings (T', d_model)."""
    if stacked.ndim != 2 or stacked.shape[1] != aw.w.shape[0]:
        raise DimensionMismatch(
            f"stacked width {stacked.shape} does not match adapter input {aw.w.shape[0]}"
        )
    return stacked @ aw.w
