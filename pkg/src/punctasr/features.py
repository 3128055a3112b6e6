"""Synthetic acoustic feature sequences with prosody-like punctuation cues.

Each word contributes a few noisy copies of a fixed prototype vector.
Each punctuation mark contributes low-energy "pause" frames whose last
channel carries a class-dependent cue value, so punctuation has an
acoustic correlate the end-to-end model can exploit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .vocab import COMMA, PERIOD, QUESTION, Vocab

# Cue-channel levels for pause frames, one per mark. The levels sit close
# together on purpose: under feature noise the cue mostly signals "pause
# here", and the mark class has to come from the word context.
PAUSE_CUE = {COMMA: 1.0, PERIOD: 1.15, QUESTION: 1.3}


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 16
    frames_per_word: Tuple[int, int] = (2, 4)  # inclusive range
    pause_frames: Dict[str, Tuple[int, int]] = field(
        default_factory=lambda: {COMMA: (2, 3), PERIOD: (3, 4), QUESTION: (3, 4)}
    )
    noise_std: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        if self.dim < 2:
            raise ValueError("need dim >= 2 (one channel is the pause cue)")
        lo, hi = self.frames_per_word
        if not 1 <= lo <= hi:
            raise ValueError("empty frames_per_word range")
        for mark, (plo, phi) in self.pause_frames.items():
            if mark not in PAUSE_CUE:
                raise ValueError(f"unknown mark {mark!r}")
            if not 1 <= plo <= phi:
                raise ValueError("empty pause_frames range")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def word_prototypes(vocab: Vocab, cfg: SynthConfig) -> np.ndarray:
    """Unit-norm prototype per vocabulary entry; cue channel kept at zero.

    Drawn once per vocabulary from a seeded spherical distribution so runs
    are reproducible from the manifest.
    """
    rng = np.random.default_rng(cfg.rng_seed + 7919)
    protos = rng.standard_normal((vocab.size, cfg.dim - 1))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    out = np.zeros((vocab.size, cfg.dim))
    out[:, : cfg.dim - 1] = protos
    return out


def synthesize(
    y_pnct: Sequence[int],
    vocab: Vocab,
    cfg: SynthConfig,
    protos: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Render one transcript to a T x d feature matrix."""
    cfg.validate()
    if len(y_pnct) == 0:
        raise ValueError("cannot synthesize an empty transcript")
    lo, hi = cfg.frames_per_word
    rows: List[np.ndarray] = []
    for tok in y_pnct:
        if vocab.is_punct(tok):
            mark = vocab.tokens[tok]
            plo, phi = cfg.pause_frames[mark]
            n = int(rng.integers(plo, phi + 1))
            frames = np.zeros((n, cfg.dim))
            frames[:, -1] = PAUSE_CUE[mark]
        else:
            n = int(rng.integers(lo, hi + 1))
            frames = np.tile(protos[tok], (n, 1))
        if cfg.noise_std > 0:
            frames = frames + cfg.noise_std * rng.standard_normal(frames.shape)
        rows.append(frames)
    return np.concatenate(rows, axis=0)


def mask_augment(
    x: np.ndarray,
    time_masks: int,
    freq_masks: int,
    max_width: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """SpecAugment-style masking: zero random time spans and channel bands."""
    out = x.copy()
    T, d = out.shape
    for _ in range(time_masks):
        w = int(rng.integers(0, min(max_width, T - 1) + 1))
        if w == 0:
            continue
        t0 = int(rng.integers(0, T - w + 1))
        out[t0 : t0 + w, :] = 0.0
    for _ in range(freq_masks):
        w = int(rng.integers(0, min(max_width, d - 1) + 1))
        if w == 0:
            continue
        c0 = int(rng.integers(0, d - w + 1))
        out[:, c0 : c0 + w] = 0.0
    return out


def normalization_stats(features: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Global per-channel mean/std over the training split."""
    stacked = np.concatenate(list(features), axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


def normalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


_HEADER = struct.Struct("<II")


def save_features(path: Path, x: np.ndarray) -> None:
    """Flat binary: little-endian uint32 (T, d) header, float32 rows."""
    T, d = x.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(T, d))
        f.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def load_features(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        T, d = _HEADER.unpack(f.read(_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != T * d:
        raise ValueError(f"feature file {path} truncated")
    return data.reshape(T, d).astype(np.float64)
