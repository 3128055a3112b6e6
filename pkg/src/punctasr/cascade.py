"""Cascade baseline: ASR over unpunctuated labels + a from-scratch
bidirectional Transformer token classifier that restores punctuation.

The classifier reuses the encoder layer primitives from the model module,
swapping the feature projection for a token embedding table and the CTC
heads for a per-token 4-class softmax ({O, COMMA, PERIOD, QUESTION}).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as m
from .corpus import TranscriptPair, apply_punct_classes, derive_punct_classes
from .vocab import PUNCT_CLASSES, Vocab

Params = Dict[str, np.ndarray]

CLASS_INDEX = {c: i for i, c in enumerate(PUNCT_CLASSES)}
N_CLASSES = len(PUNCT_CLASSES)


@dataclass(frozen=True)
class ClassifierConfig:
    vocab_size: int
    layers: int = 2
    hidden: int = 32
    heads: int = 2
    ff: int = 64
    max_positions: int = 256

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "layers": self.layers,
            "hidden": self.hidden, "heads": self.heads, "ff": self.ff,
            "max_positions": self.max_positions,
        }


def classifier_shapes(cfg: ClassifierConfig) -> Dict[str, Tuple[int, ...]]:
    h, f = cfg.hidden, cfg.ff
    shapes: Dict[str, Tuple[int, ...]] = {"embed.W": (cfg.vocab_size, h)}
    for i in range(cfg.layers):
        p = f"layer{i}"
        shapes[f"{p}.ln1.g"] = (h,)
        shapes[f"{p}.ln1.b"] = (h,)
        for w in ("Wq", "Wk", "Wv", "Wo"):
            shapes[f"{p}.attn.{w}"] = (h, h)
        for b in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{b}"] = (h,)
        shapes[f"{p}.ln2.g"] = (h,)
        shapes[f"{p}.ln2.b"] = (h,)
        shapes[f"{p}.ff.W1"] = (h, f)
        shapes[f"{p}.ff.b1"] = (f,)
        shapes[f"{p}.ff.W2"] = (f, h)
        shapes[f"{p}.ff.b2"] = (h,)
    shapes["head.ln.g"] = (h,)
    shapes["head.ln.b"] = (h,)
    shapes["head.W"] = (h, N_CLASSES)
    shapes["head.b"] = (N_CLASSES,)
    return shapes


def init_classifier(cfg: ClassifierConfig, seed: int) -> Params:
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in classifier_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("W") or leaf == "E":
            params[name] = m._xavier(rng, shape[0], shape[1])
        elif leaf == "g":
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def classifier_forward(
    params: Params,
    cfg: ClassifierConfig,
    token_seqs: Sequence[Sequence[int]],
    train_mode: bool = False,
):
    """Log class probabilities per token, shape (B, Tmax, 4), plus lengths."""
    lengths = [len(s) for s in token_seqs]
    B, Tm = len(token_seqs), max(lengths)
    ids = np.zeros((B, Tm), dtype=np.int64)
    mask = np.zeros((B, Tm), dtype=bool)
    for i, s in enumerate(token_seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    h = params["embed.W"][ids]
    if Tm > cfg.max_positions:
        raise ValueError("sequence exceeds positional table")
    h = h + m.sinusoidal_table(cfg.max_positions, cfg.hidden)[:Tm]

    layer_caches = []
    for i in range(cfg.layers):
        pfx = f"layer{i}"
        n1, c1 = m._layernorm_fwd(h, params[f"{pfx}.ln1.g"], params[f"{pfx}.ln1.b"])
        a, ca = m._attention_fwd(n1, params, f"{pfx}.attn", cfg.heads, mask)
        h1 = h + a
        n2, c2 = m._layernorm_fwd(h1, params[f"{pfx}.ln2.g"], params[f"{pfx}.ln2.b"])
        f, cf = m._ff_fwd(n2, params, f"{pfx}.ff")
        h = h1 + f
        layer_caches.append((c1, ca, c2, cf))
    logp, head_cache = m._head_fwd(h, params, "head")
    cache = (ids, mask, layer_caches, head_cache) if train_mode else None
    return logp, lengths, cache


def classifier_backward(
    params: Params,
    cfg: ClassifierConfig,
    cache,
    dlogp: np.ndarray,
) -> Params:
    ids, mask, layer_caches, head_cache = cache
    grads: Params = {k: np.zeros_like(v) for k, v in params.items()}
    dh = m._head_bwd(dlogp, head_cache, params, "head", grads)
    for i in range(cfg.layers - 1, -1, -1):
        pfx = f"layer{i}"
        c1, ca, c2, cf = layer_caches[i]
        dn2 = m._ff_bwd(dh, cf, params, f"{pfx}.ff", grads)
        dh1, dg, db = m._layernorm_bwd(dn2, c2)
        grads[f"{pfx}.ln2.g"] += dg
        grads[f"{pfx}.ln2.b"] += db
        dh1 = dh1 + dh
        dn1 = m._attention_bwd(dh1, ca, params, f"{pfx}.attn", cfg.heads, grads)
        dx, dg, db = m._layernorm_bwd(dn1, c1)
        grads[f"{pfx}.ln1.g"] += dg
        grads[f"{pfx}.ln1.b"] += db
        dh = dx + dh1
    np.add.at(grads["embed.W"], ids.ravel(), dh.reshape(-1, cfg.hidden))
    return grads


def ce_loss(logits: np.ndarray, targets: Sequence[int]) -> float:
    """Mean one-hot cross-entropy over tokens; probabilities via row softmax."""
    if logits.shape[0] != len(targets):
        raise ValueError(f"{logits.shape[0]} logit rows for {len(targets)} targets")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    idx = np.asarray(targets, dtype=np.int64)
    return float(-logp[np.arange(len(idx)), idx].mean())


def ce_grad(logits: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """d(ce_loss)/d(logits) = (softmax - onehot) / N."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=-1, keepdims=True)
    idx = np.asarray(targets, dtype=np.int64)
    g = p
    g[np.arange(len(idx)), idx] -= 1.0
    return g / len(idx)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0


def classifier_targets(pairs: Sequence[TranscriptPair], vocab: Vocab):
    """(y_unpnct, class index sequence) training pairs from ground truth."""
    data = []
    for p in pairs:
        classes = derive_punct_classes(p.y_pnct, vocab)
        data.append((p.y_unpnct, [CLASS_INDEX[c] for c in classes]))
    return data


def train_classifier(
    pairs: Sequence[TranscriptPair],
    vocab: Vocab,
    cfg: ClassifierConfig,
    train_cfg: ClassifierTrainConfig,
) -> Params:
    from .training import AdamState, adam_step, AdamConfig  # avoid import cycle

    data = classifier_targets(pairs, vocab)
    params = init_classifier(cfg, train_cfg.seed)
    state = AdamState.for_params(params)
    adam = AdamConfig(lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    order = np.arange(len(data))
    for _ in range(train_cfg.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [data[i] for i in order[start : start + train_cfg.batch_size]]
            seqs = [b[0] for b in batch]
            logp, lengths, cache = classifier_forward(params, cfg, seqs, train_mode=True)
            # dlogp at the log-softmax output: -onehot / n_tokens per utterance
            dlogp = np.zeros_like(logp)
            for i, (_, tgt) in enumerate(batch):
                for t, c in enumerate(tgt):
                    dlogp[i, t, c] = -1.0 / (len(tgt) * len(batch))
            grads = classifier_backward(params, cfg, cache, dlogp)
            adam_step(params, grads, state, adam)
    return params


def classify(params: Params, cfg: ClassifierConfig, y_unpnct: Sequence[int]) -> List[str]:
    if len(y_unpnct) == 0:
        return []
    logp, lengths, _ = classifier_forward(params, cfg, [list(y_unpnct)])
    idx = np.argmax(logp[0, : lengths[0]], axis=-1)
    return [PUNCT_CLASSES[i] for i in idx]


def classifier_accuracy(
    params: Params, cfg: ClassifierConfig, pairs: Sequence[TranscriptPair], vocab: Vocab
) -> float:
    correct = total = 0
    for p in pairs:
        if not p.y_unpnct:
            continue
        pred = classify(params, cfg, p.y_unpnct)
        gold = derive_punct_classes(p.y_pnct, vocab)
        correct += sum(1 for a, b in zip(pred, gold) if a == b)
        total += len(gold)
    return correct / max(1, total)


def cascade_infer(
    asr_params: Params,
    asr_cfg: "m.ModelConfig",
    clf_params: Params,
    clf_cfg: ClassifierConfig,
    x: np.ndarray,
    vocab: Vocab,
) -> List[int]:
    """Greedy ASR decode, punctuation classification, mark insertion.

    The ASR final head is over the unpunctuated vocabulary; the returned
    sequence is over the punctuated one.
    """
    from .ctc import greedy_decode

    out = m.forward(asr_params, asr_cfg, [x])
    hyp_unpnct = greedy_decode(out.final_lattice(0))
    if not hyp_unpnct:
        return []
    classes = classify(clf_params, clf_cfg, hyp_unpnct)
    return apply_punct_classes(hyp_unpnct, classes, vocab)
