"""Small Transformer encoder with two CTC heads and exact reverse-mode
gradients, implemented directly in numpy.

Layout per utterance: strided frame decimation -> linear input projection +
sinusoidal positions -> pre-norm residual encoder layers -> log-softmax heads
at the tap layer (mid head) and the last layer (final head). Parameters live
in a flat name -> array dict so the optimizer, checkpointing, and
finite-difference checks can treat them uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

Params = Dict[str, np.ndarray]

_LN_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 6
    hidden: int = 64
    heads: int = 4
    ff: int = 128
    input_dim: int = 16
    stride: int = 2
    vocab_final: int = 34
    vocab_mid: int = 31
    tap_layer: int = 0  # 0 -> floor(layers / 2)
    use_positional: bool = True
    max_positions: int = 512

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one encoder layer")
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not 0 <= self.tap_layer <= self.layers:
            raise ValueError("tap_layer outside [1, layers]")
        if self.tap_layer == 0 and self.layers < 2:
            raise ValueError("implied mid tap needs at least two layers")

    @property
    def tap(self) -> int:
        return self.tap_layer if self.tap_layer else self.layers // 2

    def to_dict(self) -> dict:
        return {
            "layers": self.layers, "hidden": self.hidden, "heads": self.heads,
            "ff": self.ff, "input_dim": self.input_dim, "stride": self.stride,
            "vocab_final": self.vocab_final, "vocab_mid": self.vocab_mid,
            "tap_layer": self.tap_layer, "use_positional": self.use_positional,
            "max_positions": self.max_positions,
        }


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def param_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    h, f = cfg.hidden, cfg.ff
    shapes: Dict[str, Tuple[int, ...]] = {
        "in_proj.W": (cfg.input_dim, h),
        "in_proj.b": (h,),
    }
    for i in range(cfg.layers):
        p = f"layer{i}"
        shapes[f"{p}.ln1.g"] = (h,)
        shapes[f"{p}.ln1.b"] = (h,)
        for m in ("Wq", "Wk", "Wv", "Wo"):
            shapes[f"{p}.attn.{m}"] = (h, h)
        for m in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{m}"] = (h,)
        shapes[f"{p}.ln2.g"] = (h,)
        shapes[f"{p}.ln2.b"] = (h,)
        shapes[f"{p}.ff.W1"] = (h, f)
        shapes[f"{p}.ff.b1"] = (f,)
        shapes[f"{p}.ff.W2"] = (f, h)
        shapes[f"{p}.ff.b2"] = (h,)
    for name, v in (("head_final", cfg.vocab_final), ("head_mid", cfg.vocab_mid)):
        shapes[f"{name}.ln.g"] = (h,)
        shapes[f"{name}.ln.b"] = (h,)
        shapes[f"{name}.W"] = (h, v)
        shapes[f"{name}.b"] = (v,)
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> Params:
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("W"):
            params[name] = _xavier(rng, shape[0], shape[1])
        elif leaf == "g":
            params[name] = np.ones(shape)
        else:  # biases and ln shifts start at zero
            params[name] = np.zeros(shape)
    return params


def count_params(params: Params) -> int:
    return int(sum(p.size for p in params.values()))


def sinusoidal_table(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / dim)
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def subsample(x: np.ndarray, stride: int) -> np.ndarray:
    """Strided frame decimation; output length ceil(T / stride)."""
    return x[::stride]


# ---------------------------------------------------------------------------
# layer primitives (batched, shape (B, T, ...)); each returns (out, cache)


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def _layernorm_bwd(dy, cache):
    xhat, inv, g = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _attention_fwd(x, p, prefix, heads, key_mask):
    B, T, H = x.shape
    dh = H // heads

    def split(z):
        return z.reshape(B, T, heads, dh).transpose(0, 2, 1, 3)

    q = split(x @ p[f"{prefix}.Wq"] + p[f"{prefix}.bq"])
    k = split(x @ p[f"{prefix}.Wk"] + p[f"{prefix}.bk"])
    v = split(x @ p[f"{prefix}.Wv"] + p[f"{prefix}.bv"])
    scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh)
    if key_mask is not None:
        scores = np.where(key_mask[:, None, None, :], scores, -1e30)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = attn @ v  # (B, heads, T, dh)
    merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, H)
    out = merged @ p[f"{prefix}.Wo"] + p[f"{prefix}.bo"]
    return out, (x, q, k, v, attn, merged)


def _attention_bwd(dout, cache, p, prefix, heads, grads):
    x, q, k, v, attn, merged = cache
    B, T, H = x.shape
    dh = H // heads

    grads[f"{prefix}.Wo"] += merged.reshape(-1, H).T @ dout.reshape(-1, H)
    grads[f"{prefix}.bo"] += dout.sum(axis=(0, 1))
    dmerged = dout @ p[f"{prefix}.Wo"].T
    dctx = dmerged.reshape(B, T, heads, dh).transpose(0, 2, 1, 3)

    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores /= math.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    def merge(z):
        return z.transpose(0, 2, 1, 3).reshape(B, T, H)

    dx = np.zeros_like(x)
    for name, dz in (("Wq", merge(dq)), ("Wk", merge(dk)), ("Wv", merge(dv))):
        grads[f"{prefix}.{name}"] += x.reshape(-1, H).T @ dz.reshape(-1, H)
        grads[f"{prefix}.b{name[1]}"] += dz.sum(axis=(0, 1))
        dx += dz @ p[f"{prefix}.{name}"].T
    return dx


def _ff_fwd(x, p, prefix):
    h1 = x @ p[f"{prefix}.W1"] + p[f"{prefix}.b1"]
    a1 = np.maximum(h1, 0.0)
    out = a1 @ p[f"{prefix}.W2"] + p[f"{prefix}.b2"]
    return out, (x, h1, a1)


def _ff_bwd(dout, cache, p, prefix, grads):
    x, h1, a1 = cache
    F = a1.shape[-1]
    H = x.shape[-1]
    grads[f"{prefix}.W2"] += a1.reshape(-1, F).T @ dout.reshape(-1, H)
    grads[f"{prefix}.b2"] += dout.sum(axis=(0, 1))
    da1 = dout @ p[f"{prefix}.W2"].T
    dh1 = da1 * (h1 > 0)
    grads[f"{prefix}.W1"] += x.reshape(-1, H).T @ dh1.reshape(-1, F)
    grads[f"{prefix}.b1"] += dh1.sum(axis=(0, 1))
    return dh1 @ p[f"{prefix}.W1"].T


def _head_fwd(x, p, prefix):
    normed, ln_cache = _layernorm_fwd(x, p[f"{prefix}.ln.g"], p[f"{prefix}.ln.b"])
    logits = normed @ p[f"{prefix}.W"] + p[f"{prefix}.b"]
    m = logits.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))
    logp = logits - lse
    return logp, (normed, ln_cache, logp)


def _head_bwd(dlogp, cache, p, prefix, grads):
    normed, ln_cache, logp = cache
    dlogits = dlogp - np.exp(logp) * dlogp.sum(axis=-1, keepdims=True)
    H = normed.shape[-1]
    V = dlogits.shape[-1]
    grads[f"{prefix}.W"] += normed.reshape(-1, H).T @ dlogits.reshape(-1, V)
    grads[f"{prefix}.b"] += dlogits.sum(axis=(0, 1))
    dnormed = dlogits @ p[f"{prefix}.W"].T
    dx, dg, db = _layernorm_bwd(dnormed, ln_cache)
    grads[f"{prefix}.ln.g"] += dg
    grads[f"{prefix}.ln.b"] += db
    return dx


# ---------------------------------------------------------------------------


@dataclass
class ForwardOutputs:
    final_logp: np.ndarray       # (B, T', vocab_final)
    mid_logp: np.ndarray         # (B, T', vocab_mid)
    lengths: List[int]           # valid subsampled frames per item
    cache: Optional[tuple] = None

    def final_lattice(self, i: int) -> np.ndarray:
        return self.final_logp[i, : self.lengths[i]]

    def mid_lattice(self, i: int) -> np.ndarray:
        return self.mid_logp[i, : self.lengths[i]]


def forward(
    params: Params,
    cfg: ModelConfig,
    xs: Sequence[np.ndarray],
    train_mode: bool = False,
) -> ForwardOutputs:
    """Run a batch of feature sequences; pads to the longest item."""
    for x in xs:
        if x.shape[1] != cfg.input_dim:
            raise ValueError(f"feature dim {x.shape[1]} != config {cfg.input_dim}")
    subs = [subsample(x, cfg.stride) for x in xs]
    lengths = [s.shape[0] for s in subs]
    B, Tm = len(subs), max(lengths)
    xb = np.zeros((B, Tm, cfg.input_dim))
    mask = np.zeros((B, Tm), dtype=bool)
    for i, s in enumerate(subs):
        xb[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True

    h = xb @ params["in_proj.W"] + params["in_proj.b"]
    if cfg.use_positional:
        if Tm > cfg.max_positions:
            raise ValueError(f"sequence of {Tm} frames exceeds positional table")
        h = h + sinusoidal_table(cfg.max_positions, cfg.hidden)[:Tm]

    layer_caches = []
    mid_state = None
    for i in range(cfg.layers):
        pfx = f"layer{i}"
        n1, ln1_cache = _layernorm_fwd(h, params[f"{pfx}.ln1.g"], params[f"{pfx}.ln1.b"])
        a, attn_cache = _attention_fwd(n1, params, f"{pfx}.attn", cfg.heads, mask)
        h1 = h + a
        n2, ln2_cache = _layernorm_fwd(h1, params[f"{pfx}.ln2.g"], params[f"{pfx}.ln2.b"])
        f, ff_cache = _ff_fwd(n2, params, f"{pfx}.ff")
        h = h1 + f
        layer_caches.append((ln1_cache, attn_cache, ln2_cache, ff_cache))
        if i + 1 == cfg.tap:
            mid_state = h

    final_logp, final_cache = _head_fwd(h, params, "head_final")
    mid_logp, mid_cache = _head_fwd(mid_state, params, "head_mid")
    cache = (xb, mask, layer_caches, final_cache, mid_cache) if train_mode else None
    return ForwardOutputs(final_logp, mid_logp, lengths, cache)


def backward(
    params: Params,
    cfg: ModelConfig,
    outputs: ForwardOutputs,
    grad_final: np.ndarray,
    grad_mid: np.ndarray,
) -> Params:
    """Accumulate gradients for every parameter from the two head gradients.

    Both heads feed the shared trunk: layers up to the tap receive
    contributions from both losses, layers above it only from the final head.
    """
    if outputs.cache is None:
        raise ValueError("backward requires a forward run with train_mode=True")
    xb, mask, layer_caches, final_cache, mid_cache = outputs.cache
    grads: Params = {k: np.zeros_like(v) for k, v in params.items()}

    dh = _head_bwd(grad_final, final_cache, params, "head_final", grads)
    dmid = _head_bwd(grad_mid, mid_cache, params, "head_mid", grads)

    for i in range(cfg.layers - 1, -1, -1):
        if i + 1 == cfg.tap:
            dh = dh + dmid
        pfx = f"layer{i}"
        ln1_cache, attn_cache, ln2_cache, ff_cache = layer_caches[i]
        dn2 = _ff_bwd(dh, ff_cache, params, f"{pfx}.ff", grads)
        dh1, dg, db = _layernorm_bwd(dn2, ln2_cache)
        grads[f"{pfx}.ln2.g"] += dg
        grads[f"{pfx}.ln2.b"] += db
        dh1 = dh1 + dh
        dn1 = _attention_bwd(dh1, attn_cache, params, f"{pfx}.attn", cfg.heads, grads)
        dx, dg, db = _layernorm_bwd(dn1, ln1_cache)
        grads[f"{pfx}.ln1.g"] += dg
        grads[f"{pfx}.ln1.b"] += db
        dh = dx + dh1

    B, Tm, _ = xb.shape
    H = cfg.hidden
    grads["in_proj.W"] += xb.reshape(-1, cfg.input_dim).T @ dh.reshape(-1, H)
    grads["in_proj.b"] += dh.sum(axis=(0, 1))
    return grads
