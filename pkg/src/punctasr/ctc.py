"""CTC probability model: collapse, log-space forward loss, forward-backward
gradients, a brute-force enumeration oracle, and greedy / prefix-beam decoding.

All lattice math is in log space. A lattice is a T x V array of per-frame
log-probabilities; blank is always id 0. Infeasible targets (too long for T,
counting the blanks required between repeats) yield an infinite loss rather
than a NaN.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from typing import List, Sequence, Tuple

import numpy as np

NEG_INF = -np.inf
BLANK = 0


class CtcError(ValueError):
    pass


class InfeasibleTargetError(CtcError):
    """Target cannot be aligned within the given number of frames."""


def collapse(a: Sequence[int]) -> List[int]:
    """Merge runs of identical ids, then delete blanks ([a,blank,a] -> [a,a])."""
    out: List[int] = []
    prev = None
    for s in a:
        if s != prev:
            if s != BLANK:
                out.append(s)
            prev = s
    return out


def min_frames(y: Sequence[int]) -> int:
    """Shortest alignment: one frame per token plus a blank between repeats."""
    repeats = sum(1 for i in range(1, len(y)) if y[i] == y[i - 1])
    return len(y) + repeats


def is_feasible(T: int, y: Sequence[int]) -> bool:
    return T >= min_frames(y)


def _check_target(y: Sequence[int], V: int) -> None:
    for t in y:
        if t == BLANK:
            raise CtcError("target contains the blank id")
        if not 0 < t < V:
            raise CtcError(f"target id {t} outside vocabulary of size {V}")


def _extended(y: Sequence[int]) -> np.ndarray:
    ext = np.empty(2 * len(y) + 1, dtype=np.int64)
    ext[0::2] = BLANK
    ext[1::2] = y
    return ext


def _forward(logp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """Alphas over the blank-augmented label, shape (T, S)."""
    T = logp.shape[0]
    S = len(ext)
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    alphas = np.full((T, S), NEG_INF)
    alphas[0, 0] = logp[0, ext[0]]
    if S > 1:
        alphas[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        prev = alphas[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(
            skip_ok[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:]
        )
        alphas[t] = acc + logp[t, ext]
    return alphas


def _backward(logp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    T = logp.shape[0]
    S = len(ext)
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[:-2] = (ext[:-2] != BLANK) & (ext[:-2] != ext[2:])
    betas = np.full((T, S), NEG_INF)
    betas[T - 1, S - 1] = 0.0
    if S > 1:
        betas[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = betas[t + 1] + logp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip_ok[:-2], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        betas[t] = acc
    return betas


def ctc_loss(logp: np.ndarray, y: Sequence[int]) -> float:
    """-log P_CTC(y | lattice). Returns +inf for infeasible targets."""
    T, V = logp.shape
    _check_target(y, V)
    if not is_feasible(T, y):
        return math.inf
    if len(y) == 0:
        return float(-logp[:, BLANK].sum())
    alphas = _forward(logp, _extended(y))
    tail = alphas[-1, -1]
    if alphas.shape[1] > 1:
        tail = np.logaddexp(tail, alphas[-1, -2])
    return float(-tail)


def ctc_grad(logp: np.ndarray, y: Sequence[int]) -> np.ndarray:
    """d(loss)/d(logp): minus the per-frame label occupancy, shape (T, V)."""
    T, V = logp.shape
    _check_target(y, V)
    if not is_feasible(T, y):
        raise InfeasibleTargetError(f"target of length {len(y)} infeasible for T={T}")
    if len(y) == 0:
        grad = np.zeros((T, V))
        grad[:, BLANK] = -1.0
        return grad
    ext = _extended(y)
    alphas = _forward(logp, ext)
    betas = _backward(logp, ext)
    log_like = alphas[-1, -1]
    if len(ext) > 1:
        log_like = np.logaddexp(log_like, alphas[-1, -2])
    log_occ = np.full((T, V), NEG_INF)
    ab = alphas + betas
    for s, label in enumerate(ext):
        log_occ[:, label] = np.logaddexp(log_occ[:, label], ab[:, s])
    return -np.exp(log_occ - log_like)


def brute_force_ctc(logp: np.ndarray, y: Sequence[int]) -> float:
    """Enumeration oracle: log-sum-exp over every length-T path collapsing to y."""
    T, V = logp.shape
    _check_target(y, V)
    if V**T > 200_000:
        raise CtcError(f"enumeration budget exceeded: V^T = {V}**{T}")
    target = list(y)
    terms = []
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) == target:
            terms.append(sum(logp[t, v] for t, v in enumerate(path)))
    if not terms:
        return math.inf
    m = max(terms)
    return float(-(m + math.log(sum(math.exp(x - m) for x in terms))))


def greedy_decode(logp: np.ndarray) -> List[int]:
    """Per-frame argmax then collapse; ties go to the lowest token id."""
    return collapse(np.argmax(logp, axis=1))


def prefix_beam_decode(logp: np.ndarray, beam_width: int) -> List[int]:
    """Standard prefix beam search over (blank, non-blank) ending probabilities.

    Deterministic: on equal probability, shorter then lexicographically
    smaller prefixes win, so ties resolve toward low token ids.
    """
    if beam_width < 1:
        raise CtcError("beam_width must be >= 1")
    T, V = logp.shape
    # prefix -> (log p ending in blank, log p ending in non-blank)
    beams: dict[Tuple[int, ...], Tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(T):
        nxt: dict[Tuple[int, ...], List[float]] = defaultdict(lambda: [NEG_INF, NEG_INF])
        for prefix, (pb, pnb) in beams.items():
            p_tot = np.logaddexp(pb, pnb)
            entry = nxt[prefix]
            entry[0] = np.logaddexp(entry[0], p_tot + logp[t, BLANK])
            if prefix:
                entry[1] = np.logaddexp(entry[1], pnb + logp[t, prefix[-1]])
            for v in range(1, V):
                ext = nxt[prefix + (v,)]
                if prefix and v == prefix[-1]:
                    # extending with a repeat requires a blank in between
                    ext[1] = np.logaddexp(ext[1], pb + logp[t, v])
                else:
                    ext[1] = np.logaddexp(ext[1], p_tot + logp[t, v])
        ranked = sorted(
            nxt.items(),
            key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), len(kv[0]), kv[0]),
        )
        beams = {k: (v[0], v[1]) for k, v in ranked[:beam_width]}
    best = min(
        beams.items(),
        key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), len(kv[0]), kv[0]),
    )[0]
    return list(best)


def random_lattice(T: int, V: int, rng: np.random.Generator) -> np.ndarray:
    """Row-normalized random log-prob lattice, for tests and oracles."""
    logits = rng.standard_normal((T, V))
    return logits - logsumexp_rows(logits)


def logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def validate_lattice(logp: np.ndarray, tol: float = 1e-6) -> None:
    rows = logsumexp_rows(logp)
    if not np.all(np.abs(rows) <= tol):
        raise CtcError("lattice rows do not log-sum-exp to 0")
