"""Training: weighted two-head CTC objective, label plans for the
last/middle layers, Adam, and the epoch loop with dev-set tracking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as m
from .corpus import TranscriptPair
from .ctc import ctc_grad, ctc_loss, greedy_decode, is_feasible
from .evaluation import evaluate_system
from .features import mask_augment
from .vocab import Vocab

Params = Dict[str, np.ndarray]

LAST_CHOICES = ("pnct", "unpnct", "multitask")
MIDDLE_CHOICES = ("none", "pnct", "unpnct")


@dataclass(frozen=True)
class LossWeights:
    lambda_ctc: float = 0.5
    lambda_inter: float = 0.5

    def __post_init__(self):
        if self.lambda_ctc < 0 or self.lambda_inter < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class LabelPlan:
    last: str
    middle: str

    def __post_init__(self):
        if self.last not in LAST_CHOICES:
            raise ValueError(f"last must be one of {LAST_CHOICES}")
        if self.middle not in MIDDLE_CHOICES:
            raise ValueError(f"middle must be one of {MIDDLE_CHOICES}")
        if self.last == "multitask" and self.middle != "none":
            raise ValueError("multitask last layer requires middle = none")

    @property
    def final_is_punctuated(self) -> bool:
        return self.last in ("pnct", "multitask")

    @property
    def uses_middle(self) -> bool:
        return self.middle != "none"


# The six label-assignment rows exercised by the ablation study.
PLANS: Dict[str, LabelPlan] = {
    "e2e_pnct": LabelPlan("pnct", "none"),
    "cascade_asr": LabelPlan("unpnct", "none"),
    "cascade_asr_inter": LabelPlan("unpnct", "unpnct"),
    "e2e_pnct_pnct": LabelPlan("pnct", "pnct"),
    "proposed": LabelPlan("pnct", "unpnct"),
    "e2e_multitask": LabelPlan("multitask", "none"),
}
PROPOSED_PLAN = "proposed"


def plan_vocab_sizes(plan: LabelPlan, vocab: Vocab) -> Tuple[int, int]:
    """(final head size, mid head size) for a label plan."""
    unp = vocab.unpunctuated()
    final = vocab.size if plan.final_is_punctuated else unp.size
    mid = vocab.size if plan.middle == "pnct" else unp.size
    return final, mid


def unpnct_in_punct_ids(pair: TranscriptPair, vocab: Vocab) -> List[int]:
    """y_unpnct re-expressed with punctuated-vocabulary ids."""
    inverse = {v: k for k, v in vocab.remap_to_unpunctuated().items()}
    return [inverse[t] for t in pair.y_unpnct]


@dataclass(frozen=True)
class PlanTargets:
    """CTC targets for one utterance under a label plan."""

    final: List[List[int]]  # one target, or two for the multitask plan
    middle: Optional[List[int]]


def make_targets(pair: TranscriptPair, plan: LabelPlan, vocab: Vocab) -> PlanTargets:
    if plan.last == "pnct":
        final = [list(pair.y_pnct)]
    elif plan.last == "unpnct":
        final = [list(pair.y_unpnct)]
    else:  # both label views at the final head, punctuated-vocab ids
        final = [list(pair.y_pnct), unpnct_in_punct_ids(pair, vocab)]
    if plan.middle == "none":
        middle = None
    elif plan.middle == "pnct":
        middle = list(pair.y_pnct)
    else:
        middle = list(pair.y_unpnct)
    return PlanTargets(final=final, middle=middle)


def total_loss(
    final_lattice: np.ndarray,
    mid_lattice: np.ndarray,
    targets: PlanTargets,
    weights: LossWeights,
) -> Tuple[float, np.ndarray, np.ndarray, bool]:
    """Weighted sum of the final and intermediate CTC losses.

    Returns (loss, d/d final lattice, d/d mid lattice, feasible). Gradients
    are zero and the loss is +inf when any required target is infeasible.
    """
    T = final_lattice.shape[0]
    needed = list(targets.final) + ([targets.middle] if targets.middle is not None else [])
    if any(not is_feasible(T, y) for y in needed):
        return float("inf"), np.zeros_like(final_lattice), np.zeros_like(mid_lattice), False

    share = 1.0 / len(targets.final)
    loss_final = 0.0
    grad_final = np.zeros_like(final_lattice)
    for y in targets.final:
        loss_final += share * ctc_loss(final_lattice, y)
        grad_final += share * ctc_grad(final_lattice, y)

    loss_mid = 0.0
    grad_mid = np.zeros_like(mid_lattice)
    if targets.middle is not None:
        loss_mid = ctc_loss(mid_lattice, targets.middle)
        grad_mid = ctc_grad(mid_lattice, targets.middle)

    total = weights.lambda_ctc * loss_final + weights.lambda_inter * loss_mid
    return (
        float(total),
        weights.lambda_ctc * grad_final,
        weights.lambda_inter * grad_mid,
        True,
    )


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0

    @classmethod
    def for_params(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    cfg: AdamConfig,
    lr_scale: float = 1.0,
) -> bool:
    """Bias-corrected Adam update in place. Non-finite gradients reject the
    whole step and return False."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            warnings.warn("non-finite gradient; step rejected")
            return False
    state.t += 1
    c1 = 1.0 - cfg.beta1 ** state.t
    c2 = 1.0 - cfg.beta2 ** state.t
    lr = cfg.lr * lr_scale
    for k, p in params.items():
        g = grads[k]
        state.m[k] = cfg.beta1 * state.m[k] + (1 - cfg.beta1) * g
        state.v[k] = cfg.beta2 * state.v[k] + (1 - cfg.beta2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        p -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return True


# ---------------------------------------------------------------------------
# epoch loop


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 16
    adam: AdamConfig = field(default_factory=AdamConfig)
    warmup_steps: int = 100
    seed: int = 0
    plan: str = PROPOSED_PLAN
    weights: LossWeights = field(default_factory=LossWeights)
    time_masks: int = 1
    freq_masks: int = 1
    mask_width: int = 3
    patience: int = 5
    eval_every_epoch: bool = True

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.adam.lr <= 0:
            raise ValueError("step size must be > 0")
        if self.plan not in PLANS:
            raise ValueError(f"unknown plan {self.plan!r}; valid: {sorted(PLANS)}")


@dataclass
class TrainResult:
    params: Params            # parameters after the last epoch
    best_params: Params       # best dev-loss checkpoint
    best_epoch: int
    state: AdamState
    log: List[dict]
    epochs_run: int


Dataset = Sequence[Tuple[np.ndarray, TranscriptPair]]


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def dataset_loss(
    params: Params,
    model_cfg: m.ModelConfig,
    data: Dataset,
    targets: Sequence[PlanTargets],
    weights: LossWeights,
    batch_size: int = 32,
) -> float:
    """Mean total loss over feasible utterances."""
    total, n = 0.0, 0
    for start in range(0, len(data), batch_size):
        idx = range(start, min(start + batch_size, len(data)))
        out = m.forward(params, model_cfg, [data[i][0] for i in idx])
        for k, i in enumerate(idx):
            loss, _, _, ok = total_loss(
                out.final_lattice(k), out.mid_lattice(k), targets[i], weights
            )
            if ok:
                total += loss
                n += 1
    return total / max(1, n)


def decode_dataset(
    params: Params,
    model_cfg: m.ModelConfig,
    xs: Sequence[np.ndarray],
    batch_size: int = 32,
) -> List[List[int]]:
    """Greedy decode of the final head for every utterance."""
    hyps: List[List[int]] = []
    for start in range(0, len(xs), batch_size):
        out = m.forward(params, model_cfg, xs[start : start + batch_size])
        for k in range(len(out.lengths)):
            hyps.append(greedy_decode(out.final_lattice(k)))
    return hyps


def dev_metrics(
    params: Params,
    model_cfg: m.ModelConfig,
    dev: Dataset,
    plan: LabelPlan,
    vocab: Vocab,
) -> Tuple[float, Optional[float]]:
    """(WER, macro punctuation F1 or None if the final head is unpunctuated)."""
    hyps = decode_dataset(params, model_cfg, [x for x, _ in dev])
    if plan.final_is_punctuated:
        refs = [list(p.y_pnct) for _, p in dev]
        report = evaluate_system(hyps, refs, vocab, system="dev")
        return report.wer, report.macro_f1
    refs = [list(p.y_unpnct) for _, p in dev]
    report = evaluate_system(hyps, refs, vocab.unpunctuated(), system="dev")
    return report.wer, None


def model_config_for_plan(
    base: m.ModelConfig, plan: LabelPlan, vocab: Vocab
) -> m.ModelConfig:
    vf, vm = plan_vocab_sizes(plan, vocab)
    return replace(base, vocab_final=vf, vocab_mid=vm)


def train(
    train_data: Dataset,
    dev_data: Dataset,
    vocab: Vocab,
    base_model_cfg: m.ModelConfig,
    cfg: TrainConfig,
    init: Optional[Tuple[Params, AdamState]] = None,
    start_epoch: int = 0,
) -> TrainResult:
    """Seeded epoch loop: length-bucketed batches, masking augmentation,
    per-epoch dev metrics, best-dev checkpointing, early stopping.

    Shuffling and augmentation streams depend only on (seed, epoch), so a
    run resumed from an epoch checkpoint reproduces the uninterrupted run.
    """
    plan = PLANS[cfg.plan]
    model_cfg = model_config_for_plan(base_model_cfg, plan, vocab)
    if init is not None:
        params, state = init
    else:
        params = m.init_params(model_cfg, cfg.seed)
        state = AdamState.for_params(params)

    targets = [make_targets(p, plan, vocab) for _, p in train_data]
    dev_targets = [make_targets(p, plan, vocab) for _, p in dev_data]
    # length bucketing: neighbours in sorted order share a batch
    sorted_idx = np.array(
        sorted(range(len(train_data)), key=lambda i: train_data[i][0].shape[0])
    )
    batches = _batches(sorted_idx, cfg.batch_size)

    log: List[dict] = []
    best_loss = float("inf")
    best_params = {k: p.copy() for k, p in params.items()}
    best_epoch = -1
    bad_epochs = 0
    step = state.t

    for epoch in range(start_epoch, cfg.epochs):
        shuffle_rng = np.random.default_rng([cfg.seed, epoch, 0])
        aug_rng = np.random.default_rng([cfg.seed, epoch, 1])
        batch_order = np.arange(len(batches))
        shuffle_rng.shuffle(batch_order)
        skipped = processed = 0
        epoch_loss = 0.0

        for b in batch_order:
            idx = batches[b]
            xs = []
            for i in idx:
                x = train_data[i][0]
                if cfg.time_masks or cfg.freq_masks:
                    x = mask_augment(
                        x, cfg.time_masks, cfg.freq_masks, cfg.mask_width, aug_rng
                    )
                xs.append(x)
            out = m.forward(params, model_cfg, xs, train_mode=True)
            B, Tm = out.final_logp.shape[:2]
            gf = np.zeros_like(out.final_logp)
            gm = np.zeros_like(out.mid_logp)
            batch_loss, n_ok = 0.0, 0
            for k, i in enumerate(idx):
                L = out.lengths[k]
                loss, gfi, gmi, ok = total_loss(
                    out.final_lattice(k), out.mid_lattice(k), targets[i], cfg.weights
                )
                if not ok:
                    skipped += 1
                    continue
                gf[k, :L] = gfi
                gm[k, :L] = gmi
                batch_loss += loss
                n_ok += 1
            processed += n_ok
            if n_ok == 0:
                continue
            grads = m.backward(params, model_cfg, out, gf / n_ok, gm / n_ok)
            step += 1
            lr_scale = min(1.0, step / max(1, cfg.warmup_steps))
            adam_step(params, grads, state, cfg.adam, lr_scale)
            batch_loss /= n_ok
            epoch_loss += batch_loss * n_ok
            log.append(
                {"kind": "step", "step": step, "epoch": epoch, "loss": batch_loss}
            )

        if skipped + processed != len(train_data):
            raise RuntimeError("skip accounting mismatch")
        if skipped:
            warnings.warn(f"epoch {epoch}: skipped {skipped} infeasible utterances")

        record = {
            "kind": "epoch",
            "epoch": epoch,
            "train_loss": epoch_loss / max(1, processed),
            "skipped": skipped,
            "processed": processed,
        }
        dev_loss = dataset_loss(params, model_cfg, dev_data, dev_targets, cfg.weights)
        record["dev_loss"] = dev_loss
        if cfg.eval_every_epoch:
            dev_wer, dev_f1 = dev_metrics(params, model_cfg, dev_data, plan, vocab)
            record["dev_wer"] = dev_wer
            record["dev_f1"] = dev_f1
        log.append(record)

        if dev_loss < best_loss:
            best_loss = dev_loss
            best_params = {k: p.copy() for k, p in params.items()}
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break

    return TrainResult(
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        state=state,
        log=log,
        epochs_run=epoch + 1 if cfg.epochs > start_epoch else start_epoch,
    )
