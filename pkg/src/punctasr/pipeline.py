"""Experiment plumbing: config document, dataset construction, and the
single-plan and ablation experiment runners shared by the CLI and tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as m
from .cascade import (
    ClassifierConfig,
    ClassifierTrainConfig,
    cascade_infer,
    classifier_shapes,
    init_classifier,
    train_classifier,
)
from .corpus import (
    CorpusConfig,
    TranscriptPair,
    generate_corpus,
    save_corpus,
    save_manifest,
)
from .evaluation import EvalReport, evaluate_system
from .features import (
    SynthConfig,
    normalization_stats,
    normalize,
    save_features,
    synthesize,
    word_prototypes,
)
from .training import (
    PLANS,
    AdamConfig,
    LossWeights,
    TrainConfig,
    TrainResult,
    decode_dataset,
    model_config_for_plan,
    train,
)
from .vocab import Vocab


class ConfigError(ValueError):
    pass


def _take(doc: dict, name: str, cls, defaults) -> dict:
    sub = doc.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(sub) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(sub)
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusConfig
    synth: SynthConfig
    splits: Dict[str, int]
    model: m.ModelConfig
    classifier: dict           # sizes only; vocab filled in at build time
    train: TrainConfig
    plans: List[str]
    seeds: List[int]
    out_dir: str

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        with open(path) as f:
            doc = json.load(f)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {
            "corpus", "synth", "splits", "model", "classifier",
            "train", "plans", "seeds", "out_dir",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

        corpus_kw = _take(doc, "corpus", CorpusConfig, {
            "n_utterances": 2400, "vocab_words": 30, "max_len": 10, "min_len": 3,
            "punct_rates": {"comma": 0.2, "question": 0.25},
            "end_mark_rate": 1.0, "rng_seed": 0,
        })
        corpus = CorpusConfig(**corpus_kw)
        corpus.validate()

        synth_kw = _take(doc, "synth", SynthConfig, {
            "dim": 16, "frames_per_word": (2, 4),
            "pause_frames": {",": (2, 3), ".": (3, 4), "?": (3, 4)},
            "noise_std": 0.1, "rng_seed": 0,
        })
        synth_kw["frames_per_word"] = tuple(synth_kw["frames_per_word"])
        synth_kw["pause_frames"] = {
            k: tuple(v) for k, v in synth_kw["pause_frames"].items()
        }
        synth = SynthConfig(**synth_kw)
        synth.validate()

        splits = _take(doc, "splits", dict, {"train": 2000, "dev": 200, "test": 200})
        if sum(splits.values()) != corpus.n_utterances:
            raise ConfigError(
                f"splits sum to {sum(splits.values())} but corpus has "
                f"{corpus.n_utterances} utterances"
            )

        model_kw = _take(doc, "model", m.ModelConfig, {
            "layers": 6, "hidden": 64, "heads": 4, "ff": 128,
            "stride": 2, "tap_layer": 0, "use_positional": True,
            "max_positions": 512,
        })
        model_cfg = m.ModelConfig(input_dim=synth.dim, **model_kw)

        classifier = _take(doc, "classifier", dict, {
            "layers": 2, "hidden": 32, "heads": 2, "ff": 64, "max_positions": 256,
            "epochs": 20, "batch_size": 32, "lr": 1e-3,
        })

        train_kw = _take(doc, "train", TrainConfig, {
            "epochs": 8, "batch_size": 16, "lr": 3e-4, "warmup_steps": 100,
            "seed": 0, "plan": "proposed", "lambda_ctc": 0.5, "lambda_inter": 0.5,
            "time_masks": 1, "freq_masks": 1, "mask_width": 3, "patience": 5,
        })
        train_cfg = TrainConfig(
            epochs=train_kw["epochs"],
            batch_size=train_kw["batch_size"],
            adam=AdamConfig(lr=train_kw["lr"]),
            warmup_steps=train_kw["warmup_steps"],
            seed=train_kw["seed"],
            plan=train_kw["plan"],
            weights=LossWeights(train_kw["lambda_ctc"], train_kw["lambda_inter"]),
            time_masks=train_kw["time_masks"],
            freq_masks=train_kw["freq_masks"],
            mask_width=train_kw["mask_width"],
            patience=train_kw["patience"],
        )

        plans = doc.get("plans", list(PLANS))
        for p in plans:
            if p not in PLANS:
                raise ConfigError(f"unknown plan {p!r}; valid: {sorted(PLANS)}")
        seeds = doc.get("seeds", [0, 1, 2])
        out_dir = doc.get("out_dir", "runs")
        return cls(
            corpus=corpus, synth=synth, splits=dict(splits), model=model_cfg,
            classifier=classifier, train=train_cfg, plans=list(plans),
            seeds=list(seeds), out_dir=out_dir,
        )


@dataclass
class DataBundle:
    vocab: Vocab
    splits: Dict[str, List[Tuple[np.ndarray, TranscriptPair]]]
    protos: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def build_dataset(cfg: ExperimentConfig) -> DataBundle:
    """Generate transcripts, synthesize features, split, and normalize.

    Per-utterance feature streams are seeded by (synth seed, utterance
    index), so the bundle is deterministic regardless of evaluation order.
    """
    vocab, pairs = generate_corpus(cfg.corpus)
    protos = word_prototypes(vocab, cfg.synth)
    feats = []
    for i, p in enumerate(pairs):
        rng = np.random.default_rng([cfg.synth.rng_seed, i])
        feats.append(synthesize(p.y_pnct, vocab, cfg.synth, protos, rng))

    order = ["train", "dev", "test"]
    splits: Dict[str, List[Tuple[np.ndarray, TranscriptPair]]] = {}
    start = 0
    for name in order:
        n = cfg.splits.get(name, 0)
        splits[name] = list(zip(feats[start : start + n], pairs[start : start + n]))
        start += n

    mean, std = normalization_stats([x for x, _ in splits["train"]])
    for name in order:
        splits[name] = [(normalize(x, mean, std), p) for x, p in splits[name]]
    return DataBundle(vocab=vocab, splits=splits, protos=protos, mean=mean, std=std)


def write_dataset(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Materialize corpus text, per-utterance feature files, and a manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab, pairs = generate_corpus(cfg.corpus)
    protos = word_prototypes(vocab, cfg.synth)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(exist_ok=True)
    for i, p in enumerate(pairs):
        rng = np.random.default_rng([cfg.synth.rng_seed, i])
        x = synthesize(p.y_pnct, vocab, cfg.synth, protos, rng)
        save_features(feat_dir / f"utt_{i:05d}.bin", x)
    save_corpus(out_dir / "corpus.txt", vocab, pairs)
    manifest = out_dir / "manifest.json"
    save_manifest(
        manifest,
        vocab,
        {
            "corpus_seed": cfg.corpus.rng_seed,
            "synth_seed": cfg.synth.rng_seed,
            "splits": cfg.splits,
            "n_utterances": cfg.corpus.n_utterances,
            "feature_dim": cfg.synth.dim,
            "prototypes": protos.tolist(),
        },
    )
    return manifest


def classifier_config(cfg: ExperimentConfig, vocab: Vocab) -> ClassifierConfig:
    c = cfg.classifier
    return ClassifierConfig(
        vocab_size=vocab.unpunctuated().size,
        layers=c["layers"], hidden=c["hidden"], heads=c["heads"],
        ff=c["ff"], max_positions=c["max_positions"],
    )


def train_cascade_classifier(cfg: ExperimentConfig, data: DataBundle, seed: int):
    clf_cfg = classifier_config(cfg, data.vocab)
    clf_train = ClassifierTrainConfig(
        epochs=cfg.classifier["epochs"],
        batch_size=cfg.classifier["batch_size"],
        lr=cfg.classifier["lr"],
        seed=seed,
    )
    pairs = [p for _, p in data.splits["train"]]
    params = train_classifier(pairs, data.vocab, clf_cfg, clf_train)
    return clf_cfg, params


def classifier_param_count(cfg: ClassifierConfig) -> int:
    return int(sum(np.prod(s) for s in classifier_shapes(cfg).values()))


@dataclass
class PlanRun:
    plan: str
    seed: int
    result: TrainResult
    wer: float
    macro_f1: float
    param_count: int


def run_plan(
    cfg: ExperimentConfig,
    data: DataBundle,
    plan_name: str,
    seed: int,
    split: str = "dev",
    clf: Optional[tuple] = None,
) -> PlanRun:
    """Train one model under a label plan and score it on a split.

    Plans whose final head is unpunctuated are scored through the cascade:
    the classifier (trained on ground-truth transcripts) restores marks
    before punctuation F1 is computed.
    """
    plan = PLANS[plan_name]
    train_cfg = replace(cfg.train, plan=plan_name, seed=seed)
    result = train(
        data.splits["train"], data.splits["dev"], data.vocab, cfg.model, train_cfg
    )
    model_cfg = model_config_for_plan(cfg.model, plan, data.vocab)
    eval_data = data.splits[split]
    hyps = decode_dataset(result.best_params, model_cfg, [x for x, _ in eval_data])
    refs_pnct = [list(p.y_pnct) for _, p in eval_data]
    n_params = m.count_params(result.best_params)

    if plan.final_is_punctuated:
        report = evaluate_system(hyps, refs_pnct, data.vocab, system=plan_name)
    else:
        if clf is None:
            clf = train_cascade_classifier(cfg, data, seed)
        clf_cfg, clf_params = clf
        from .cascade import classify
        from .corpus import apply_punct_classes

        punct_hyps = []
        for h in hyps:
            if not h:
                punct_hyps.append([])
                continue
            classes = classify(clf_params, clf_cfg, h)
            punct_hyps.append(apply_punct_classes(h, classes, data.vocab))
        report = evaluate_system(punct_hyps, refs_pnct, data.vocab, system=plan_name)
        n_params += classifier_param_count(clf_cfg)

    return PlanRun(
        plan=plan_name, seed=seed, result=result,
        wer=report.wer, macro_f1=report.macro_f1, param_count=n_params,
    )


def run_ablation(
    cfg: ExperimentConfig,
    data: DataBundle,
    plans: Optional[Sequence[str]] = None,
    seeds: Optional[Sequence[int]] = None,
    split: str = "dev",
) -> List[PlanRun]:
    """One training run per plan per seed; cascade scoring where needed."""
    plans = list(plans if plans is not None else cfg.plans)
    seeds = list(seeds if seeds is not None else cfg.seeds)
    runs: List[PlanRun] = []
    clf_by_seed: Dict[int, tuple] = {}
    for plan_name in plans:
        needs_clf = not PLANS[plan_name].final_is_punctuated
        for seed in seeds:
            clf = None
            if needs_clf:
                if seed not in clf_by_seed:
                    clf_by_seed[seed] = train_cascade_classifier(cfg, data, seed)
                clf = clf_by_seed[seed]
            runs.append(run_plan(cfg, data, plan_name, seed, split=split, clf=clf))
    return runs


def ablation_tsv(runs: Sequence[PlanRun], seeds: Sequence[int]) -> str:
    """Table shaped like the label-assignment ablation: one row per plan."""
    header = ["plan", "last", "middle", "e2e"]
    header += [f"wer_seed{s}" for s in seeds] + ["wer_mean"]
    header += [f"f1_seed{s}" for s in seeds] + ["f1_mean", "note"]
    lines = ["\t".join(header)]
    by_plan: Dict[str, Dict[int, PlanRun]] = {}
    for r in runs:
        by_plan.setdefault(r.plan, {})[r.seed] = r
    for plan_name, by_seed in by_plan.items():
        plan = PLANS[plan_name]
        wers = [by_seed[s].wer for s in seeds if s in by_seed]
        f1s = [by_seed[s].macro_f1 for s in seeds if s in by_seed]
        note = ""
        if plan_name == "proposed":
            note = "proposed configuration"
        elif plan_name == "e2e_multitask":
            note = "expected degraded punctuation accuracy"
        cells = [
            plan_name, plan.last, plan.middle,
            "yes" if plan.final_is_punctuated else "no",
        ]
        cells += [f"{by_seed[s].wer:.6f}" if s in by_seed else "-" for s in seeds]
        cells.append(f"{np.mean(wers):.6f}")
        cells += [f"{by_seed[s].macro_f1:.6f}" if s in by_seed else "-" for s in seeds]
        cells.append(f"{np.mean(f1s):.6f}")
        cells.append(note)
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def compare_param_counts(cfg: ExperimentConfig, data: DataBundle) -> dict:
    """E2E vs cascade (ASR + classifier) parameter totals and ratio."""
    e2e_cfg = model_config_for_plan(cfg.model, PLANS["proposed"], data.vocab)
    asr_cfg = model_config_for_plan(cfg.model, PLANS["cascade_asr"], data.vocab)
    e2e = m.count_params(m.init_params(e2e_cfg, 0))
    asr = m.count_params(m.init_params(asr_cfg, 0))
    clf = classifier_param_count(classifier_config(cfg, data.vocab))
    return {
        "e2e_params": e2e,
        "cascade_params": asr + clf,
        "ratio": e2e / (asr + clf),
        # full-scale figure reported in the literature, not reproduced here
        "reference_full_scale_ratio": "about 1/7",
    }
