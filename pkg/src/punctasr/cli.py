"""Command-line surface: generate-data, train, decode, evaluate, ablate.

Every command reads a single JSON experiment config and is deterministic
given the seeds recorded there; --threads caps BLAS threading (default 1)
so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="punctasr",
        description="Speech-to-punctuated-text experiments on synthetic data",
    )
    parser.add_argument("--threads", type=int, default=1, help="BLAS thread cap")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write corpus, features, manifest")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("train", help="train one model under a label plan")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--plan", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--resume", type=Path, default=None)

    p = sub.add_parser("decode", help="greedy-decode a split with a checkpoint")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("evaluate", help="score checkpoints on a split")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--checkpoint", type=Path, action="append", default=[])
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--reference-row", action="store_true",
                   help="include a references-vs-themselves sanity row")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("ablate", help="label-plan ablation over all seeds")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--split", default="dev", choices=["dev", "test"])
    p.add_argument("--out", type=Path, default=None)
    return parser


def _out_dir(cfg, override) -> Path:
    out = Path(override) if override else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    from .pipeline import ExperimentConfig, write_dataset

    cfg = ExperimentConfig.from_file(args.config)
    out = _out_dir(cfg, args.out)
    manifest = write_dataset(cfg, out)
    print(f"wrote dataset under {out} (manifest: {manifest})")
    return 0


def _save_model_checkpoint(path, params, state, meta):
    from .checkpoint import save_checkpoint

    arrays = {f"param.{k}": v for k, v in params.items()}
    arrays.update({f"adam.m.{k}": v for k, v in state.m.items()})
    arrays.update({f"adam.v.{k}": v for k, v in state.v.items()})
    save_checkpoint(path, arrays, {**meta, "adam_t": state.t})


def _load_model_checkpoint(path):
    from .checkpoint import load_checkpoint
    from .training import AdamState

    arrays, meta = load_checkpoint(path)
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param.")}
    state = AdamState(
        m={k[7:]: v for k, v in arrays.items() if k.startswith("adam.m.")},
        v={k[7:]: v for k, v in arrays.items() if k.startswith("adam.v.")},
        t=meta.get("adam_t", 0),
    )
    return params, state, meta


def cmd_train(args) -> int:
    from dataclasses import replace

    from .pipeline import (
        ExperimentConfig,
        build_dataset,
        train_cascade_classifier,
    )
    from .checkpoint import save_checkpoint
    from .training import PLANS, train

    cfg = ExperimentConfig.from_file(args.config)
    plan_name = args.plan or cfg.train.plan
    if plan_name not in PLANS:
        print(
            f"error: invalid plan {plan_name!r}; valid plans: {', '.join(sorted(PLANS))}",
            file=sys.stderr,
        )
        return 2
    seed = args.seed if args.seed is not None else cfg.train.seed
    train_cfg = replace(cfg.train, plan=plan_name, seed=seed)
    out = _out_dir(cfg, args.out)
    data = build_dataset(cfg)

    init = None
    start_epoch = 0
    if args.resume:
        params, state, meta = _load_model_checkpoint(args.resume)
        if meta["plan"] != plan_name or meta["seed"] != seed:
            print("error: resume checkpoint plan/seed mismatch", file=sys.stderr)
            return 2
        init = (params, state)
        start_epoch = meta["epoch"] + 1

    result = train(
        data.splits["train"], data.splits["dev"], data.vocab, cfg.model,
        train_cfg, init=init, start_epoch=start_epoch,
    )

    stem = f"{plan_name}_seed{seed}"
    meta = {
        "kind": "model",
        "plan": plan_name,
        "seed": seed,
        "epoch": result.epochs_run - 1,
        "best_epoch": result.best_epoch,
    }
    _save_model_checkpoint(out / f"{stem}.ckpt", result.params, result.state, meta)
    best_path = out / f"{stem}.best.ckpt"
    _save_model_checkpoint(best_path, result.best_params, result.state, meta)

    log_path = out / f"{stem}.log.jsonl"
    with open(log_path, "w") as f:
        for rec in result.log:
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    if not PLANS[plan_name].final_is_punctuated:
        clf_cfg, clf_params = train_cascade_classifier(cfg, data, seed)
        save_checkpoint(
            out / f"{stem}.clf.ckpt",
            clf_params,
            {"kind": "classifier", "seed": seed, "config": clf_cfg.to_dict()},
        )
    print(f"trained plan={plan_name} seed={seed}; checkpoints under {out}")
    return 0


def _decode_checkpoint(cfg, data, ckpt_path):
    """Greedy hypotheses for one checkpoint; cascade plans get punctuation
    restored from the sidecar classifier checkpoint."""
    from .cascade import ClassifierConfig, classify
    from .checkpoint import load_checkpoint
    from .corpus import apply_punct_classes
    from .training import PLANS, decode_dataset, model_config_for_plan
    from . import model as m

    params, _, meta = _load_model_checkpoint(ckpt_path)
    plan = PLANS[meta["plan"]]
    model_cfg = model_config_for_plan(cfg.model, plan, data.vocab)
    n_params = m.count_params(params)

    def decode(split):
        xs = [x for x, _ in data.splits[split]]
        hyps = decode_dataset(params, model_cfg, xs)
        if plan.final_is_punctuated:
            return hyps
        sidecar = ckpt_path.parent / (
            f"{meta['plan']}_seed{meta['seed']}.clf.ckpt"
        )
        if not sidecar.exists():
            return hyps
        clf_params, clf_meta = load_checkpoint(sidecar)
        clf_cfg = ClassifierConfig(**clf_meta["config"])
        out = []
        for h in hyps:
            if not h:
                out.append([])
                continue
            out.append(apply_punct_classes(h, classify(clf_params, clf_cfg, h), data.vocab))
        return out

    return meta, plan, n_params, decode


def cmd_decode(args) -> int:
    from .pipeline import ExperimentConfig, build_dataset

    cfg = ExperimentConfig.from_file(args.config)
    data = build_dataset(cfg)
    meta, plan, _, decode = _decode_checkpoint(cfg, data, args.checkpoint)
    hyps = decode(args.split)
    vocab = data.vocab
    out_path = args.out or _out_dir(cfg, None) / f"decode_{args.split}.txt"
    with open(out_path, "w") as f:
        for h in hyps:
            f.write(" ".join(vocab.decode(h)) + "\n")
    print(f"wrote {len(hyps)} hypotheses to {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    from .pipeline import ExperimentConfig, build_dataset, compare_param_counts
    from .evaluation import evaluate_system, reports_to_tsv

    cfg = ExperimentConfig.from_file(args.config)
    data = build_dataset(cfg)
    refs = [list(p.y_pnct) for _, p in data.splits[args.split]]
    reports = []
    if args.reference_row:
        reports.append(
            evaluate_system(refs, refs, data.vocab, system="reference")
        )
    for ckpt in args.checkpoint:
        meta, plan, n_params, decode = _decode_checkpoint(cfg, data, Path(ckpt))
        hyps = decode(args.split)
        if not plan.final_is_punctuated:
            from .pipeline import classifier_config, classifier_param_count

            n_params += classifier_param_count(classifier_config(cfg, data.vocab))
        system = f"{meta['plan']}_seed{meta['seed']}"
        reports.append(
            evaluate_system(hyps, refs, data.vocab, system=system, param_count=n_params)
        )
    tsv = reports_to_tsv(reports)
    counts = compare_param_counts(cfg, data)
    out_path = args.out or _out_dir(cfg, None) / f"eval_{args.split}.tsv"
    with open(out_path, "w") as f:
        f.write(tsv)
    print(tsv, end="")
    print(
        f"# params: e2e={counts['e2e_params']} cascade={counts['cascade_params']} "
        f"ratio={counts['ratio']:.3f} "
        f"(full-scale reference ratio: {counts['reference_full_scale_ratio']}, "
        "reported figure, not reproduced here)"
    )
    return 0


def cmd_ablate(args) -> int:
    from .pipeline import ExperimentConfig, ablation_tsv, build_dataset, run_ablation

    cfg = ExperimentConfig.from_file(args.config)
    data = build_dataset(cfg)
    runs = run_ablation(cfg, data, split=args.split)
    tsv = ablation_tsv(runs, cfg.seeds)
    out_path = args.out or _out_dir(cfg, None) / "ablation.tsv"
    with open(out_path, "w") as f:
        f.write(tsv)
    print(tsv, end="")
    return 0


_COMMANDS = {
    "generate-data": cmd_generate,
    "train": cmd_train,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # nonzero exit on any error
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
