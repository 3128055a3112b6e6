"""Train the proposed configuration (punctuated labels at the final head,
unpunctuated labels at the middle tap) on a small dataset and decode a
few dev utterances.

Runs in about a minute single-threaded.
Run: python3 demos/train_proposed.py
"""

from punctasr.ctc import greedy_decode
from punctasr.model import forward
from punctasr.pipeline import ExperimentConfig, build_dataset, run_plan
from punctasr.training import PLANS, model_config_for_plan

cfg = ExperimentConfig.from_dict(
    {
        "corpus": {"n_utterances": 600, "vocab_words": 30, "rng_seed": 0},
        "synth": {"noise_std": 0.15, "frames_per_word": [3, 5]},
        "splits": {"train": 500, "dev": 50, "test": 50},
        "model": {"layers": 4, "hidden": 64, "heads": 4, "ff": 128,
                  "stride": 2, "max_positions": 512},
        "train": {"epochs": 6, "batch_size": 16, "lr": 1e-3,
                  "warmup_steps": 50},
    }
)
data = build_dataset(cfg)
print(f"training 'proposed' on {len(data.splits['train'])} utterances...")
run = run_plan(cfg, data, "proposed", seed=0, split="dev")

print("\nper-epoch dev word error rate:")
for rec in run.result.log:
    if rec["kind"] == "epoch":
        print(f"  epoch {rec['epoch']}: train loss {rec['train_loss']:.3f}  "
              f"dev WER {rec['dev_wer']:.3f}")

print(f"\nfinal: dev WER {run.wer:.3f}, macro punctuation F1 {run.macro_f1:.3f}")
print(f"parameters: {run.param_count}")

model_cfg = model_config_for_plan(cfg.model, PLANS["proposed"], data.vocab)
print("\nsample decodes (| reference | hypothesis):")
for x, pair in data.splits["dev"][:5]:
    out = forward(run.result.best_params, model_cfg, [x])
    hyp = greedy_decode(out.final_lattice(0))
    print(f"  | {' '.join(data.vocab.decode(pair.y_pnct))}")
    print(f"  | {' '.join(data.vocab.decode(hyp))}\n")
