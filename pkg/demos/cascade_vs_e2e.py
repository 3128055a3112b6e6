"""Compare the end-to-end model against the cascaded baseline (ASR over
unpunctuated labels + a text-only punctuation classifier) on the same
small dataset: WER, punctuation F1, and parameter counts.

Runs in a few minutes single-threaded.
Run: python3 demos/cascade_vs_e2e.py
"""

from punctasr.pipeline import (
    ExperimentConfig,
    build_dataset,
    compare_param_counts,
    run_plan,
)

cfg = ExperimentConfig.from_dict(
    {
        "corpus": {"n_utterances": 600, "vocab_words": 30, "rng_seed": 0},
        "synth": {"noise_std": 0.15, "frames_per_word": [3, 5]},
        "splits": {"train": 500, "dev": 50, "test": 50},
        "model": {"layers": 4, "hidden": 64, "heads": 4, "ff": 128,
                  "stride": 2, "max_positions": 512},
        "classifier": {"layers": 2, "hidden": 32, "heads": 2, "ff": 64,
                       "max_positions": 256, "epochs": 15, "batch_size": 32,
                       "lr": 1e-3},
        "train": {"epochs": 6, "batch_size": 16, "lr": 1e-3,
                  "warmup_steps": 50},
    }
)
data = build_dataset(cfg)

print("training end-to-end (proposed: pnct final, unpnct middle)...")
e2e = run_plan(cfg, data, "proposed", seed=0, split="dev")
print("training cascade (unpnct ASR, marks restored by a classifier)...")
cascade = run_plan(cfg, data, "cascade_asr", seed=0, split="dev")

print(f"\n{'system':<10} {'dev WER':>8} {'macro F1':>9} {'params':>8}")
for name, run in (("e2e", e2e), ("cascade", cascade)):
    print(f"{name:<10} {run.wer:>8.3f} {run.macro_f1:>9.3f} {run.param_count:>8}")

counts = compare_param_counts(cfg, data)
print(
    f"\nparameter ratio e2e/cascade: {counts['ratio']:.3f} "
    f"(full-scale reference: {counts['reference_full_scale_ratio']}, "
    "a reported figure, not reproduced here)"
)
print(
    "\nthe cascade's classifier only sees text, so it cannot recover\n"
    "commas (they are random given the words) while the end-to-end model\n"
    "reads the pause acoustics; that difference shows up in macro F1"
)
