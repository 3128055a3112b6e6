"""Generate a small corpus and look at one utterance in every view:
punctuated transcript, unpunctuated transcript, per-word punctuation
classes, and the synthetic feature matrix rendered from it.

Run: python3 demos/data_walkthrough.py
"""

import numpy as np

from punctasr.corpus import CorpusConfig, derive_punct_classes, generate_corpus
from punctasr.features import PAUSE_CUE, SynthConfig, synthesize, word_prototypes

cfg = CorpusConfig(n_utterances=200, vocab_words=30, rng_seed=0)
vocab, pairs = generate_corpus(cfg)
print(f"vocabulary: {vocab.size} tokens ({len(vocab.punct_ids)} punctuation marks)")

questions = sum(vocab.tokens[p.y_pnct[-1]] == "?" for p in pairs)
print(f"{len(pairs)} utterances, {questions} end in a question mark")
print("questions always open with a starter word, so the final mark is")
print("predictable from the words, not just from the pause acoustics\n")

pair = next(p for p in pairs if vocab.tokens[p.y_pnct[-1]] == "?")
print("punctuated:  ", " ".join(vocab.decode(pair.y_pnct)))
print("unpunctuated:", " ".join(vocab.unpunctuated().decode(pair.y_unpnct)))
print("classes:     ", " ".join(derive_punct_classes(pair.y_pnct, vocab)))

synth = SynthConfig(dim=16, frames_per_word=(3, 5), noise_std=0.15)
protos = word_prototypes(vocab, synth)
x = synthesize(pair.y_pnct, vocab, synth, protos, np.random.default_rng(1))
print(f"\nfeatures: {x.shape[0]} frames x {x.shape[1]} channels")
print("last channel is the pause cue; frame energy elsewhere comes from")
print("the word prototypes plus noise")

energy = np.linalg.norm(x[:, :-1], axis=1)
cue = x[:, -1]
print(f"\n{'frame':>5} {'energy':>7} {'cue':>6}")
for t in range(x.shape[0]):
    tag = " <- pause" if energy[t] < 0.7 else ""
    print(f"{t:>5} {energy[t]:>7.2f} {cue[t]:>6.2f}{tag}")
print(f"\ncue levels by mark: {PAUSE_CUE}")
print("the levels are close together: under noise the cue mostly flags")
print("that a pause happened, and the model must read the words to pick")
print("the mark class")
