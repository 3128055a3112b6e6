"""Synthetic punctuated-transcript corpus and label-view derivations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .vocab import (
    CLASS_O,
    CLASS_TO_MARK,
    MARK_TO_CLASS,
    QUESTION_STARTERS,
    Vocab,
    VocabError,
    build_vocab,
    default_words,
)


class MalformedTranscriptError(ValueError):
    """Adjacent or leading punctuation, or mismatched lengths."""


@dataclass(frozen=True)
class TranscriptPair:
    """One utterance in both label views (ids over the respective vocabs)."""

    y_pnct: List[int]
    y_unpnct: List[int]


@dataclass(frozen=True)
class CorpusConfig:
    n_utterances: int = 2400
    vocab_words: int = 30
    max_len: int = 10
    min_len: int = 3
    # comma: per-interior-word insertion rate; question: share of end marks
    punct_rates: Dict[str, float] = field(
        default_factory=lambda: {"comma": 0.2, "question": 0.25}
    )
    end_mark_rate: float = 1.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_utterances <= 0 or self.vocab_words <= 0:
            raise ValueError("counts must be positive")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        for k, v in self.punct_rates.items():
            if k not in ("comma", "question"):
                raise ValueError(f"unknown punctuation rate {k!r}")
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"rate {k}={v} outside [0,1]")
        if not 0.0 <= self.end_mark_rate <= 1.0:
            raise ValueError("end_mark_rate outside [0,1]")


def strip_punctuation(y_pnct: Sequence[int], vocab: Vocab) -> List[int]:
    """Remove punctuation ids and re-index into the unpunctuated view."""
    vocab.check_ids(y_pnct)
    remap = vocab.remap_to_unpunctuated()
    return [remap[i] for i in y_pnct if not vocab.is_punct(i)]


def derive_punct_classes(y_pnct: Sequence[int], vocab: Vocab) -> List[str]:
    """One class per word: the mark immediately following it, else O."""
    vocab.check_ids(y_pnct)
    classes: List[str] = []
    prev_was_punct = True  # forbids leading punctuation
    for i in y_pnct:
        if vocab.is_punct(i):
            if prev_was_punct:
                raise MalformedTranscriptError(
                    "leading or adjacent punctuation in transcript"
                )
            classes[-1] = MARK_TO_CLASS[vocab.tokens[i]]
            prev_was_punct = True
        else:
            classes.append(CLASS_O)
            prev_was_punct = False
    return classes


def apply_punct_classes(
    y_unpnct: Sequence[int], classes: Sequence[str], vocab: Vocab
) -> List[int]:
    """Inverse of derive_punct_classes; vocab is the PUNCTUATED view."""
    if len(y_unpnct) != len(classes):
        raise MalformedTranscriptError(
            f"length mismatch: {len(y_unpnct)} tokens vs {len(classes)} classes"
        )
    unp = vocab.unpunctuated()
    unp.check_ids(y_unpnct)
    inverse = {v: k for k, v in vocab.remap_to_unpunctuated().items()}
    stoi = vocab.stoi
    out: List[int] = []
    for tok, cls in zip(y_unpnct, classes):
        out.append(inverse[tok])
        if cls != CLASS_O:
            if cls not in CLASS_TO_MARK:
                raise VocabError(f"unknown punctuation class {cls!r}")
            out.append(stoi[CLASS_TO_MARK[cls]])
    return out


def make_pair(y_pnct: Sequence[int], vocab: Vocab) -> TranscriptPair:
    return TranscriptPair(y_pnct=list(y_pnct), y_unpnct=strip_punctuation(y_pnct, vocab))


def generate_corpus(config: CorpusConfig) -> tuple[Vocab, List[TranscriptPair]]:
    """Deterministic synthetic corpus of punctuated transcripts.

    Commas appear after interior words. Each utterance ends with a period
    or question mark; questions open with a designated starter word and
    statements never do, so the final mark is recoverable from the words
    rather than from a per-utterance coin flip. Small vocabularies without
    starter words fall back to unconditioned question sampling.
    """
    config.validate()
    vocab = build_vocab(default_words(config.vocab_words))
    rng = np.random.default_rng(config.rng_seed)
    word_ids = [i for i in range(vocab.size) if i != 0 and not vocab.is_punct(i)]
    stoi = vocab.stoi
    comma_rate = config.punct_rates.get("comma", 0.0)
    question_rate = config.punct_rates.get("question", 0.0)
    starters = [stoi[w] for w in QUESTION_STARTERS if w in stoi]
    statement_openers = [i for i in word_ids if i not in starters]

    pairs: List[TranscriptPair] = []
    for _ in range(config.n_utterances):
        n_words = int(rng.integers(config.min_len, config.max_len + 1))
        has_end = rng.random() < config.end_mark_rate
        is_question = has_end and rng.random() < question_rate
        y: List[int] = []
        for k in range(n_words):
            pool = word_ids
            if starters and k == 0:
                pool = starters if is_question else statement_openers
            y.append(pool[int(rng.integers(len(pool)))])
            if k < n_words - 1 and rng.random() < comma_rate:
                y.append(stoi[","])
        if has_end:
            y.append(stoi["?"] if is_question else stoi["."])
        pairs.append(make_pair(y, vocab))
    return vocab, pairs


def save_corpus(path: Path, vocab: Vocab, pairs: Sequence[TranscriptPair]) -> None:
    """One utterance per line, punctuation as standalone tokens."""
    with open(path, "w") as f:
        for p in pairs:
            f.write(" ".join(vocab.decode(p.y_pnct)) + "\n")


def load_corpus(path: Path, vocab: Vocab) -> List[TranscriptPair]:
    pairs = []
    with open(path) as f:
        for line in f:
            toks = line.split()
            pairs.append(make_pair(vocab.encode(toks), vocab))
    return pairs


def save_manifest(path: Path, vocab: Vocab, meta: dict) -> None:
    doc = {
        "tokens": vocab.tokens,
        "punct_ids": sorted(vocab.punct_ids),
        **meta,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_manifest(path: Path) -> tuple[Vocab, dict]:
    with open(path) as f:
        doc = json.load(f)
    vocab = Vocab(tokens=doc["tokens"], punct_ids=frozenset(doc["punct_ids"]))
    meta = {k: v for k, v in doc.items() if k not in ("tokens", "punct_ids")}
    return vocab, meta
