"""Scoring: WER after punctuation stripping, and slot-based per-class
punctuation F1 on Levenshtein-aligned word sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import strip_punctuation
from .vocab import CLASS_O, MARK_TO_CLASS, PUNCT_CLASSES, Vocab


class Op(Enum):
    MATCH = "match"
    SUB = "sub"
    INS = "ins"  # hypothesis-only word
    DEL = "del"  # reference-only word


@dataclass(frozen=True)
class AlignStep:
    op: Op
    hyp_index: Optional[int]
    ref_index: Optional[int]


def align(hyp: Sequence, ref: Sequence) -> List[AlignStep]:
    """Minimal unit-cost Levenshtein alignment.

    Deterministic tie-break on equal cost: MATCH/SUB, then INS, then DEL.
    """
    n, m = len(hyp), len(ref)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = i
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dp[i - 1][j - 1] + (0 if hyp[i - 1] == ref[j - 1] else 1)
            dp[i][j] = min(sub, dp[i - 1][j] + 1, dp[i][j - 1] + 1)
    steps: List[AlignStep] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (
            0 if hyp[i - 1] == ref[j - 1] else 1
        ):
            op = Op.MATCH if hyp[i - 1] == ref[j - 1] else Op.SUB
            steps.append(AlignStep(op, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            steps.append(AlignStep(Op.INS, i - 1, None))
            i -= 1
        else:
            steps.append(AlignStep(Op.DEL, None, j - 1))
            j -= 1
    steps.reverse()
    return steps


def edit_counts(hyp: Sequence, ref: Sequence) -> Tuple[int, int, int]:
    """(substitutions, insertions, deletions) from the minimal alignment."""
    steps = align(hyp, ref)
    s = sum(1 for st in steps if st.op is Op.SUB)
    i = sum(1 for st in steps if st.op is Op.INS)
    d = sum(1 for st in steps if st.op is Op.DEL)
    return s, i, d


def wer(hyp_pnct: Sequence[int], ref_pnct: Sequence[int], vocab: Vocab) -> float:
    """(S+I+D)/|ref| with punctuation removed from both sides first."""
    hyp = strip_punctuation(hyp_pnct, vocab)
    ref = strip_punctuation(ref_pnct, vocab)
    if not ref and not hyp:
        return 0.0
    s, i, d = edit_counts(hyp, ref)
    return (s + i + d) / max(1, len(ref))


def _word_slots(seq_pnct: Sequence[int], vocab: Vocab) -> Tuple[List[int], List[str], int]:
    """Words with their following-punctuation class; extra marks counted.

    A mark not immediately following a word (leading, or second of an
    adjacent run) cannot occupy a slot; it is returned via the extra count
    per class so the caller can score it as a false positive.
    """
    words: List[int] = []
    classes: List[str] = []
    extras: Dict[str, int] = {}
    prev_was_word = False
    for tok in seq_pnct:
        if vocab.is_punct(tok):
            cls = MARK_TO_CLASS[vocab.tokens[tok]]
            if prev_was_word:
                classes[-1] = cls
            else:
                extras[cls] = extras.get(cls, 0) + 1
            prev_was_word = False
        else:
            words.append(tok)
            classes.append(CLASS_O)
            prev_was_word = True
    return words, classes, extras


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def punct_counts(
    hyp_pnct: Sequence[int], ref_pnct: Sequence[int], vocab: Vocab
) -> Dict[str, ClassCounts]:
    """Per-class TP/FP/FN from slot comparison on aligned word sequences."""
    hyp_words, hyp_cls, hyp_extras = _word_slots(hyp_pnct, vocab)
    ref_words, ref_cls, ref_extras = _word_slots(ref_pnct, vocab)
    counts = {c: ClassCounts() for c in PUNCT_CLASSES if c != CLASS_O}
    for cls, n in hyp_extras.items():
        counts[cls].fp += n
    for cls, n in ref_extras.items():
        counts[cls].fn += n
    # note: ref marks on words the hypothesis missed still count as FN via
    # the DEL branch; same for INS on the hyp side.
    for st in align(hyp_words, ref_words):
        h = hyp_cls[st.hyp_index] if st.hyp_index is not None else CLASS_O
        r = ref_cls[st.ref_index] if st.ref_index is not None else CLASS_O
        if h == r:
            if h != CLASS_O:
                counts[h].tp += 1
        else:
            if h != CLASS_O:
                counts[h].fp += 1
            if r != CLASS_O:
                counts[r].fn += 1
    return counts


def merge_counts(
    a: Dict[str, ClassCounts], b: Dict[str, ClassCounts]
) -> Dict[str, ClassCounts]:
    out = {}
    for cls in set(a) | set(b):
        ca, cb = a.get(cls, ClassCounts()), b.get(cls, ClassCounts())
        out[cls] = ClassCounts(ca.tp + cb.tp, ca.fp + cb.fp, ca.fn + cb.fn)
    return out


@dataclass
class EvalReport:
    system: str
    wer: float
    per_class: Dict[str, ClassCounts]
    n_utterances: int
    n_ref_words: int
    n_errors: int
    param_count: Optional[int] = None

    @property
    def macro_f1(self) -> float:
        scores = [c.f1 for c in self.per_class.values()]
        return sum(scores) / len(scores) if scores else 0.0

    @property
    def micro_f1(self) -> float:
        tp = sum(c.tp for c in self.per_class.values())
        fp = sum(c.fp for c in self.per_class.values())
        fn = sum(c.fn for c in self.per_class.values())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "wer": self.wer,
            "per_class": {
                k: {"tp": v.tp, "fp": v.fp, "fn": v.fn}
                for k, v in sorted(self.per_class.items())
            },
            "n_utterances": self.n_utterances,
            "n_ref_words": self.n_ref_words,
            "n_errors": self.n_errors,
            "param_count": self.param_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            system=d["system"],
            wer=d["wer"],
            per_class={
                k: ClassCounts(v["tp"], v["fp"], v["fn"])
                for k, v in d["per_class"].items()
            },
            n_utterances=d["n_utterances"],
            n_ref_words=d["n_ref_words"],
            n_errors=d["n_errors"],
            param_count=d.get("param_count"),
        )


def evaluate_system(
    decoded: Sequence[Sequence[int]],
    references: Sequence[Sequence[int]],
    vocab: Vocab,
    system: str = "system",
    param_count: Optional[int] = None,
) -> EvalReport:
    """Corpus-level report: pooled error counts, pooled TP/FP/FN."""
    if len(decoded) != len(references):
        raise ValueError(
            f"{len(decoded)} hypotheses for {len(references)} references"
        )
    total_errors = 0
    total_ref = 0
    counts: Dict[str, ClassCounts] = {}
    for hyp, ref in zip(decoded, references):
        h = strip_punctuation(hyp, vocab)
        r = strip_punctuation(ref, vocab)
        s, i, d = edit_counts(h, r)
        total_errors += s + i + d
        total_ref += len(r)
        counts = merge_counts(counts, punct_counts(hyp, ref, vocab))
    wer_value = total_errors / max(1, total_ref) if (total_ref or total_errors) else 0.0
    return EvalReport(
        system=system,
        wer=wer_value,
        per_class=counts,
        n_utterances=len(decoded),
        n_ref_words=total_ref,
        n_errors=total_errors,
        param_count=param_count,
    )


_TSV_COLUMNS = [
    "system", "wer", "f1_comma", "f1_period", "f1_question",
    "f1_macro", "f1_micro", "params",
]


def reports_to_tsv(reports: Sequence[EvalReport]) -> str:
    lines = ["\t".join(_TSV_COLUMNS)]
    for r in reports:
        cells = [
            r.system,
            f"{r.wer:.6f}",
            f"{r.per_class['COMMA'].f1:.6f}" if "COMMA" in r.per_class else "0.000000",
            f"{r.per_class['PERIOD'].f1:.6f}" if "PERIOD" in r.per_class else "0.000000",
            f"{r.per_class['QUESTION'].f1:.6f}" if "QUESTION" in r.per_class else "0.000000",
            f"{r.macro_f1:.6f}",
            f"{r.micro_f1:.6f}",
            str(r.param_count) if r.param_count is not None else "-",
        ]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
