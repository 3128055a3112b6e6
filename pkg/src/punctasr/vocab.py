"""Token vocabularies with punctuated and unpunctuated views.

Index 0 is always the CTC blank. Punctuation marks are standalone tokens
in the punctuated view; the unpunctuated view is the same vocabulary with
the marks removed and the remaining indices re-mapped order-preservingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence

BLANK_TOKEN = "<blank>"

COMMA = ","
PERIOD = "."
QUESTION = "?"
PUNCT_MARKS = (COMMA, PERIOD, QUESTION)

# Per-token punctuation classes: the mark (if any) immediately after a word.
CLASS_O = "O"
CLASS_COMMA = "COMMA"
CLASS_PERIOD = "PERIOD"
CLASS_QUESTION = "QUESTION"
PUNCT_CLASSES = (CLASS_O, CLASS_COMMA, CLASS_PERIOD, CLASS_QUESTION)
CLASS_TO_MARK = {CLASS_COMMA: COMMA, CLASS_PERIOD: PERIOD, CLASS_QUESTION: QUESTION}
MARK_TO_CLASS = {v: k for k, v in CLASS_TO_MARK.items()}


class VocabView(Enum):
    PUNCTUATED = "punctuated"
    UNPUNCTUATED = "unpunctuated"


class VocabError(ValueError):
    """Unknown token id or malformed token sequence."""


@dataclass(frozen=True)
class Vocab:
    """Ordered token inventory. blank is id 0; punct_ids marks punctuation."""

    tokens: List[str]
    punct_ids: frozenset = field(default_factory=frozenset)
    view: VocabView = VocabView.PUNCTUATED

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != BLANK_TOKEN:
            raise VocabError("token 0 must be the blank token")
        if self.view is VocabView.UNPUNCTUATED and self.punct_ids:
            raise VocabError("unpunctuated view must have no punctuation ids")
        if 0 in self.punct_ids:
            raise VocabError("blank cannot be punctuation")

    @property
    def blank_id(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def stoi(self) -> Dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def is_punct(self, token_id: int) -> bool:
        return token_id in self.punct_ids

    def check_ids(self, ids: Sequence[int]) -> None:
        for i in ids:
            if not 0 <= i < self.size:
                raise VocabError(f"token id {i} outside vocabulary of size {self.size}")

    def encode(self, tokens: Sequence[str]) -> List[int]:
        table = self.stoi
        try:
            return [table[t] for t in tokens]
        except KeyError as e:
            raise VocabError(f"unknown token {e.args[0]!r}") from None

    def decode(self, ids: Sequence[int]) -> List[str]:
        self.check_ids(ids)
        return [self.tokens[i] for i in ids]

    def unpunctuated(self) -> "Vocab":
        """Drop punctuation tokens; remaining ids re-map order-preservingly."""
        if self.view is VocabView.UNPUNCTUATED:
            return self
        kept = [t for i, t in enumerate(self.tokens) if i not in self.punct_ids]
        return Vocab(tokens=kept, punct_ids=frozenset(), view=VocabView.UNPUNCTUATED)

    def remap_to_unpunctuated(self) -> Dict[int, int]:
        """Bijection from non-punctuation ids here to ids in the unpunctuated view."""
        mapping = {}
        j = 0
        for i in range(self.size):
            if i not in self.punct_ids:
                mapping[i] = j
                j += 1
        return mapping


def build_vocab(words: Sequence[str]) -> Vocab:
    """Punctuated vocabulary: blank, the three marks, then the words."""
    tokens = [BLANK_TOKEN, COMMA, PERIOD, QUESTION] + list(words)
    if len(set(tokens)) != len(tokens):
        raise VocabError("duplicate tokens in word list")
    return Vocab(tokens=tokens, punct_ids=frozenset({1, 2, 3}), view=VocabView.PUNCTUATED)


# Words that can open a question. Utterance-final "?" vs "." is tied to
# the opening word, so the mark class carries sentence-level information
# instead of being a per-position coin flip.
QUESTION_STARTERS = ("what", "who", "how", "why")

# A closed desk-scale word inventory; configs ask for the first n words.
_WORDS = [
    "the", "a", "is", "it", "yes", "no", "we", "you", "they", "go",
    "see", "time", "day", "good", "well", "now", "then", "here", "there", "what",
    "who", "how", "why", "come", "make", "take", "know", "think", "say", "work",
    "home", "way", "thing", "world", "life", "hand", "part", "place", "week", "year",
]


def default_words(n: int) -> List[str]:
    if n <= len(_WORDS):
        return _WORDS[:n]
    return _WORDS + [f"word{i}" for i in range(len(_WORDS), n)]
