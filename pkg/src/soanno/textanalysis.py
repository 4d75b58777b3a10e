"""Tokenization, n-grams, syllable counting, and reading-ease scoring."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

# Unicode-alphanumeric runs, internal apostrophes kept ("don't" is one token).
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")
_SENTENCE_END_RE = re.compile(r"[.!?]+")
_VOWELS = frozenset("aeiouy")


class UnscorableTextError(ValueError):
    """Raised when a readability score is requested for wordless text."""


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    sentence_count: int
    word_count: int


@dataclass(frozen=True)
class NgramConfig:
    orders: frozenset[int] = frozenset({1, 2, 3})
    stopwords: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.orders:
            raise ValueError("ngram orders must be non-empty")
        if any(n < 1 for n in self.orders):
            raise ValueError("ngram orders must be positive")


def tokenize(text: str) -> TokenStream:
    """Lowercase word tokens plus a terminal-punctuation sentence count.

    Sentence count falls back to 1 for non-empty text without . ! or ?.
    """
    tokens = tuple(m.group(0).lower() for m in _TOKEN_RE.finditer(text))
    if not tokens:
        return TokenStream(tokens=(), sentence_count=0, word_count=0)
    sentences = len(_SENTENCE_END_RE.findall(text))
    return TokenStream(
        tokens=tokens,
        sentence_count=max(sentences, 1),
        word_count=len(tokens),
    )


def ngrams(stream: TokenStream, config: NgramConfig) -> list[str]:
    """Space-joined contiguous n-grams after stopword removal."""
    kept = [t for t in stream.tokens if t not in config.stopwords]
    out: list[str] = []
    for n in sorted(config.orders):
        out.extend(" ".join(kept[i : i + n]) for i in range(len(kept) - n + 1))
    return out


def syllables(word: str) -> int:
    """Approximate syllable count: maximal aeiouy groups, silent final e.

    The trailing-e subtraction never takes the count below 1.
    """
    normalized = "".join(ch for ch in word.lower() if ch.isalpha())
    if not normalized:
        raise ValueError(f"cannot count syllables of {word!r}")
    groups = 0
    in_group = False
    for ch in normalized:
        if ch in _VOWELS:
            if not in_group:
                groups += 1
            in_group = True
        else:
            in_group = False
    if normalized.endswith("e") and groups > 1:
        groups -= 1
    return max(groups, 1)


def flesch_reading_ease(text: str) -> float:
    """206.835 - 1.015 * words/sentences - 84.6 * syllables/words.

    Unclamped; raises UnscorableTextError when the text has no words.
    """
    stream = tokenize(text)
    if stream.word_count == 0:
        raise UnscorableTextError("no words to score")
    syllable_total = sum(_syllables_lenient(tok) for tok in stream.tokens)
    words = stream.word_count
    sentences = stream.sentence_count
    return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllable_total / words)


def _syllables_lenient(token: str) -> int:
    # numeric tokens ("2020") count as one syllable rather than erroring
    try:
        return syllables(token)
    except ValueError:
        return 1


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Stopword set from a one-token-per-line file; ships a default list."""
    if path is None:
        text = resources.files("soanno.data").joinpath("stopwords_en.txt").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())
