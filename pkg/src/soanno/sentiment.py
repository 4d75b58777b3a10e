"""Rule-based lexicon sentiment scoring.

The scorer follows the classic social-media valence-lexicon recipe: token
valences from a shipped lexicon, adjusted by negation, degree modifiers,
and ALL-CAPS emphasis, then squashed into a bounded compound score. The
full published tool also reweights idioms and "but" clauses; this engine
deliberately stops at the rules below so every constant stays testable.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

# Empirically derived rule constants from the published reference
# implementation of the lexicon method; overridable per lexicon.
NEGATION_SCALAR = -0.74
BOOSTER_INCREMENT = 0.293
ALLCAPS_INCREMENT = 0.733
EXCLAMATION_INCREMENT = 0.292
COMPOUND_ALPHA = 15.0
MAX_EXCLAMATIONS = 3
LOOKBACK = 3
# distance damping for modifiers two and three tokens back
_DISTANCE_SCALE = (1.0, 0.95, 0.9)

_RAW_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")


class LexiconError(Exception):
    """Unparsable lexicon input."""


@dataclass(frozen=True)
class SentimentLexicon:
    valence: dict[str, float]
    boosters: dict[str, float] = field(default_factory=dict)
    negators: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for token, value in self.valence.items():
            if not -4.0 <= value <= 4.0:
                raise ValueError(f"valence for {token!r} outside [-4, 4]: {value}")
        for token, value in self.boosters.items():
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"booster for {token!r} outside [-1, 1]: {value}")


@dataclass(frozen=True)
class SentimentScores:
    pos: float
    neg: float
    neu: float
    compound: float


def load_lexicon(
    path: str | Path | None = None,
    boosters_path: str | Path | None = None,
    negators_path: str | Path | None = None,
) -> SentimentLexicon:
    """Load token valences plus booster/negator lists.

    All three default to the versioned files shipped with the package.
    Valence file is token<TAB>valence; booster lines are token with an
    optional tab-separated increment (default +0.293).
    """
    valence = _parse_valence(_read(path, "sentiment_lexicon.tsv"))
    boosters = _parse_boosters(_read(boosters_path, "boosters.txt"))
    negators = frozenset(
        line.strip().lower()
        for line in _read(negators_path, "negators.txt").splitlines()
        if line.strip()
    )
    return SentimentLexicon(valence=valence, boosters=boosters, negators=negators)


def _read(path: str | Path | None, packaged_name: str) -> str:
    if path is None:
        return resources.files("soanno.data").joinpath(packaged_name).read_text(
            encoding="utf-8"
        )
    return Path(path).read_text(encoding="utf-8")


def _parse_valence(text: str) -> dict[str, float]:
    valence: dict[str, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise LexiconError(f"line {line_no}: expected token<TAB>valence")
        token = parts[0].strip().lower()
        try:
            value = float(parts[1])
        except ValueError:
            raise LexiconError(
                f"line {line_no}: unparsable valence {parts[1]!r}"
            ) from None
        if token in valence:
            log.warning("duplicate lexicon token %r at line %d; last wins", token, line_no)
        valence[token] = value
    if not valence:
        log.warning("loaded an empty sentiment lexicon")
    return valence


def _parse_boosters(text: str) -> dict[str, float]:
    boosters: dict[str, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        token = parts[0].strip().lower()
        if len(parts) > 1:
            try:
                increment = float(parts[1])
            except ValueError:
                raise LexiconError(
                    f"line {line_no}: unparsable booster increment {parts[1]!r}"
                ) from None
        else:
            increment = BOOSTER_INCREMENT
        boosters[token] = increment
    return boosters


def score(text: str, lexicon: SentimentLexicon) -> SentimentScores:
    """Score one text against the lexicon.

    compound = S / sqrt(S^2 + 15) over the adjusted valence sum S;
    pos/neg/neu are normalized shares of positive, negative, and
    zero-valence token mass (each sentiment hit weighs |valence| + 1).
    """
    raw_tokens = [m.group(0) for m in _RAW_TOKEN_RE.finditer(text)]
    if not raw_tokens:
        return SentimentScores(pos=0.0, neg=0.0, neu=1.0, compound=0.0)
    lower = [t.lower() for t in raw_tokens]
    mixed_case = _has_case_contrast(raw_tokens)

    pos_mass = 0.0
    neg_mass = 0.0
    neu_count = 0
    total = 0.0
    for i, token in enumerate(lower):
        valence = lexicon.valence.get(token)
        if valence is None or token in lexicon.boosters or token in lexicon.negators:
            neu_count += 1
            continue
        adjusted = _adjust_valence(valence, i, raw_tokens, lower, lexicon, mixed_case)
        total += adjusted
        if adjusted > 0:
            pos_mass += adjusted + 1.0
        elif adjusted < 0:
            neg_mass += -adjusted + 1.0
        else:
            neu_count += 1

    total += _exclamation_bump(text, total)
    compound = total / math.sqrt(total * total + COMPOUND_ALPHA)
    mass = pos_mass + neg_mass + neu_count
    if mass == 0:
        return SentimentScores(pos=0.0, neg=0.0, neu=1.0, compound=compound)
    return SentimentScores(
        pos=pos_mass / mass,
        neg=neg_mass / mass,
        neu=neu_count / mass,
        compound=compound,
    )


def _adjust_valence(
    valence: float,
    index: int,
    raw_tokens: list[str],
    lower: list[str],
    lexicon: SentimentLexicon,
    mixed_case: bool,
) -> float:
    adjusted = valence
    if mixed_case and raw_tokens[index].isupper():
        adjusted += math.copysign(ALLCAPS_INCREMENT, adjusted)
    for distance in range(1, LOOKBACK + 1):
        j = index - distance
        if j < 0:
            break
        prior = lower[j]
        if prior in lexicon.boosters and adjusted != 0:
            bump = lexicon.boosters[prior] * _DISTANCE_SCALE[distance - 1]
            # increment follows the token's polarity; dampeners pull toward 0
            adjusted += bump if adjusted > 0 else -bump
    for distance in range(1, LOOKBACK + 1):
        j = index - distance
        if j < 0:
            break
        if lower[j] in lexicon.negators:
            adjusted *= NEGATION_SCALAR
    return adjusted


def _exclamation_bump(text: str, current_sum: float) -> float:
    if current_sum == 0:
        return 0.0
    count = min(len(text) - len(text.rstrip("!")), MAX_EXCLAMATIONS)
    return math.copysign(count * EXCLAMATION_INCREMENT, current_sum)


def _has_case_contrast(tokens: list[str]) -> bool:
    upper = sum(1 for t in tokens if t.isupper())
    return 0 < upper < len(tokens)
