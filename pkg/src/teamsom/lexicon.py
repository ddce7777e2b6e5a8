"""Word-category lexicons and LIWC-style percentage scoring.

A lexicon file holds ``[category]`` section headers followed by one pattern
per line. A pattern is an exact lowercase word or a prefix ending in ``*``.
Lines starting with ``#`` and blank lines are ignored::

    [social]
    give
    buddy
    love

    [cogmech]
    think
    determin*
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import BadWildcard, EmptyCategory, EmptyText, NoScorableText, ParseError

_TOKEN_RE = re.compile(r"(?:[^\W_]|['’])+")
_HEADER_RE = re.compile(r"^\[([^\[\]]+)\]$")

DEMO_CATEGORIES = ("social", "posemo", "negemo", "cogmech", "work", "achieve")


class Tokens(NamedTuple):
    tokens: list[str]
    word_count: int


def is_word(token: str) -> bool:
    return any(ch.isalpha() for ch in token)


def tokenize(text: str) -> Tokens:
    """Split into maximal runs of letters, digits and apostrophes.

    Tokens are lowercased; only tokens containing a letter count as words.
    """
    tokens = [t.replace("’", "'").lower() for t in _TOKEN_RE.findall(text or "")]
    return Tokens(tokens, sum(1 for t in tokens if is_word(t)))


@dataclass(frozen=True)
class Lexicon:
    categories: tuple[str, ...]
    patterns: Mapping[str, frozenset[str]]

    def __post_init__(self):
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("category names must be unique")
        if set(self.categories) != set(self.patterns):
            raise ValueError("patterns must be keyed by exactly the declared categories")
        exact: dict[str, set[int]] = {}
        prefix: dict[str, set[int]] = {}
        for idx, cat in enumerate(self.categories):
            if not cat:
                raise ValueError("empty category name")
            pats = self.patterns[cat]
            if not pats:
                raise EmptyCategory(cat)
            for p in pats:
                _check_pattern(p)
                if p.endswith("*"):
                    prefix.setdefault(p[:-1], set()).add(idx)
                else:
                    exact.setdefault(p, set()).add(idx)
        object.__setattr__(self, "patterns", {c: frozenset(self.patterns[c]) for c in self.categories})
        object.__setattr__(self, "_exact", {k: frozenset(v) for k, v in exact.items()})
        object.__setattr__(self, "_prefix", {k: frozenset(v) for k, v in prefix.items()})
        object.__setattr__(self, "_max_prefix", max((len(k) for k in prefix), default=0))

    def categories_for(self, token: str) -> frozenset[int]:
        """Indices of every category with at least one pattern matching ``token``."""
        hits = set(self._exact.get(token, ()))
        for i in range(1, min(len(token), self._max_prefix) + 1):
            cats = self._prefix.get(token[:i])
            if cats:
                hits |= cats
        return frozenset(hits)


def _check_pattern(pattern: str) -> None:
    if not pattern:
        raise ValueError("empty pattern")
    if "*" in pattern[:-1] or pattern == "*":
        raise BadWildcard(pattern)


def compile_lexicon(source) -> Lexicon:
    """Parse a lexicon from a path or from the file contents as a string.

    A ``str`` is read as a path only when it names an existing file and
    contains no newline.
    """
    if isinstance(source, os.PathLike):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str) and "\n" not in source and os.path.isfile(source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)

    order: list[str] = []
    patterns: dict[str, set[str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            m = _HEADER_RE.match(line)
            if not m or not m.group(1).strip():
                raise ParseError(lineno, f"malformed section header {line!r}")
            current = m.group(1).strip()
            if current in patterns:
                raise ParseError(lineno, f"duplicate category {current!r}")
            order.append(current)
            patterns[current] = set()
            continue
        if current is None:
            raise ParseError(lineno, "pattern before any [category] header")
        if any(ch.isspace() for ch in line):
            raise ParseError(lineno, f"one pattern per line expected, got {line!r}")
        pattern = line.lower()
        _check_pattern(pattern)
        patterns[current].add(pattern)

    if not order:
        raise ParseError(0, "no categories defined")
    for name in order:
        if not patterns[name]:
            raise EmptyCategory(name)
    return Lexicon(tuple(order), {k: frozenset(v) for k, v in patterns.items()})


def demo_lexicon_text() -> str:
    return resources.files("teamsom").joinpath("data/demo_lexicon.txt").read_text(encoding="utf-8")


def load_demo_lexicon() -> Lexicon:
    return compile_lexicon(demo_lexicon_text())


def count_categories(tokens: Sequence[str], lexicon: Lexicon) -> tuple[int, list[int]]:
    """Word count and per-category hit counts for an already tokenized text."""
    counts = [0] * len(lexicon.categories)
    words = 0
    cache: dict[str, frozenset[int]] = {}
    for tok in tokens:
        if not is_word(tok):
            continue
        words += 1
        cats = cache.get(tok)
        if cats is None:
            cats = cache[tok] = lexicon.categories_for(tok)
        for c in cats:
            counts[c] += 1
    return words, counts


def _percentages(words: int, counts: Sequence[int], lexicon: Lexicon) -> dict[str, float]:
    return {cat: 100.0 * n / words for cat, n in zip(lexicon.categories, counts)}


def score_text(text: str, lexicon: Lexicon) -> tuple[int, dict[str, float]]:
    words, counts = count_categories(tokenize(text).tokens, lexicon)
    if words == 0:
        raise EmptyText("text contains no words")
    return words, _percentages(words, counts, lexicon)


@dataclass(frozen=True)
class BehaviorProfile:
    work_item_id: str
    word_count: int
    percentages: Mapping[str, float]


def score_work_item(messages: Iterable, lexicon: Lexicon, work_item_id: str | None = None) -> BehaviorProfile:
    """Pool category counts over all of an item's messages, then divide.

    This is a ratio of totals, not the mean of per-message percentages.
    """
    messages = list(messages)
    ids = {m.work_item_id for m in messages}
    if work_item_id is None and len(ids) == 1:
        work_item_id = next(iter(ids))
    if len(ids) > 1 or (ids and work_item_id not in ids):
        raise ValueError("messages must all belong to the same work item")
    words = 0
    counts = [0] * len(lexicon.categories)
    for m in messages:
        w, c = count_categories(tokenize(m.text).tokens, lexicon)
        words += w
        counts = [a + b for a, b in zip(counts, c)]
    if words == 0:
        raise NoScorableText(work_item_id)
    return BehaviorProfile(work_item_id, words, _percentages(words, counts, lexicon))


def zero_profile(work_item_id: str, lexicon: Lexicon) -> BehaviorProfile:
    return BehaviorProfile(work_item_id, 0, {c: 0.0 for c in lexicon.categories})
