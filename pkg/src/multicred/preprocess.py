"""Text cleaning applied before any vectorization or sentiment analysis.

Five rules, applied in a fixed order: lowercase, strip URL tokens, strip
hashtag tokens, strip mention tokens, strip stopwords. Tokens that are
pure punctuation are dropped as well. Removal always takes the whole
token, not just the sigil.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional


@dataclass(frozen=True)
class CleanText:
    """Cleaned, whitespace-tokenized text.

    Invariants: every token is lowercase, is not a URL, does not start
    with '#' or '@', and is not a stopword; ``joined`` is the tokens
    joined by single spaces.
    """

    tokens: tuple[str, ...]
    joined: str

    @staticmethod
    def from_tokens(tokens: Iterable[str]) -> "CleanText":
        toks = tuple(tokens)
        return CleanText(tokens=toks, joined=" ".join(toks))


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    """The stopword list shipped with the package."""
    text = resources.files("multicred.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.splitlines() if w and not w.startswith("#"))


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load an override stopword list: one lowercase word per line, UTF-8."""
    raw = Path(path).read_bytes().decode("utf-8", errors="replace")
    return frozenset(w.strip() for w in raw.splitlines() if w.strip())


def _is_url(token: str) -> bool:
    return token.startswith(("http://", "https://", "www."))


def _is_punctuation_only(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def preprocess(text: str | bytes, stopwords: Optional[frozenset[str]] = None) -> CleanText:
    """Clean raw text into a :class:`CleanText`.

    Empty input is fine and yields an empty token list. Byte input with
    invalid UTF-8 is decoded with replacement rather than raising.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if stopwords is None:
        stopwords = default_stopwords()

    kept = []
    for token in text.lower().split():
        if _is_url(token):
            continue
        if token.startswith("#") or token.startswith("@"):
            continue
        if token in stopwords:
            continue
        if _is_punctuation_only(token):
            continue
        kept.append(token)
    return CleanText.from_tokens(kept)
