"""Core domain types: account records, credibility scores, and class binning.

Credibility scores live on a 0-100 scale (0 = least credible). A
:class:`ClassificationSystem` partitions that scale into equal-width bins;
class 0 is always the lowest-credibility bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

MAX_TWEETS_PER_USER = 3250
MAX_COMMENTS_PER_USER = 800
MAX_TWEET_TEXT_LEN = 4000

ALLOWED_CLASS_COUNTS = (4, 6, 8, 10)

# The nine trust criteria and their score weights, ordered from most to
# least valuable. Weights sum to exactly 100.
CRITERIA = (
    ("no_false_content", 22.0),
    ("responsible_reporting", 18.0),
    ("corrects_errors", 12.5),
    ("news_opinion_distinction", 12.5),
    ("avoids_deceptive_headlines", 10.0),
    ("discloses_ownership", 7.5),
    ("labels_advertising", 7.5),
    ("reveals_management", 5.0),
    ("names_content_creators", 5.0),
)

CRITERION_WEIGHTS = tuple(weight for _, weight in CRITERIA)


class DomainError(ValueError):
    """A value violates a domain contract (range, membership, shape)."""


@dataclass(frozen=True)
class UserProfile:
    """Static account fields consumed by the feature pipeline.

    Extra fields returned by real API dumps are accepted upstream and
    simply never reach this type.
    """

    name: str
    screen_name: str
    created_at: datetime
    location: Optional[str] = None
    description: Optional[str] = None
    url: Optional[str] = None
    protected: bool = False
    followers_count: int = 0
    friends_count: int = 0
    listed_count: int = 0
    favourites_count: int = 0
    geo_enabled: bool = False
    verified: bool = False
    statuses_count: int = 0
    profile_use_background_image: bool = False


@dataclass(frozen=True)
class Tweet:
    """One tweet with the scalar attributes used as features."""

    created_at: datetime
    text: str
    truncated: bool = False
    retweet_count: int = 0
    favorite_count: int = 0
    favorited: bool = False
    retweeted: bool = False
    is_quote_status: bool = False
    hashtag_count: int = 0
    mention_count: int = 0
    url_count: int = 0
    symbol_count: int = 0
    has_poll: bool = False


@dataclass(frozen=True)
class Comment:
    """A comment other users left about an account; only the text is kept."""

    text: str


@dataclass(frozen=True)
class UserRecord:
    """One account: profile, recent tweets, recent comments, optional label."""

    user_id: str
    profile: UserProfile
    tweets: tuple[Tweet, ...] = ()
    comments: tuple[Comment, ...] = ()
    score: Optional[float] = None

    def __post_init__(self):
        # Accept lists on construction but store immutable tuples.
        if not isinstance(self.tweets, tuple):
            object.__setattr__(self, "tweets", tuple(self.tweets))
        if not isinstance(self.comments, tuple):
            object.__setattr__(self, "comments", tuple(self.comments))


@dataclass(frozen=True)
class ClassificationSystem:
    """A partition of [0, 100] into num_classes equal-width credibility bins."""

    num_classes: int

    def __post_init__(self):
        if self.num_classes not in ALLOWED_CLASS_COUNTS:
            raise DomainError(
                f"num_classes must be one of {ALLOWED_CLASS_COUNTS}, got {self.num_classes}"
            )


@dataclass(frozen=True)
class CriteriaFlags:
    """Nine booleans, one per trust criterion, in CRITERIA order."""

    flags: tuple[bool, ...]

    def __post_init__(self):
        if not isinstance(self.flags, tuple):
            object.__setattr__(self, "flags", tuple(self.flags))
        if len(self.flags) != len(CRITERIA):
            raise DomainError(f"expected {len(CRITERIA)} criteria flags, got {len(self.flags)}")


def bin_score(score: float, system: ClassificationSystem) -> int:
    """Map a credibility score in [0, 100] to a class index in [0, C).

    Bins are equal width (100/C); the top boundary score == 100 folds into
    the last class. Class 0 is the lowest-credibility interval.
    """
    if not math.isfinite(score) or score < 0.0 or score > 100.0:
        raise DomainError(f"score out of [0,100]: {score}")
    c = system.num_classes
    if score >= 100.0:
        return c - 1
    return int(score * c // 100)


def newsguard_score(flags: CriteriaFlags) -> float:
    """Sum the criterion weights of all satisfied criteria (0 to 100)."""
    return float(sum(w for (_, w), on in zip(CRITERIA, flags.flags) if on))


def validate_record(record: UserRecord) -> list[str]:
    """Check every type invariant; return one description per violation.

    Violations are data, not errors: an empty list means the record is valid.
    """
    violations: list[str] = []
    p = record.profile

    for fname in ("followers_count", "friends_count", "listed_count",
                  "favourites_count", "statuses_count"):
        if getattr(p, fname) < 0:
            violations.append(f"profile.{fname} negative")
    if not isinstance(p.created_at, datetime):
        violations.append("profile.created_at is not a timestamp")

    if len(record.tweets) > MAX_TWEETS_PER_USER:
        violations.append(f"tweets exceed cap {MAX_TWEETS_PER_USER}")
    if len(record.comments) > MAX_COMMENTS_PER_USER:
        violations.append(f"comments exceed cap {MAX_COMMENTS_PER_USER}")

    for i, t in enumerate(record.tweets):
        for fname in ("retweet_count", "favorite_count", "hashtag_count",
                      "mention_count", "url_count", "symbol_count"):
            if getattr(t, fname) < 0:
                violations.append(f"tweets[{i}].{fname} negative")
        if len(t.text) > MAX_TWEET_TEXT_LEN:
            violations.append(f"tweets[{i}].text exceeds {MAX_TWEET_TEXT_LEN} characters")

    if record.score is not None:
        if not math.isfinite(record.score) or not 0.0 <= record.score <= 100.0:
            violations.append("score out of [0,100]")

    return violations


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp (or legacy Twitter format) to aware UTC.

    Naive timestamps are assumed to already be UTC.
    """
    text = value.strip()
    dt = None
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        try:
            dt = datetime.strptime(text, "%a %b %d %H:%M:%S %z %Y")
        except ValueError:
            raise DomainError(f"unparseable timestamp: {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    """Render an aware datetime as canonical ISO-8601 UTC with a Z suffix."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
