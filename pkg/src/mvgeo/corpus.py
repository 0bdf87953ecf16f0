"""Corpus ingestion: users, tweets, token streams, and the timestamp view.

Two on-disk formats are supported.  JSONL holds one user object per line
with fields ``user_id``, ``lat``, ``lon``, ``split`` and
``tweets: [{text, ts}]`` (``ts`` optional).  TSV is a lossy single-text
export: ``user_id<TAB>lat<TAB>lon<TAB>split<TAB>text``.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import stemmer

SPLITS = ("train", "dev", "test")

URL_TOKEN = "<url>"
PUNCT_TOKEN = "<punct>"

MENTION_RE = re.compile(r"@[A-Za-z0-9_]+")

# Sentinel tokens match literally so that tokenization is idempotent on
# its own output.  A lone '@' that does not open a mention is punctuation.
_TOKEN_RE = re.compile(
    r"(?P<sent><url>|<punct>)"
    r"|(?P<url>(?:https?://|www\.)\S+)"
    r"|(?P<mention>@[A-Za-z0-9_]+)"
    r"|(?P<word>\w+)"
    r"|(?P<punct>(?:[^\w\s@]|@(?![A-Za-z0-9_]))+)",
    re.IGNORECASE,
)


class CorpusError(ValueError):
    """Malformed corpus file or record."""


def load_default_stopwords() -> frozenset[str]:
    text = (
        resources.files("mvgeo").joinpath("data/stopwords_en.txt").read_text("utf-8")
    )
    return _parse_stopwords(text)


def load_stopwords(path: str | Path) -> frozenset[str]:
    return _parse_stopwords(Path(path).read_text("utf-8"))


def _parse_stopwords(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


@dataclass(frozen=True)
class PreprocessConfig:
    """Tokenizer settings shared by every text consumer."""

    remove_stopwords: bool = True
    stem: bool = False
    stopwords: frozenset[str] = field(default_factory=load_default_stopwords)


def tokenize(text: str, config: PreprocessConfig | None = None) -> list[str]:
    """Lowercased tokens with URLs and punctuation runs collapsed.

    URLs become the single token ``<url>`` and each maximal punctuation
    run becomes ``<punct>``.  Mentions stay as ``@name`` tokens.  Stop
    words are dropped when enabled; Porter stemming is applied last and
    only to plain word tokens.
    """
    if config is None:
        config = PreprocessConfig()
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        if kind == "url":
            tokens.append(URL_TOKEN)
        elif kind == "punct":
            tokens.append(PUNCT_TOKEN)
        elif kind == "sent":
            tokens.append(match.group())
        elif kind == "mention":
            tokens.append(match.group().lower())
        else:
            word = match.group().lower()
            if config.remove_stopwords and word in config.stopwords:
                continue
            if config.stem:
                word = stemmer.stem(word)
            tokens.append(word)
    return tokens


def extract_mentions(text: str) -> list[str]:
    """Lowercased ``@name`` targets (without the ``@``) in raw text order."""
    return [m.group()[1:].lower() for m in MENTION_RE.finditer(text)]


@dataclass
class Tweet:
    text: str
    timestamp_utc: int | None = None


@dataclass
class User:
    user_id: str
    latitude: float
    longitude: float
    tweets: list[Tweet]
    split: str

    def validate(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise CorpusError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude < 180.0:
            raise CorpusError(f"longitude out of range: {self.longitude}")
        if self.split not in SPLITS:
            raise CorpusError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not self.tweets:
            raise CorpusError("tweets list is empty")
        for tweet in self.tweets:
            if not tweet.text.strip():
                raise CorpusError("tweet text is empty")

    @property
    def coord(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


@dataclass
class TweetDocument:
    """All of one user's processed tweets, concatenated."""

    user_id: str
    tokens: list[str]
    mention_targets: Counter


@dataclass
class Corpus:
    users: dict[str, User]
    documents: dict[str, TweetDocument]

    @property
    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for user in self.users.values():
            counts[user.split] += 1
        return counts

    def user_ids(self, split: str | None = None) -> list[str]:
        """User ids in insertion order, optionally restricted to one split."""
        if split is None:
            return list(self.users)
        return [uid for uid, u in self.users.items() if u.split == split]


def build_document(user: User, config: PreprocessConfig) -> TweetDocument:
    tokens: list[str] = []
    mentions: Counter = Counter()
    for tweet in user.tweets:
        tokens.extend(tokenize(tweet.text, config))
        mentions.update(extract_mentions(tweet.text))
    return TweetDocument(user.user_id, tokens, mentions)


def build_corpus(users: list[User], config: PreprocessConfig | None = None) -> Corpus:
    if config is None:
        config = PreprocessConfig()
    table: dict[str, User] = {}
    for user in users:
        if user.user_id in table:
            raise CorpusError(f"duplicate user_id: {user.user_id}")
        user.validate()
        table[user.user_id] = user
    documents = {uid: build_document(u, config) for uid, u in table.items()}
    return Corpus(table, documents)


def _parse_jsonl_record(line: str, lineno: int) -> User:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    for key in ("user_id", "lat", "lon", "split", "tweets"):
        if key not in record:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
    try:
        lat = float(record["lat"])
        lon = float(record["lon"])
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: non-numeric coordinate") from exc
    tweets = []
    for entry in record["tweets"]:
        if not isinstance(entry, dict) or "text" not in entry:
            raise CorpusError(f"line {lineno}: malformed field 'tweets'")
        ts = entry.get("ts")
        tweets.append(Tweet(str(entry["text"]), None if ts is None else int(ts)))
    return User(str(record["user_id"]), lat, lon, tweets, str(record["split"]))


def _parse_tsv_record(line: str, lineno: int) -> User:
    parts = line.split("\t")
    if len(parts) != 5:
        raise CorpusError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
    user_id, lat_str, lon_str, split, text = parts
    try:
        lat = float(lat_str)
    except ValueError as exc:
        raise CorpusError(f"line {lineno}: bad field 'latitude': {lat_str!r}") from exc
    try:
        lon = float(lon_str)
    except ValueError as exc:
        raise CorpusError(f"line {lineno}: bad field 'longitude': {lon_str!r}") from exc
    return User(user_id, lat, lon, [Tweet(text)], split)


def load_corpus(
    path: str | Path,
    format: str = "jsonl",
    config: PreprocessConfig | None = None,
) -> Corpus:
    """Load and validate a corpus file, building per-user documents."""
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown corpus format: {format!r}")
    parse = _parse_jsonl_record if format == "jsonl" else _parse_tsv_record
    users = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            user = parse(line, lineno)
            try:
                user.validate()
            except CorpusError as exc:
                raise CorpusError(f"line {lineno}: {exc}") from None
            users.append(user)
    return build_corpus(users, config)


def save_corpus(corpus: Corpus, path: str | Path, format: str = "jsonl") -> None:
    """Write a corpus file.  JSONL round-trips; TSV drops tweet boundaries."""
    with open(path, "w", encoding="utf-8") as handle:
        for user in corpus.users.values():
            if format == "jsonl":
                record = {
                    "user_id": user.user_id,
                    "lat": user.latitude,
                    "lon": user.longitude,
                    "split": user.split,
                    "tweets": [
                        {"text": t.text, "ts": t.timestamp_utc} for t in user.tweets
                    ],
                }
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            elif format == "tsv":
                text = " ".join(t.text for t in user.tweets)
                text = re.sub(r"[\t\n\r]+", " ", text)
                handle.write(
                    f"{user.user_id}\t{user.latitude!r}\t{user.longitude!r}"
                    f"\t{user.split}\t{text}\n"
                )
            else:
                raise ValueError(f"unknown corpus format: {format!r}")


def timestamp_feature(user: User) -> np.ndarray:
    """24-bin histogram of UTC posting hours, scaled to unit length.

    Users without any timestamped tweet get the zero vector.
    """
    hist = np.zeros(24, dtype=np.float64)
    for tweet in user.tweets:
        if tweet.timestamp_utc is not None:
            hist[(tweet.timestamp_utc % 86400) // 3600] += 1.0
    norm = np.linalg.norm(hist)
    if norm > 0:
        hist /= norm
    return hist


def hour_histogram(user: User) -> np.ndarray:
    """Raw (un-normalized) posting-hour counts."""
    hist = np.zeros(24, dtype=np.int64)
    for tweet in user.tweets:
        if tweet.timestamp_utc is not None:
            hist[(tweet.timestamp_utc % 86400) // 3600] += 1
    return hist
