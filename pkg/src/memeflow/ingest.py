"""Event-log parsing, meme catalog filters and noun-bag construction.

The input is a time-ordered log of posts, one per line, either tab-separated
(`timestamp \\t user \\t hashtags \\t urls \\t nouns \\t lang`, list fields
comma-joined) or JSON-lines with the same field names.  Hashtags and URLs are
jointly treated as memes; nouns and language tags are expected to be
pre-extracted upstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from ._common import ConfigError, DataError


class Interner:
    """Bijective string <-> dense integer id table."""

    def __init__(self):
        self._by_name: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        idx = self._by_name.get(name)
        if idx is None:
            idx = len(self._names)
            self._by_name[name] = idx
            self._names.append(name)
        return idx

    def get(self, name: str) -> Optional[int]:
        return self._by_name.get(name)

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __len__(self) -> int:
        return len(self._names)

    def names(self) -> list[str]:
        return list(self._names)


KIND_HASHTAG = 0
KIND_URL = 1
_KIND_LABELS = ("hashtag", "url")


class SymbolTables:
    """Interning tables shared across a parse session.

    Memes (hashtags and URLs) share one id space; ``meme_kind[i]`` records
    which field the meme first appeared in.
    """

    def __init__(self):
        self.memes = Interner()
        self.meme_kind: list[int] = []
        self.tokens = Interner()

    def intern_meme(self, name: str, kind: int) -> int:
        idx = self.memes.get(name)
        if idx is None:
            idx = self.memes.intern(name)
            self.meme_kind.append(kind)
        return idx

    def kind_label(self, meme_id: int) -> str:
        return _KIND_LABELS[self.meme_kind[meme_id]]


@dataclass
class TweetRecord:
    timestamp: int
    user: int
    hashtags: list[int]
    urls: list[int]
    nouns: list[int]
    lang: str

    @property
    def memes(self) -> list[int]:
        return self.hashtags + self.urls


@dataclass(frozen=True)
class Window:
    """Three-point timeline: meme emergence span plus analysis horizon.

    Memes must be born in ``[emergence_start, emergence_end]`` (inclusive);
    adoption statistics run through ``analysis_end``.  The topic prior window
    (noun bags) is ``[emergence_start, emergence_end]``.
    """

    emergence_start: int
    emergence_end: int
    analysis_end: int

    def __post_init__(self):
        if not (self.emergence_start <= self.emergence_end <= self.analysis_end):
            raise ConfigError(
                f"empty or inverted window: {self.emergence_start}, "
                f"{self.emergence_end}, {self.analysis_end}"
            )

    @classmethod
    def from_span(cls, t_min: int, t_max: int, topic_fraction: float = 1 / 3) -> "Window":
        """Default split: first ``topic_fraction`` of the span is the
        emergence/topic window, the remainder is analysed."""
        cut = int(t_min + (t_max - t_min) * topic_fraction)
        return cls(t_min, cut, t_max)

    @property
    def prior_window(self) -> tuple[int, int]:
        return (self.emergence_start, self.emergence_end)


@dataclass
class ParseStats:
    lines: int = 0
    records: int = 0
    malformed: int = 0
    out_of_order: int = 0
    bad_lines: list[int] = field(default_factory=list)


def _parse_user(text: str) -> int:
    if text[:1] in ("u", "U"):
        text = text[1:]
    return int(text)


def _split_field(text: str) -> list[str]:
    if not text:
        return []
    return text.split(",")


def parse_log(
    path,
    schema: str = "tsv",
    tables: Optional[SymbolTables] = None,
    strict: bool = False,
    stats: Optional[ParseStats] = None,
) -> Iterator[TweetRecord]:
    """Stream TweetRecords from a log file.

    Malformed lines are counted and skipped unless ``strict`` is set, in
    which case the first problem aborts with the offending line number.
    Timestamps must be non-decreasing; violations are treated as malformed
    (strict mode: fatal).
    """
    if schema not in ("tsv", "jsonl"):
        raise ConfigError(f"unknown log schema: {schema!r}")
    if tables is None:
        tables = SymbolTables()
    if stats is None:
        stats = ParseStats()

    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read log {path}: {exc}") from exc

    last_t = None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            stats.lines += 1
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                rec = _parse_line(line, schema, tables)
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                if strict:
                    raise DataError(f"{path}:{lineno}: malformed line: {exc}") from exc
                stats.malformed += 1
                stats.bad_lines.append(lineno)
                continue
            if last_t is not None and rec.timestamp < last_t:
                if strict:
                    raise DataError(
                        f"{path}:{lineno}: timestamp {rec.timestamp} out of order"
                    )
                stats.out_of_order += 1
                stats.bad_lines.append(lineno)
                continue
            last_t = rec.timestamp
            stats.records += 1
            yield rec


def _parse_line(line: str, schema: str, tables: SymbolTables) -> TweetRecord:
    if schema == "tsv":
        parts = line.split("\t")
        if len(parts) != 6:
            raise ValueError(f"expected 6 tab-separated fields, got {len(parts)}")
        ts_s, user_s, tags_s, urls_s, nouns_s, lang = parts
        ts = int(ts_s)
        user = _parse_user(user_s)
        tags = _split_field(tags_s)
        urls = _split_field(urls_s)
        nouns = _split_field(nouns_s)
    else:
        obj = json.loads(line)
        ts = int(obj["timestamp"])
        user_raw = obj["user"]
        user = _parse_user(user_raw) if isinstance(user_raw, str) else int(user_raw)
        tags = _as_list(obj.get("hashtags", []))
        urls = _as_list(obj.get("urls", []))
        nouns = _as_list(obj.get("nouns", []))
        lang = str(obj.get("lang", ""))
    if ts < 0:
        raise ValueError("negative timestamp")
    return TweetRecord(
        timestamp=ts,
        user=user,
        hashtags=[tables.intern_meme(t, KIND_HASHTAG) for t in tags if t],
        urls=[tables.intern_meme(u, KIND_URL) for u in urls if u],
        nouns=[tables.tokens.intern(n) for n in nouns if n],
        lang=lang,
    )


def _as_list(value) -> list[str]:
    if isinstance(value, str):
        return _split_field(value)
    return [str(v) for v in value]


class TweetLog:
    """Columnar view of a record stream.

    Keeps flat numpy arrays for the per-record fields plus a CSR-style
    (offsets, values) layout for memes and nouns, which is what the exposure
    engine consumes.  Iteration recovers TweetRecord objects.
    """

    def __init__(self, times, users, meme_offsets, meme_values,
                 noun_offsets, noun_values, langs, tables: SymbolTables):
        self.times = np.asarray(times, dtype=np.int64)
        self.users = np.asarray(users, dtype=np.uint64)
        self.meme_offsets = np.asarray(meme_offsets, dtype=np.int64)
        self.meme_values = np.asarray(meme_values, dtype=np.uint32)
        self.noun_offsets = np.asarray(noun_offsets, dtype=np.int64)
        self.noun_values = np.asarray(noun_values, dtype=np.uint32)
        self.langs = langs  # list[str], one per record
        self.tables = tables

    def __len__(self) -> int:
        return len(self.times)

    @property
    def span(self) -> tuple[int, int]:
        if len(self.times) == 0:
            raise DataError("empty log has no time span")
        return int(self.times[0]), int(self.times[-1])

    @classmethod
    def from_records(cls, records: Iterable[TweetRecord],
                     tables: Optional[SymbolTables] = None) -> "TweetLog":
        times, users, langs = [], [], []
        m_off, m_val = [0], []
        n_off, n_val = [0], []
        for rec in records:
            times.append(rec.timestamp)
            users.append(rec.user)
            langs.append(rec.lang)
            m_val.extend(rec.hashtags)
            m_val.extend(rec.urls)
            m_off.append(len(m_val))
            n_val.extend(rec.nouns)
            n_off.append(len(n_val))
        return cls(times, users, m_off, m_val, n_off, n_val, langs,
                   tables if tables is not None else SymbolTables())

    @classmethod
    def from_file(cls, path, schema: str = "tsv", strict: bool = False,
                  stats: Optional[ParseStats] = None) -> "TweetLog":
        tables = SymbolTables()
        return cls.from_records(
            parse_log(path, schema=schema, tables=tables, strict=strict, stats=stats),
            tables=tables,
        )

    def record(self, i: int) -> TweetRecord:
        ms = self.meme_values[self.meme_offsets[i]:self.meme_offsets[i + 1]]
        kinds = self.tables.meme_kind
        tags = [int(m) for m in ms if kinds[m] == KIND_HASHTAG]
        urls = [int(m) for m in ms if kinds[m] == KIND_URL]
        ns = self.noun_values[self.noun_offsets[i]:self.noun_offsets[i + 1]]
        return TweetRecord(int(self.times[i]), int(self.users[i]),
                           tags, urls, [int(n) for n in ns], self.langs[i])

    def __iter__(self) -> Iterator[TweetRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def meme_incidence(self):
        """(record_index, meme_id) pairs as flat arrays."""
        counts = np.diff(self.meme_offsets)
        rec_idx = np.repeat(np.arange(len(self), dtype=np.int64), counts)
        return rec_idx, self.meme_values


class MemeCatalog:
    """Per-meme birth, language share, adopter counts and acceptance flags."""

    def __init__(self, meme_ids, kinds, birth_times, english_shares,
                 adopter_counts, accepted, tables: SymbolTables,
                 window: Window):
        self.meme_ids = np.asarray(meme_ids, dtype=np.uint32)
        self.kinds = np.asarray(kinds, dtype=np.uint8)
        self.birth_times = np.asarray(birth_times, dtype=np.int64)
        self.english_shares = np.asarray(english_shares, dtype=np.float64)
        self.adopter_counts = np.asarray(adopter_counts, dtype=np.int64)
        self.accepted = np.asarray(accepted, dtype=bool)
        self.tables = tables
        self.window = window
        self._row = {int(m): i for i, m in enumerate(self.meme_ids)}

    def __len__(self) -> int:
        return len(self.meme_ids)

    def row(self, meme_id: int) -> int:
        return self._row[int(meme_id)]

    def is_accepted(self, meme_id: int) -> bool:
        i = self._row.get(int(meme_id))
        return bool(self.accepted[i]) if i is not None else False

    def accepted_ids(self) -> np.ndarray:
        return self.meme_ids[self.accepted]

    def birth_of(self, meme_id: int) -> int:
        return int(self.birth_times[self.row(meme_id)])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("meme_id,kind,birth_time,english_share,adopters,accepted\n")
            for i in range(len(self)):
                name = self.tables.memes.name(int(self.meme_ids[i]))
                fh.write(
                    f"{name},{_KIND_LABELS[self.kinds[i]]},{self.birth_times[i]},"
                    f"{self.english_shares[i]:.6f},{self.adopter_counts[i]},"
                    f"{int(self.accepted[i])}\n"
                )


def build_catalog(
    log: TweetLog,
    window: Window,
    english_threshold: float = 0.9,
    min_adopters: int = 100,
    english_over: str = "full",
) -> MemeCatalog:
    """Apply the emergence / language / popularity filters to every meme.

    A meme is accepted when its first occurrence lies inside the emergence
    window (inclusive), at least ``english_threshold`` of its posts are
    English, and at least ``min_adopters`` distinct users adopted it between
    its birth and ``analysis_end``.  Thresholds are inclusive.

    ``english_over`` selects whether the language share is computed over the
    meme's full history ("full", default) or only inside the window
    ("window").
    """
    if english_over not in ("full", "window"):
        raise ConfigError(f"english_over must be 'full' or 'window': {english_over!r}")
    n_memes = len(log.tables.memes)
    rec_idx, meme_ids = log.meme_incidence()
    if n_memes == 0 or len(meme_ids) == 0:
        z = np.zeros(n_memes, dtype=np.int64)
        return MemeCatalog(np.arange(n_memes), log.tables.meme_kind, z, z.astype(float),
                           z, np.zeros(n_memes, dtype=bool), log.tables, window)

    times = log.times[rec_idx]
    users = log.users[rec_idx]
    is_en = np.fromiter((lang == "en" for lang in log.langs),
                        dtype=bool, count=len(log))[rec_idx]

    # Birth time: first occurrence anywhere in the log (input is time-ordered).
    birth = np.full(n_memes, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(birth, meme_ids, times)
    seen = np.zeros(n_memes, dtype=bool)
    seen[meme_ids] = True
    birth[~seen] = -1

    if english_over == "window":
        span = (times >= window.emergence_start) & (times <= window.analysis_end)
    else:
        span = np.ones(len(times), dtype=bool)
    tweet_counts = np.bincount(meme_ids[span], minlength=n_memes)
    en_counts = np.bincount(meme_ids[span & is_en], minlength=n_memes)
    with np.errstate(invalid="ignore"):
        english_share = np.where(tweet_counts > 0, en_counts / tweet_counts, 0.0)

    # Unique adopters between birth and analysis_end (first use adopts).
    in_adopt_span = (times >= birth[meme_ids]) & (times <= window.analysis_end)
    pair_m = meme_ids[in_adopt_span]
    pair_u = users[in_adopt_span]
    pairs = np.unique(np.stack([pair_m.astype(np.int64),
                                pair_u.astype(np.int64)]), axis=1)
    adopters = np.bincount(pairs[0], minlength=n_memes)

    emerged = (birth >= window.emergence_start) & (birth <= window.emergence_end) & seen
    accepted = emerged & (english_share >= english_threshold) & (adopters >= min_adopters)

    return MemeCatalog(
        np.arange(n_memes), log.tables.meme_kind, birth, english_share,
        adopters, accepted, log.tables, window,
    )


def build_noun_bags(
    records: Iterable[TweetRecord],
    prior_window: tuple[int, int],
) -> tuple[dict[int, set[int]], dict[int, set[int]]]:
    """Union the nouns of English posts inside the prior window.

    Returns (user bags, meme bags); each bag is a set of token ids.  A meme's
    bag pools the nouns of every post that carried it.  Entities that never
    co-occur with a noun get no bag and therefore no topic profile.
    """
    lo, hi = prior_window
    user_bags: dict[int, set[int]] = {}
    meme_bags: dict[int, set[int]] = {}
    for rec in records:
        if rec.lang != "en" or not (lo <= rec.timestamp <= hi):
            continue
        if not rec.nouns:
            continue
        nouns = set(rec.nouns)
        user_bags.setdefault(rec.user, set()).update(nouns)
        for m in rec.memes:
            meme_bags.setdefault(m, set()).update(nouns)
    return user_bags, meme_bags
