"""Exposure and adoption event extraction over the follower graph.

For every accepted meme, every eligible user passes through consecutive
exposure levels 0, 1, 2, ...: level kappa opens when the kappa-th distinct
followee adopts the meme, and closes when the next exposure arrives (not
adopted), when the user first posts the meme herself (adopted), or at window
end (censored).  An adoption at level 0 is a seed adoption.

Tie rule: an exposure counts toward an adoption only when it is strictly
earlier in time; a followee post at the same timestamp as the user's own
first post does not raise her kappa.

Level-0 intervals of users the stream never touches (no exposure, no
adoption) are not materialized one by one; they are aggregated per meme and
user class as alignment histograms, which downstream estimators fold into
the kappa=0 row.  ``materialize_zero=True`` expands them into explicit
events (used by the oracle-equivalence tests).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from ._common import ALIGNMENT_STEPS, DataError, alignment_to_index
from .graph import FollowerGraph, gather_csr
from .ingest import MemeCatalog, TweetLog, TweetRecord, Window
from .topics import ProfileSet

EVENT_DTYPE = np.dtype([
    ("user", "<u8"),
    ("meme", "<u4"),
    ("kappa", "<u2"),
    ("s", "<f4"),
    ("flags", "u1"),
])

FLAG_ADOPTED = 0x01
_SPOOL_MAGIC = b"DLEVT1\0\0"

DEFAULT_KAPPA_CAP = 32
ORACLE_MAX_TWEETS = 1000


@dataclass
class ExposureEvent:
    user: int
    meme: int
    kappa: int
    alignment: float
    adopted: bool
    adoption_time: Optional[int] = None

    def key(self) -> tuple:
        return (self.user, self.meme, self.kappa,
                alignment_to_index(self.alignment), self.adopted)


class EventSet:
    """Extracted events plus the aggregated untouched kappa=0 rows."""

    def __init__(self, events: np.ndarray, zero_agg: dict, kappa_cap: int):
        self.events = events  # EVENT_DTYPE array
        # zero_agg: meme_id -> list of 3 (s_index u16 array, counts i64 array),
        # one per user class; all entries are kappa=0, adopted=False.
        self.zero_agg = zero_agg
        self.kappa_cap = int(kappa_cap)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def adopted(self) -> np.ndarray:
        return (self.events["flags"] & FLAG_ADOPTED) != 0

    @property
    def user_class(self) -> np.ndarray:
        return (self.events["flags"] >> 1) & 0x3

    def zero_agg_total(self) -> int:
        return sum(int(c.sum()) for per in self.zero_agg.values() for _, c in per)

    def to_tuples(self):
        """Multiset-comparable (user, meme, kappa, s_index, adopted) tuples.

        Requires a fully materialized set (no aggregated rows), since the
        aggregate drops user identities.
        """
        if self.zero_agg_total() > 0:
            raise DataError("cannot enumerate tuples: zero rows are aggregated")
        s_idx = alignment_to_index(self.events["s"])
        adopted = self.adopted
        return [
            (int(e["user"]), int(e["meme"]), int(e["kappa"]), int(s), bool(a))
            for e, s, a in zip(self.events, s_idx, adopted)
        ]

    # -- spool ---------------------------------------------------------------

    def save_spool(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_SPOOL_MAGIC)
            fh.write(struct.pack("<qqh6x", len(self.events),
                                 len(self.zero_agg), self.kappa_cap))
            fh.write(self.events.tobytes())
            for meme in sorted(self.zero_agg):
                fh.write(struct.pack("<I", meme))
                for s_idx, counts in self.zero_agg[meme]:
                    fh.write(struct.pack("<q", len(s_idx)))
                    fh.write(s_idx.astype("<u2").tobytes())
                    fh.write(counts.astype("<i8").tobytes())

    @classmethod
    def load_spool(cls, path) -> "EventSet":
        with open(path, "rb") as fh:
            if fh.read(8) != _SPOOL_MAGIC:
                raise DataError(f"{path}: not an event spool")
            n_events, n_zero, cap = struct.unpack("<qqh6x", fh.read(24))
            events = np.frombuffer(fh.read(n_events * EVENT_DTYPE.itemsize),
                                   dtype=EVENT_DTYPE).copy()
            zero_agg = {}
            for _ in range(n_zero):
                (meme,) = struct.unpack("<I", fh.read(4))
                per = []
                for _ in range(3):
                    (n,) = struct.unpack("<q", fh.read(8))
                    s_idx = np.frombuffer(fh.read(2 * n), dtype="<u2").copy()
                    counts = np.frombuffer(fh.read(8 * n), dtype="<i8").copy()
                    per.append((s_idx, counts))
                zero_agg[meme] = per
        return cls(events, zero_agg, cap)

    def to_csv(self, path, meme_names=None) -> None:
        """Human-readable dump of the explicit events."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("user,meme,kappa,alignment,adopted\n")
            for e in self.events:
                meme = int(e["meme"])
                name = meme_names(meme) if meme_names else meme
                fh.write(f"{int(e['user'])},{name},{int(e['kappa'])},"
                         f"{float(e['s']):.4f},{int(e['flags'] & 1)}\n")


def _window_span(window) -> tuple[int, int]:
    if isinstance(window, Window):
        return window.emergence_start, window.analysis_end
    w0, w1 = window
    if w1 < w0:
        raise DataError(f"inverted window: ({w0}, {w1})")
    return int(w0), int(w1)


def _as_log(records: Union[TweetLog, Iterable[TweetRecord]]) -> TweetLog:
    if isinstance(records, TweetLog):
        return records
    return TweetLog.from_records(records)


def extract_events(
    records: Union[TweetLog, Iterable[TweetRecord]],
    graph: FollowerGraph,
    catalog: MemeCatalog,
    user_profiles: ProfileSet,
    meme_profiles: ProfileSet,
    window,
    eligibility: str = "active",
    kappa_cap: int = DEFAULT_KAPPA_CAP,
    materialize_zero: bool = False,
) -> EventSet:
    """Single pass over the time-ordered stream producing every event.

    Only catalog-accepted memes that hold a topic profile are processed, and
    only users with profiles generate events.  ``eligibility`` selects the
    level-0 population: profiled users who post at least one tweet inside
    the window ("active", default) or every profiled user ("all").  Each
    meme's first poster is excluded from event generation for that meme.
    Exposure counts above ``kappa_cap`` pool into the top level.
    """
    if eligibility not in ("active", "all"):
        raise DataError(f"unknown eligibility rule: {eligibility!r}")
    log = _as_log(records)
    w0, w1 = _window_span(window)
    n_rows = len(user_profiles)

    # Records and meme incidence inside the window.
    in_win = (log.times >= w0) & (log.times <= w1)
    rec_idx, meme_ids = log.meme_incidence()
    n_meme_space = max(len(catalog.tables.memes), len(log.tables.memes),
                       int(meme_ids.max()) + 1 if len(meme_ids) else 0)

    processed = np.intersect1d(catalog.accepted_ids().astype(np.int64),
                               meme_profiles.ids)
    proc_mask = np.zeros(n_meme_space, dtype=bool)
    proc_mask[processed] = True

    keep = in_win[rec_idx] & proc_mask[meme_ids]
    inc_rec = rec_idx[keep]
    inc_meme = meme_ids[keep].astype(np.int64)
    inc_user = log.users[inc_rec].astype(np.int64)
    inc_time = log.times[inc_rec]

    # First use per (meme, user), stable in input order: the meme traces.
    order = np.lexsort((inc_rec, inc_user, inc_meme))
    m_s, u_s, t_s, r_s = (inc_meme[order], inc_user[order],
                          inc_time[order], inc_rec[order])
    first = np.ones(len(m_s), dtype=bool)
    first[1:] = (m_s[1:] != m_s[:-1]) | (u_s[1:] != u_s[:-1])
    ad_m, ad_u, ad_t, ad_r = m_s[first], u_s[first], t_s[first], r_s[first]
    # Order each trace by input sequence (= time order, ties stable).
    torder = np.lexsort((ad_r, ad_m))
    ad_m, ad_u, ad_t = ad_m[torder], ad_u[torder], ad_t[torder]

    # Eligibility over profile rows.
    elig_base = np.ones(n_rows, dtype=bool)
    if eligibility == "active":
        elig_base[:] = False
        active_rows = user_profiles.row_of(np.unique(log.users[in_win].astype(np.int64)))
        elig_base[active_rows[active_rows >= 0]] = True

    g2p = user_profiles.row_of(graph.ext_ids)  # graph internal id -> profile row
    user_class = user_profiles.classes

    chunks = []
    zero_agg: dict[int, list] = {}
    trace_bounds = np.searchsorted(ad_m, np.concatenate([processed, [n_meme_space]]))

    for j, meme in enumerate(processed):
        lo, hi = trace_bounds[j], trace_bounds[j + 1]
        au, at = ad_u[lo:hi], ad_t[lo:hi]

        m_theta = meme_profiles.theta[int(meme_profiles.row_of(np.asarray([meme]))[0])]
        s_idx_all = alignment_to_index(user_profiles.alignment_with(m_theta))
        s_f4_all = (s_idx_all.astype(np.float32) / ALIGNMENT_STEPS
                    if n_rows else np.zeros(0, np.float32))

        elig = elig_base.copy()
        arow = user_profiles.row_of(au)
        fp_row = int(arow[0]) if len(arow) else -1
        if fp_row >= 0:
            elig[fp_row] = False

        own_time = np.full(n_rows, np.inf)
        has_prof = arow >= 0
        own_time[arow[has_prof]] = at[has_prof]

        # Deliveries: each adopter's post exposes her followers at her time.
        src = graph.to_internal(au)
        src_ok = src >= 0
        flat_targets, lens = gather_csr(graph.offsets, graph.targets, src[src_ok])
        exp_time = np.repeat(at[src_ok], lens)
        tr = g2p[flat_targets]
        t_ok = tr >= 0
        tr, exp_time = tr[t_ok], exp_time[t_ok]
        t_ok = elig[tr]
        tr, exp_time = tr[t_ok], exp_time[t_ok]
        prior = exp_time < own_time[tr]
        k_fin = np.bincount(tr[prior], minlength=n_rows)

        adopted_mask = np.zeros(n_rows, dtype=bool)
        arow_e = arow[has_prof]
        arow_e = arow_e[elig[arow_e]]
        adopted_mask[arow_e] = True

        touched = np.flatnonzero((k_fin > 0) | adopted_mask)
        if len(touched):
            kf = k_fin[touched]
            lens_ev = kf + 1
            tot = int(lens_ev.sum())
            starts = np.concatenate(([0], np.cumsum(lens_ev)[:-1]))
            level = np.arange(tot, dtype=np.int64) - np.repeat(starts, lens_ev)
            rows = np.repeat(touched, lens_ev)
            last = level == np.repeat(kf, lens_ev)
            ev = np.empty(tot, dtype=EVENT_DTYPE)
            ev["user"] = user_profiles.ids[rows]
            ev["meme"] = meme
            ev["kappa"] = np.minimum(level, kappa_cap)
            ev["s"] = s_f4_all[rows]
            flags = (last & np.repeat(adopted_mask[touched], lens_ev)).astype(np.uint8)
            flags |= user_class[rows].astype(np.uint8) << 1
            ev["flags"] = flags
            chunks.append(ev)

        untouched = elig & (k_fin == 0) & ~adopted_mask
        if materialize_zero:
            rows = np.flatnonzero(untouched)
            if len(rows):
                ev = np.empty(len(rows), dtype=EVENT_DTYPE)
                ev["user"] = user_profiles.ids[rows]
                ev["meme"] = meme
                ev["kappa"] = 0
                ev["s"] = s_f4_all[rows]
                ev["flags"] = user_class[rows].astype(np.uint8) << 1
                chunks.append(ev)
        else:
            per = []
            for cls in range(3):
                rows = np.flatnonzero(untouched & (user_class == cls))
                if len(rows):
                    vals, counts = np.unique(s_idx_all[rows], return_counts=True)
                    per.append((vals.astype(np.uint16), counts.astype(np.int64)))
                else:
                    per.append((np.zeros(0, np.uint16), np.zeros(0, np.int64)))
            if any(len(v) for v, _ in per):
                zero_agg[int(meme)] = per

    events = (np.concatenate(chunks) if chunks
              else np.zeros(0, dtype=EVENT_DTYPE))
    return EventSet(events, zero_agg, kappa_cap)


def brute_force_events(
    records: Union[TweetLog, Iterable[TweetRecord]],
    graph: FollowerGraph,
    catalog: MemeCatalog,
    user_profiles: ProfileSet,
    meme_profiles: ProfileSet,
    window,
    eligibility: str = "active",
    kappa_cap: int = DEFAULT_KAPPA_CAP,
    max_tweets: int = ORACLE_MAX_TWEETS,
) -> list[ExposureEvent]:
    """Naive per-(user, meme) recomputation of the full event timeline.

    Test oracle: rescans every adoption of every meme for every user instead
    of streaming deliveries.  Refuses instances above ``max_tweets``.
    """
    log = _as_log(records)
    if len(log) > max_tweets:
        raise DataError(f"oracle capped at {max_tweets} tweets, got {len(log)}")
    w0, w1 = _window_span(window)
    recs = [r for r in log if w0 <= r.timestamp <= w1]
    active = {r.user for r in recs}

    processed = sorted(set(int(m) for m in catalog.accepted_ids())
                       & set(int(m) for m in meme_profiles.ids))
    events: list[ExposureEvent] = []

    for meme in processed:
        trace: list[tuple[int, int]] = []
        seen: dict[int, int] = {}
        for r in recs:
            if meme in r.memes and r.user not in seen:
                seen[r.user] = r.timestamp
                trace.append((r.user, r.timestamp))
        first_poster = trace[0][0] if trace else None
        m_row = int(meme_profiles.row_of(np.asarray([meme]))[0])
        m_theta = meme_profiles.theta[m_row]

        for i in range(len(user_profiles)):
            u = int(user_profiles.ids[i])
            if eligibility == "active" and u not in active:
                continue
            if u == first_poster:
                continue
            followees = set(int(x) for x in graph.followees_of(u))
            exposure_times = sorted(t for (a, t) in trace if a in followees)
            own = seen.get(u)
            if own is not None:
                k_fin = sum(1 for t in exposure_times if t < own)
                adopted = True
            else:
                k_fin = len(exposure_times)
                adopted = False
            s_val = float(user_profiles.alignment_with(m_theta)[i])
            for level in range(k_fin + 1):
                events.append(ExposureEvent(
                    user=u, meme=meme, kappa=min(level, kappa_cap),
                    alignment=s_val,
                    adopted=adopted and level == k_fin,
                    adoption_time=own if adopted and level == k_fin else None,
                ))
    return events


def event_multiset(obj) -> dict:
    """Counter of comparable event keys from an EventSet or an event list."""
    from collections import Counter

    if isinstance(obj, EventSet):
        return Counter(obj.to_tuples())
    return Counter(e.key() for e in obj)
