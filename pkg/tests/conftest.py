import numpy as np
import pytest

from memeflow.exposure import extract_events
from memeflow.graph import FollowerGraph
from memeflow.ingest import (KIND_HASHTAG, SymbolTables, TweetLog, TweetRecord,
                             Window, build_catalog)
from memeflow.topics import ProfileSet


def make_records(rows, tables=None):
    """rows: (t, user, [meme names], lang) tuples -> TweetLog."""
    tables = tables or SymbolTables()
    records = []
    for t, user, memes, lang in rows:
        ids = [tables.intern_meme(m, KIND_HASHTAG) for m in memes]
        records.append(TweetRecord(t, user, ids, [], [], lang))
    return TweetLog.from_records(records, tables=tables)


def uniform_profiles(kind, ids, k=2):
    theta = np.full((len(ids), k), 1.0 / k)
    return ProfileSet(kind, np.asarray(ids), theta)


def pipeline_events(world, log, **extract_kw):
    """Standard wiring from a simulated log to an event set."""
    t_hi = int(log.times[-1]) if len(log) else 0
    window = Window(0, t_hi, t_hi)
    catalog = build_catalog(log, window, english_threshold=0.9, min_adopters=1)
    return extract_events(log, world.graph, catalog, world.user_profiles,
                          world.meme_profiles, window, **extract_kw)


@pytest.fixture
def hand_trace():
    """Three users: b follows a; c follows a and b.  a posts m, then b posts
    m, c never posts it (but is active via a meme-less tweet)."""
    a, b, c = 1, 2, 3
    graph = FollowerGraph.from_edges([(b, a), (c, a), (c, b)])
    log = make_records([
        (5, c, [], "en"),
        (10, a, ["m"], "en"),
        (20, b, ["m"], "en"),
    ])
    window = Window(0, 50, 100)
    catalog = build_catalog(log, window, english_threshold=0.9, min_adopters=1)
    users = uniform_profiles("user", [a, b, c])
    memes = uniform_profiles("hashtag", [0])
    return log, graph, catalog, users, memes, window
