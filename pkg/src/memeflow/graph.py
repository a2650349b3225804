"""Immutable follower graph with contiguous-slice follower lookups.

Adjacency is stored compressed (offset array plus one flat neighbor array),
indexed by followee: ``followers_of(u)`` is a single slice.  External user
ids are remapped to dense internal ids at load time; all public methods speak
external ids, the exposure engine uses the internal arrays directly.
"""

from __future__ import annotations

import struct

import numpy as np
import pandas as pd

from ._common import DataError

_CACHE_MAGIC = b"DLGRAPH1"


class FollowerGraph:
    def __init__(self, ext_ids, offsets, targets, dup_count=0, selfloop_count=0):
        # ext_ids is sorted ascending; internal id i <-> ext_ids[i].
        self.ext_ids = np.asarray(ext_ids, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int32)
        self.dup_count = int(dup_count)
        self.selfloop_count = int(selfloop_count)

    @property
    def n_nodes(self) -> int:
        return len(self.ext_ids)

    @property
    def n_edges(self) -> int:
        return len(self.targets)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_edges(cls, edges) -> "FollowerGraph":
        """Build from (follower, followee) pairs; dedups and drops self-loops."""
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        return cls._build(arr[:, 0], arr[:, 1])

    @classmethod
    def load_edges(cls, path) -> "FollowerGraph":
        """Read a `follower \\t followee` edge list file."""
        try:
            df = pd.read_csv(path, sep="\t", header=None, comment="#",
                             names=["follower", "followee"], dtype=np.int64)
        except OSError as exc:
            raise DataError(f"cannot read edge list {path}: {exc}") from exc
        except (ValueError, pd.errors.ParserError) as exc:
            raise DataError(f"bad edge list {path}: {exc}") from exc
        return cls._build(df["follower"].to_numpy(), df["followee"].to_numpy())

    @classmethod
    def _build(cls, followers, followees) -> "FollowerGraph":
        loops = followers == followees
        selfloop_count = int(loops.sum())
        followers, followees = followers[~loops], followees[~loops]

        ext_ids = np.unique(np.concatenate([followers, followees]))
        src = np.searchsorted(ext_ids, followers).astype(np.int64)
        dst = np.searchsorted(ext_ids, followees).astype(np.int64)

        # One edge per (followee, follower); unique also sorts follower lists.
        if len(src):
            pairs = np.unique(dst * len(ext_ids) + src)
            dup_count = len(src) - len(pairs)
            dst_u, src_u = pairs // len(ext_ids), pairs % len(ext_ids)
        else:
            dup_count = 0
            dst_u = src_u = np.zeros(0, dtype=np.int64)

        counts = np.bincount(dst_u, minlength=len(ext_ids))
        offsets = np.zeros(len(ext_ids) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(ext_ids, offsets, src_u.astype(np.int32),
                   dup_count, selfloop_count)

    # -- id mapping --------------------------------------------------------

    def to_internal(self, ext):
        """External ids -> internal ids; unknown ids map to -1."""
        ext = np.asarray(ext, dtype=np.int64)
        if self.n_nodes == 0:
            return np.full(ext.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self.ext_ids, ext)
        pos_c = np.clip(pos, 0, self.n_nodes - 1)
        ok = self.ext_ids[pos_c] == ext
        return np.where(ok, pos_c, -1)

    def to_external(self, internal):
        return self.ext_ids[np.asarray(internal)]

    # -- queries -----------------------------------------------------------

    def followers_of(self, ext_u: int) -> np.ndarray:
        """Sorted external ids of the users following ``ext_u``.

        Unknown users are treated as isolated and yield an empty array.
        """
        iu = int(self.to_internal(np.asarray([ext_u]))[0])
        if iu < 0:
            return np.zeros(0, dtype=np.int64)
        sl = self.targets[self.offsets[iu]:self.offsets[iu + 1]]
        return self.ext_ids[sl]

    def followees_of(self, ext_u: int) -> np.ndarray:
        """Sorted external ids of the users ``ext_u`` follows (reverse index,
        built on demand)."""
        self._ensure_reverse()
        iu = int(self.to_internal(np.asarray([ext_u]))[0])
        if iu < 0:
            return np.zeros(0, dtype=np.int64)
        sl = self._rev_targets[self._rev_offsets[iu]:self._rev_offsets[iu + 1]]
        return self.ext_ids[sl]

    def _ensure_reverse(self):
        if hasattr(self, "_rev_offsets"):
            return
        src = self.targets.astype(np.int64)
        dst = np.repeat(np.arange(self.n_nodes, dtype=np.int64),
                        np.diff(self.offsets))
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=self.n_nodes)
        self._rev_offsets = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=self._rev_offsets[1:])
        self._rev_targets = dst[order].astype(np.int32)

    def follower_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    # -- binary cache ------------------------------------------------------

    def save_cache(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<qqqq", self.n_nodes, self.n_edges,
                                 self.dup_count, self.selfloop_count))
            fh.write(self.ext_ids.astype("<i8").tobytes())
            fh.write(self.offsets.astype("<i8").tobytes())
            fh.write(self.targets.astype("<i4").tobytes())

    @classmethod
    def load_cache(cls, path) -> "FollowerGraph":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != _CACHE_MAGIC:
                raise DataError(f"{path}: not a graph cache (magic {magic!r})")
            n_nodes, n_edges, dups, loops = struct.unpack("<qqqq", fh.read(32))
            ext_ids = np.frombuffer(fh.read(8 * n_nodes), dtype="<i8")
            offsets = np.frombuffer(fh.read(8 * (n_nodes + 1)), dtype="<i8")
            targets = np.frombuffer(fh.read(4 * n_edges), dtype="<i4")
        return cls(ext_ids.copy(), offsets.copy(), targets.copy(), dups, loops)


def gather_csr(offsets: np.ndarray, values: np.ndarray, rows: np.ndarray):
    """Concatenate ``values[offsets[r]:offsets[r+1]]`` for each row in order.

    Returns (flat_values, lengths).  Vectorized; the workhorse behind
    follower-list expansion in the exposure engine.
    """
    rows = np.asarray(rows, dtype=np.int64)
    starts = offsets[rows]
    lengths = offsets[rows + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return values[:0], lengths
    # index trick: absolute start per element minus running restarts
    out_idx = np.repeat(starts - np.concatenate(([0], np.cumsum(lengths)[:-1])), lengths)
    out_idx += np.arange(total, dtype=np.int64)
    return values[out_idx], lengths
