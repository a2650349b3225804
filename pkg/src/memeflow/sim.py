"""Synthetic worlds with planted adoption mechanisms.

The simulator provides ground truth for the estimation pipeline: a generated
follower graph, Dirichlet topic profiles for users and memes, and a
discrete-epoch cascade process.  Within an epoch every non-adopter first
tests external adoption with q_e(S); exposures from the previous epoch's
adopters then arrive, and each new arrival triggers an internal test with
q_i(kappa, S) at the newly reached exposure level.  Adopters post exactly
one tweet carrying the meme at their adoption epoch, so the emitted log runs
through the regular ingest/exposure pipeline unmodified.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ._common import ConfigError, split_seed
from .graph import FollowerGraph
from .ingest import KIND_HASHTAG, SymbolTables, TweetLog
from .topics import ProfileSet


@dataclass
class GraphSpec:
    model: str = "powerlaw"        # "powerlaw" | "small-world"
    exponent: float = 2.5
    min_degree: int = 2
    max_degree: int = 1000
    k_neighbors: int = 10          # small-world ring degree
    rewire_prob: float = 0.1


@dataclass
class SimConfig:
    n_users: int
    n_memes: int
    k_topics: int = 16
    # (population fraction, Dirichlet concentration); low concentration
    # yields low-entropy (topical) entities.
    user_groups: tuple = ((0.5, 0.3), (0.5, 5.0))
    meme_groups: tuple = ((0.5, 0.3), (0.5, 5.0))
    graph: GraphSpec = field(default_factory=GraphSpec)
    epochs: int = 50
    seed: int = 0
    activity_tweets: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["user_groups"] = [list(g) for g in self.user_groups]
        d["meme_groups"] = [list(g) for g in self.meme_groups]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["graph"] = GraphSpec(**d["graph"])
        d["user_groups"] = tuple(tuple(g) for g in d["user_groups"])
        d["meme_groups"] = tuple(tuple(g) for g in d["meme_groups"])
        return cls(**d)


@dataclass
class PlantedMechanism:
    """Planted hazards: q_internal(kappa, S) per exposure arrival and
    q_external(S) per epoch.  Internal hazard is zero at kappa=0 by
    construction (the engine only tests on arrivals)."""

    name: str
    q_internal: Callable
    q_external: Callable
    external_schedule: str = "always"   # "always" | "first-epoch" | "never"
    seed_count: int = 0                 # planted epoch-0 adopters per meme
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.external_schedule not in ("always", "first-epoch", "never"):
            raise ConfigError(f"bad external_schedule: {self.external_schedule!r}")
        s = np.linspace(0.0, 1.0, 101)
        k = np.arange(1, 64)
        qe = np.asarray(self.q_external(s), dtype=np.float64)
        qi = np.asarray(self.q_internal(
            np.repeat(k, len(s)), np.tile(s, len(k))), dtype=np.float64)
        for label, vals in (("q_external", qe), ("q_internal", qi)):
            if np.any(vals < 0) or np.any(vals > 1) or not np.all(np.isfinite(vals)):
                raise ConfigError(f"{label} leaves [0, 1] on the probe grid")


def _logistic(s, mid, steep):
    return 1.0 / (1.0 + np.exp(-steep * (np.asarray(s, dtype=np.float64) - mid)))


def mechanism(name: str, **overrides) -> PlantedMechanism:
    """Named mechanism presets; keyword overrides replace preset parameters."""
    makers = {
        "complex-topical": _mk_complex_topical,
        "simple-flat": _mk_simple_flat,
        "simple-decay": _mk_simple_decay,
        "external-only": _mk_external_only,
        "external-topical": _mk_external_topical,
        "external-flat": _mk_external_flat,
        "custom-table": table_mechanism,
    }
    if name not in makers:
        raise ConfigError(f"unknown mechanism {name!r}; presets: "
                          + ", ".join(sorted(makers)))
    return makers[name](**overrides)


def table_mechanism(internal, external, external_schedule="always",
                    seed_count=0) -> PlantedMechanism:
    """Step-function hazards from explicit tables.

    ``internal`` has one row per exposure level (row 0 is forced to zero)
    and one column per equal-width S bin; ``external`` has one entry per S
    bin.  Levels beyond the last row reuse it.
    """
    q_int = np.asarray(internal, dtype=np.float64).copy()
    q_ext = np.asarray(external, dtype=np.float64)
    if q_int.ndim != 2 or q_ext.ndim != 1 or q_int.shape[1] != len(q_ext):
        raise ConfigError("table mechanism needs (levels, s_bins) internal "
                          "and (s_bins,) external tables")
    q_int[0, :] = 0.0
    s_bins = q_int.shape[1]

    def bin_of(s):
        b = (np.asarray(s, dtype=np.float64) * s_bins).astype(np.int64)
        return np.clip(b, 0, s_bins - 1)

    def q_i(kappa, s):
        k = np.clip(np.asarray(kappa, dtype=np.int64), 0, q_int.shape[0] - 1)
        return q_int[k, bin_of(s)]

    def q_e(s):
        return q_ext[bin_of(s)]

    params = dict(internal=q_int.tolist(), external=q_ext.tolist(),
                  external_schedule=external_schedule, seed_count=seed_count)
    return PlantedMechanism("custom-table", q_i, q_e,
                            external_schedule=external_schedule,
                            seed_count=seed_count, params=params)


def _mk_complex_topical(amp=0.35, mid=0.45, steep=6.0, peak=8.0, width=4.0,
                        s0=0.004, seed_count=0):
    params = dict(amp=amp, mid=mid, steep=steep, peak=peak, width=width,
                  s0=s0, seed_count=seed_count)

    def q_i(kappa, s):
        k = np.asarray(kappa, dtype=np.float64)
        bump = np.exp(-((k - peak) ** 2) / (2.0 * width**2))
        return amp * bump * _logistic(s, mid, steep)

    return PlantedMechanism("complex-topical", q_i,
                            lambda s: np.full_like(np.asarray(s, float), s0),
                            external_schedule="first-epoch",
                            seed_count=seed_count, params=params)


def _mk_simple_flat(rate=0.08, s0=0.004, seed_count=0):
    params = dict(rate=rate, s0=s0, seed_count=seed_count)
    return PlantedMechanism(
        "simple-flat",
        lambda k, s: np.full_like(np.asarray(s, float), rate),
        lambda s: np.full_like(np.asarray(s, float), s0),
        external_schedule="first-epoch", seed_count=seed_count, params=params)


def _mk_simple_decay(base=0.25, decay=0.6, s0=0.004, seed_count=0):
    params = dict(base=base, decay=decay, s0=s0, seed_count=seed_count)

    def q_i(kappa, s):
        k = np.asarray(kappa, dtype=np.float64)
        return base * decay ** np.maximum(k - 1.0, 0.0)

    return PlantedMechanism("simple-decay", q_i,
                            lambda s: np.full_like(np.asarray(s, float), s0),
                            external_schedule="first-epoch",
                            seed_count=seed_count, params=params)


def _mk_external_only(base=0.02, slope=0.18, seed_count=0):
    params = dict(base=base, slope=slope, seed_count=seed_count)
    return PlantedMechanism(
        "external-only",
        lambda k, s: np.zeros_like(np.asarray(s, float)),
        lambda s: base + slope * np.asarray(s, dtype=np.float64),
        external_schedule="always", seed_count=seed_count, params=params)


def _mk_external_topical(base=0.001, amp=0.02, mid=0.5, steep=6.0,
                         internal=0.05, seed_count=0):
    params = dict(base=base, amp=amp, mid=mid, steep=steep, internal=internal,
                  seed_count=seed_count)
    return PlantedMechanism(
        "external-topical",
        lambda k, s: np.full_like(np.asarray(s, float), internal),
        lambda s: base + amp * _logistic(s, mid, steep),
        external_schedule="always", seed_count=seed_count, params=params)


def _mk_external_flat(rate=0.01, internal=0.05, seed_count=0):
    params = dict(rate=rate, internal=internal, seed_count=seed_count)
    return PlantedMechanism(
        "external-flat",
        lambda k, s: np.full_like(np.asarray(s, float), internal),
        lambda s: np.full_like(np.asarray(s, float), rate),
        external_schedule="always", seed_count=seed_count, params=params)


@dataclass
class World:
    graph: FollowerGraph
    user_profiles: ProfileSet
    meme_profiles: ProfileSet
    config: SimConfig


def _sample_degrees(rng, spec: GraphSpec, n: int) -> np.ndarray:
    u = rng.random(n)
    a = spec.exponent - 1.0
    deg = np.floor(spec.min_degree * (1.0 - u) ** (-1.0 / a)).astype(np.int64)
    return np.clip(deg, spec.min_degree, spec.max_degree)


def _build_graph(rng, spec: GraphSpec, n: int) -> FollowerGraph:
    if spec.model == "powerlaw":
        # Follower counts from a truncated power law; followers drawn with
        # replacement and deduped (collisions are rare for degree << n).
        deg = _sample_degrees(rng, spec, n)
        followee = np.repeat(np.arange(n, dtype=np.int64), deg)
        follower = rng.integers(0, n, size=len(followee), dtype=np.int64)
    elif spec.model == "small-world":
        k = spec.k_neighbors
        followee = np.repeat(np.arange(n, dtype=np.int64), k)
        shift = np.tile(np.arange(1, k + 1, dtype=np.int64), n)
        follower = (followee + shift) % n
        rew = rng.random(len(follower)) < spec.rewire_prob
        follower[rew] = rng.integers(0, n, size=int(rew.sum()), dtype=np.int64)
    else:
        raise ConfigError(f"unknown graph model: {spec.model!r}")
    keep = follower != followee
    return _csr_with_all_nodes(follower[keep], followee[keep], n)


def _csr_with_all_nodes(follower, followee, n: int) -> FollowerGraph:
    pairs = np.unique(followee * n + follower)
    dst, src = pairs // n, pairs % n
    counts = np.bincount(dst, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return FollowerGraph(np.arange(n, dtype=np.int64), offsets,
                         src.astype(np.int32))


def _sample_group_thetas(rng, groups, count: int, k: int) -> np.ndarray:
    sizes = [int(round(frac * count)) for frac, _ in groups]
    sizes[-1] = count - sum(sizes[:-1])
    blocks = []
    for (_, conc), size in zip(groups, sizes):
        if size > 0:
            blocks.append(rng.dirichlet(np.full(k, conc), size=size))
    theta = np.vstack(blocks) if blocks else np.zeros((0, k))
    return theta[rng.permutation(count)]


def generate_world(config: SimConfig) -> World:
    """Graph plus planted Dirichlet profiles, reproducible from the seed."""
    if config.n_users < 2 or config.n_memes < 1:
        raise ConfigError("need at least 2 users and 1 meme")
    rng_graph, rng_users, rng_memes = split_seed(config.seed, 3)
    graph = _build_graph(rng_graph, config.graph, config.n_users)
    u_theta = _sample_group_thetas(rng_users, config.user_groups,
                                   config.n_users, config.k_topics)
    m_theta = _sample_group_thetas(rng_memes, config.meme_groups,
                                   config.n_memes, config.k_topics)
    users = ProfileSet("user", np.arange(config.n_users), u_theta)
    memes = ProfileSet("hashtag", np.arange(config.n_memes), m_theta)
    if config.n_users >= 4:
        users.classify(0.25)
    if config.n_memes >= 4:
        memes.classify(0.25)
    return World(graph, users, memes, config)


def meme_name(index: int) -> str:
    return f"m{index:05d}"


def simulate(
    world: World,
    mech: PlantedMechanism,
    epochs: Optional[int] = None,
    seed: Optional[int] = None,
) -> TweetLog:
    """Run the planted cascade process and serialize it as a tweet log.

    Exposures from an adoption at epoch e reach followers at epoch e+1, so a
    followee's post is always strictly earlier than any adoption it triggers
    (matching the extraction tie rule).  Deterministic given (world, seed).
    """
    mech.validate()
    cfg = world.config
    epochs = cfg.epochs if epochs is None else int(epochs)
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    rng = split_seed(cfg.seed if seed is None else seed)
    n = cfg.n_users
    graph = world.graph

    tweet_time: list[np.ndarray] = []
    tweet_user: list[np.ndarray] = []
    tweet_meme: list[np.ndarray] = []

    for meme_idx in range(cfg.n_memes):
        m_theta = world.meme_profiles.theta[meme_idx]
        s_vec = world.user_profiles.alignment_with(m_theta)
        q_ext = np.asarray(mech.q_external(s_vec), dtype=np.float64)
        adopted = np.zeros(n, dtype=bool)
        kappa = np.zeros(n, dtype=np.int64)
        prev_new = np.zeros(0, dtype=np.int64)

        if mech.seed_count > 0:
            seeds = rng.choice(n, size=min(mech.seed_count, n), replace=False)
        else:
            seeds = np.zeros(0, dtype=np.int64)

        for epoch in range(epochs):
            new = []
            if len(seeds) and epoch == 0:
                new.append(seeds)
                adopted[seeds] = True
            # external channel first
            if mech.external_schedule == "always" or (
                    mech.external_schedule == "first-epoch" and epoch == 0):
                live = ~adopted
                hits = np.flatnonzero(live & (rng.random(n) < q_ext))
                if len(hits):
                    adopted[hits] = True
                    new.append(hits)
            # deliveries from last epoch's adopters
            if len(prev_new):
                src = prev_new
                lens = graph.offsets[src + 1] - graph.offsets[src]
                total = int(lens.sum())
                if total:
                    idx = np.repeat(graph.offsets[src]
                                    - np.concatenate(([0], np.cumsum(lens)[:-1])),
                                    lens) + np.arange(total)
                    targets = graph.targets[idx].astype(np.int64)
                    targets = np.sort(targets, kind="stable")
                    live_t = ~adopted[targets]
                    # kappa advances for every delivery, adopted or not,
                    # but only live users test.
                    uniq_all, counts_all = np.unique(targets, return_counts=True)
                    t_live = targets[live_t]
                    if len(t_live):
                        uniq, start, counts = np.unique(
                            t_live, return_index=True, return_counts=True)
                        ranks = np.arange(len(t_live)) - np.repeat(start, counts)
                        levels = kappa[t_live] + ranks + 1
                        p_occ = np.asarray(
                            mech.q_internal(levels, s_vec[t_live]), dtype=np.float64)
                        with np.errstate(divide="ignore"):
                            log_surv = np.log1p(-np.clip(p_occ, 0.0, 1.0))
                        seg = np.add.reduceat(log_surv, start)
                        p_adopt = -np.expm1(seg)
                        hits = uniq[rng.random(len(uniq)) < p_adopt]
                        if len(hits):
                            adopted[hits] = True
                            new.append(hits)
                    kappa[uniq_all] += counts_all
            prev_new = (np.unique(np.concatenate(new))
                        if new else np.zeros(0, dtype=np.int64))
            if len(prev_new):
                tweet_time.append(np.full(len(prev_new), epoch, dtype=np.int64))
                tweet_user.append(prev_new)
                tweet_meme.append(np.full(len(prev_new), meme_idx, dtype=np.int64))

    return _assemble_log(cfg, tweet_time, tweet_user, tweet_meme)


def _assemble_log(cfg: SimConfig, tweet_time, tweet_user, tweet_meme) -> TweetLog:
    if tweet_time:
        times = np.concatenate(tweet_time)
        users = np.concatenate(tweet_user)
        memes = np.concatenate(tweet_meme)
    else:
        times = users = memes = np.zeros(0, dtype=np.int64)
    has_meme = np.ones(len(times), dtype=bool)
    if cfg.activity_tweets:
        times = np.concatenate([np.zeros(cfg.n_users, dtype=np.int64), times])
        users = np.concatenate([np.arange(cfg.n_users, dtype=np.int64), users])
        memes = np.concatenate([np.zeros(cfg.n_users, dtype=np.int64), memes])
        has_meme = np.concatenate([np.zeros(cfg.n_users, dtype=bool), has_meme])

    order = np.lexsort((memes, users, ~has_meme, times))
    times, users, memes, has_meme = (times[order], users[order],
                                     memes[order], has_meme[order])

    tables = SymbolTables()
    for i in range(cfg.n_memes):
        tables.intern_meme(meme_name(i), KIND_HASHTAG)

    offsets = np.zeros(len(times) + 1, dtype=np.int64)
    np.cumsum(has_meme.astype(np.int64), out=offsets[1:])
    meme_values = memes[has_meme].astype(np.uint32)
    noun_offsets = np.zeros(len(times) + 1, dtype=np.int64)
    langs = ["en"] * len(times)
    return TweetLog(times, users.astype(np.uint64), offsets, meme_values,
                    noun_offsets, np.zeros(0, dtype=np.uint32), langs, tables)


def write_log_tsv(log: TweetLog, path) -> None:
    """Serialize a log in the ingest TSV schema."""
    tables = log.tables
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(log)):
            ms = log.meme_values[log.meme_offsets[i]:log.meme_offsets[i + 1]]
            tags = ",".join(tables.memes.name(int(m)) for m in ms
                            if tables.meme_kind[m] == KIND_HASHTAG)
            urls = ",".join(tables.memes.name(int(m)) for m in ms
                            if tables.meme_kind[m] != KIND_HASHTAG)
            fh.write(f"{log.times[i]}\t{int(log.users[i])}\t{tags}\t{urls}\t"
                     f"\t{log.langs[i]}\n")


def write_graph_tsv(graph: FollowerGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for iu in range(graph.n_nodes):
            followee = int(graph.ext_ids[iu])
            for t in graph.targets[graph.offsets[iu]:graph.offsets[iu + 1]]:
                fh.write(f"{int(graph.ext_ids[t])}\t{followee}\n")


# ---------------------------------------------------------------------------
# planted truth


@dataclass
class TruthSurface:
    external_s: np.ndarray        # (s_bins,) bin-averaged q_e
    internal: np.ndarray          # (kappa_max+1, s_bins); row 0 is zero
    s_bins: int
    kappa_max: int


def planted_truth(mech: PlantedMechanism, s_bins: int = 20,
                  kappa_max: int = 32, quad_points: int = 32) -> TruthSurface:
    """Planted hazards averaged over the estimator's bins.

    Uses fixed Gauss-Legendre quadrature inside each S bin, so the truth is
    directly comparable with estimated cell probabilities.
    """
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    edges = np.linspace(0.0, 1.0, s_bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 / s_bins
    # quadrature nodes per bin: (s_bins, quad_points)
    s_nodes = mids[:, None] + half * nodes[None, :]
    w = weights / weights.sum()

    q_e = np.asarray(mech.q_external(s_nodes.ravel()),
                     dtype=np.float64).reshape(s_bins, quad_points)
    external = q_e @ w

    internal = np.zeros((kappa_max + 1, s_bins))
    for k in range(1, kappa_max + 1):
        q_i = np.asarray(mech.q_internal(np.full(s_nodes.size, k), s_nodes.ravel()),
                         dtype=np.float64).reshape(s_bins, quad_points)
        internal[k] = q_i @ w
    return TruthSurface(external, internal, s_bins, kappa_max)


# ---------------------------------------------------------------------------
# truth sidecar


def write_truth(path, config: SimConfig, mech: PlantedMechanism) -> None:
    payload = {
        "config": config.to_dict(),
        "mechanism": mech.name,
        "params": mech.params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_truth(path) -> tuple[SimConfig, PlantedMechanism]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    config = SimConfig.from_dict(payload["config"])
    mech = mechanism(payload["mechanism"], **payload["params"])
    return config, mech


def synthetic_stream(n_tweets: int, n_users: int, n_memes: int,
                     seed: int = 0) -> TweetLog:
    """Large unstructured log for throughput work: uniform users, Zipf-ish
    memes, non-decreasing integer timestamps."""
    rng = split_seed(seed)
    times = np.sort(rng.integers(0, max(n_tweets // 4, 1), size=n_tweets))
    users = rng.integers(0, n_users, size=n_tweets)
    ranks = np.arange(1, n_memes + 1, dtype=np.float64)
    pz = ranks**-1.2
    pz /= pz.sum()
    memes = rng.choice(n_memes, size=n_tweets, p=pz)

    tables = SymbolTables()
    for i in range(n_memes):
        tables.intern_meme(meme_name(i), KIND_HASHTAG)
    offsets = np.arange(n_tweets + 1, dtype=np.int64)
    return TweetLog(times, users.astype(np.uint64), offsets,
                    memes.astype(np.uint32),
                    np.zeros(n_tweets + 1, dtype=np.int64),
                    np.zeros(0, dtype=np.uint32),
                    ["en"] * n_tweets, tables)
