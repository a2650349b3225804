"""Estimators over the event spool.

Adoption probabilities are pooled: event counts are summed across the memes
of a class before dividing, so popular memes weigh proportionally more.
Confidence intervals come from a BCa bootstrap that resamples whole memes
(cluster bootstrap), since events within one meme share a cascade.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from ._common import ALIGNMENT_STEPS, DataError, alignment_to_index
from .exposure import EventSet
from .topics import CLASS_LABELS

DEFAULT_S_BINS = 20


@dataclass
class EventFilter:
    """Restrict estimation to a meme class and/or a user class.

    ``memes``: iterable of meme ids to keep (None keeps all).
    ``user_classes``: subset of {"topical", "middle", "non-topical"}.
    """

    memes: Optional[Sequence[int]] = None
    user_classes: Optional[Sequence[str]] = None

    def _meme_array(self):
        if self.memes is None:
            return None
        return np.unique(np.asarray(list(self.memes), dtype=np.int64))

    def _class_codes(self):
        if self.user_classes is None:
            return None
        codes = [CLASS_LABELS.index(c) for c in self.user_classes]
        return np.asarray(sorted(codes), dtype=np.uint8)

    def event_mask(self, events: EventSet) -> np.ndarray:
        mask = np.ones(len(events), dtype=bool)
        memes = self._meme_array()
        if memes is not None:
            mask &= np.isin(events.events["meme"].astype(np.int64), memes)
        codes = self._class_codes()
        if codes is not None:
            mask &= np.isin(events.user_class, codes)
        return mask

    def keeps_meme(self, meme: int) -> bool:
        memes = self._meme_array()
        return memes is None or int(meme) in memes

    def kept_classes(self) -> list[int]:
        codes = self._class_codes()
        return list(range(3)) if codes is None else [int(c) for c in codes]


def _s_bin_of_index(s_idx, s_bins: int):
    """Alignment grid index -> equal-width S bin; S=1 joins the top bin."""
    b = (s_idx.astype(np.int64) * s_bins) // ALIGNMENT_STEPS
    return np.minimum(b, s_bins - 1)


class CountTables:
    """Per-meme (kappa, S-bin) exposure and adoption counts."""

    def __init__(self, meme_ids, n_e, n_a, kappa_max, s_bins):
        self.meme_ids = meme_ids        # (M,) int64, sorted
        self.n_e = n_e                  # (M, kappa_max+1, s_bins) int64
        self.n_a = n_a
        self.kappa_max = kappa_max
        self.s_bins = s_bins

    def pooled(self, meme_rows=None):
        if meme_rows is None:
            return self.n_e.sum(axis=0), self.n_a.sum(axis=0)
        return self.n_e[meme_rows].sum(axis=0), self.n_a[meme_rows].sum(axis=0)


def count_tables(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    s_bins: int = DEFAULT_S_BINS,
    kappa_max: Optional[int] = None,
) -> CountTables:
    """Bin every event (explicit and aggregated) into per-meme tables."""
    if filt is None:
        filt = EventFilter()
    if kappa_max is None:
        kappa_max = events.kappa_cap
    k_rows = kappa_max + 1

    mask = filt.event_mask(events)
    ev = events.events[mask]
    agg_memes = [m for m in events.zero_agg if filt.keeps_meme(m)]
    meme_ids = np.union1d(np.unique(ev["meme"].astype(np.int64)),
                          np.asarray(sorted(agg_memes), dtype=np.int64))
    m = len(meme_ids)
    n_e = np.zeros((m, k_rows, s_bins), dtype=np.int64)
    n_a = np.zeros((m, k_rows, s_bins), dtype=np.int64)
    if m == 0:
        return CountTables(meme_ids, n_e, n_a, kappa_max, s_bins)

    if len(ev):
        meme_row = np.searchsorted(meme_ids, ev["meme"].astype(np.int64))
        kap = np.minimum(ev["kappa"].astype(np.int64), kappa_max)
        s_b = _s_bin_of_index(alignment_to_index(ev["s"]), s_bins)
        key = (meme_row * k_rows + kap) * s_bins + s_b
        n_e += np.bincount(key, minlength=m * k_rows * s_bins).reshape(m, k_rows, s_bins)
        adopted = events.adopted[mask]
        if adopted.any():
            n_a += np.bincount(key[adopted], minlength=m * k_rows * s_bins
                               ).reshape(m, k_rows, s_bins)

    classes = filt.kept_classes()
    for meme in agg_memes:
        row = int(np.searchsorted(meme_ids, meme))
        for cls in classes:
            s_idx, counts = events.zero_agg[meme][cls]
            if len(s_idx) == 0:
                continue
            bins = _s_bin_of_index(s_idx, s_bins)
            np.add.at(n_e[row, 0], bins, counts)
    return CountTables(meme_ids, n_e, n_a, kappa_max, s_bins)


# ---------------------------------------------------------------------------
# curves and surface


@dataclass
class AdoptionCurve:
    axis: str                     # "kappa" or "s"
    keys: np.ndarray              # kappa values, or S bin indices
    n_e: np.ndarray
    n_a: np.ndarray
    p: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    s_bins: int = DEFAULT_S_BINS

    def s_edges(self, i: int) -> tuple[float, float]:
        return (self.keys[i] / self.s_bins, (self.keys[i] + 1) / self.s_bins)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_kappa,bin_s_low,bin_s_high,n_e,n_a,p,ci_low,ci_high\n")
            for i in range(len(self.keys)):
                if self.axis == "kappa":
                    kcol, slo, shi = str(int(self.keys[i])), "", ""
                else:
                    lo, hi = self.s_edges(i)
                    kcol, slo, shi = "", f"{lo:.6g}", f"{hi:.6g}"
                fh.write(f"{kcol},{slo},{shi},{self.n_e[i]},{self.n_a[i]},"
                         f"{self.p[i]:.10g},{self.ci_low[i]:.10g},"
                         f"{self.ci_high[i]:.10g}\n")


@dataclass
class AdoptionSurface:
    tables: CountTables
    n_e: np.ndarray               # (kappa_max+1, s_bins) pooled
    n_a: np.ndarray
    p: np.ndarray                 # nan where n_e == 0

    @property
    def kappa_max(self) -> int:
        return self.tables.kappa_max

    @property
    def s_bins(self) -> int:
        return self.tables.s_bins

    def marginal_kappa(self):
        return self.n_e.sum(axis=1), self.n_a.sum(axis=1)

    def marginal_s(self):
        return self.n_e.sum(axis=0), self.n_a.sum(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_kappa,bin_s_low,bin_s_high,n_e,n_a,p,ci_low,ci_high\n")
            for k in range(self.n_e.shape[0]):
                for b in range(self.n_e.shape[1]):
                    lo, hi = b / self.s_bins, (b + 1) / self.s_bins
                    fh.write(f"{k},{lo:.6g},{hi:.6g},{self.n_e[k, b]},"
                             f"{self.n_a[k, b]},{self.p[k, b]:.10g},nan,nan\n")


def _ratio(n_a, n_e):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n_e > 0, n_a / np.maximum(n_e, 1), np.nan)


def estimate_surface(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    s_bins: int = DEFAULT_S_BINS,
    kappa_max: Optional[int] = None,
) -> AdoptionSurface:
    """Joint adoption probability over (kappa, S) bins, pooled over memes."""
    tables = count_tables(events, filt, s_bins=s_bins, kappa_max=kappa_max)
    n_e, n_a = tables.pooled()
    return AdoptionSurface(tables, n_e, n_a, _ratio(n_a, n_e))


def _curve_from_marginal(axis, keys, n_e, n_a, tables, ci, b_boot, level, seed,
                         s_bins):
    p = _ratio(n_a, n_e)
    lo = np.full(len(keys), np.nan)
    hi = np.full(len(keys), np.nan)
    if ci and len(tables.meme_ids) > 1:
        per_meme_e = tables.n_e.sum(axis=2) if axis == "kappa" else tables.n_e.sum(axis=1)
        per_meme_a = tables.n_a.sum(axis=2) if axis == "kappa" else tables.n_a.sum(axis=1)
        rng = np.random.default_rng(seed)
        for i, key in enumerate(keys):
            if n_e[i] == 0:
                continue
            units = np.stack([per_meme_a[:, key], per_meme_e[:, key]], axis=1)
            stat = _pooled_ratio_stat
            lo[i], hi[i] = bca_ci(stat, list(units), b=b_boot, level=level,
                                  seed=rng.integers(2**63))
    return AdoptionCurve(axis, keys, n_e, n_a, p, lo, hi, s_bins=s_bins)


def _pooled_ratio_stat(units) -> float:
    arr = np.asarray(units, dtype=np.float64)
    tot_e = arr[:, 1].sum()
    return float(arr[:, 0].sum() / tot_e) if tot_e > 0 else float("nan")


def estimate_curve_kappa(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    kappa_max: Optional[int] = None,
    ci: bool = False,
    b_boot: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
    s_bins: int = DEFAULT_S_BINS,
) -> AdoptionCurve:
    """Adoption probability versus exposure count, pooled over the class."""
    tables = count_tables(events, filt, s_bins=s_bins, kappa_max=kappa_max)
    n_e, n_a = tables.pooled()
    ke, ka = n_e.sum(axis=1), n_a.sum(axis=1)
    keys = np.arange(tables.kappa_max + 1)
    return _curve_from_marginal("kappa", keys, ke, ka, tables, ci, b_boot,
                                level, seed, s_bins)


def estimate_curve_s(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    s_bins: int = DEFAULT_S_BINS,
    kappa_max: Optional[int] = None,
    ci: bool = False,
    b_boot: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
) -> AdoptionCurve:
    """Adoption probability versus topical alignment, pooled over the class."""
    tables = count_tables(events, filt, s_bins=s_bins, kappa_max=kappa_max)
    n_e, n_a = tables.pooled()
    se, sa = n_e.sum(axis=0), n_a.sum(axis=0)
    keys = np.arange(s_bins)
    return _curve_from_marginal("s", keys, se, sa, tables, ci, b_boot,
                                level, seed, s_bins)


# ---------------------------------------------------------------------------
# internal / external decomposition


@dataclass
class DecompositionResult:
    surface: AdoptionSurface
    external_s: np.ndarray        # P_a(0, S) per S bin
    internal_surface: np.ndarray  # P_a(k, S) - P_a(0, S); row 0 is zero
    internal_s: np.ndarray        # P_a(S) - P_a(0, S)
    internal_kappa: np.ndarray    # P_a(k) - sum_S P_a(0, S) P(S | k)
    s_given_kappa: np.ndarray     # empirical P(S | k) weights
    internal_s_exposed: np.ndarray = field(default=None)  # kappa >= 1 only

    @property
    def s_bins(self) -> int:
        return self.surface.s_bins


def _decompose_pooled(n_e, n_a, clamp: bool = False):
    """Decomposition arithmetic on pooled count grids."""
    p = _ratio(n_a, n_e)
    external = p[0]
    internal_surface = p - external[None, :]
    internal_surface[0, :] = 0.0

    se, sa = n_e.sum(axis=0), n_a.sum(axis=0)
    internal_s = _ratio(sa, se) - external

    ke, ka = n_e.sum(axis=1), n_a.sum(axis=1)
    p_kappa = _ratio(ka, ke)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_given_kappa = np.where(ke[:, None] > 0,
                                 n_e / np.maximum(ke, 1)[:, None], 0.0)
    ext_term = np.nansum(np.where(n_e > 0, s_given_kappa * external[None, :], 0.0),
                         axis=1)
    internal_kappa = p_kappa - ext_term

    exp_e, exp_a = n_e[1:].sum(axis=0), n_a[1:].sum(axis=0)
    internal_s_exposed = _ratio(exp_a, exp_e) - external

    if clamp:
        internal_surface = np.clip(internal_surface, 0.0, None)
        internal_s = np.clip(internal_s, 0.0, None)
        internal_kappa = np.clip(internal_kappa, 0.0, None)
        internal_s_exposed = np.clip(internal_s_exposed, 0.0, None)
    return (external, internal_surface, internal_s, internal_kappa,
            s_given_kappa, internal_s_exposed)


def decompose(surface: AdoptionSurface, clamp_negative: bool = False) -> DecompositionResult:
    """Split the surface into its external row and internal remainder.

    The kappa=0 row is the external adoption probability; the internal
    surface is the cell-wise difference.  Sampling noise can push internal
    cells below zero; they are reported as-is unless ``clamp_negative``.
    """
    if surface.n_e[0].sum() == 0:
        raise DataError("decomposition undefined: no kappa=0 exposure events")
    (external, internal_surface, internal_s, internal_kappa,
     s_given_kappa, internal_s_exposed) = _decompose_pooled(
        surface.n_e, surface.n_a, clamp=clamp_negative)
    if not clamp_negative:
        occupied = surface.n_e > 0
        if np.any(internal_surface[occupied] < 0):
            warnings.warn("negative internal-probability cells present "
                          "(sampling noise); pass clamp_negative=True to clip")
    return DecompositionResult(surface, external, internal_surface,
                               internal_s, internal_kappa, s_given_kappa,
                               internal_s_exposed)


# ---------------------------------------------------------------------------
# persistence


@dataclass
class PersistenceResult:
    ratio: float
    ci_low: float
    ci_high: float
    kappa_used: np.ndarray


def _persistence_from_pooled(n_e, n_a, kappa_lo=2, kappa_hi=None):
    _, _, _, internal_kappa, _, _ = _decompose_pooled(n_e, n_a)
    ke = n_e.sum(axis=1)
    k_max = len(ke) - 1
    hi = k_max if kappa_hi is None else min(kappa_hi, k_max)
    occupied = np.zeros(len(ke), dtype=bool)
    occupied[kappa_lo:hi + 1] = ke[kappa_lo:hi + 1] > 0
    p1 = internal_kappa[1] if ke[1] > 0 else np.nan
    if not occupied.any() or not np.isfinite(p1) or p1 <= 0:
        return np.nan, occupied
    weights = ke[occupied].astype(np.float64)
    mean_tail = float(np.sum(internal_kappa[occupied] * weights) / weights.sum())
    return mean_tail / float(p1), occupied


def persistence(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    s_bins: int = DEFAULT_S_BINS,
    kappa_max: Optional[int] = None,
    ci: bool = True,
    b_boot: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
) -> PersistenceResult:
    """Mean internal adoption probability beyond one exposure, relative to
    the single-exposure probability.

    The tail mean over kappa in [2, kappa_max] is exposure-event weighted.
    Values above 1 indicate reinforcement from repeated exposures; the CI
    resamples memes.  Undefined (nan) when the internal probability at one
    exposure is non-positive.
    """
    tables = count_tables(events, filt, s_bins=s_bins, kappa_max=kappa_max)
    n_e, n_a = tables.pooled()
    ratio, occupied = _persistence_from_pooled(n_e, n_a)
    lo = hi = np.nan
    if ci and np.isfinite(ratio) and len(tables.meme_ids) > 1:
        units = [(tables.n_e[i], tables.n_a[i]) for i in range(len(tables.meme_ids))]

        def stat(us):
            e = np.sum([u[0] for u in us], axis=0)
            a = np.sum([u[1] for u in us], axis=0)
            r, _ = _persistence_from_pooled(e, a)
            return r

        lo, hi = bca_ci(stat, units, b=b_boot, level=level, seed=seed)
    return PersistenceResult(ratio, lo, hi, np.flatnonzero(occupied))


# ---------------------------------------------------------------------------
# empirical CDFs and two-sample statistics


class EmpiricalCdf:
    """Right-continuous empirical distribution from weighted samples."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=np.float64)
        if weights is None:
            weights = np.ones(len(values))
        weights = np.asarray(weights, dtype=np.float64)
        if len(values) == 0 or weights.sum() <= 0:
            raise DataError("empty sample has no CDF")
        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order]
        uniq, start = np.unique(values, return_index=True)
        sums = np.add.reduceat(weights, start)
        self.support = uniq
        self.cum = np.cumsum(sums) / weights.sum()

    def eval(self, x):
        idx = np.searchsorted(self.support, np.asarray(x, dtype=np.float64),
                              side="right")
        return np.concatenate(([0.0], self.cum))[idx]

    def quantile_at(self, x: float) -> float:
        return float(self.eval(np.asarray([x]))[0])


def ks_distance(cdf_a: EmpiricalCdf, cdf_b: EmpiricalCdf) -> float:
    """Sup-norm distance between two empirical CDFs."""
    support = np.union1d(cdf_a.support, cdf_b.support)
    return float(np.max(np.abs(cdf_a.eval(support) - cdf_b.eval(support))))


def event_cdfs(events: EventSet, filt: Optional[EventFilter] = None) -> dict:
    """CDFs of kappa and alignment for exposure and adoption events.

    Keys: ("kappa"|"s", "exposure"|"adoption").  Exposure distributions
    cover all events (adoption events are exposure events that converted).
    """
    if filt is None:
        filt = EventFilter()
    mask = filt.event_mask(events)
    ev = events.events[mask]
    adopted = events.adopted[mask]

    kap_vals = [ev["kappa"].astype(np.float64)]
    kap_wts = [np.ones(len(ev))]
    s_vals = [alignment_to_index(ev["s"]).astype(np.float64) / ALIGNMENT_STEPS]
    s_wts = [np.ones(len(ev))]
    for meme, per in events.zero_agg.items():
        if not filt.keeps_meme(meme):
            continue
        for cls in filt.kept_classes():
            s_idx, counts = per[cls]
            if len(s_idx) == 0:
                continue
            kap_vals.append(np.zeros(len(s_idx)))
            kap_wts.append(counts.astype(np.float64))
            s_vals.append(s_idx.astype(np.float64) / ALIGNMENT_STEPS)
            s_wts.append(counts.astype(np.float64))

    out = {}
    out[("kappa", "exposure")] = EmpiricalCdf(np.concatenate(kap_vals),
                                              np.concatenate(kap_wts))
    out[("s", "exposure")] = EmpiricalCdf(np.concatenate(s_vals),
                                          np.concatenate(s_wts))
    if adopted.any():
        out[("kappa", "adoption")] = EmpiricalCdf(
            ev["kappa"][adopted].astype(np.float64))
        out[("s", "adoption")] = EmpiricalCdf(
            alignment_to_index(ev["s"][adopted]).astype(np.float64)
            / ALIGNMENT_STEPS)
    else:  # no adoptions in the filtered set: distributions undefined
        out[("kappa", "adoption")] = None
        out[("s", "adoption")] = None
    return out


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Exact permutation enumeration for pooled sizes up to 20, normal
    approximation with tie correction above.  Returns (U of sample_a, p).
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise DataError("mann_whitney_u needs non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u_a = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2)
    mu = n_a * n_b / 2.0

    if n_a + n_b <= 20:
        total = 0
        extreme = 0
        obs_dev = abs(u_a - mu)
        for combo in itertools.combinations(range(n_a + n_b), n_a):
            u = float(ranks[list(combo)].sum() - n_a * (n_a + 1) / 2)
            total += 1
            if abs(u - mu) >= obs_dev - 1e-9:
                extreme += 1
        return u_a, extreme / total

    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    sigma2 = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if sigma2 <= 0:
        return u_a, 1.0
    z = (abs(u_a - mu) - 0.5) / math.sqrt(sigma2)
    z = max(z, 0.0)
    return u_a, min(1.0, 2.0 * float(norm.sf(z)))


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


# ---------------------------------------------------------------------------
# BCa bootstrap


def bca_ci(
    statistic_fn: Callable,
    units: Sequence,
    b: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
) -> tuple[float, float]:
    """Bias-corrected accelerated bootstrap interval.

    ``units`` are the resampling clusters (whole memes); ``statistic_fn``
    maps a list of units to a scalar.  z0 comes from the fraction of
    bootstrap replicates below the point estimate, the acceleration from the
    jackknife over units.  A degenerate bootstrap distribution collapses the
    interval to the point estimate.
    """
    units = list(units)
    n = len(units)
    if n < 2:
        raise DataError("bca_ci needs at least 2 resampling units")
    theta_hat = float(statistic_fn(units))
    rng = np.random.default_rng(seed)

    boot = np.empty(b, dtype=np.float64)
    for i in range(b):
        idx = rng.integers(0, n, size=n)
        boot[i] = statistic_fn([units[j] for j in idx])
    boot = boot[np.isfinite(boot)]
    if len(boot) == 0:
        return (np.nan, np.nan)
    if np.all(boot == boot[0]):
        return (theta_hat, theta_hat)

    frac = np.clip(np.mean(boot < theta_hat), 1.0 / (len(boot) + 1),
                   len(boot) / (len(boot) + 1.0))
    z0 = float(norm.ppf(frac))

    jack = np.empty(n, dtype=np.float64)
    for i in range(n):
        jack[i] = statistic_fn(units[:i] + units[i + 1:])
    jack = jack[np.isfinite(jack)]
    if len(jack) >= 2:
        d = jack.mean() - jack
        denom = np.sum(d**2) ** 1.5
        accel = float(np.sum(d**3) / (6.0 * denom)) if denom > 0 else 0.0
    else:
        accel = 0.0

    alpha = (1.0 - level) / 2.0
    lo_q = _bca_quantile(z0, accel, norm.ppf(alpha))
    hi_q = _bca_quantile(z0, accel, norm.ppf(1.0 - alpha))
    lo, hi = np.quantile(boot, [lo_q, hi_q])
    # Keep the point estimate inside the interval (estimator invariant).
    return (min(float(lo), theta_hat), max(float(hi), theta_hat))


def _bca_quantile(z0: float, accel: float, z_alpha: float) -> float:
    adj = z0 + (z0 + z_alpha) / (1.0 - accel * (z0 + z_alpha))
    return float(np.clip(norm.cdf(adj), 0.0, 1.0))


# ---------------------------------------------------------------------------
# seed alignment and topical-user lift


@dataclass
class SeedAlignmentResult:
    seed_ratio: float
    seed_ci: tuple[float, float]
    nonseed_ratio: float
    nonseed_ci: tuple[float, float]


def _per_meme_alignment_sums(events: EventSet, filt: EventFilter):
    """Per meme: [sum_S_adopt0, n_adopt0, sum_S_all0, n_all0,
    sum_S_adopt1, n_adopt1, sum_S_all1, n_all1] with 0 = seeds (kappa=0)."""
    mask = filt.event_mask(events)
    ev = events.events[mask]
    adopted = events.adopted[mask]
    s = alignment_to_index(ev["s"]).astype(np.float64) / ALIGNMENT_STEPS
    is_seed_level = ev["kappa"] == 0

    agg_memes = [m for m in events.zero_agg if filt.keeps_meme(m)]
    meme_ids = np.union1d(np.unique(ev["meme"].astype(np.int64)),
                          np.asarray(sorted(agg_memes), dtype=np.int64))
    sums = np.zeros((len(meme_ids), 8), dtype=np.float64)
    if len(ev):
        row = np.searchsorted(meme_ids, ev["meme"].astype(np.int64))
        for cond, (c_s, c_n) in (
            ((is_seed_level & adopted), (0, 1)),
            (is_seed_level, (2, 3)),
            ((~is_seed_level & adopted), (4, 5)),
            (~is_seed_level, (6, 7)),
        ):
            np.add.at(sums[:, c_s], row[cond], s[cond])
            np.add.at(sums[:, c_n], row[cond], 1.0)
    for meme in agg_memes:
        row = int(np.searchsorted(meme_ids, meme))
        for cls in filt.kept_classes():
            s_idx, counts = events.zero_agg[meme][cls]
            if len(s_idx) == 0:
                continue
            sums[row, 2] += float(np.sum(s_idx / ALIGNMENT_STEPS * counts))
            sums[row, 3] += float(counts.sum())
    return meme_ids, sums


def _alignment_ratio(units, seed_side: bool) -> float:
    arr = np.asarray(units, dtype=np.float64).sum(axis=0)
    off = 0 if seed_side else 4
    if arr[off + 1] == 0 or arr[off + 3] == 0:
        return float("nan")
    mean_a = arr[off] / arr[off + 1]
    mean_e = arr[off + 2] / arr[off + 3]
    return float(mean_a / mean_e) if mean_e > 0 else float("nan")


def seed_relative_alignment(
    events: EventSet,
    filt: Optional[EventFilter] = None,
    b_boot: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
    ci: bool = True,
) -> SeedAlignmentResult:
    """Mean alignment of adoptions over mean alignment of exposures,
    separately for seed (kappa=0) and non-seed (kappa>=1) events."""
    if filt is None:
        filt = EventFilter()
    _, sums = _per_meme_alignment_sums(events, filt)
    units = [sums[i] for i in range(sums.shape[0])]
    seed_ratio = _alignment_ratio(units, True)
    nonseed_ratio = _alignment_ratio(units, False)
    seed_ci = nonseed_ci = (np.nan, np.nan)
    if ci and len(units) > 1:
        rng = np.random.default_rng(seed)
        if np.isfinite(seed_ratio):
            seed_ci = bca_ci(lambda us: _alignment_ratio(us, True), units,
                             b=b_boot, level=level, seed=int(rng.integers(2**63)))
        if np.isfinite(nonseed_ratio):
            nonseed_ci = bca_ci(lambda us: _alignment_ratio(us, False), units,
                                b=b_boot, level=level, seed=int(rng.integers(2**63)))
    return SeedAlignmentResult(seed_ratio, seed_ci, nonseed_ratio, nonseed_ci)


@dataclass
class LiftResult:
    lift: float
    ci_low: float
    ci_high: float
    rate_topical: float
    rate_nontopical: float


def topical_user_lift(
    events: EventSet,
    meme_ids: Sequence[int],
    b_boot: int = 1000,
    level: float = 0.95,
    seed: Optional[int] = None,
    ci: bool = True,
) -> LiftResult:
    """How much likelier topical users are to adopt, over the given memes.

    Computes the adoption rate among topical-user events divided by the rate
    among non-topical-user events, minus one, with a meme-level bootstrap CI.
    """
    filt_t = EventFilter(memes=meme_ids, user_classes=["topical"])
    filt_n = EventFilter(memes=meme_ids, user_classes=["non-topical"])
    tab_t = count_tables(events, filt_t, s_bins=1)
    tab_n = count_tables(events, filt_n, s_bins=1)
    memes = np.union1d(tab_t.meme_ids, tab_n.meme_ids)

    def per_meme(tab):
        out = np.zeros((len(memes), 2))
        rows = np.searchsorted(memes, tab.meme_ids)
        out[rows, 0] = tab.n_a.sum(axis=(1, 2))
        out[rows, 1] = tab.n_e.sum(axis=(1, 2))
        return out

    u_t, u_n = per_meme(tab_t), per_meme(tab_n)
    units = [np.concatenate([u_t[i], u_n[i]]) for i in range(len(memes))]

    def stat(us) -> float:
        arr = np.asarray(us, dtype=np.float64).sum(axis=0)
        if arr[1] == 0 or arr[3] == 0 or arr[2] == 0:
            return float("nan")
        return float((arr[0] / arr[1]) / (arr[2] / arr[3]) - 1.0)

    lift = stat(units)
    rate_t = (u_t[:, 0].sum() / u_t[:, 1].sum()) if u_t[:, 1].sum() else np.nan
    rate_n = (u_n[:, 0].sum() / u_n[:, 1].sum()) if u_n[:, 1].sum() else np.nan
    lo = hi = np.nan
    if ci and len(units) > 1 and np.isfinite(lift):
        lo, hi = bca_ci(stat, units, b=b_boot, level=level, seed=seed)
    return LiftResult(lift, lo, hi, float(rate_t), float(rate_n))
