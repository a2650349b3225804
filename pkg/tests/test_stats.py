import math

import numpy as np
import pytest

from memeflow._common import DataError
from memeflow.exposure import EVENT_DTYPE, EventSet, extract_events
from memeflow.stats import (EmpiricalCdf, EventFilter, bca_ci, count_tables,
                            decompose, estimate_curve_kappa, estimate_curve_s,
                            estimate_surface, event_cdfs, ks_distance,
                            mann_whitney_u, persistence,
                            seed_relative_alignment, topical_user_lift)


def events_from_rows(rows, kappa_cap=32, zero_agg=None):
    """rows: (user, meme, kappa, s, adopted[, user_class]) tuples."""
    ev = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, r in enumerate(rows):
        user, meme, kappa, s, adopted = r[:5]
        cls = r[5] if len(r) > 5 else 1
        ev[i] = (user, meme, kappa, np.float32(s), (cls << 1) | int(adopted))
    return EventSet(ev, zero_agg or {}, kappa_cap)


def random_events(rng, n=400, memes=5, kappa_max=6, with_agg=False):
    rows = []
    for _ in range(n):
        rows.append((
            int(rng.integers(0, 50)),
            int(rng.integers(0, memes)),
            int(rng.integers(0, kappa_max + 1)),
            float(rng.integers(0, 10001)) / 10000,
            bool(rng.random() < 0.2),
            int(rng.integers(0, 3)),
        ))
    zero_agg = {}
    if with_agg:
        for m in range(memes):
            per = []
            for cls in range(3):
                k = int(rng.integers(0, 4))
                idx = np.sort(rng.choice(10001, size=k, replace=False)).astype(np.uint16)
                counts = rng.integers(1, 30, size=k).astype(np.int64)
                per.append((idx, counts))
            zero_agg[m] = per
    return events_from_rows(rows, zero_agg=zero_agg)


class TestCurves:
    def test_simple_ratio(self):
        rows = [(i, 0, 1, 0.5, i < 3) for i in range(12)]
        curve = estimate_curve_kappa(events_from_rows(rows))
        assert curve.n_e[1] == 12 and curve.n_a[1] == 3
        assert curve.p[1] == pytest.approx(0.25)

    def test_hand_trace_curve(self, hand_trace):
        log, graph, catalog, users, memes, window = hand_trace
        ev = extract_events(log, graph, catalog, users, memes, window)
        curve = estimate_curve_kappa(ev)
        assert curve.p[1] == pytest.approx(0.5)
        assert curve.p[2] == 0.0
        assert curve.n_e[1] == 2 and curve.n_a[1] == 1

    def test_all_adopted(self):
        rows = [(i, 0, k, 0.5, True) for i in range(10) for k in (0, 1, 2)]
        curve = estimate_curve_kappa(events_from_rows(rows))
        occupied = curve.n_e > 0
        assert np.all(curve.p[occupied] == 1.0)

    def test_empty_bins_emitted(self):
        rows = [(1, 0, 2, 0.5, False)]
        curve = estimate_curve_kappa(events_from_rows(rows), kappa_max=4)
        assert len(curve.keys) == 5
        assert curve.n_e[3] == 0 and math.isnan(curve.p[3])

    def test_s_bins_last_closed(self):
        rows = [(i, 0, 1, 1.0, i < 2) for i in range(8)]
        curve = estimate_curve_s(events_from_rows(rows), s_bins=20)
        assert curve.n_e[19] == 8
        assert curve.p[19] == pytest.approx(0.25)
        assert curve.n_e[:19].sum() == 0

    def test_kappa_pooled_above_max(self):
        rows = [(1, 0, 7, 0.5, False), (2, 0, 9, 0.5, True)]
        curve = estimate_curve_kappa(events_from_rows(rows), kappa_max=4)
        assert curve.n_e[4] == 2 and curve.n_a[4] == 1

    def test_zero_agg_joins_kappa0(self):
        agg = {0: [(np.asarray([5000], np.uint16), np.asarray([40], np.int64)),
                   (np.zeros(0, np.uint16), np.zeros(0, np.int64)),
                   (np.zeros(0, np.uint16), np.zeros(0, np.int64))]}
        rows = [(1, 0, 0, 0.5, True, 0)] * 10
        ev = events_from_rows(rows, zero_agg=agg)
        curve = estimate_curve_kappa(ev)
        assert curve.n_e[0] == 50 and curve.n_a[0] == 10

    def test_user_class_filter(self):
        rows = [(1, 0, 1, 0.5, True, 0), (2, 0, 1, 0.5, False, 2)]
        ev = events_from_rows(rows)
        top = estimate_curve_kappa(ev, EventFilter(user_classes=["topical"]))
        assert top.n_e[1] == 1 and top.n_a[1] == 1

    def test_meme_filter(self):
        rows = [(1, 0, 1, 0.5, True), (2, 1, 1, 0.5, False)]
        ev = events_from_rows(rows)
        only0 = estimate_curve_kappa(ev, EventFilter(memes=[0]))
        assert only0.n_e[1] == 1 and only0.n_a[1] == 1

    def test_csv_export(self, tmp_path):
        rows = [(1, 0, 1, 0.3, True)]
        curve = estimate_curve_s(events_from_rows(rows))
        path = tmp_path / "curve.csv"
        curve.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "bin_kappa,bin_s_low,bin_s_high,n_e,n_a,p,ci_low,ci_high"
        assert len(lines) == 21


class TestSurface:
    def test_single_event_cell(self):
        ev = events_from_rows([(1, 0, 1, 0.55, True)])
        surf = estimate_surface(ev)
        assert surf.n_e.sum() == 1
        b = int(0.55 * 20)
        assert surf.n_e[1, b] == 1
        assert surf.p[1, b] == 1.0

    def test_marginals_match_1d_exactly(self):
        rng = np.random.default_rng(3)
        ev = random_events(rng, with_agg=True)
        surf = estimate_surface(ev, kappa_max=6)
        ck = estimate_curve_kappa(ev, kappa_max=6)
        cs = estimate_curve_s(ev, kappa_max=6)
        me, ma = surf.marginal_kappa()
        assert np.array_equal(me, ck.n_e) and np.array_equal(ma, ck.n_a)
        se, sa = surf.marginal_s()
        assert np.array_equal(se, cs.n_e) and np.array_equal(sa, cs.n_a)

    def test_counting_identity(self):
        rng = np.random.default_rng(4)
        ev = random_events(rng, with_agg=True)
        surf = estimate_surface(ev)
        total = len(ev) + ev.zero_agg_total()
        assert int(surf.n_e.sum()) == total
        assert int(surf.n_a.sum()) == int(ev.adopted.sum())


class TestDecompose:
    def test_reconstruction_identity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            ev = random_events(rng, n=int(rng.integers(10, 300)),
                               with_agg=bool(rng.random() < 0.5))
            surf = estimate_surface(ev, kappa_max=6)
            if surf.n_e[0].sum() == 0:
                continue
            import warnings as _w
            with _w.catch_warnings():
                _w.simplefilter("ignore")
                dec = decompose(surf)
            occ = surf.n_e > 0
            occ[0] = False
            ext_ok = surf.n_e[0] > 0
            cells = occ & ext_ok[None, :]
            recon = dec.internal_surface + dec.external_s[None, :]
            assert np.all(np.abs(recon[cells] - surf.p[cells]) < 1e-12)

    def test_pure_external_internal_zero(self):
        # every row identical to the kappa=0 row
        rows = []
        for k in range(3):
            rows += [(1, 0, k, 0.5, True)] * 2 + [(2, 0, k, 0.5, False)] * 6
        dec = decompose(estimate_surface(events_from_rows(rows), kappa_max=4))
        b = int(0.5 * 20)
        assert dec.external_s[b] == pytest.approx(0.25)
        occupied = dec.surface.n_e > 0
        assert np.allclose(dec.internal_surface[occupied], 0.0)

    def test_zero_external_internal_equals_total(self):
        rows = [(1, 0, 0, 0.5, False)] * 10 + [(2, 0, 2, 0.5, True)] * 4
        surf = estimate_surface(events_from_rows(rows), kappa_max=4)
        dec = decompose(surf)
        b = int(0.5 * 20)
        assert dec.external_s[b] == 0.0
        assert dec.internal_surface[2, b] == pytest.approx(1.0)

    def test_missing_zero_row_fatal(self):
        rows = [(1, 0, 1, 0.5, True)]
        surf = estimate_surface(events_from_rows(rows))
        with pytest.raises(DataError):
            decompose(surf)

    def test_negative_cells_warn_not_clamped(self):
        rows = [(1, 0, 0, 0.5, True)] * 5 + [(1, 0, 0, 0.5, False)] * 5 \
            + [(2, 0, 1, 0.5, False)] * 10
        surf = estimate_surface(events_from_rows(rows), kappa_max=2)
        with pytest.warns(UserWarning, match="negative"):
            dec = decompose(surf)
        b = int(0.5 * 20)
        assert dec.internal_surface[1, b] == pytest.approx(-0.5)
        clamped = decompose(surf, clamp_negative=True)
        assert clamped.internal_surface[1, b] == 0.0


class TestPersistence:
    def _counts(self, p1, p_tail, n1=5000, ntail=1000, tail_ks=(2, 3, 4, 5)):
        rows = [(1, 0, 0, 0.5, False)] * 200
        rows += [(1, 0, 1, 0.5, True)] * int(p1 * n1)
        rows += [(1, 0, 1, 0.5, False)] * (n1 - int(p1 * n1))
        for k in tail_ks:
            rows += [(1, 0, k, 0.5, True)] * int(p_tail * ntail)
            rows += [(1, 0, k, 0.5, False)] * (ntail - int(p_tail * ntail))
        return events_from_rows(rows)

    def test_ratio_example(self):
        ev = self._counts(0.02, 0.03)
        res = persistence(ev, ci=False)
        assert res.ratio == pytest.approx(1.5, rel=1e-9)

    def test_flat_curve_ratio_one(self):
        ev = self._counts(0.05, 0.05)
        res = persistence(ev, ci=False)
        assert res.ratio == pytest.approx(1.0, rel=1e-9)

    def test_undefined_when_p1_zero(self):
        ev = self._counts(0.0, 0.05)
        res = persistence(ev, ci=False)
        assert math.isnan(res.ratio)

    def test_weighting_by_exposure_events(self):
        # two tail bins with different sizes: mean must follow the big one
        rows = [(1, 0, 0, 0.5, False)] * 100
        rows += [(1, 0, 1, 0.5, True)] * 10 + [(1, 0, 1, 0.5, False)] * 90
        rows += [(1, 0, 2, 0.5, True)] * 30 + [(1, 0, 2, 0.5, False)] * 70  # p=.3
        rows += [(1, 0, 3, 0.5, True)] * 1 + [(1, 0, 3, 0.5, False)] * 9    # p=.1
        res = persistence(events_from_rows(rows), ci=False)
        expected = ((0.3 * 100 + 0.1 * 10) / 110) / 0.1
        assert res.ratio == pytest.approx(expected, rel=1e-9)


class TestCdfs:
    def test_all_seed_adoptions(self):
        rows = [(i, 0, 0, 0.5, True) for i in range(5)]
        cdfs = event_cdfs(events_from_rows(rows))
        assert cdfs[("kappa", "adoption")].eval(np.asarray([0.0]))[0] == 1.0

    def test_hand_trace_adoption_cdf(self, hand_trace):
        log, graph, catalog, users, memes, window = hand_trace
        ev = extract_events(log, graph, catalog, users, memes, window)
        # make one adoption a seed: drop to adoption events at kappa 0 and 1
        rows = [(2, 0, 0, 1.0, True), (3, 0, 1, 1.0, True)]
        cdfs = event_cdfs(events_from_rows(rows))
        cdf = cdfs[("kappa", "adoption")]
        assert cdf.eval(np.asarray([0.0]))[0] == pytest.approx(0.5)
        assert cdf.eval(np.asarray([1.0]))[0] == pytest.approx(1.0)

    def test_zero_agg_in_exposure_cdf(self):
        agg = {0: [(np.asarray([2500], np.uint16), np.asarray([30], np.int64)),
                   (np.zeros(0, np.uint16), np.zeros(0, np.int64)),
                   (np.zeros(0, np.uint16), np.zeros(0, np.int64))]}
        rows = [(1, 0, 1, 0.75, False)] * 10
        cdfs = event_cdfs(events_from_rows(rows, zero_agg=agg))
        kap = cdfs[("kappa", "exposure")]
        assert kap.eval(np.asarray([0.0]))[0] == pytest.approx(0.75)
        s = cdfs[("s", "exposure")]
        assert s.eval(np.asarray([0.25]))[0] == pytest.approx(0.75)


class TestKs:
    def test_identical_zero(self):
        a = EmpiricalCdf([1, 2, 3, 4])
        assert ks_distance(a, EmpiricalCdf([1, 2, 3, 4])) == 0.0

    def test_disjoint_one(self):
        assert ks_distance(EmpiricalCdf([0, 0]), EmpiricalCdf([1, 1])) == 1.0

    def test_quarter(self):
        d = ks_distance(EmpiricalCdf([0, 0, 1, 1]), EmpiricalCdf([0, 1, 1, 1]))
        assert d == pytest.approx(0.25)

    def test_metric_properties_random(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            xs = [EmpiricalCdf(rng.integers(0, 6, size=rng.integers(1, 12)))
                  for _ in range(3)]
            a, b, c = xs
            assert ks_distance(a, b) == pytest.approx(ks_distance(b, a))
            assert ks_distance(a, a) == 0.0
            assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12


class TestMannWhitney:
    def test_identical_p_one(self):
        u, p = mann_whitney_u([1, 2, 3], [1, 2, 3])
        assert p == pytest.approx(1.0)

    def test_separated_exact(self):
        u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert p == pytest.approx(0.1)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=8).tolist()
        b = rng.normal(size=7).tolist()
        u1, p1 = mann_whitney_u(a, b)
        u2, p2 = mann_whitney_u(b, a)
        assert u1 + u2 == pytest.approx(len(a) * len(b))
        assert p1 == pytest.approx(p2)

    def test_large_sample_normal_approx(self):
        rng = np.random.default_rng(10)
        a = rng.normal(0, 1, size=60)
        b = rng.normal(1.0, 1, size=60)
        _, p = mann_whitney_u(a, b)
        assert p < 0.01
        from scipy.stats import mannwhitneyu as scipy_mwu
        ours = mann_whitney_u(a, b)
        ref = scipy_mwu(a, b, alternative="two-sided", method="asymptotic")
        assert ours[0] == pytest.approx(float(ref.statistic))
        assert ours[1] == pytest.approx(float(ref.pvalue), rel=0.05)


class TestBca:
    def test_degenerate_collapses(self):
        lo, hi = bca_ci(lambda us: float(np.mean(us)), [3.0] * 10, b=200, seed=0)
        assert lo == hi == 3.0

    def test_symmetric_close_to_percentile(self):
        rng = np.random.default_rng(11)
        units = list(rng.normal(0, 1, size=80))
        lo, hi = bca_ci(lambda us: float(np.mean(us)), units, b=2000, seed=1)
        boots = []
        r2 = np.random.default_rng(1)
        arr = np.asarray(units)
        for _ in range(2000):
            boots.append(arr[r2.integers(0, 80, 80)].mean())
        plo, phi = np.quantile(boots, [0.025, 0.975])
        grid = (phi - plo) / 10
        assert abs(lo - plo) < grid and abs(hi - phi) < grid

    def test_interval_contains_estimate(self):
        rng = np.random.default_rng(12)
        units = list(rng.exponential(size=30))
        stat = lambda us: float(np.var(us))
        lo, hi = bca_ci(stat, units, b=500, seed=3)
        assert lo <= stat(units) <= hi

    def test_coverage_smoke(self):
        # tiny version of the acceptance coverage study
        rng = np.random.default_rng(13)
        hits = 0
        reps = 60
        for _ in range(reps):
            units = [(int(rng.binomial(200, 0.1)), 200) for _ in range(30)]
            stat = lambda us: sum(a for a, _ in us) / sum(n for _, n in us)
            lo, hi = bca_ci(stat, units, b=400, seed=int(rng.integers(2**62)))
            if lo <= 0.1 <= hi:
                hits += 1
        assert hits >= int(0.85 * reps)


class TestSeedAlignment:
    def test_identical_s_ratios_one(self):
        rows = [(1, 0, 0, 0.6, True), (2, 0, 0, 0.6, False),
                (3, 0, 1, 0.6, True), (4, 0, 1, 0.6, False),
                (1, 1, 0, 0.6, True), (2, 1, 0, 0.6, False),
                (3, 1, 1, 0.6, True), (4, 1, 1, 0.6, False)]
        res = seed_relative_alignment(events_from_rows(rows), ci=False)
        assert res.seed_ratio == pytest.approx(1.0)
        assert res.nonseed_ratio == pytest.approx(1.0)

    def test_skewed_seeds(self):
        rows = []
        for i in range(50):
            s = 0.9 if i < 25 else 0.1
            adopted = s > 0.5  # adoptions only at high alignment
            rows.append((i, i % 3, 0, s, adopted))
        res = seed_relative_alignment(events_from_rows(rows), ci=False)
        assert res.seed_ratio > 1.5

    def test_uniform_adoption_near_one(self):
        rng = np.random.default_rng(14)
        rows = []
        for i in range(2000):
            s = float(rng.random())
            rows.append((i, int(rng.integers(0, 10)), 0, s, rng.random() < 0.3))
        res = seed_relative_alignment(events_from_rows(rows), ci=True,
                                      b_boot=300, seed=4)
        assert res.seed_ci[0] <= 1.0 <= res.seed_ci[1]


class TestLift:
    def test_arithmetic_example(self):
        rows = []
        rows += [(1, 0, 1, 0.5, True, 0)] * 142 + [(1, 0, 1, 0.5, False, 0)] * 9858
        rows += [(2, 0, 1, 0.5, True, 2)] * 100 + [(2, 0, 1, 0.5, False, 2)] * 9900
        res = topical_user_lift(events_from_rows(rows), meme_ids=[0], ci=False)
        assert res.lift == pytest.approx(0.42)

    def test_identical_rates_zero(self):
        rows = [(1, 0, 1, 0.5, True, 0)] * 5 + [(1, 0, 1, 0.5, False, 0)] * 45
        rows += [(2, 0, 1, 0.5, True, 2)] * 5 + [(2, 0, 1, 0.5, False, 2)] * 45
        res = topical_user_lift(events_from_rows(rows), meme_ids=[0], ci=False)
        assert res.lift == pytest.approx(0.0)
