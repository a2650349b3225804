import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, logsumexp

from memeflow._common import ConfigError, DataError
from memeflow.topics import (CLASS_LABELS, LdaModel, ProfileSet, alignment,
                             classify_topicality, entropy_nats, fit_lda,
                             profile, profile_for, profiles_from_model)


class TestEntropyAlignment:
    def test_uniform_entropy(self):
        h = entropy_nats(np.full(100, 0.01))
        assert abs(h - math.log(100)) < 1e-9

    def test_one_hot_entropy(self):
        theta = np.zeros(100)
        theta[3] = 1.0
        assert entropy_nats(theta) == 0.0

    def test_two_point_entropy(self):
        assert abs(entropy_nats([0.5, 0.5, 0.0]) - math.log(2)) < 1e-12

    def test_alignment_identical(self):
        t = np.asarray([0.2, 0.3, 0.5])
        assert alignment(t, t) == pytest.approx(1.0, abs=1e-12)

    def test_alignment_orthogonal(self):
        a = np.zeros(10)
        b = np.zeros(10)
        a[3], b[7] = 1.0, 1.0
        assert alignment(a, b) == 0.0

    def test_alignment_closed_form(self):
        got = alignment([0.5, 0.5], [1.0, 0.0])
        assert abs(got - 1 / math.sqrt(2)) < 1e-12

    def test_alignment_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.dirichlet(np.ones(8))
            b = rng.dirichlet(np.ones(8))
            assert alignment(a, b) == pytest.approx(alignment(b, a), abs=1e-12)
            assert 0.0 <= alignment(a, b) <= 1.0 + 1e-12


class TestClassify:
    def test_quartiles(self):
        h = np.asarray([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        classes = classify_topicality(h, 0.25)
        labels = [CLASS_LABELS[c] for c in classes]
        assert labels == ["topical", "topical", "middle", "middle",
                          "middle", "middle", "non-topical", "non-topical"]

    def test_degenerate_all_equal(self):
        with pytest.warns(UserWarning, match="degenerate"):
            classes = classify_topicality(np.ones(8), 0.25)
        assert all(CLASS_LABELS[c] == "topical" for c in classes)

    def test_half_quantile_no_middle(self):
        h = np.arange(8, dtype=float)
        classes = classify_topicality(h, 0.5)
        labels = {CLASS_LABELS[c] for c in classes}
        assert "middle" not in labels

    def test_too_few_profiles_fatal(self):
        with pytest.raises(DataError):
            classify_topicality(np.asarray([1.0, 2.0, 3.0]), 0.25)

    def test_bad_quantile(self):
        with pytest.raises(ConfigError):
            classify_topicality(np.ones(10), 0.75)


class TestFit:
    def test_k1_forces_certainty(self):
        docs = {0: [1, 2], 1: [3]}
        model = fit_lda(docs, k=1, iterations=5, seed=0)
        for key in docs:
            theta = model.doc_theta(key)
            assert theta.shape == (1,)
            assert theta[0] == pytest.approx(1.0)
            assert entropy_nats(theta) == 0.0

    def test_determinism(self):
        docs = {i: list(range(i, i + 5)) for i in range(6)}
        m1 = fit_lda(docs, k=3, iterations=30, seed=42)
        m2 = fit_lda(docs, k=3, iterations=30, seed=42)
        assert np.array_equal(m1.n_wk, m2.n_wk)
        assert np.array_equal(m1.doc_topic_counts, m2.doc_topic_counts)
        m3 = fit_lda(docs, k=3, iterations=30, seed=43)
        assert not np.array_equal(m1.doc_topic_counts, m3.doc_topic_counts)

    def test_empty_corpus_fatal(self):
        with pytest.raises(DataError):
            fit_lda({}, k=2, iterations=1, seed=0)
        with pytest.raises(DataError):
            fit_lda({0: []}, k=2, iterations=1, seed=0)

    def test_seed_required(self):
        with pytest.raises(ConfigError):
            fit_lda({0: [1]}, k=2, iterations=1)

    def test_disjoint_vocabulary_recovery(self):
        rng = np.random.default_rng(5)
        docs = {}
        for d in range(20):
            docs[("a", d)] = list(rng.choice(10, size=8, replace=False))
        for d in range(20):
            docs[("b", d)] = list(10 + rng.choice(10, size=8, replace=False))
        model = fit_lda(docs, k=2, iterations=150, alpha=0.5, beta=0.01, seed=9)
        dists = model.topic_word_dists()
        planted_a = np.r_[np.full(10, 0.1), np.zeros(10)]
        planted_b = np.r_[np.zeros(10), np.full(10, 0.1)]
        direct = min(alignment(dists[0], planted_a), alignment(dists[1], planted_b))
        swapped = min(alignment(dists[0], planted_b), alignment(dists[1], planted_a))
        assert max(direct, swapped) >= 0.8
        # dominant topics differ between the groups
        top_a = np.argmax(model.doc_theta(("a", 0)))
        top_b = np.argmax(model.doc_theta(("b", 0)))
        assert top_a != top_b


def enumerated_marginals(doc_of, word_of, k, v, alpha, beta):
    """Exact posterior over assignments by brute enumeration.

    Returns (token marginals P(z_t = j), coincidence P(z_s == z_t))."""
    t = len(doc_of)
    d = int(max(doc_of)) + 1
    states = list(itertools.product(range(k), repeat=t))
    logps = np.empty(len(states))
    for i, z in enumerate(states):
        za = np.asarray(z)
        n_dk = np.zeros((d, k))
        np.add.at(n_dk, (doc_of, za), 1)
        n_wk = np.zeros((v, k))
        np.add.at(n_wk, (word_of, za), 1)
        n_k = n_wk.sum(axis=0)
        logps[i] = (gammaln(n_dk + alpha).sum()
                    + gammaln(n_wk + beta).sum()
                    - gammaln(n_k + v * beta).sum())
    logps -= logsumexp(logps)
    probs = np.exp(logps)
    marg = np.zeros((t, k))
    coin = np.zeros((t, t))
    for p, z in zip(probs, states):
        za = np.asarray(z)
        marg[np.arange(t), za] += p
        coin += p * (za[:, None] == za[None, :])
    return marg, coin


def test_gibbs_matches_enumerated_posterior():
    # Tiny corpus: 3 docs, 2 topics, 6 words, 10 tokens -> 2^10 states.
    docs = {0: [0, 1, 2, 3], 1: [2, 3, 4], 2: [0, 4, 5]}
    k, alpha, beta = 2, 1.0, 1.0
    doc_of = np.concatenate([np.full(len(v), key) for key, v in docs.items()])
    word_of = np.concatenate([np.asarray(sorted(set(v))) for v in docs.values()])
    marg, coin = enumerated_marginals(doc_of, word_of, k, 6, alpha, beta)

    t = len(doc_of)
    freq = np.zeros((t, k))
    coin_freq = np.zeros((t, t))
    burn_in = 500
    sweeps = 10000
    kept = [0]

    def on_sweep(it, z):
        if it < burn_in:
            return
        freq[np.arange(t), z] += 1
        coin_freq[:] += z[:, None] == z[None, :]
        kept[0] += 1

    fit_lda(docs, k=k, iterations=sweeps, alpha=alpha, beta=beta, seed=123,
            on_sweep=on_sweep)
    freq /= kept[0]
    coin_freq /= kept[0]
    assert np.max(np.abs(freq - marg)) < 0.05
    assert np.max(np.abs(coin_freq - coin)) < 0.05


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(2)
    docs = {d: list(rng.choice(12, size=6, replace=False)) for d in range(10)}
    return fit_lda(docs, k=3, iterations=60, alpha=0.5, beta=0.01, seed=3)


class TestProfiles:

    def test_training_profile_simplex(self, model):
        for d in range(10):
            p = profile_for(d, model)
            assert p.theta.sum() == pytest.approx(1.0, abs=1e-9)
            assert 0.0 <= p.entropy_nats <= math.log(3) + 1e-12

    def test_fold_in_unseen(self, model):
        p = profile([0, 1, 2], model, owner=77, seed=5)
        assert p is not None
        assert p.owner == 77
        assert p.theta.sum() == pytest.approx(1.0, abs=1e-9)

    def test_oov_dropped_and_counted(self, model):
        p = profile([0, 1, 999], model, seed=5)
        assert p.dropped_tokens == 1

    def test_all_oov_no_profile(self, model):
        assert profile([999, 1000], model, seed=5) is None

    def test_checkpoint_round_trip(self, model, tmp_path):
        path = tmp_path / "model.bin"
        model.save(path)
        assert path.read_bytes()[:6] == b"DLLDA1"
        back = LdaModel.load(path)
        assert back.k == model.k
        assert np.array_equal(back.n_wk, model.n_wk)
        p1 = profile([0, 1, 2], model, seed=9)
        p2 = profile([0, 1, 2], back, seed=9)
        assert np.allclose(p1.theta, p2.theta)

    def test_profile_set_csv(self, model, tmp_path):
        ps = profiles_from_model(model, range(10), "user", quantile=0.25)
        path = tmp_path / "profiles.csv"
        ps.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0].startswith("entity_id,kind,entropy,class,theta_0")
        assert len(lines) == 11

    def test_profile_set_lookup(self, model):
        ps = profiles_from_model(model, range(10), "user")
        rows = ps.row_of(np.asarray([0, 5, 99]))
        assert rows[0] >= 0 and rows[1] >= 0 and rows[2] == -1
        s = ps.alignment_with(ps.theta[0])
        assert s[rows[0]] == pytest.approx(1.0)


@given(st.integers(2, 6), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_profile_invariants_random(k, seed):
    rng = np.random.default_rng(seed)
    docs = {d: list(rng.choice(15, size=int(rng.integers(1, 8)), replace=False))
            for d in range(4)}
    model = fit_lda(docs, k=k, iterations=10, alpha=0.7, beta=0.05, seed=seed)
    for d in docs:
        theta = model.doc_theta(d)
        assert theta.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(theta >= 0)
        assert -1e-12 <= entropy_nats(theta) <= math.log(k) + 1e-9
