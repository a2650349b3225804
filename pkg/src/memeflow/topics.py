"""Topic profiles for users and memes: LDA fit, entropy classes, alignment.

Users and memes are modeled jointly in one topic space (a single fit over the
combined noun-bag corpus) so that user-meme alignment is a plain cosine
between distributions from the same model.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from ._common import ConfigError, DataError

CLASS_TOPICAL = 0
CLASS_MIDDLE = 1
CLASS_NONTOPICAL = 2
CLASS_LABELS = ("topical", "middle", "non-topical")
_CLASS_CODE = {label: code for code, label in enumerate(CLASS_LABELS)}

_CKPT_MAGIC = b"DLLDA1\0\0"


def entropy_nats(theta) -> float:
    """Shannon entropy of a distribution in nats, with 0*ln(0) == 0."""
    t = np.asarray(theta, dtype=np.float64)
    nz = t > 0
    return float(-np.sum(t[nz] * np.log(t[nz])))


def alignment(theta_a, theta_b) -> float:
    """Cosine similarity between two topic distributions (in [0, 1])."""
    a = np.asarray(theta_a, dtype=np.float64)
    b = np.asarray(theta_b, dtype=np.float64)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(np.dot(a, b) / denom)


@dataclass
class TopicalProfile:
    owner: int
    theta: np.ndarray
    entropy_nats: float
    topicality_class: Optional[str] = None
    dropped_tokens: int = 0


class LdaModel:
    """Final-state collapsed Gibbs model over one corpus.

    Exposes the topic-word counts needed for folding in unseen documents and
    the per-document topic counts of the training corpus.
    """

    def __init__(self, k, vocab_tokens, alpha, beta, n_wk, n_k,
                 doc_keys, doc_topic_counts, seed, iterations):
        self.k = int(k)
        self.vocab_tokens = np.asarray(vocab_tokens, dtype=np.int64)  # sorted
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.n_wk = n_wk          # (V, K) int64
        self.n_k = n_k            # (K,) int64
        self.doc_keys = doc_keys  # list, fit order
        self.doc_topic_counts = doc_topic_counts  # (D, K) int64
        self.seed = seed
        self.iterations = iterations
        self._doc_row = {key: i for i, key in enumerate(doc_keys)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab_tokens)

    def word_index(self, tokens: Iterable[int]):
        """Token ids -> vocabulary indices; out-of-vocabulary tokens -> -1."""
        t = np.asarray(list(tokens), dtype=np.int64)
        if t.size == 0:
            return t
        pos = np.searchsorted(self.vocab_tokens, t)
        pos_c = np.clip(pos, 0, self.vocab_size - 1)
        return np.where(self.vocab_tokens[pos_c] == t, pos_c, -1)

    def topic_word_dists(self) -> np.ndarray:
        """(K, V) row-normalized topic-word distributions."""
        num = self.n_wk.T + self.beta
        return num / num.sum(axis=1, keepdims=True)

    def doc_theta(self, key) -> np.ndarray:
        """Smoothed topic distribution of a training document."""
        row = self._doc_row[key]
        counts = self.doc_topic_counts[row]
        return (counts + self.alpha) / (counts.sum() + self.k * self.alpha)

    # -- checkpoint ----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<qqdd", self.k, self.vocab_size,
                                 self.alpha, self.beta))
            fh.write(self.vocab_tokens.astype("<i8").tobytes())
            fh.write(self.n_wk.astype("<i8").tobytes())
            fh.write(self.n_k.astype("<i8").tobytes())

    @classmethod
    def load(cls, path) -> "LdaModel":
        with open(path, "rb") as fh:
            if fh.read(8) != _CKPT_MAGIC:
                raise DataError(f"{path}: not a model checkpoint")
            k, v, alpha, beta = struct.unpack("<qqdd", fh.read(32))
            vocab = np.frombuffer(fh.read(8 * v), dtype="<i8").copy()
            n_wk = np.frombuffer(fh.read(8 * v * k), dtype="<i8").reshape(v, k).copy()
            n_k = np.frombuffer(fh.read(8 * k), dtype="<i8").copy()
        return cls(k, vocab, alpha, beta, n_wk, n_k, [], np.zeros((0, k), np.int64),
                   seed=None, iterations=0)


def _gibbs_pass(rng, doc_of, word_of, z, n_dk, n_wk, n_k, alpha, beta, v_beta,
                frozen_words: bool):
    """One in-place sweep over all tokens."""
    k = n_k.shape[0]
    for t in range(len(z)):
        d, w, old = doc_of[t], word_of[t], z[t]
        n_dk[d, old] -= 1
        if not frozen_words:
            n_wk[w, old] -= 1
            n_k[old] -= 1
        p = (n_dk[d] + alpha) * (n_wk[w] + beta) / (n_k + v_beta)
        cum = np.cumsum(p)
        new = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if new >= k:  # guard against fp edge at the top of the cdf
            new = k - 1
        z[t] = new
        n_dk[d, new] += 1
        if not frozen_words:
            n_wk[w, new] += 1
            n_k[new] += 1


def fit_lda(
    docs: Mapping[object, Iterable[int]],
    k: int = 100,
    iterations: int = 1000,
    alpha: Optional[float] = None,
    beta: float = 0.01,
    seed: Optional[int] = None,
    on_sweep=None,
) -> LdaModel:
    """Collapsed Gibbs sampling over token-topic assignments.

    ``docs`` maps a document key (user or meme id) to its unique tokens.  The
    sampling distribution for token w in document d is proportional to
    (n_dk + alpha) * (n_wk + beta) / (n_k + V*beta), with the token's own
    assignment removed.  The returned model is the final Gibbs state; no
    averaging across sweeps.

    ``seed`` is required: runs must be reproducible.  ``on_sweep(i, z)`` is an
    optional hook receiving the assignment vector after each sweep.
    """
    if seed is None:
        raise ConfigError("fit_lda requires an explicit seed")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    if alpha is None:
        alpha = 50.0 / k

    keys = sorted(docs.keys(), key=repr)
    if not keys:
        raise DataError("empty corpus")
    doc_tokens = []
    for key in keys:
        toks = sorted(set(docs[key]))
        if not toks:
            raise DataError(f"document {key!r} is empty")
        doc_tokens.append(toks)

    vocab = np.unique(np.concatenate([np.asarray(t, dtype=np.int64)
                                      for t in doc_tokens]))
    v = len(vocab)

    doc_of = np.concatenate([np.full(len(t), i, dtype=np.int64)
                             for i, t in enumerate(doc_tokens)])
    word_of = np.searchsorted(vocab, np.concatenate(
        [np.asarray(t, dtype=np.int64) for t in doc_tokens]))

    rng = np.random.default_rng(seed)
    n_tokens = len(doc_of)
    z = rng.integers(0, k, size=n_tokens, dtype=np.int64)
    n_dk = np.zeros((len(keys), k), dtype=np.int64)
    n_wk = np.zeros((v, k), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_wk, (word_of, z), 1)
    n_k = np.bincount(z, minlength=k).astype(np.int64)

    v_beta = v * beta
    for it in range(iterations):
        _gibbs_pass(rng, doc_of, word_of, z, n_dk, n_wk, n_k,
                    alpha, beta, v_beta, frozen_words=False)
        if on_sweep is not None:
            on_sweep(it, z)

    return LdaModel(k, vocab, alpha, beta, n_wk, n_k, keys, n_dk,
                    seed=seed, iterations=iterations)


def profile(
    tokens: Iterable[int],
    model: LdaModel,
    owner: int = -1,
    iterations: int = 50,
    seed: int = 0,
) -> Optional[TopicalProfile]:
    """Topic profile for a document under a fitted model.

    Training documents should use ``profile_for``; this folds an unseen bag
    in by Gibbs sampling against frozen topic-word counts.  Out-of-vocabulary
    tokens are dropped (and counted); a fully out-of-vocabulary document has
    no profile and returns None.
    """
    widx = model.word_index(tokens)
    dropped = int(np.sum(widx < 0))
    widx = widx[widx >= 0]
    if widx.size == 0:
        return None
    rng = np.random.default_rng(seed)
    z = rng.integers(0, model.k, size=len(widx), dtype=np.int64)
    n_dk = np.zeros((1, model.k), dtype=np.int64)
    np.add.at(n_dk, (np.zeros(len(widx), dtype=np.int64), z), 1)
    doc_of = np.zeros(len(widx), dtype=np.int64)
    v_beta = model.vocab_size * model.beta
    for _ in range(iterations):
        _gibbs_pass(rng, doc_of, widx, z, n_dk, model.n_wk, model.n_k,
                    model.alpha, model.beta, v_beta, frozen_words=True)
    counts = n_dk[0]
    theta = (counts + model.alpha) / (counts.sum() + model.k * model.alpha)
    return TopicalProfile(owner, theta, entropy_nats(theta), dropped_tokens=dropped)


def profile_for(key, model: LdaModel, owner: Optional[int] = None) -> TopicalProfile:
    """Profile of a training document from its final assignment counts."""
    theta = model.doc_theta(key)
    return TopicalProfile(owner if owner is not None else key,
                          theta, entropy_nats(theta))


def classify_topicality(entropies, quantile: float = 0.25):
    """Split one entity population into topical / middle / non-topical.

    Entropy at or below the ``quantile`` threshold is topical, at or above
    the ``1 - quantile`` threshold is non-topical; ties go to the extreme
    class (topical wins a double tie).  Populations (users, hashtag memes,
    URL memes) must be classified separately by the caller.
    """
    if not 0 < quantile <= 0.5:
        raise ConfigError(f"quantile must be in (0, 0.5]: {quantile}")
    h = np.asarray(entropies, dtype=np.float64)
    need = int(np.ceil(1.0 / quantile))
    if len(h) < need:
        raise DataError(f"need at least {need} profiles to classify at "
                        f"quantile {quantile}, got {len(h)}")
    lo = np.quantile(h, quantile)
    hi = np.quantile(h, 1.0 - quantile)
    if lo == hi:
        warnings.warn("degenerate entropy distribution: quantile thresholds "
                      "coincide; ties resolved to 'topical'")
    classes = np.full(len(h), CLASS_MIDDLE, dtype=np.uint8)
    classes[h >= hi] = CLASS_NONTOPICAL
    classes[h <= lo] = CLASS_TOPICAL  # applied last: topical wins double ties
    return classes


class ProfileSet:
    """Id-indexed bundle of profiles for one entity population."""

    def __init__(self, kind: str, ids, theta, classes=None):
        order = np.argsort(np.asarray(ids, dtype=np.int64), kind="stable")
        self.kind = kind
        self.ids = np.asarray(ids, dtype=np.int64)[order]
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError(f"duplicate ids in {kind} profile set")
        self.theta = np.asarray(theta, dtype=np.float64)[order]
        sums = self.theta.sum(axis=1)
        if len(sums) and not np.allclose(sums, 1.0, atol=1e-9):
            raise DataError(f"{kind} profiles are not normalized")
        with np.errstate(divide="ignore", invalid="ignore"):
            logt = np.where(self.theta > 0, np.log(self.theta), 0.0)
        self.entropy = -np.sum(self.theta * logt, axis=1)
        self.norms = np.linalg.norm(self.theta, axis=1)
        if classes is not None:
            self.classes = np.asarray(classes, dtype=np.uint8)[order]
        else:
            self.classes = np.full(len(self.ids), CLASS_MIDDLE, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.ids)

    def classify(self, quantile: float = 0.25) -> "ProfileSet":
        self.classes = classify_topicality(self.entropy, quantile)
        return self

    def row_of(self, ids):
        """Entity ids -> row indices; unknown ids -> -1."""
        ids = np.asarray(ids, dtype=np.int64)
        if len(self.ids) == 0:
            return np.full(ids.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self.ids, ids)
        pos_c = np.clip(pos, 0, len(self.ids) - 1)
        return np.where(self.ids[pos_c] == ids, pos_c, -1)

    def alignment_with(self, theta_other) -> np.ndarray:
        """Cosine of every profile against one distribution."""
        other = np.asarray(theta_other, dtype=np.float64)
        return (self.theta @ other) / (self.norms * np.linalg.norm(other))

    def class_label(self, row: int) -> str:
        return CLASS_LABELS[self.classes[row]]

    def ids_in_class(self, label: str) -> np.ndarray:
        return self.ids[self.classes == _CLASS_CODE[label]]

    def to_csv(self, path, id_names=None) -> None:
        k = self.theta.shape[1] if len(self) else 0
        with open(path, "w", encoding="utf-8") as fh:
            head = ",".join(f"theta_{i}" for i in range(k))
            fh.write(f"entity_id,kind,entropy,class{',' if k else ''}{head}\n")
            for i in range(len(self)):
                name = id_names(int(self.ids[i])) if id_names else str(int(self.ids[i]))
                row = ",".join(f"{x:.8g}" for x in self.theta[i])
                fh.write(f"{name},{self.kind},{self.entropy[i]:.8g},"
                         f"{CLASS_LABELS[self.classes[i]]},{row}\n")


def profiles_from_model(model: LdaModel, keys, kind: str,
                        quantile: Optional[float] = 0.25) -> ProfileSet:
    """Bundle the training-document profiles for ``keys`` into a ProfileSet."""
    ids, thetas = [], []
    for key in keys:
        ids.append(int(key))
        thetas.append(model.doc_theta(key))
    ps = ProfileSet(kind, np.asarray(ids), np.asarray(thetas))
    if quantile is not None and len(ps) >= int(np.ceil(1 / quantile)):
        ps.classify(quantile)
    return ps
