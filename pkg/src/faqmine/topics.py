"""Topic mining over whole-conversation documents.

All entries of one conversation are merged into a single document. A
collapsed Gibbs sampler fits per-topic word distributions (phi) and
per-document topic distributions (theta); the Dirichlet priors are
re-estimated during sampling by fixed-point updates, asymmetric over topics
and symmetric over words.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import psi

from . import _sampler
from .preprocess import ConversationViews

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 1000
DEFAULT_BURN_IN = 200
DEFAULT_OPTIMIZE_EVERY = 50
DEFAULT_BETA = 0.01
PRIOR_FLOOR = 1e-10


@dataclass
class Vocabulary:
    id_of: dict[str, int]
    token_of: list[str]

    @property
    def size(self) -> int:
        return len(self.token_of)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        token_of = sorted(set(tokens))
        return cls({t: i for i, t in enumerate(token_of)}, token_of)


@dataclass
class LdaCorpus:
    """Documents as dense token-id sequences; one document per conversation."""

    vocabulary: Vocabulary
    docs: list[tuple[str, np.ndarray]]
    excluded: list[str] = field(default_factory=list)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.docs]

    @property
    def total_tokens(self) -> int:
        return sum(len(ids) for _, ids in self.docs)


@dataclass
class LdaModel:
    n_topics: int
    phi: np.ndarray  # (K, V) per-topic word probabilities
    theta: np.ndarray  # (M, K) per-document topic probabilities
    alpha: np.ndarray  # (K,) document-topic prior
    beta: float  # symmetric topic-word prior
    assignments: np.ndarray  # final topic of every token, flattened in doc order
    doc_ids: list[str]
    vocabulary: Vocabulary
    seed: int
    iterations: int
    ll_trace: list[float] = field(default_factory=list)


@dataclass
class TopicAssociation:
    """Document-topic links whose theta clears the association threshold."""

    by_topic: dict[int, list[tuple[str, float]]]
    discarded: list[str]
    threshold: float


def build_lda_corpus(views: list[ConversationViews]) -> tuple[Vocabulary, LdaCorpus]:
    """Concatenate each conversation's mining tokens into one document.

    Conversations with no tokens at all are excluded from the documents but
    recorded, so downstream accounting can still see them.
    """
    all_tokens: set[str] = set()
    merged: list[tuple[str, list[str]]] = []
    excluded: list[str] = []
    for conv in views:
        tokens: list[str] = []
        for entry in conv.entries:
            tokens.extend(entry.tokens)
        if tokens:
            merged.append((conv.conv_id, tokens))
            all_tokens.update(tokens)
        else:
            excluded.append(conv.conv_id)
    if not merged:
        raise ValueError("nothing to mine: corpus has no tokens")
    vocab = Vocabulary.from_tokens(all_tokens)
    docs = [
        (conv_id, np.array([vocab.id_of[t] for t in tokens], dtype=np.int32))
        for conv_id, tokens in merged
    ]
    return vocab, LdaCorpus(vocabulary=vocab, docs=docs, excluded=excluded)


def _flatten(corpus: LdaCorpus) -> tuple[np.ndarray, np.ndarray]:
    token_doc = np.concatenate(
        [np.full(len(ids), j, dtype=np.int32) for j, (_, ids) in enumerate(corpus.docs)]
    )
    token_word = np.concatenate([ids for _, ids in corpus.docs])
    return token_doc, token_word


def _token_log_likelihood(
    token_doc: np.ndarray,
    token_word: np.ndarray,
    theta: np.ndarray,
    phi: np.ndarray,
) -> float:
    per_token = np.einsum("tk,tk->t", theta[token_doc], phi[:, token_word].T)
    return float(np.log(per_token).sum())


def _point_estimates(
    n_jk: np.ndarray,
    n_kw: np.ndarray,
    n_k: np.ndarray,
    doc_lens: np.ndarray,
    alpha: np.ndarray,
    beta: float,
) -> tuple[np.ndarray, np.ndarray]:
    V = n_kw.shape[1]
    phi = (n_kw + beta) / (n_k + V * beta)[:, None]
    theta = (n_jk + alpha) / (doc_lens + alpha.sum())[:, None]
    return phi, theta


def _update_alpha(
    n_jk: np.ndarray, doc_lens: np.ndarray, alpha: np.ndarray, iterations: int = 50
) -> np.ndarray:
    """Fixed-point re-estimation of the asymmetric document-topic prior."""
    a = alpha.copy()
    M = n_jk.shape[0]
    for _ in range(iterations):
        total = a.sum()
        numer = psi(n_jk + a).sum(axis=0) - M * psi(a)
        denom = (psi(doc_lens + total) - psi(total)).sum()
        if not np.isfinite(denom) or denom <= 0.0:
            log.warning("document-topic prior update diverged; keeping previous value")
            return alpha
        new = a * numer / denom
        if not np.all(np.isfinite(new)):
            log.warning("document-topic prior update not finite; keeping previous value")
            return alpha
        new = np.maximum(new, PRIOR_FLOOR)
        delta = float(np.abs(new - a).max())
        a = new
        if delta < 1e-8:
            break
    return a


def _update_beta(
    n_kw: np.ndarray, n_k: np.ndarray, beta: float, iterations: int = 50
) -> float:
    """Fixed-point re-estimation of the symmetric topic-word prior."""
    K, V = n_kw.shape
    b = beta
    for _ in range(iterations):
        numer = float(psi(n_kw + b).sum() - K * V * psi(b))
        denom = float(V * (psi(n_k + V * b).sum() - K * psi(V * b)))
        if not np.isfinite(denom) or denom <= 0.0:
            log.warning("topic-word prior update diverged; keeping previous value")
            return beta
        new = b * numer / denom
        if not np.isfinite(new) or new <= 0.0:
            log.warning("topic-word prior update not finite; keeping previous value")
            return beta
        new = max(new, PRIOR_FLOOR)
        delta = abs(new - b)
        b = new
        if delta < 1e-10:
            break
    return b


def _check_counts(
    n_jk: np.ndarray, n_kw: np.ndarray, n_k: np.ndarray, doc_lens: np.ndarray
) -> None:
    if not np.array_equal(n_jk.sum(axis=1), doc_lens):
        raise AssertionError("document-topic counts out of sync with document lengths")
    if not np.array_equal(n_kw.sum(axis=1), n_k):
        raise AssertionError("topic-word counts out of sync with topic totals")
    if n_jk.min() < 0 or n_kw.min() < 0:
        raise AssertionError("negative count after sweep")


def fit(
    corpus: LdaCorpus,
    n_topics: int,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    optimize_every: int = DEFAULT_OPTIMIZE_EVERY,
    burn_in: int = DEFAULT_BURN_IN,
    initial_alpha: float | None = None,
    initial_beta: float = DEFAULT_BETA,
    check_invariants: bool = False,
) -> LdaModel:
    """Fit the topic model by collapsed Gibbs sampling.

    Deterministic in (corpus, n_topics, iterations, seed, optimize_every,
    burn_in, priors). Prior optimization starts after ``burn_in`` sweeps and
    repeats every ``optimize_every`` sweeps; pass ``optimize_every=0`` to
    keep the priors fixed. Point estimates are read from the final sample.
    """
    if n_topics < 1:
        raise ValueError("n_topics must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not corpus.docs:
        raise ValueError("nothing to mine: corpus has no documents")
    total_tokens = corpus.total_tokens
    if n_topics > total_tokens:
        raise ValueError(
            f"n_topics={n_topics} exceeds the corpus size of {total_tokens} tokens"
        )

    token_doc, token_word = _flatten(corpus)
    M = corpus.n_docs
    V = corpus.vocabulary.size
    doc_lens = np.array([len(ids) for _, ids in corpus.docs], dtype=np.int64)

    alpha0 = (50.0 / n_topics) if initial_alpha is None else initial_alpha
    alpha = np.full(n_topics, alpha0, dtype=np.float64)
    beta = float(initial_beta)

    z = np.empty(total_tokens, dtype=np.int32)
    n_jk = np.zeros((M, n_topics), dtype=np.int32)
    n_kw = np.zeros((n_topics, V), dtype=np.int32)
    n_k = np.zeros(n_topics, dtype=np.int32)
    state = _sampler.seed_state(seed)
    _sampler.init_assignments(token_doc, token_word, n_topics, z, n_jk, n_kw, n_k, state)

    ll_trace: list[float] = []
    for sweep_no in range(1, iterations + 1):
        _sampler.gibbs_sweep(token_doc, token_word, z, n_jk, n_kw, n_k, alpha, beta, state)
        if check_invariants:
            _check_counts(n_jk, n_kw, n_k, doc_lens)
        phi, theta = _point_estimates(n_jk, n_kw, n_k, doc_lens, alpha, beta)
        ll_trace.append(_token_log_likelihood(token_doc, token_word, theta, phi))
        if (
            optimize_every
            and sweep_no > burn_in
            and (sweep_no - burn_in) % optimize_every == 0
        ):
            alpha = _update_alpha(n_jk, doc_lens, alpha)
            beta = _update_beta(n_kw, n_k, beta)

    phi, theta = _point_estimates(n_jk, n_kw, n_k, doc_lens, alpha, beta)
    return LdaModel(
        n_topics=n_topics,
        phi=phi,
        theta=theta,
        alpha=alpha,
        beta=beta,
        assignments=z,
        doc_ids=corpus.doc_ids,
        vocabulary=corpus.vocabulary,
        seed=seed,
        iterations=iterations,
        ll_trace=ll_trace,
    )


def log_likelihood(model: LdaModel, corpus: LdaCorpus) -> float:
    """Total token log-likelihood of the corpus under the model's point estimates."""
    if corpus.doc_ids != model.doc_ids:
        raise ValueError("corpus documents do not match the model's documents")
    token_doc, token_word = _flatten(corpus)
    return _token_log_likelihood(token_doc, token_word, model.theta, model.phi)


def top_words(model: LdaModel, topic_id: int, n: int) -> list[tuple[str, float]]:
    """The ``n`` most probable words of a topic, ties broken lexicographically."""
    probs = model.phi[topic_id]
    order = sorted(
        range(len(probs)), key=lambda w: (-probs[w], model.vocabulary.token_of[w])
    )
    return [(model.vocabulary.token_of[w], float(probs[w])) for w in order[:n]]


def associate(model: LdaModel, threshold: float = 0.25) -> TopicAssociation:
    """Link documents to every topic whose theta is at least ``threshold``.

    Documents clearing the threshold for no topic are discarded outright.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("association threshold must lie in (0, 1]")
    by_topic: dict[int, list[tuple[str, float]]] = {k: [] for k in range(model.n_topics)}
    discarded: list[str] = []
    for j, doc_id in enumerate(model.doc_ids):
        kept = False
        for k in range(model.n_topics):
            weight = float(model.theta[j, k])
            if weight >= threshold:
                by_topic[k].append((doc_id, weight))
                kept = True
        if not kept:
            discarded.append(doc_id)
    return TopicAssociation(by_topic=by_topic, discarded=discarded, threshold=threshold)


# ---------------------------------------------------------------------------
# model JSON
# ---------------------------------------------------------------------------

MODEL_FORMAT = "faqmine-model/1"


def model_to_dict(model: LdaModel, provenance: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "n_topics": model.n_topics,
        "alpha": [float(a) for a in model.alpha],
        "beta": float(model.beta),
        "seed": model.seed,
        "iterations": model.iterations,
        "vocabulary": model.vocabulary.token_of,
        "doc_ids": model.doc_ids,
        "phi": [[float(x) for x in row] for row in model.phi],
        "theta": [[float(x) for x in row] for row in model.theta],
        "ll_trace": [float(x) for x in model.ll_trace],
        "provenance": provenance or {},
    }


def save_model(model: LdaModel, path: str | Path, provenance: dict | None = None) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model, provenance), ensure_ascii=False), encoding="utf-8"
    )


def load_model(path: str | Path) -> LdaModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format: {payload.get('format')!r}")
    token_of = list(payload["vocabulary"])
    vocab = Vocabulary({t: i for i, t in enumerate(token_of)}, token_of)
    return LdaModel(
        n_topics=int(payload["n_topics"]),
        phi=np.array(payload["phi"], dtype=np.float64),
        theta=np.array(payload["theta"], dtype=np.float64),
        alpha=np.array(payload["alpha"], dtype=np.float64),
        beta=float(payload["beta"]),
        assignments=np.empty(0, dtype=np.int32),
        doc_ids=list(payload["doc_ids"]),
        vocabulary=vocab,
        seed=int(payload["seed"]),
        iterations=int(payload["iterations"]),
        ll_trace=[float(x) for x in payload.get("ll_trace", [])],
    )
