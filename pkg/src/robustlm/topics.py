"""Latent topic assignment: collapsed-Gibbs LDA over sentences, or oracle labels.

Each sentence is one document. Reserved ids (<unk>, <eos>) carry no topical
content and are excluded from sampling. fit_lda runs single-threaded for
determinism; fitted state is safe for concurrent read-only queries.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EncodedSentence

RESERVED_IDS = 2  # <unk>, <eos> never enter topic sampling


@dataclass(frozen=True)
class TopicAssignment:
    sentence_index: int
    topic_id: int


@dataclass
class TopicModelState:
    """Count tables of a collapsed Gibbs sampler.

    topic_word_counts columns cover only the sampleable alphabet: column j
    corresponds to vocabulary id j + RESERVED_IDS.
    """

    num_topics: int
    vocab_size: int
    alpha_prior: float
    beta_prior: float
    doc_topic_counts: np.ndarray  # (D, K) int64
    topic_word_counts: np.ndarray  # (K, V - RESERVED_IDS) int64
    topic_totals: np.ndarray  # (K,) int64
    token_assignments: list[np.ndarray]  # per doc, topic id per sampled token
    doc_tokens: list[np.ndarray]  # per doc, word column per sampled token

    @property
    def num_docs(self) -> int:
        return self.doc_topic_counts.shape[0]

    @property
    def sample_vocab_size(self) -> int:
        return self.vocab_size - RESERVED_IDS


def _collapsed_conditional(state: TopicModelState, doc: int, word_col: int) -> np.ndarray:
    """p(z = k | everything else) for a removed token, up to normalization."""
    beta_total = state.beta_prior * state.sample_vocab_size
    weights = (
        (state.topic_word_counts[:, word_col] + state.beta_prior)
        / (state.topic_totals + beta_total)
        * (state.doc_topic_counts[doc] + state.alpha_prior)
    )
    return weights / weights.sum()


def _resample_token(state: TopicModelState, doc: int, pos: int, rng: np.random.Generator) -> int:
    """Remove one token, draw its topic from the collapsed conditional, reinsert."""
    word = int(state.doc_tokens[doc][pos])
    old = int(state.token_assignments[doc][pos])
    state.doc_topic_counts[doc, old] -= 1
    state.topic_word_counts[old, word] -= 1
    state.topic_totals[old] -= 1

    probs = _collapsed_conditional(state, doc, word)
    new = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    new = min(new, state.num_topics - 1)

    state.token_assignments[doc][pos] = new
    state.doc_topic_counts[doc, new] += 1
    state.topic_word_counts[new, word] += 1
    state.topic_totals[new] += 1
    return new


def fit_lda(
    corpus: Sequence[EncodedSentence],
    num_topics: int,
    alpha_prior: float = 0.1,
    beta_prior: float = 1.0,
    iterations: int = 100,
    seed: int = 0,
    vocab_size: int | None = None,
) -> TopicModelState:
    """Collapsed Gibbs sampling for the given number of full sweeps."""
    if num_topics < 1:
        raise ValueError("num_topics must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not corpus:
        raise ValueError("corpus is empty")
    if num_topics > len(corpus):
        raise ValueError("more topics than sentences")

    if vocab_size is None:
        vocab_size = max((max(s.ids) for s in corpus), default=1) + 1
    vocab_size = max(vocab_size, RESERVED_IDS + 1)
    doc_tokens = [
        np.array([i - RESERVED_IDS for i in s.ids if i >= RESERVED_IDS], dtype=np.int64)
        for s in corpus
    ]

    rng = np.random.default_rng(seed)
    state = TopicModelState(
        num_topics=num_topics,
        vocab_size=vocab_size,
        alpha_prior=alpha_prior,
        beta_prior=beta_prior,
        doc_topic_counts=np.zeros((len(corpus), num_topics), dtype=np.int64),
        topic_word_counts=np.zeros((num_topics, vocab_size - RESERVED_IDS), dtype=np.int64),
        topic_totals=np.zeros(num_topics, dtype=np.int64),
        token_assignments=[rng.integers(0, num_topics, size=len(t)) for t in doc_tokens],
        doc_tokens=doc_tokens,
    )
    for d, (tokens, topics) in enumerate(zip(doc_tokens, state.token_assignments)):
        for w, k in zip(tokens, topics):
            state.doc_topic_counts[d, k] += 1
            state.topic_word_counts[k, w] += 1
            state.topic_totals[k] += 1

    for _ in range(iterations):
        for d in range(len(corpus)):
            for pos in range(len(doc_tokens[d])):
                _resample_token(state, d, pos, rng)
    return state


def assign_topic(sentence_index: int, state: TopicModelState) -> TopicAssignment:
    """Topic with the highest posterior count; ties go to the smallest id."""
    if not 0 <= sentence_index < state.num_docs:
        raise IndexError(f"sentence_index {sentence_index} out of range")
    scores = state.doc_topic_counts[sentence_index] + state.alpha_prior
    return TopicAssignment(sentence_index=sentence_index, topic_id=int(np.argmax(scores)))


def assign_all_topics(state: TopicModelState) -> list[TopicAssignment]:
    return [assign_topic(d, state) for d in range(state.num_docs)]


def load_oracle_topics(
    labels: Sequence[str], tags: Sequence[str] | None = None
) -> tuple[list[TopicAssignment], dict[str, int]]:
    """Topic ids from ground-truth source tags.

    Returns the assignments and the tag->id map; ids index the sorted tag
    set, so K = len(map) regardless of which tags actually occur in labels.
    """
    declared = sorted(set(labels)) if tags is None else sorted(set(tags))
    tag_to_id = {t: i for i, t in enumerate(declared)}
    assignments = []
    for i, label in enumerate(labels):
        if label not in tag_to_id:
            raise ValueError(f"unknown source tag: {label!r}")
        assignments.append(TopicAssignment(sentence_index=i, topic_id=tag_to_id[label]))
    return assignments, tag_to_id


def write_assignments(path: str | Path, assignments: Sequence[TopicAssignment], num_topics: int) -> None:
    """TSV with a `#K=<K>` header line, columns sentence_index, topic_id."""
    lines = [f"#K={num_topics}"]
    lines += [f"{a.sentence_index}\t{a.topic_id}" for a in assignments]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_assignments(path: str | Path) -> tuple[list[TopicAssignment], int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#K="):
        raise ValueError(f"missing #K= header in {path}")
    num_topics = int(lines[0][3:])
    assignments = []
    for line in lines[1:]:
        if not line:
            continue
        idx, topic = line.split("\t")
        assignments.append(TopicAssignment(sentence_index=int(idx), topic_id=int(topic)))
    return assignments, num_topics
