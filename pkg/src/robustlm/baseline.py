"""Per-topic bigram baselines and the baselined loss.

The baseline estimates each topic's entropy up to a constant: the training
objective only needs losses measured relative to the best model for the
topic, so any full-support estimator works. Smoothing is interpolated add-k:

    p(w | prev) = lam * (bi(prev,w) + k) / (ctx(prev) + k*V)
                + (1 - lam) * (uni(w) + k) / (total + k*V)

A begin-of-sentence context precedes the first token and EOS is predicted
like any ordinary token, so per-context conditionals sum to one over the
full vocabulary. Baselines are fit once per topic and then frozen.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import EncodedSentence

BOS_CONTEXT = -1

DEFAULT_ADD_K = 0.01
DEFAULT_LAMBDA = 0.9


@dataclass
class BigramModel:
    topic_id: int
    vocab_size: int
    add_k: float
    interpolation_lambda: float
    bigram_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    context_totals: dict[int, int] = field(default_factory=dict)
    unigram_counts: Counter = field(default_factory=Counter)
    total_tokens: int = 0

    def prob(self, next_id: int, prev_id: int) -> float:
        k, lam, v = self.add_k, self.interpolation_lambda, self.vocab_size
        big = self.bigram_counts.get((prev_id, next_id), 0)
        ctx = self.context_totals.get(prev_id, 0)
        uni = self.unigram_counts.get(next_id, 0)
        return lam * (big + k) / (ctx + k * v) + (1.0 - lam) * (uni + k) / (
            self.total_tokens + k * v
        )

    def nll(self, x: EncodedSentence) -> float:
        """Total negative log likelihood in nats, EOS position included."""
        total = 0.0
        prev = BOS_CONTEXT
        for next_id in x.ids:
            total -= math.log(self.prob(next_id, prev))
            prev = next_id
        return total


def fit_bigram(
    topic_sentences: Sequence[EncodedSentence],
    vocab_size: int,
    add_k: float = DEFAULT_ADD_K,
    interpolation_lambda: float = DEFAULT_LAMBDA,
    topic_id: int = -1,
) -> BigramModel:
    if add_k <= 0:
        raise ValueError("add_k must be > 0")
    if not 0.0 < interpolation_lambda < 1.0:
        raise ValueError("interpolation_lambda must be in (0, 1)")
    if not topic_sentences:
        raise ValueError(f"topic {topic_id} has no sentences")
    model = BigramModel(
        topic_id=topic_id,
        vocab_size=vocab_size,
        add_k=add_k,
        interpolation_lambda=interpolation_lambda,
    )
    for sentence in topic_sentences:
        prev = BOS_CONTEXT
        for next_id in sentence.ids:
            model.bigram_counts[(prev, next_id)] = model.bigram_counts.get((prev, next_id), 0) + 1
            model.context_totals[prev] = model.context_totals.get(prev, 0) + 1
            model.unigram_counts[next_id] += 1
            model.total_tokens += 1
            prev = next_id
    return model


def bigram_nll(model: BigramModel, x: EncodedSentence) -> float:
    return model.nll(x)


def baselined_loss(model_nll: float, baseline_nll: float) -> float:
    """Model loss relative to the topic baseline: model_nll - baseline_nll (nats)."""
    if not (math.isfinite(model_nll) and math.isfinite(baseline_nll)):
        raise ValueError("baselined_loss requires finite inputs")
    return model_nll - baseline_nll


def fit_topic_baselines(
    corpus: Sequence[tuple[EncodedSentence, int]],
    num_topics: int,
    vocab_size: int,
    add_k: float = DEFAULT_ADD_K,
    interpolation_lambda: float = DEFAULT_LAMBDA,
) -> dict[int, BigramModel]:
    """One frozen bigram baseline per occupied topic.

    Topics with no sentences (possible under LDA assignment) get no entry;
    the trainer checks coverage against the topics actually present.
    """
    slices: dict[int, list[EncodedSentence]] = {k: [] for k in range(num_topics)}
    for sentence, topic in corpus:
        slices[topic].append(sentence)
    return {
        k: fit_bigram(slices[k], vocab_size, add_k, interpolation_lambda, topic_id=k)
        for k in range(num_topics)
        if slices[k]
    }


def save_baseline(model: BigramModel, path: str | Path) -> None:
    payload = {
        "topic_id": model.topic_id,
        "vocab_size": model.vocab_size,
        "add_k": model.add_k,
        "interpolation_lambda": model.interpolation_lambda,
        "total_tokens": model.total_tokens,
        "unigram_counts": sorted((int(w), int(c)) for w, c in model.unigram_counts.items()),
        "bigram_counts": sorted(
            (int(p), int(n), int(c)) for (p, n), c in model.bigram_counts.items()
        ),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_baseline(path: str | Path) -> BigramModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    model = BigramModel(
        topic_id=payload["topic_id"],
        vocab_size=payload["vocab_size"],
        add_k=payload["add_k"],
        interpolation_lambda=payload["interpolation_lambda"],
        total_tokens=payload["total_tokens"],
    )
    model.unigram_counts = Counter({w: c for w, c in payload["unigram_counts"]})
    model.bigram_counts = {(p, n): c for p, n, c in payload["bigram_counts"]}
    totals: dict[int, int] = {}
    for (p, _), c in model.bigram_counts.items():
        totals[p] = totals.get(p, 0) + c
    model.context_totals = totals
    return model


def baseline_filename(topic_id: int) -> str:
    return f"baseline.topic{topic_id}"
