"""Seeded synthetic bigram sub-languages for subpopulation-shift experiments.

Each language is a bigram process over a shared token alphabet: next-token
logits are Gaussian draws scaled by a concentration knob (high concentration
= peaked rows = low entropy), and sentence length follows a truncated
geometric stop rule. Distinct seeds give structurally unrelated languages.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LanguageSpec:
    vocab_size: int = 200
    seed: int = 0
    concentration: float = 2.5
    mean_length: float = 8.0
    min_length: int = 3
    max_length: int = 30


class BigramLanguage:
    """Sampling-ready bigram language over tokens w000..w{V-1}."""

    def __init__(self, spec: LanguageSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        logits = rng.normal(size=(spec.vocab_size + 1, spec.vocab_size)) * spec.concentration
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        self.transitions = probs / probs.sum(axis=1, keepdims=True)
        self.cumulative = np.cumsum(self.transitions, axis=1)
        self.stop_prob = 1.0 / max(spec.mean_length - spec.min_length, 1.0)
        self.tokens = [f"w{i:03d}" for i in range(spec.vocab_size)]

    def sample_sentence(self, rng: np.random.Generator) -> str:
        spec = self.spec
        prev = spec.vocab_size  # start-of-sentence row
        words = []
        while True:
            row = self.cumulative[prev]
            nxt = int(np.searchsorted(row, rng.random(), side="right"))
            nxt = min(nxt, spec.vocab_size - 1)
            words.append(self.tokens[nxt])
            prev = nxt
            if len(words) >= spec.max_length:
                break
            if len(words) >= spec.min_length and rng.random() < self.stop_prob:
                break
        return " ".join(words)

    def sample_corpus(self, n_sentences: int, seed: int) -> list[str]:
        rng = np.random.default_rng(seed)
        return [self.sample_sentence(rng) for _ in range(n_sentences)]


def write_corpus(path: str | Path, lines: list[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def make_corpus_file(
    path: str | Path,
    n_sentences: int,
    spec: LanguageSpec,
    sample_seed: int | None = None,
) -> None:
    """Sample a corpus from the language and write it one sentence per line."""
    language = BigramLanguage(spec)
    seed = spec.seed if sample_seed is None else sample_seed
    write_corpus(path, language.sample_corpus(n_sentences, seed=seed))
