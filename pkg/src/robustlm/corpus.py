"""Text ingestion: tokenization, vocabulary construction, encoding, corpus mixing.

All operations are pure functions over immutable inputs and are deterministic
given their arguments (and seed, where one is taken).
"""
from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"
UNK_ID = 0
EOS_ID = 1

MIN_SURFACE_CHARS = 10

_PUNCT_TABLE = {ord(c): f" {c} " for c in string.punctuation}


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence plus the raw surface string it came from."""

    tokens: tuple[str, ...]
    source_label: str | None = None
    surface: str = ""


@dataclass(frozen=True)
class EncodedSentence:
    """Token ids for one sentence; always ends with exactly one EOS_ID."""

    ids: tuple[int, ...]
    source_label: str | None = None

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class MixtureSpec:
    """Recipe for an alpha_train-covered training mixture of two corpora."""

    target_corpus: str
    nuisance_corpus: str
    alpha_train: float
    target_count: int
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_train <= 1.0:
            raise ValueError(f"alpha_train must be in (0, 1], got {self.alpha_train}")
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")

    @property
    def nuisance_count(self) -> int:
        return int(round(self.target_count * (1.0 - self.alpha_train) / self.alpha_train))


class Vocabulary:
    """Bidirectional token<->id map with reserved <unk>=0 and <eos>=1."""

    def __init__(self, tokens: Sequence[str]):
        if len(tokens) < 2 or tokens[0] != UNK_TOKEN or tokens[1] != EOS_TOKEN:
            raise ValueError("vocabulary must start with <unk>, <eos>")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.tokens: tuple[str, ...] = tuple(tokens)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        self.unk_id = UNK_ID
        self.eos_id = EOS_ID

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def content_hash(self) -> str:
        import hashlib

        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln != ""])


def tokenize(text: str, source_label: str | None = None) -> Sentence:
    """Lowercase, split punctuation into standalone tokens, then whitespace-split."""
    tokens = tuple(text.lower().translate(_PUNCT_TABLE).split())
    return Sentence(tokens=tokens, source_label=source_label, surface=text)


def filter_sentences(sentences: Iterable[Sentence]) -> list[Sentence]:
    """Drop sentences whose raw surface form has fewer than 10 characters."""
    return [s for s in sentences if len(s.surface) >= MIN_SURFACE_CHARS]


def build_vocabulary(corpora: Sequence[Iterable[Sentence]], top_k: int) -> Vocabulary:
    """Union of each corpus's top_k most frequent tokens, plus reserved ids.

    Ties at the frequency cutoff break lexicographically so the result is
    deterministic. Non-reserved tokens are stored in sorted order.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    union: set[str] = set()
    nonempty = False
    for corpus in corpora:
        counts: Counter[str] = Counter()
        for sentence in corpus:
            counts.update(sentence.tokens)
        if counts:
            nonempty = True
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        union.update(tok for tok, _ in ranked[:top_k])
    if not nonempty:
        raise ValueError("empty corpus set")
    union.discard(UNK_TOKEN)
    union.discard(EOS_TOKEN)
    return Vocabulary([UNK_TOKEN, EOS_TOKEN] + sorted(union))


def encode(sentence: Sentence, vocab: Vocabulary) -> EncodedSentence:
    """Map tokens to ids (out-of-vocabulary -> unk) and append one EOS."""
    ids = tuple(vocab.id_of(t) for t in sentence.tokens) + (vocab.eos_id,)
    return EncodedSentence(ids=ids, source_label=sentence.source_label)


def read_corpus(
    path: str | Path, source_label: str | None = None, apply_filter: bool = True
) -> list[Sentence]:
    """Read a one-sentence-per-line UTF-8 file, filter, and tokenize.

    The <10-character filter applies to the raw line before tokenization.
    Pass apply_filter=False for preprocessed artifacts (mixed corpora) that
    must stay line-aligned with sidecar label or topic files.
    """
    label = source_label if source_label is not None else Path(path).stem
    sentences = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not apply_filter or len(line) >= MIN_SURFACE_CHARS:
            sentences.append(tokenize(line, source_label=label))
    return sentences


def mix_corpora(spec: MixtureSpec) -> list[Sentence]:
    """Combine target and nuisance sentences per the mixture recipe.

    Takes the first target_count usable target sentences and the first
    round(target_count*(1-alpha_train)/alpha_train) nuisance ones, then
    shuffles the union deterministically by seed. Each sentence keeps its
    source corpus stem as label.
    """
    target = read_corpus(spec.target_corpus)
    nuisance_needed = spec.nuisance_count
    nuisance = read_corpus(spec.nuisance_corpus) if nuisance_needed > 0 else []
    if len(target) < spec.target_count:
        raise ValueError(
            f"corpus '{spec.target_corpus}' has {len(target)} usable sentences, "
            f"need {spec.target_count} (short by {spec.target_count - len(target)})"
        )
    if len(nuisance) < nuisance_needed:
        raise ValueError(
            f"corpus '{spec.nuisance_corpus}' has {len(nuisance)} usable sentences, "
            f"need {nuisance_needed} (short by {nuisance_needed - len(nuisance)})"
        )
    mixed = target[: spec.target_count] + nuisance[:nuisance_needed]
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(mixed))
    return [mixed[i] for i in order]


def write_mixture(out_path: str | Path, sentences: Sequence[Sentence], spec: MixtureSpec) -> None:
    """Write the mixed corpus, a sidecar .labels file, and the JSON manifest."""
    out_path = Path(out_path)
    out_path.write_text(
        "".join(" ".join(s.tokens) + "\n" for s in sentences), encoding="utf-8"
    )
    labels_path = out_path.with_suffix(out_path.suffix + ".labels")
    labels_path.write_text("".join(f"{s.source_label}\n" for s in sentences), encoding="utf-8")
    counts = Counter(s.source_label for s in sentences)
    manifest = {
        "target_corpus": str(spec.target_corpus),
        "nuisance_corpus": str(spec.nuisance_corpus),
        "alpha_train": spec.alpha_train,
        "target_count": spec.target_count,
        "nuisance_count": spec.nuisance_count,
        "seed": spec.seed,
        "result_counts": {str(k): v for k, v in sorted(counts.items())},
        "total": len(sentences),
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".mixture.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
