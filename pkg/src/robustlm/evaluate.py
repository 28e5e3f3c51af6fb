"""Perplexity reports, loss scatter tables, and the subpopulation-shift sweep.

Evaluation is read-only over immutable models; reductions run in fixed
sentence order so results are independent of any sharding. Reports and
sweep tables serialize with repr-exact floats, so reruns with identical
seeds produce byte-identical files.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baseline as baseline_mod
from . import topics as topics_mod
from .corpus import EncodedSentence, MixtureSpec, build_vocabulary, encode, mix_corpora, read_corpus
from .dro import DroConfig, train
from .models import NeuralNGramModel, checkpoint_hash, save_checkpoint

EVAL_CHUNK = 512


@dataclass(frozen=True)
class TopicStats:
    mean_nll: float
    mean_baselined_loss: float | None
    count: int


@dataclass
class EvalReport:
    corpus_name: str
    total_nll: float
    token_count: int
    perplexity: float
    unk_rate: float
    num_sentences: int
    per_topic: dict[int, TopicStats] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "corpus_name": self.corpus_name,
            "total_nll": self.total_nll,
            "token_count": self.token_count,
            "perplexity": self.perplexity,
            "unk_rate": self.unk_rate,
            "num_sentences": self.num_sentences,
            "per_topic": {
                str(k): {
                    "mean_nll": v.mean_nll,
                    "mean_baselined_loss": v.mean_baselined_loss,
                    "count": v.count,
                }
                for k, v in sorted(self.per_topic.items())
            },
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def sentence_nlls(model, corpus: Sequence[EncodedSentence]) -> np.ndarray:
    """Per-sentence NLLs in corpus order, evaluated in fixed-size chunks."""
    out = np.empty(len(corpus), dtype=np.float64)
    for start in range(0, len(corpus), EVAL_CHUNK):
        chunk = corpus[start : start + EVAL_CHUNK]
        nlls, _ = model.forward_batch(chunk)
        out[start : start + len(chunk)] = nlls
    return out


def perplexity(
    model,
    corpus: Sequence[EncodedSentence],
    topic_ids: Sequence[int] | None = None,
    baselines: dict[int, object] | None = None,
    corpus_name: str = "corpus",
) -> EvalReport:
    """exp(total NLL / total tokens); the EOS position counts as one token."""
    if not corpus:
        raise ValueError("empty corpus")
    nlls = sentence_nlls(model, corpus)
    token_count = sum(len(s.ids) for s in corpus)
    unk_count = sum(1 for s in corpus for i in s.ids if i == 0)
    total_nll = float(nlls.sum())
    report = EvalReport(
        corpus_name=corpus_name,
        total_nll=total_nll,
        token_count=token_count,
        perplexity=float(math.exp(total_nll / token_count)),
        unk_rate=unk_count / token_count,
        num_sentences=len(corpus),
    )
    if topic_ids is not None:
        topic_arr = np.asarray(topic_ids)
        for k in sorted(set(int(t) for t in topic_arr)):
            mask = topic_arr == k
            mean_baselined = None
            if baselines is not None and k in baselines:
                base = np.array(
                    [baselines[k].nll(s) for s, m in zip(corpus, mask) if m]
                )
                mean_baselined = float((nlls[mask] - base).mean())
            report.per_topic[k] = TopicStats(
                mean_nll=float(nlls[mask].mean()),
                mean_baselined_loss=mean_baselined,
                count=int(mask.sum()),
            )
    return report


@dataclass(frozen=True)
class ScatterRow:
    sentence_index: int
    source_label: str
    nll_a: float
    nll_b: float


def loss_scatter(model_a, model_b, corpus: Sequence[EncodedSentence]) -> list[ScatterRow]:
    """One (nll_a, nll_b) row per sentence, for external plotting."""
    nlls_a = sentence_nlls(model_a, corpus)
    nlls_b = sentence_nlls(model_b, corpus)
    return [
        ScatterRow(i, s.source_label or "", float(a), float(b))
        for i, (s, a, b) in enumerate(zip(corpus, nlls_a, nlls_b))
    ]


def write_scatter_csv(rows: Sequence[ScatterRow], path: str | Path) -> None:
    lines = ["sentence_index,source_label,nll_a,nll_b"]
    lines += [f"{r.sentence_index},{r.source_label},{repr(r.nll_a)},{repr(r.nll_b)}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SweepCell:
    alpha_train: float
    objective: str
    alpha: float


@dataclass(frozen=True)
class SweepRow:
    alpha_train: float
    objective: str
    alpha: float
    perplexity: float
    seed: int
    checkpoint: str


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        lines = ["alpha_train,objective,alpha,perplexity,seed,checkpoint"]
        lines += [
            f"{repr(r.alpha_train)},{r.objective},{repr(r.alpha)},{repr(r.perplexity)},{r.seed},{r.checkpoint}"
            for r in self.rows
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def find(self, alpha_train: float, objective: str, alpha: float | None = None) -> SweepRow:
        for r in self.rows:
            if (
                abs(r.alpha_train - alpha_train) < 1e-12
                and r.objective == objective
                and (alpha is None or abs(r.alpha - alpha) < 1e-12)
            ):
                return r
        raise KeyError(f"no sweep row for ({alpha_train}, {objective}, {alpha})")


def _cell_name(cell: SweepCell) -> str:
    return f"at{cell.alpha_train:g}_{cell.objective}_a{cell.alpha:g}"


def run_sweep(
    cells: Sequence[SweepCell],
    base_config: DroConfig,
    mixture: MixtureSpec,
    test_corpus: str | Path,
    out_dir: str | Path,
    *,
    top_k: int = 10_000,
    topic_mode: str = "oracle",
    lda_topics: int = 10,
    lda_iterations: int = 100,
    context_size: int = 4,
    embed_dim: int = 32,
    hidden_dim: int = 64,
) -> SweepResult:
    """Train and evaluate one model per cell; emits checkpoints and logs.

    The vocabulary is built once from both source corpora (single fixed
    joint vocabulary), mixtures are cached per alpha_train, and the test
    perplexity is measured on the held-out target corpus.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    target_sents = read_corpus(mixture.target_corpus)
    nuisance_sents = read_corpus(mixture.nuisance_corpus)
    vocab = build_vocabulary([target_sents, nuisance_sents], top_k=top_k)
    test_encoded = [encode(s, vocab) for s in read_corpus(test_corpus)]

    prepared: dict[float, tuple[list, int, dict]] = {}

    def prepare(alpha_train: float):
        if alpha_train in prepared:
            return prepared[alpha_train]
        spec = replace(mixture, alpha_train=alpha_train)
        mixed = mix_corpora(spec)
        encoded = [encode(s, vocab) for s in mixed]
        if topic_mode == "oracle":
            assignments, tag_ids = topics_mod.load_oracle_topics(
                [s.source_label or "" for s in mixed]
            )
            k = len(tag_ids)
        elif topic_mode == "lda":
            state = topics_mod.fit_lda(
                encoded,
                num_topics=lda_topics,
                iterations=lda_iterations,
                seed=base_config.seed,
                vocab_size=len(vocab),
            )
            assignments = topics_mod.assign_all_topics(state)
            k = lda_topics
        else:
            raise ValueError(f"unknown topic_mode {topic_mode!r}")
        pairs = [(enc, a.topic_id) for enc, a in zip(encoded, assignments)]
        baselines = baseline_mod.fit_topic_baselines(pairs, k, vocab_size=len(vocab))
        prepared[alpha_train] = (pairs, k, baselines)
        return prepared[alpha_train]

    result = SweepResult()
    for cell in cells:
        pairs, k, baselines = prepare(cell.alpha_train)
        config = replace(base_config, objective=cell.objective, alpha=cell.alpha)
        model = NeuralNGramModel(
            vocab_size=len(vocab),
            context_size=context_size,
            embed_dim=embed_dim,
            hidden_dim=hidden_dim,
            seed=config.seed,
        )
        needs_baselines = cell.objective == "topic-cvar"
        model, log = train(
            config, pairs, model, baselines=baselines if needs_baselines else None, num_topics=k
        )
        cell_dir = out_dir / _cell_name(cell)
        cell_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = cell_dir / "model.ckpt"
        save_checkpoint(model, ckpt_path, vocab_hash=vocab.content_hash(), seed=config.seed)
        log.to_csv(cell_dir / "train_log.csv")
        report = perplexity(model, test_encoded, corpus_name=Path(test_corpus).stem)
        report.to_json(cell_dir / "eval.json")
        result.rows.append(
            SweepRow(
                alpha_train=cell.alpha_train,
                objective=cell.objective,
                alpha=log.effective_alpha,
                perplexity=report.perplexity,
                seed=config.seed,
                checkpoint=checkpoint_hash(ckpt_path),
            )
        )
    return result


def subpopulation_sweep(
    alpha_train_grid: Sequence[float],
    objectives: Sequence[str],
    base_config: DroConfig,
    mixture: MixtureSpec,
    test_corpus: str | Path,
    out_dir: str | Path,
    **kwargs,
) -> SweepResult:
    """One cell per (alpha_train, objective); alpha follows alpha_train (floored)."""
    if not alpha_train_grid or not objectives:
        raise ValueError("alpha_train_grid and objectives must be nonempty")
    cells = [
        SweepCell(alpha_train=at, objective=obj, alpha=at)
        for at in alpha_train_grid
        for obj in objectives
    ]
    return run_sweep(cells, base_config, mixture, test_corpus, out_dir, **kwargs)
