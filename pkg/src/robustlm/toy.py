"""Built-in six-outcome instance comparing the four training objectives.

The training distribution is a multinomial over six single-token sentences
a..f: a,b are reviews (10% of mass), c..f are news (90%), and f is an
ungrammatical sentence with extremely low probability. Oracle topics and
exact per-topic conditionals are known in closed form, so the baselined
loss uses the true best-possible per-topic model.

The topic modes run at alpha=0.2: at that coverage the worst-case set is
wide enough that the optimal model equalizes the two per-topic KLs at
log 2 (an even news/review mixture); larger alphas pin the review weight
below 1/2 and the optimum is no longer equalized.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EncodedSentence, EOS_TOKEN, UNK_TOKEN, Vocabulary
from .dro import DroConfig, train
from .models import TabularModel

OUTCOME_TOKENS = ("a", "b", "c", "d", "e", "f")
P_TRAIN = (0.05, 0.05, 0.30, 0.30, 0.29, 0.01)
TOPIC_NAMES = ("news", "review")  # sorted tag order: news=0, review=1
OUTCOME_TOPICS = (1, 1, 0, 0, 0, 0)
CORPUS_SIZE = 2000
UNGRAMMATICAL = "f"

TOY_ALPHA = 0.2
TOY_MODES = ("mle", "topic-cvar", "topic-cvar-logloss", "sentence-cvar")


def toy_vocabulary() -> Vocabulary:
    return Vocabulary([UNK_TOKEN, EOS_TOKEN, *OUTCOME_TOKENS])


def toy_outcomes(vocab: Vocabulary | None = None) -> list[EncodedSentence]:
    vocab = vocab or toy_vocabulary()
    return [
        EncodedSentence(ids=(vocab.id_of(t), vocab.eos_id), source_label=TOPIC_NAMES[z])
        for t, z in zip(OUTCOME_TOKENS, OUTCOME_TOPICS)
    ]


def topic_conditionals() -> np.ndarray:
    """(K, 6) matrix of p(outcome | topic)."""
    p = np.asarray(P_TRAIN)
    conditionals = np.zeros((2, len(OUTCOME_TOKENS)))
    for z in range(2):
        mask = np.array([t == z for t in OUTCOME_TOPICS])
        conditionals[z, mask] = p[mask] / p[mask].sum()
    return conditionals


def toy_corpus() -> list[tuple[EncodedSentence, int]]:
    """Finite corpus realizing the training proportions exactly."""
    outcomes = toy_outcomes()
    pairs = []
    for outcome, prob, topic in zip(outcomes, P_TRAIN, OUTCOME_TOPICS):
        count = round(prob * CORPUS_SIZE)
        pairs.extend([(outcome, topic)] * count)
    assert len(pairs) == CORPUS_SIZE
    return pairs


class OutcomeBaseline:
    """Exact per-topic baseline: nll(x) = -log p(x | topic)."""

    def __init__(self, nll_by_ids: dict[tuple[int, ...], float]):
        self.nll_by_ids = dict(nll_by_ids)

    def nll(self, x: EncodedSentence) -> float:
        return self.nll_by_ids[tuple(x.ids)]


def exact_baselines() -> dict[int, OutcomeBaseline]:
    outcomes = toy_outcomes()
    conditionals = topic_conditionals()
    tables: dict[int, dict[tuple[int, ...], float]] = {0: {}, 1: {}}
    for i, (outcome, topic) in enumerate(zip(outcomes, OUTCOME_TOPICS)):
        tables[topic][tuple(outcome.ids)] = float(-np.log(conditionals[topic, i]))
    return {z: OutcomeBaseline(t) for z, t in tables.items()}


def kl_divergence(reference: np.ndarray, model_probs: np.ndarray) -> float:
    """KL(reference || model) in nats, summed over the reference support."""
    mask = reference > 0
    return float(np.sum(reference[mask] * (np.log(reference[mask]) - np.log(model_probs[mask]))))


@dataclass(frozen=True)
class ToyModeResult:
    objective: str
    distribution: tuple[float, ...]
    kl_by_topic: dict[str, float]
    p_ungrammatical: float


@dataclass
class ToyReport:
    alpha: float
    steps: int
    batch_size: int
    lr: float
    seed: int
    training_proportions: tuple[float, ...] = P_TRAIN
    modes: dict[str, ToyModeResult] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "seed": self.seed,
            "outcomes": list(OUTCOME_TOKENS),
            "topics": {t: TOPIC_NAMES[z] for t, z in zip(OUTCOME_TOKENS, OUTCOME_TOPICS)},
            "training_proportions": list(self.training_proportions),
            "modes": {
                name: {
                    "distribution": list(r.distribution),
                    "kl_by_topic": r.kl_by_topic,
                    "p_ungrammatical": r.p_ungrammatical,
                }
                for name, r in sorted(self.modes.items())
            },
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def to_csv(self, path: str | Path) -> None:
        """Tidy distribution table: mode,outcome,topic,probability."""
        lines = ["mode,outcome,topic,probability"]
        lines += [
            f"training,{t},{TOPIC_NAMES[z]},{repr(float(p))}"
            for t, z, p in zip(OUTCOME_TOKENS, OUTCOME_TOPICS, P_TRAIN)
        ]
        for name, result in sorted(self.modes.items()):
            lines += [
                f"{name},{t},{TOPIC_NAMES[z]},{repr(float(p))}"
                for t, z, p in zip(OUTCOME_TOKENS, OUTCOME_TOPICS, result.distribution)
            ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_toy(
    steps: int = 6000,
    batch_size: int = 256,
    lr: float = 0.05,
    seed: int = 0,
    alpha: float = TOY_ALPHA,
    modes: tuple[str, ...] = TOY_MODES,
) -> ToyReport:
    """Train every objective on the built-in instance with a tabular model."""
    corpus = toy_corpus()
    outcomes = toy_outcomes()
    baselines = exact_baselines()
    conditionals = topic_conditionals()
    ungrammatical_index = OUTCOME_TOKENS.index(UNGRAMMATICAL)

    report = ToyReport(alpha=alpha, steps=steps, batch_size=batch_size, lr=lr, seed=seed)
    for mode in modes:
        config = DroConfig(
            objective=mode,
            alpha=alpha,
            lr=lr,
            steps=steps,
            batch_size=batch_size,
            seed=seed,
        )
        model = TabularModel(outcomes=[o.ids for o in outcomes])
        model, _ = train(
            config,
            corpus,
            model,
            baselines=baselines if mode == "topic-cvar" else None,
            num_topics=2,
        )
        probs = model.probabilities()
        report.modes[mode] = ToyModeResult(
            objective=mode,
            distribution=tuple(float(p) for p in probs),
            kl_by_topic={
                TOPIC_NAMES[z]: kl_divergence(conditionals[z], probs) for z in range(2)
            },
            p_ungrammatical=float(probs[ungrammatical_index]),
        )
    return report
