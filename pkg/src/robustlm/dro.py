"""Worst-case topic weights and the online minimax training loop.

Training is a two-player game: the topic distribution plays best-response to
the historical per-topic losses inside the alpha-covered uncertainty set
(solved exactly by a greedy sort), while the model takes weighted online
gradient steps with example weight p_z(z)/p_hat(z).

The loop is a single logical writer over (model, TrainerState); minibatch
loss evaluation is pure and could fan out, with reductions kept in batch
order so results never depend on worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EncodedSentence

OBJECTIVES = ("mle", "topic-cvar", "topic-cvar-logloss", "sentence-cvar")
SOLVER_OBJECTIVES = ("topic-cvar", "topic-cvar-logloss")

DEFAULT_LR = 0.01
DEFAULT_BATCH_SIZE = 500
DEFAULT_EWMA_DECAY = 0.95
DEFAULT_MIN_RATIO = 0.1
DEFAULT_ALPHA_FLOOR = 0.2

MASS_TOL = 1e-9


@dataclass(frozen=True)
class WorstCaseWeights:
    """A topic distribution inside the alpha-covered uncertainty set."""

    p_z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_z", np.asarray(self.p_z, dtype=np.float64))
        if np.any(self.p_z < -MASS_TOL) or abs(self.p_z.sum() - 1.0) > MASS_TOL:
            raise ValueError("weights must be a probability vector")

    def assert_member(self, p_train_hat: np.ndarray, alpha: float, tol: float = MASS_TOL) -> None:
        if np.any(alpha * self.p_z > np.asarray(p_train_hat) + tol):
            raise AssertionError("weights leave the uncertainty set")


def worst_case_topic_distribution(
    avg_losses: Sequence[float], p_train_hat: Sequence[float], alpha: float
) -> WorstCaseWeights:
    """Maximize expected loss over {p >= 0, sum p = 1, alpha*p <= p_hat}.

    Topics are visited in decreasing average loss (ties: smaller id first)
    and each receives min(p_hat/alpha, remaining mass) until mass 1 is
    placed. This greedy is the exact LP optimum: the feasible set is a box
    intersected with the simplex, so the objective is a fractional knapsack.
    """
    losses = np.asarray(avg_losses, dtype=np.float64)
    p_hat = np.asarray(p_train_hat, dtype=np.float64)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if np.any(p_hat < 0.0):
        raise ValueError("p_train_hat must be nonnegative")
    caps = p_hat / alpha
    if caps.sum() < 1.0 - MASS_TOL:
        raise ValueError("uncertainty set empty")

    order = np.lexsort((np.arange(losses.size), -losses))
    out = np.zeros_like(losses)
    remaining = 1.0
    for k in order:
        if remaining <= 0.0:
            break
        take = min(caps[k], remaining)
        out[k] = take
        remaining -= take
    return WorstCaseWeights(p_z=out)


def brute_force_worst_case(
    avg_losses: Sequence[float], p_train_hat: Sequence[float], alpha: float
) -> WorstCaseWeights:
    """Generic-LP oracle for the worst-case weights (scipy HiGHS)."""
    from scipy.optimize import linprog

    losses = np.asarray(avg_losses, dtype=np.float64)
    p_hat = np.asarray(p_train_hat, dtype=np.float64)
    if losses.size > 12:
        raise ValueError("brute force oracle is limited to K <= 12")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    result = linprog(
        c=-losses,
        A_eq=np.ones((1, losses.size)),
        b_eq=np.array([1.0]),
        bounds=[(0.0, float(c)) for c in p_hat / alpha],
        method="highs",
    )
    if not result.success:
        raise ValueError("uncertainty set empty")
    return WorstCaseWeights(p_z=result.x)


@dataclass
class TrainerState:
    """Running EWMA losses, streaming topic prior, and the current weights."""

    num_topics: int
    alpha: float
    ewma_decay: float
    min_ratio: float
    ewma_losses: np.ndarray
    ewma_initialized: np.ndarray
    topic_counts: np.ndarray
    step: int = 0
    p_z: WorstCaseWeights | None = None
    p_train_fixed: np.ndarray | None = None

    @classmethod
    def new(
        cls,
        num_topics: int,
        alpha: float,
        ewma_decay: float = DEFAULT_EWMA_DECAY,
        min_ratio: float = DEFAULT_MIN_RATIO,
        p_train_fixed: Sequence[float] | None = None,
    ) -> "TrainerState":
        fixed = None if p_train_fixed is None else np.asarray(p_train_fixed, dtype=np.float64)
        if fixed is not None and fixed.shape != (num_topics,):
            raise ValueError("p_train_fixed must have one entry per topic")
        return cls(
            num_topics=num_topics,
            alpha=alpha,
            ewma_decay=ewma_decay,
            min_ratio=min_ratio,
            ewma_losses=np.zeros(num_topics, dtype=np.float64),
            ewma_initialized=np.zeros(num_topics, dtype=bool),
            topic_counts=np.zeros(num_topics, dtype=np.int64),
            p_train_fixed=fixed,
        )

    def p_train_hat(self) -> np.ndarray:
        """Laplace-smoothed streaming estimate, or the supplied exact prior."""
        if self.p_train_fixed is not None:
            return self.p_train_fixed
        total = self.topic_counts.sum()
        return (self.topic_counts + 1.0) / (total + self.num_topics)

    def solver_losses(self) -> np.ndarray:
        """EWMA losses with never-seen topics filled at the initialized mean."""
        if not self.ewma_initialized.any():
            return np.zeros(self.num_topics)
        losses = self.ewma_losses.copy()
        losses[~self.ewma_initialized] = losses[self.ewma_initialized].mean()
        return losses


def update_loss_history(state: TrainerState, topic: int, loss: float) -> TrainerState:
    """EWMA update of the topic's loss history; first observation seeds it."""
    if not math.isfinite(loss):
        raise ValueError(f"non-finite loss for topic {topic}")
    if not 0 <= topic < state.num_topics:
        raise IndexError(f"topic {topic} out of range")
    if state.ewma_initialized[topic]:
        decay = state.ewma_decay
        state.ewma_losses[topic] = decay * state.ewma_losses[topic] + (1.0 - decay) * loss
    else:
        state.ewma_losses[topic] = loss
        state.ewma_initialized[topic] = True
    state.topic_counts[topic] += 1
    return state


def example_weight(state: TrainerState, topic: int) -> float:
    """max(min_ratio, p_z(topic) / p_hat(topic)) for the current round."""
    if state.p_z is None:
        raise ValueError("no current worst-case weights; run the solver first")
    ratio = state.p_z.p_z[topic] / state.p_train_hat()[topic]
    return float(max(state.min_ratio, ratio))


@dataclass(frozen=True)
class DroConfig:
    objective: str
    alpha: float = 1.0
    lr: float = DEFAULT_LR
    steps: int = 1000
    batch_size: int = DEFAULT_BATCH_SIZE
    ewma_decay: float = DEFAULT_EWMA_DECAY
    min_ratio: float = DEFAULT_MIN_RATIO
    seed: int = 0
    alpha_floor: float = DEFAULT_ALPHA_FLOOR
    p_train: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.ewma_decay < 1.0:
            raise ValueError("ewma_decay must be in (0, 1)")
        if not 0.0 <= self.min_ratio <= 1.0 / self.alpha:
            raise ValueError("min_ratio must be in [0, 1/alpha]")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")

    @property
    def effective_alpha(self) -> float:
        """Requested alpha clamped at the stability floor (0 disables the floor)."""
        if self.alpha_floor > 0.0:
            return max(self.alpha, self.alpha_floor)
        return self.alpha


@dataclass(frozen=True)
class StepRecord:
    step: int
    objective: str
    ewma_losses: tuple[float, ...]
    p_z: tuple[float, ...] | None
    mean_weighted_loss: float
    lr: float


@dataclass
class TrainingLog:
    objective: str
    num_topics: int
    requested_alpha: float
    effective_alpha: float
    records: list[StepRecord] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        k = self.num_topics
        header = (
            ["step", "objective"]
            + [f"ewma_{i}" for i in range(k)]
            + [f"pz_{i}" for i in range(k)]
            + ["mean_weighted_loss", "lr"]
        )
        lines = [",".join(header)]
        for r in self.records:
            pz = r.p_z if r.p_z is not None else (float("nan"),) * k
            cells = (
                [str(r.step), r.objective]
                + [repr(v) for v in r.ewma_losses]
                + [repr(v) for v in pz]
                + [repr(r.mean_weighted_loss), repr(r.lr)]
            )
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(
    config: DroConfig,
    corpus: Sequence[tuple[EncodedSentence, int]],
    model,
    baselines: dict[int, object] | None = None,
    num_topics: int | None = None,
):
    """Run the online minimax loop and return (model, TrainingLog).

    Per minibatch (uniform with replacement, seeded): recompute the
    worst-case topic weights from the loss history, compute per-sentence
    losses (baselined for topic-cvar, raw NLL otherwise), apply one
    weighted-mean gradient step, then fold each example's loss into the
    EWMA history. mle fixes weights at 1 and skips the solver;
    sentence-cvar weights (1/alpha) * 1[loss > eta] with eta following a
    per-minibatch subgradient step of size lr.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    sentences = [s for s, _ in corpus]
    topics = np.array([t for _, t in corpus], dtype=np.int64)
    k = int(num_topics) if num_topics is not None else int(topics.max()) + 1
    if np.any(topics < 0) or np.any(topics >= k):
        raise ValueError("topic id out of range for num_topics")

    alpha_eff = config.effective_alpha if config.objective != "mle" else config.alpha
    baseline_nlls = None
    if config.objective == "topic-cvar":
        if baselines is None:
            raise ValueError("objective 'topic-cvar' requires per-topic baselines")
        for topic in np.unique(topics):
            if int(topic) not in baselines:
                raise ValueError(f"objective 'topic-cvar' requires a baseline for topic {topic}")
        baseline_nlls = np.array(
            [baselines[int(t)].nll(s) for s, t in corpus], dtype=np.float64
        )

    state = TrainerState.new(
        k,
        alpha_eff,
        ewma_decay=config.ewma_decay,
        min_ratio=config.min_ratio,
        p_train_fixed=config.p_train,
    )
    log = TrainingLog(
        objective=config.objective,
        num_topics=k,
        requested_alpha=config.alpha,
        effective_alpha=alpha_eff,
    )
    rng = np.random.default_rng(config.seed)
    use_solver = config.objective in SOLVER_OBJECTIVES
    eta: float | None = None

    for t in range(config.steps):
        idx = rng.integers(0, len(sentences), size=config.batch_size)
        batch = [sentences[i] for i in idx]
        batch_topics = topics[idx]
        nlls, cache = model.forward_batch(batch)
        if not np.all(np.isfinite(nlls)):
            raise RuntimeError(f"non-finite loss at step {t}")
        if baseline_nlls is not None:
            losses = nlls - baseline_nlls[idx]
        else:
            losses = nlls

        pz_record: tuple[float, ...] | None = None
        if use_solver:
            state.p_z = worst_case_topic_distribution(
                state.solver_losses(), state.p_train_hat(), alpha_eff
            )
            ratios = state.p_z.p_z[batch_topics] / state.p_train_hat()[batch_topics]
            weights = np.maximum(config.min_ratio, ratios)
            pz_record = tuple(state.p_z.p_z)
        elif config.objective == "mle":
            weights = np.ones(config.batch_size, dtype=np.float64)
        else:  # sentence-cvar: Rockafellar-Uryasev dual with online eta
            if eta is None:
                eta = float(losses.min()) - 1.0
            exceed = losses > eta
            weights = exceed.astype(np.float64) / alpha_eff
            eta -= config.lr * (1.0 - float(exceed.mean()) / alpha_eff)

        model.backward_step(cache, weights, config.lr)
        for topic, loss in zip(batch_topics, losses):
            update_loss_history(state, int(topic), float(loss))
        state.step = t + 1
        log.records.append(
            StepRecord(
                step=t,
                objective=config.objective,
                ewma_losses=tuple(state.ewma_losses),
                p_z=pz_record,
                mean_weighted_loss=float(np.mean(weights * losses)),
                lr=config.lr,
            )
        )
    return model, log
