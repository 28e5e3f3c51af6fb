"""Topic-robust language modeling.

Trains language models that stay usable under subpopulation shift by
minimizing the worst-case loss over topic mixtures that sufficiently
overlap the training distribution, using per-topic baselined losses and an
online minimax loop.
"""

from .baseline import BigramModel, baselined_loss, bigram_nll, fit_bigram, fit_topic_baselines
from .corpus import (
    EncodedSentence,
    MixtureSpec,
    Sentence,
    Vocabulary,
    build_vocabulary,
    encode,
    filter_sentences,
    mix_corpora,
    tokenize,
)
from .dro import (
    DroConfig,
    TrainerState,
    TrainingLog,
    WorstCaseWeights,
    brute_force_worst_case,
    example_weight,
    train,
    update_loss_history,
    worst_case_topic_distribution,
)
from .evaluate import EvalReport, SweepResult, loss_scatter, perplexity, subpopulation_sweep
from .models import (
    NeuralNGramModel,
    TabularModel,
    grad_check,
    load_checkpoint,
    nll,
    save_checkpoint,
    sgd_step,
)
from .topics import TopicAssignment, TopicModelState, assign_topic, fit_lda, load_oracle_topics
from .toy import ToyReport, run_toy

__version__ = "0.1.0"

__all__ = [
    "BigramModel",
    "DroConfig",
    "EncodedSentence",
    "EvalReport",
    "MixtureSpec",
    "NeuralNGramModel",
    "Sentence",
    "SweepResult",
    "TabularModel",
    "TopicAssignment",
    "TopicModelState",
    "ToyReport",
    "TrainerState",
    "TrainingLog",
    "Vocabulary",
    "WorstCaseWeights",
    "baselined_loss",
    "bigram_nll",
    "brute_force_worst_case",
    "build_vocabulary",
    "encode",
    "example_weight",
    "filter_sentences",
    "fit_bigram",
    "fit_lda",
    "fit_topic_baselines",
    "grad_check",
    "load_checkpoint",
    "load_oracle_topics",
    "loss_scatter",
    "mix_corpora",
    "nll",
    "perplexity",
    "run_toy",
    "save_checkpoint",
    "sgd_step",
    "subpopulation_sweep",
    "tokenize",
    "train",
    "update_loss_history",
    "worst_case_topic_distribution",
    "assign_topic",
]
