"""Trainable language models: per-sentence NLL plus a weighted gradient step.

Two concrete models share one duck-typed surface:

* TabularModel  - softmax over an enumerated finite sentence set (toy demos).
* NeuralNGramModel - fixed-context MLP n-gram over a vocabulary.

Both keep 64-bit parameters, expose ``forward_batch`` (per-sentence NLLs plus
a cache) and ``backward_step`` (apply the weighted-mean gradient of the
cached batch), and are deterministic given their seed. ``nll`` is safe for
concurrent reads on a fixed model; gradient application assumes a single
writer.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EncodedSentence, EOS_ID

DEFAULT_CONTEXT_SIZE = 4
DEFAULT_EMBED_DIM = 32
DEFAULT_HIDDEN_DIM = 64
INIT_SCALE = 0.05


def _as_ids(x: EncodedSentence | Sequence[int]) -> tuple[int, ...]:
    return tuple(x.ids) if isinstance(x, EncodedSentence) else tuple(x)


class TabularModel:
    """Multinomial over an enumerated set of sentences, parameterized by logits."""

    kind = "tabular"

    def __init__(self, outcomes: Sequence[Sequence[int]], logits: np.ndarray | None = None):
        self.outcomes: tuple[tuple[int, ...], ...] = tuple(tuple(o) for o in outcomes)
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ValueError("duplicate outcomes in enumeration")
        self.outcome_index = {o: i for i, o in enumerate(self.outcomes)}
        if logits is None:
            logits = np.zeros(len(self.outcomes), dtype=np.float64)
        self.logits = np.asarray(logits, dtype=np.float64).copy()
        if self.logits.shape != (len(self.outcomes),):
            raise ValueError("logits shape does not match outcome count")

    @property
    def num_params(self) -> int:
        return self.logits.size

    def probabilities(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        p = np.exp(z)
        return p / p.sum()

    def index_of(self, x: EncodedSentence | Sequence[int]) -> int:
        ids = _as_ids(x)
        if ids not in self.outcome_index:
            raise ValueError(f"sentence {ids} is not in the enumerated outcome set")
        return self.outcome_index[ids]

    def nll(self, x: EncodedSentence | Sequence[int]) -> float:
        nlls, _ = self.forward_batch([x])
        return float(nlls[0])

    def forward_batch(self, xs: Sequence[EncodedSentence | Sequence[int]]):
        idx = np.array([self.index_of(x) for x in xs], dtype=np.int64)
        m = self.logits.max()
        lse = m + np.log(np.exp(self.logits - m).sum())
        nlls = lse - self.logits[idx]
        return nlls, {"idx": idx, "batch": len(xs)}

    def _gradient(self, cache: dict, weights: np.ndarray) -> np.ndarray:
        idx, batch = cache["idx"], cache["batch"]
        softmax = self.probabilities()
        grad = (weights.sum() / batch) * softmax
        grad -= np.bincount(idx, weights=weights, minlength=self.logits.size) / batch
        return grad

    def backward_step(self, cache: dict, weights: np.ndarray, lr: float) -> None:
        self.logits -= lr * self._gradient(cache, np.asarray(weights, dtype=np.float64))

    def grad_nll_flat(self, x) -> np.ndarray:
        _, cache = self.forward_batch([x])
        return self._gradient(cache, np.ones(1))

    def params_flat(self) -> np.ndarray:
        return self.logits.copy()

    def set_params_flat(self, flat: np.ndarray) -> None:
        self.logits = np.asarray(flat, dtype=np.float64).reshape(self.logits.shape).copy()


class NeuralNGramModel:
    """MLP n-gram: embed the previous n-1 ids, one tanh layer, softmax over V.

    Sentence boundaries share the EOS symbol: the first n-1 contexts are
    padded with eos_id, and EOS is predicted at the final position, so
    exp(-nll) is a proper per-step distribution over the vocabulary.
    """

    kind = "neural-ngram"

    def __init__(
        self,
        vocab_size: int,
        context_size: int = DEFAULT_CONTEXT_SIZE,
        embed_dim: int = DEFAULT_EMBED_DIM,
        hidden_dim: int = DEFAULT_HIDDEN_DIM,
        seed: int = 0,
    ):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        self.vocab_size = vocab_size
        self.context_size = context_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.seed = seed
        rng = np.random.default_rng(seed)

        def init(*shape):
            return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

        self.embeddings = init(vocab_size, embed_dim)
        self.w_hidden = init(context_size * embed_dim, hidden_dim)
        self.b_hidden = init(hidden_dim)
        self.w_out = init(hidden_dim, vocab_size)
        self.b_out = init(vocab_size)

    @property
    def num_params(self) -> int:
        return sum(a.size for a in self._arrays())

    def _arrays(self) -> list[np.ndarray]:
        return [self.embeddings, self.w_hidden, self.b_hidden, self.w_out, self.b_out]

    def _positions(self, xs: Sequence[EncodedSentence | Sequence[int]]):
        contexts, targets, example = [], [], []
        for i, x in enumerate(xs):
            ids = _as_ids(x)
            padded = (EOS_ID,) * self.context_size + ids[:-1]
            for t, target in enumerate(ids):
                contexts.append(padded[t : t + self.context_size])
                targets.append(target)
                example.append(i)
        return (
            np.array(contexts, dtype=np.int64),
            np.array(targets, dtype=np.int64),
            np.array(example, dtype=np.int64),
        )

    def forward_batch(self, xs: Sequence[EncodedSentence | Sequence[int]]):
        ctx, tgt, ex = self._positions(xs)
        emb = self.embeddings[ctx].reshape(len(tgt), -1)
        hidden = np.tanh(emb @ self.w_hidden + self.b_hidden)
        logits = hidden @ self.w_out + self.b_out
        m = logits.max(axis=1, keepdims=True)
        shifted = logits - m
        expz = np.exp(shifted)
        norm = expz.sum(axis=1, keepdims=True)
        position_nll = np.log(norm)[:, 0] - shifted[np.arange(len(tgt)), tgt]
        nlls = np.bincount(ex, weights=position_nll, minlength=len(xs))
        cache = {
            "ctx": ctx,
            "tgt": tgt,
            "ex": ex,
            "emb": emb,
            "hidden": hidden,
            "softmax": expz / norm,
            "batch": len(xs),
        }
        return nlls, cache

    def _gradients(self, cache: dict, weights: np.ndarray):
        ctx, tgt, ex = cache["ctx"], cache["tgt"], cache["ex"]
        emb, hidden = cache["emb"], cache["hidden"]
        coeff = weights[ex] / cache["batch"]
        dlogits = cache["softmax"] * coeff[:, None]
        dlogits[np.arange(len(tgt)), tgt] -= coeff
        d_w_out = hidden.T @ dlogits
        d_b_out = dlogits.sum(axis=0)
        d_hidden = (dlogits @ self.w_out.T) * (1.0 - hidden * hidden)
        d_w_hidden = emb.T @ d_hidden
        d_b_hidden = d_hidden.sum(axis=0)
        d_emb_flat = (d_hidden @ self.w_hidden.T).reshape(-1, self.context_size, self.embed_dim)
        d_embeddings = np.zeros_like(self.embeddings)
        np.add.at(d_embeddings, ctx, d_emb_flat)
        return d_embeddings, d_w_hidden, d_b_hidden, d_w_out, d_b_out

    def backward_step(self, cache: dict, weights: np.ndarray, lr: float) -> None:
        grads = self._gradients(cache, np.asarray(weights, dtype=np.float64))
        for param, grad in zip(self._arrays(), grads):
            param -= lr * grad

    def nll(self, x: EncodedSentence | Sequence[int]) -> float:
        nlls, _ = self.forward_batch([x])
        return float(nlls[0])

    def grad_nll_flat(self, x) -> np.ndarray:
        _, cache = self.forward_batch([x])
        grads = self._gradients(cache, np.ones(1))
        return np.concatenate([g.ravel() for g in grads])

    def params_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays()])

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for a in self._arrays():
            a[...] = flat[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        if offset != flat.size:
            raise ValueError("flat parameter vector has the wrong length")


LanguageModel = TabularModel | NeuralNGramModel


def nll(model: LanguageModel, x: EncodedSentence | Sequence[int]) -> float:
    return model.nll(x)


def sgd_step(model: LanguageModel, x, weight: float, lr: float) -> LanguageModel:
    """theta <- theta - lr * weight * grad nll(x); updates the model in place."""
    if not np.isfinite(weight):
        raise ValueError("weight must be finite")
    _, cache = model.forward_batch([x])
    model.backward_step(cache, np.array([weight], dtype=np.float64), lr)
    return model


def grad_check(
    model: LanguageModel,
    x,
    epsilon: float = 1e-5,
    sample_size: int = 128,
    seed: int = 0,
) -> float:
    """Max relative error of the analytic gradient vs central finite differences.

    Checks a random subsample of at least 100 coordinates (all of them for
    small models); the error is |g_fd - g| / max(1, |g_fd|).
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must be in [1e-6, 1e-3]")
    analytic = model.grad_nll_flat(x)
    n = analytic.size
    count = n if n <= 100 else min(n, max(100, sample_size))
    rng = np.random.default_rng(seed)
    coords = np.arange(n) if count == n else rng.choice(n, size=count, replace=False)

    base = model.params_flat()
    scratch = base.copy()
    worst = 0.0
    for i in coords:
        scratch[i] = base[i] + epsilon
        model.set_params_flat(scratch)
        up = model.nll(x)
        scratch[i] = base[i] - epsilon
        model.set_params_flat(scratch)
        down = model.nll(x)
        scratch[i] = base[i]
        fd = (up - down) / (2.0 * epsilon)
        worst = max(worst, abs(fd - analytic[i]) / max(1.0, abs(fd)))
    model.set_params_flat(base)
    return worst


def save_checkpoint(model: LanguageModel, path: str | Path, vocab_hash: str = "", seed: int = 0) -> None:
    """Header line (JSON) + little-endian float64 payload; byte-stable round trip."""
    if isinstance(model, TabularModel):
        header = {
            "kind": model.kind,
            "outcomes": [list(o) for o in model.outcomes],
            "vocab_hash": vocab_hash,
            "seed": seed,
        }
    else:
        header = {
            "kind": model.kind,
            "vocab_size": model.vocab_size,
            "context_size": model.context_size,
            "embed_dim": model.embed_dim,
            "hidden_dim": model.hidden_dim,
            "vocab_hash": vocab_hash,
            "seed": seed,
        }
    payload = model.params_flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path: str | Path) -> LanguageModel:
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline].decode("utf-8"))
    params = np.frombuffer(raw[newline + 1 :], dtype="<f8").astype(np.float64)
    if header["kind"] == "tabular":
        model: LanguageModel = TabularModel(outcomes=header["outcomes"])
    elif header["kind"] == "neural-ngram":
        model = NeuralNGramModel(
            vocab_size=header["vocab_size"],
            context_size=header["context_size"],
            embed_dim=header["embed_dim"],
            hidden_dim=header["hidden_dim"],
            seed=header.get("seed", 0),
        )
    else:
        raise ValueError(f"unknown checkpoint kind: {header['kind']}")
    model.set_params_flat(params)
    return model


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
