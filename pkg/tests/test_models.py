import math

import numpy as np
import pytest

from robustlm.corpus import EncodedSentence
from robustlm.models import (
    NeuralNGramModel,
    TabularModel,
    checkpoint_hash,
    grad_check,
    load_checkpoint,
    nll,
    save_checkpoint,
    sgd_step,
)

SIX_OUTCOMES = [(i, 1) for i in range(2, 8)]


def naive_neural_nll(model: NeuralNGramModel, ids: tuple[int, ...]) -> float:
    """Straight-line loop re-implementation of the forward pass."""
    padded = (1,) * model.context_size + ids[:-1]
    total = 0.0
    for t, target in enumerate(ids):
        ctx = padded[t : t + model.context_size]
        e = np.concatenate([model.embeddings[i] for i in ctx])
        h = np.tanh(e @ model.w_hidden + model.b_hidden)
        logits = h @ model.w_out + model.b_out
        z = logits - logits.max()
        total += math.log(np.exp(z).sum()) - z[target]
    return total


class TestNll:
    def test_uniform_tabular(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        for outcome in SIX_OUTCOMES:
            assert nll(model, outcome) == pytest.approx(math.log(6), abs=1e-12)

    def test_neural_zeroed_output_is_uniform(self):
        model = NeuralNGramModel(vocab_size=17, seed=0)
        model.w_out[:] = 0.0
        model.b_out[:] = 0.0
        x = EncodedSentence(ids=(3, 9, 4, 1))
        assert nll(model, x) == pytest.approx(4 * math.log(17), abs=1e-10)

    def test_neural_matches_naive_forward(self):
        model = NeuralNGramModel(vocab_size=23, seed=5)
        rng = np.random.default_rng(6)
        for _ in range(10):
            ids = tuple(int(v) for v in rng.integers(2, 23, size=rng.integers(1, 9))) + (1,)
            assert model.nll(EncodedSentence(ids=ids)) == pytest.approx(
                naive_neural_nll(model, ids), abs=1e-8
            )

    def test_tabular_unenumerated_errors(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        with pytest.raises(ValueError, match="not in the enumerated outcome set"):
            model.nll((99, 1))

    def test_batch_matches_single(self):
        model = NeuralNGramModel(vocab_size=11, seed=1)
        xs = [EncodedSentence(ids=(2, 3, 1)), EncodedSentence(ids=(4, 1)), EncodedSentence(ids=(1,))]
        batch, _ = model.forward_batch(xs)
        for x, value in zip(xs, batch):
            assert model.nll(x) == pytest.approx(float(value), abs=1e-12)


class TestSgdStep:
    def test_zero_weight_keeps_parameters(self):
        model = NeuralNGramModel(vocab_size=9, seed=2)
        before = model.params_flat()
        sgd_step(model, EncodedSentence(ids=(3, 1)), weight=0.0, lr=0.5)
        assert np.array_equal(model.params_flat(), before)

    def test_tabular_step_is_softmax_minus_onehot(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        model.logits = np.random.default_rng(3).normal(size=6)
        before = model.logits.copy()
        softmax = model.probabilities()
        lr, weight, target = 0.2, 1.7, 2
        sgd_step(model, SIX_OUTCOMES[target], weight=weight, lr=lr)
        onehot = np.zeros(6)
        onehot[target] = 1.0
        expected = before - lr * weight * (softmax - onehot)
        assert np.allclose(model.logits, expected, atol=1e-15)

    def test_mle_consistency_polyak(self):
        # 50k single-sample steps, base lr 0.1 with harmonic decay; the
        # Polyak average of the tail must match the sampling distribution
        q = np.array([0.3, 0.05, 0.25, 0.1, 0.2, 0.1])
        cumulative = np.cumsum(q)
        rng = np.random.default_rng(7)
        model = TabularModel(outcomes=SIX_OUTCOMES)
        average = np.zeros(6)
        tail = 0
        for t in range(50_000):
            i = int(np.searchsorted(cumulative, rng.random(), side="right"))
            sgd_step(model, SIX_OUTCOMES[i], weight=1.0, lr=0.1 / (1.0 + t / 5000.0))
            if t >= 25_000:
                average += model.probabilities()
                tail += 1
        average /= tail
        assert 0.5 * np.abs(average - q).sum() <= 0.01

    def test_expected_gradient_zero_at_log_q(self):
        q = np.array([0.4, 0.1, 0.2, 0.05, 0.15, 0.1])
        model = TabularModel(outcomes=SIX_OUTCOMES, logits=np.log(q))
        expected_grad = np.zeros(6)
        for i, prob in enumerate(q):
            expected_grad += prob * model.grad_nll_flat(SIX_OUTCOMES[i])
        assert np.abs(expected_grad).max() < 1e-15

    def test_normalization_after_steps(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        rng = np.random.default_rng(8)
        for _ in range(500):
            sgd_step(model, SIX_OUTCOMES[rng.integers(6)], weight=rng.uniform(0, 3), lr=0.1)
        assert model.probabilities().sum() == pytest.approx(1.0, abs=1e-12)

    def test_non_finite_weight_rejected(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        with pytest.raises(ValueError):
            sgd_step(model, SIX_OUTCOMES[0], weight=float("nan"), lr=0.1)


class TestGradCheck:
    def test_tabular(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        model.logits = np.random.default_rng(9).normal(size=6)
        assert grad_check(model, SIX_OUTCOMES[3]) < 1e-6

    def test_neural(self):
        model = NeuralNGramModel(vocab_size=31, seed=10)
        x = EncodedSentence(ids=(4, 17, 2, 30, 1))
        assert grad_check(model, x) < 1e-4

    def test_single_outcome_gradient_is_zero(self):
        model = TabularModel(outcomes=[(2, 1)])
        assert np.array_equal(model.grad_nll_flat((2, 1)), np.zeros(1))
        assert grad_check(model, (2, 1)) == 0.0

    def test_epsilon_validated(self):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        with pytest.raises(ValueError):
            grad_check(model, SIX_OUTCOMES[0], epsilon=1e-2)
        with pytest.raises(ValueError):
            grad_check(model, SIX_OUTCOMES[0], epsilon=1e-7)

    def test_parameters_restored(self):
        model = NeuralNGramModel(vocab_size=9, seed=11)
        before = model.params_flat()
        grad_check(model, EncodedSentence(ids=(2, 5, 1)))
        assert np.array_equal(model.params_flat(), before)


class TestCheckpoint:
    def test_round_trip_byte_identical(self, tmp_path):
        model = NeuralNGramModel(vocab_size=13, seed=12)
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(model, first, vocab_hash="abc", seed=12)
        reloaded = load_checkpoint(first)
        save_checkpoint(reloaded, second, vocab_hash="abc", seed=12)
        assert first.read_bytes() == second.read_bytes()
        assert checkpoint_hash(first) == checkpoint_hash(second)

    def test_tabular_round_trip(self, tmp_path):
        model = TabularModel(outcomes=SIX_OUTCOMES)
        model.logits = np.random.default_rng(13).normal(size=6)
        path = tmp_path / "tab.ckpt"
        save_checkpoint(model, path)
        reloaded = load_checkpoint(path)
        assert isinstance(reloaded, TabularModel)
        assert reloaded.outcomes == model.outcomes
        for outcome in SIX_OUTCOMES:
            assert reloaded.nll(outcome) == pytest.approx(model.nll(outcome), abs=1e-15)

    def test_neural_nll_preserved(self, tmp_path):
        model = NeuralNGramModel(vocab_size=13, seed=14)
        path = tmp_path / "n.ckpt"
        save_checkpoint(model, path)
        reloaded = load_checkpoint(path)
        x = EncodedSentence(ids=(3, 7, 1))
        assert reloaded.nll(x) == model.nll(x)
