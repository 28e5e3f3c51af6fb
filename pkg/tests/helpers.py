"""Independent oracles shared by the test modules.

Everything here recomputes expected values from first principles (gamma
functions, generic LP/NLP solvers, brute-force enumeration) without calling
the code paths under test.
"""
from __future__ import annotations

import itertools
from math import lgamma

import numpy as np
from scipy.optimize import minimize


def collapsed_joint_log(doc_topics, doc_tokens, num_topics, vocab_width, alpha, beta) -> float:
    """log p(w, z) of a full LDA assignment via the Dirichlet-multinomial form."""
    total = 0.0
    for topics_d in doc_topics:
        n_dk = np.zeros(num_topics)
        for k in topics_d:
            n_dk[k] += 1
        total += lgamma(num_topics * alpha) - lgamma(len(topics_d) + num_topics * alpha)
        total += sum(lgamma(n + alpha) - lgamma(alpha) for n in n_dk)
    n_kw = np.zeros((num_topics, vocab_width))
    n_k = np.zeros(num_topics)
    for topics_d, tokens_d in zip(doc_topics, doc_tokens):
        for k, w in zip(topics_d, tokens_d):
            n_kw[k, w] += 1
            n_k[k] += 1
    for k in range(num_topics):
        total += lgamma(vocab_width * beta) - lgamma(n_k[k] + vocab_width * beta)
        total += sum(lgamma(n + beta) - lgamma(beta) for n in n_kw[k])
    return total


def analytic_token_conditional(state, doc, pos) -> np.ndarray:
    """p(z_token = k | rest) by evaluating the collapsed joint for every k."""
    doc_tokens = [list(t) for t in state.doc_tokens]
    base = [list(t) for t in state.token_assignments]
    log_probs = []
    for k in range(state.num_topics):
        candidate = [list(row) for row in base]
        candidate[doc][pos] = k
        log_probs.append(
            collapsed_joint_log(
                candidate,
                doc_tokens,
                state.num_topics,
                state.sample_vocab_size,
                state.alpha_prior,
                state.beta_prior,
            )
        )
    log_probs = np.array(log_probs)
    probs = np.exp(log_probs - log_probs.max())
    return probs / probs.sum()


def best_permutation_accuracy(assigned, truth, num_topics) -> float:
    best = 0.0
    for perm in itertools.permutations(range(num_topics)):
        acc = sum(1 for a, t in zip(assigned, truth) if perm[a] == t) / len(truth)
        best = max(best, acc)
    return best


def kl(reference: np.ndarray, p: np.ndarray) -> float:
    mask = reference > 0
    return float(np.sum(reference[mask] * (np.log(reference[mask]) - np.log(p[mask]))))


def uncertainty_vertices_2topic(p_hat: np.ndarray, alpha: float) -> list[np.ndarray]:
    """Extreme points of {p >= 0, sum p = 1, alpha p <= p_hat} for K=2.

    The feasible set is an interval in the second topic's mass; its sup over
    any linear objective is attained at an endpoint.
    """
    cap = p_hat / alpha
    lo = max(0.0, 1.0 - cap[0])
    hi = min(1.0, cap[1])
    return [np.array([1.0 - r, r]) for r in (lo, hi)]


def toy_worst_case_objective(model_probs, conditionals, p_hat, alpha) -> float:
    """sup over the 2-topic uncertainty set of the expected per-topic KL."""
    kls = np.array([kl(conditionals[z], np.asarray(model_probs)) for z in range(2)])
    return max(float(v @ kls) for v in uncertainty_vertices_2topic(np.asarray(p_hat), alpha))


def toy_minimax_oracle(conditionals, p_hat, alpha) -> tuple[float, np.ndarray]:
    """Directly minimize the worst-case expected KL over the outcome simplex.

    Epigraph formulation solved with SLSQP from several starts; returns
    (optimal objective, argmin distribution).
    """
    conditionals = np.asarray(conditionals, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    n = conditionals.shape[1]
    vertices = uncertainty_vertices_2topic(p_hat, alpha)

    def expected_kl(x, vertex):
        kls = np.array([kl(conditionals[z], x) for z in range(2)])
        return float(vertex @ kls)

    best = (np.inf, None)
    starts = [np.full(n, 1.0 / n)]
    rng = np.random.default_rng(0)
    starts += [rng.dirichlet(np.ones(n)) for _ in range(4)]
    for x0 in starts:
        y0 = np.concatenate([x0, [1.0]])
        constraints = [{"type": "eq", "fun": lambda y: y[:n].sum() - 1.0}]
        for vertex in vertices:
            constraints.append(
                {"type": "ineq", "fun": lambda y, v=vertex: y[n] - expected_kl(y[:n], v)}
            )
        res = minimize(
            lambda y: y[n],
            y0,
            method="SLSQP",
            bounds=[(1e-9, 1.0)] * n + [(0.0, None)],
            constraints=constraints,
            options={"ftol": 1e-12, "maxiter": 500},
        )
        if res.success and res.fun < best[0]:
            x = res.x[:n] / res.x[:n].sum()
            value = max(expected_kl(x, v) for v in vertices)
            best = (value, x)
    assert best[1] is not None, "toy oracle failed to converge"
    return best


def feasible_test_distributions(p_hat, alpha, count, seed) -> list[np.ndarray]:
    """Random members of the alpha-covered polytope, built as convex mixtures
    of known-feasible points (the normalized prior and greedy-style vertex
    fills for random orderings)."""
    rng = np.random.default_rng(seed)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    k = p_hat.size
    anchors = [p_hat / p_hat.sum()]
    caps = p_hat / alpha
    for _ in range(6):
        order = rng.permutation(k)
        fill = np.zeros(k)
        remaining = 1.0
        for j in order:
            take = min(caps[j], remaining)
            fill[j] = take
            remaining -= take
            if remaining <= 0:
                break
        if remaining <= 1e-12:
            anchors.append(fill)
    out = []
    for _ in range(count):
        lam = rng.dirichlet(np.ones(len(anchors)))
        out.append(sum(l * a for l, a in zip(lam, anchors)))
    return out
