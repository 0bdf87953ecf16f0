"""Skip-gram negative-sampling trainer shared by the text and graph views.

Maximizes sum over (center, context) pairs of
``log sigmoid(u . v+) + sum_k log sigmoid(-u . v-_k)`` by stochastic
gradient ascent, with negatives drawn from a unigram^exponent noise
distribution over context ids.

Updates are applied in small vectorized batches; duplicate rows within a
batch accumulate their gradients against the values at batch start.  With
``workers=1`` the whole procedure is deterministic for a fixed seed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np


class SgnsDivergenceError(RuntimeError):
    """A non-finite value appeared in the embeddings during training."""


@dataclass(frozen=True)
class SgnsConfig:
    embedding_dim: int = 300
    window: int = 5
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    noise_exponent: float = 0.75
    seed: int = 0
    batch_size: int = 1024
    workers: int = 1
    inference_epochs: int = 50

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if self.negative_samples < 1:
            raise ValueError("negative_samples must be >= 1")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pair_objective(
    u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Objective and analytic gradients for a single training pair.

    Returns ``(value, grad_u, grad_v_pos, grad_v_negs)`` where the value is
    ``log s(u.v_pos) + sum_k log s(-u.v_negs[k])``.  This scalar form is the
    reference the vectorized trainer reproduces batch-wise.
    """
    s_pos = float(_sigmoid(np.array([u @ v_pos]))[0])
    dots_neg = v_negs @ u
    s_neg = _sigmoid(dots_neg)
    value = float(np.log(max(s_pos, 1e-300)) + np.sum(np.log(np.maximum(1.0 - s_neg, 1e-300))))
    g_pos = 1.0 - s_pos
    grad_u = g_pos * v_pos - s_neg @ v_negs
    grad_v_pos = g_pos * u
    grad_v_negs = -s_neg[:, None] * u[None, :]
    return value, grad_u, grad_v_pos, grad_v_negs


def noise_distribution(
    context_counts: np.ndarray, exponent: float
) -> np.ndarray:
    """Normalized unigram^exponent distribution over context ids."""
    weights = np.asarray(context_counts, dtype=np.float64) ** exponent
    total = weights.sum()
    if total <= 0:
        raise ValueError("noise distribution needs at least one observed context")
    return weights / total


def sample_negatives(
    cumulative: np.ndarray, shape: tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    return np.searchsorted(cumulative, rng.random(shape), side="right")


def _run_batches(w_in, w_out, pairs, order, cum_noise, lr_for, config, rng, start):
    k = config.negative_samples
    done = start
    for lo in range(0, len(order), config.batch_size):
        batch = order[lo : lo + config.batch_size]
        centers = pairs[batch, 0]
        contexts = pairs[batch, 1]
        negs = sample_negatives(cum_noise, (len(batch), k), rng)
        lr = lr_for(done)
        done += len(batch)

        u = w_in[centers]
        v_pos = w_out[contexts]
        v_neg = w_out[negs]
        g_pos = 1.0 - _sigmoid(np.einsum("bd,bd->b", u, v_pos))
        g_neg = -_sigmoid(np.einsum("bd,bkd->bk", u, v_neg))

        grad_u = g_pos[:, None] * v_pos + np.einsum("bk,bkd->bd", g_neg, v_neg)
        np.add.at(w_in, centers, lr * grad_u)
        np.add.at(w_out, contexts, lr * (g_pos[:, None] * u))
        np.add.at(
            w_out,
            negs.ravel(),
            lr * (g_neg[:, :, None] * u[:, None, :]).reshape(-1, w_out.shape[1]),
        )
    return done


def train_sgns(
    pairs: np.ndarray,
    vocab_size: int,
    config: SgnsConfig,
    context_size: int | None = None,
    context_counts: np.ndarray | None = None,
    epoch_callback=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Train input/output embedding matrices from (center, context) pairs.

    ``vocab_size`` sizes the input (center) matrix; ``context_size``
    defaults to it and sizes the output matrix, which lets a document
    model use document ids as centers and word ids as contexts.  The noise
    distribution comes from context frequencies within ``pairs`` unless
    ``context_counts`` overrides it.
    """
    if context_size is None:
        context_size = vocab_size
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= vocab_size:
            raise ValueError("center id out of range")
        if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= context_size:
            raise ValueError("context id out of range")

    rng = np.random.default_rng(config.seed)
    d = config.embedding_dim
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(vocab_size, d))
    w_out = np.zeros((context_size, d), dtype=np.float64)
    if len(pairs) == 0:
        return w_in, w_out

    if context_counts is None:
        context_counts = np.bincount(pairs[:, 1], minlength=context_size)
    cum_noise = np.cumsum(noise_distribution(context_counts, config.noise_exponent))
    cum_noise[-1] = 1.0

    total_updates = config.epochs * len(pairs)
    lr_span = config.learning_rate - config.min_learning_rate

    def lr_for(done: int) -> float:
        return config.learning_rate - lr_span * (done / total_updates)

    done = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        if config.workers <= 1:
            done = _run_batches(
                w_in, w_out, pairs, order, cum_noise, lr_for, config, rng, done
            )
        else:
            # Lock-free shards racing on the shared matrices; summed update
            # order is nondeterministic, acceptable only when asked for.
            shards = np.array_split(order, config.workers)
            seeds = rng.integers(0, 2**63 - 1, size=config.workers)
            threads = [
                threading.Thread(
                    target=_run_batches,
                    args=(
                        w_in, w_out, pairs, shard, cum_noise, lr_for, config,
                        np.random.default_rng(int(seed)), done,
                    ),
                )
                for shard, seed in zip(shards, seeds)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            done += len(order)
        if not (np.isfinite(w_in).all() and np.isfinite(w_out).all()):
            raise SgnsDivergenceError(
                f"non-finite embedding after epoch {epoch}: "
                f"lr={lr_for(done):.6g}, pairs={len(pairs)}"
            )
        if epoch_callback is not None:
            epoch_callback(epoch, w_in, w_out)
    return w_in, w_out


def evaluate_pairs(
    w_in: np.ndarray,
    w_out: np.ndarray,
    pairs: np.ndarray,
    negatives: np.ndarray,
) -> float:
    """Mean negative-sampling loss (negated objective) over a fixed pair set."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    u = w_in[pairs[:, 0]]
    v_pos = w_out[pairs[:, 1]]
    v_neg = w_out[negatives]
    pos_term = np.log(np.maximum(_sigmoid(np.einsum("bd,bd->b", u, v_pos)), 1e-300))
    neg_term = np.log(
        np.maximum(_sigmoid(-np.einsum("bd,bkd->bk", u, v_neg)), 1e-300)
    ).sum(axis=1)
    return float(-(pos_term + neg_term).mean())


def fit_vector(
    w_out: np.ndarray,
    context_ids: np.ndarray,
    context_counts: np.ndarray,
    config: SgnsConfig,
    seed: int,
) -> np.ndarray:
    """Fit a single new center vector against frozen output vectors.

    Used for held-out document inference: ``config.inference_epochs``
    gradient steps, each accumulating the pair objective over every given
    context id with freshly drawn negatives.
    """
    rng = np.random.default_rng(seed)
    d = config.embedding_dim
    u = rng.uniform(-0.5 / d, 0.5 / d, size=d)
    context_ids = np.asarray(context_ids, dtype=np.int64)
    if len(context_ids) == 0:
        return np.zeros(d, dtype=np.float64)
    cum_noise = np.cumsum(noise_distribution(context_counts, config.noise_exponent))
    cum_noise[-1] = 1.0
    v_pos = w_out[context_ids]
    lr_span = config.learning_rate - config.min_learning_rate
    epochs = config.inference_epochs
    for step in range(epochs):
        lr = config.learning_rate - lr_span * (step / epochs)
        v_neg = w_out[sample_negatives(cum_noise, (len(context_ids), config.negative_samples), rng)]
        g_pos = 1.0 - _sigmoid(v_pos @ u)
        g_neg = -_sigmoid(np.einsum("d,bkd->bk", u, v_neg))
        grad = g_pos @ v_pos + np.einsum("bk,bkd->d", g_neg, v_neg)
        u += (lr / len(context_ids)) * grad
    return u
