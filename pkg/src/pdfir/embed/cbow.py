"""Continuous bag-of-words token embeddings trained with negative sampling."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..corpus import N_SPECIAL, PAD_ID, cbow_windows
from ..validation import check_choice, check_fraction, check_positive, check_positive_int
from .base import ObjectEmbedder, init_weights, object_embedding_avg, register

__all__ = ["CbowNet", "CbowEmbedder", "noise_distribution"]


def noise_distribution(counts, power: float = 0.75) -> torch.Tensor:
    """Unigram counts raised to ``power``; specials get zero mass."""
    c = torch.tensor(counts, dtype=torch.float64)
    c[:N_SPECIAL] = 0.0
    if c.sum() == 0:
        raise ValueError("vocabulary has no trainable tokens")
    return c.pow(power) / c.pow(power).sum()


def pad_batch(rows, width: int) -> torch.Tensor:
    out = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for i, r in enumerate(rows):
        out[i, :len(r)] = torch.as_tensor(r, dtype=torch.long)
    return out


class CbowNet(nn.Module):
    """Context table averaged into a hidden vector, scored against a center table."""

    def __init__(self, vocab_size: int, dim: int, dropout: float = 0.0):
        super().__init__()
        self.context = nn.Embedding(vocab_size, dim, padding_idx=PAD_ID)
        self.center = nn.Embedding(vocab_size, dim, padding_idx=PAD_ID)
        self.dropout = nn.Dropout(dropout)
        init_weights(self)

    def hidden(self, context: torch.Tensor) -> torch.Tensor:
        mask = (context != PAD_ID).to(self.context.weight.dtype)
        total = (self.context(context) * mask.unsqueeze(-1)).sum(1)
        return total / mask.sum(1, keepdim=True).clamp(min=1.0)

    def negative_sampling_loss(self, context, center, negatives) -> torch.Tensor:
        h = self.dropout(self.hidden(context))
        pos = (self.center(center) * h).sum(-1)
        neg = torch.bmm(self.center(negatives), h.unsqueeze(-1)).squeeze(-1)
        return -(F.logsigmoid(pos) + F.logsigmoid(-neg).sum(-1)).sum()

    def softmax_loss(self, context, center) -> torch.Tensor:
        h = self.dropout(self.hidden(context))
        return F.cross_entropy(h @ self.center.weight.T, center, reduction="sum")


@register
class CbowEmbedder(ObjectEmbedder):
    """CBOW word vectors; an object is the TF-IDF weighted average of its token vectors.

    Parameters
    ----------
    dim : embedding width.
    window : context tokens taken on each side of the center.
    epochs, batch_size, lr : plain SGD schedule; the loss is summed over a batch.
    neg_count : negatives per instance, drawn from the unigram^0.75 distribution.
    dropout : applied to the averaged context vector.
    objective : ``"negative"`` sampling or full ``"softmax"``.
    """

    scheme = "cbow"

    def __init__(self, dim=512, window=1, epochs=100, batch_size=64, lr=5e-4, neg_count=5,
                 dropout=0.1, objective="negative", min_freq=1, random_state=0):
        self.dim = dim
        self.window = window
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.neg_count = neg_count
        self.dropout = dropout
        self.objective = objective
        self.min_freq = min_freq
        self.random_state = random_state

    def _validate_params(self):
        check_positive_int("dim", self.dim)
        check_positive_int("window", self.window)
        check_positive_int("epochs", self.epochs, allow_zero=True)
        check_positive_int("batch_size", self.batch_size)
        check_positive("lr", self.lr, allow_zero=True)
        check_positive_int("neg_count", self.neg_count)
        check_fraction("dropout", self.dropout)
        check_choice("objective", self.objective, ("negative", "softmax"))

    def _build_module(self, **kwargs):
        return CbowNet(len(self.vocab_), self.dim, self.dropout)

    def _train(self, orgs, sentences, rng):
        instances = [w for s in sentences for w in cbow_windows(self.vocab_.encode(s), self.window)]
        history: list[float] = []
        if not instances or self.epochs == 0:
            return history
        contexts = pad_batch([c for c, _ in instances], 2 * self.window)
        centers = torch.tensor([t for _, t in instances], dtype=torch.long)
        noise = noise_distribution(self.vocab_.counts)
        opt = torch.optim.SGD(self.module_.parameters(), lr=self.lr)
        net = self.module_.train()
        for _ in range(self.epochs):
            order = torch.from_numpy(rng.permutation(len(instances)))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                if self.objective == "negative":
                    neg = torch.multinomial(noise, len(idx) * self.neg_count, replacement=True)
                    loss = net.negative_sampling_loss(contexts[idx], centers[idx], neg.view(len(idx), -1))
                else:
                    loss = net.softmax_loss(contexts[idx], centers[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item()
            history.append(total / len(instances))
        return history

    @property
    def dim_(self) -> int:
        return self.dim

    @property
    def word_vectors_(self) -> np.ndarray:
        return self.module_.context.weight.detach().double().numpy()

    def _embed_batch(self, sentences):
        wv = self.word_vectors_
        return np.stack([object_embedding_avg(wv, self.vocab_, s) for s in sentences])

    def _cloze_scores(self, ids, position):
        ctx = ids[max(0, position - self.window):position] + ids[position + 1:position + 1 + self.window]
        with torch.no_grad():
            h = self.module_.hidden(pad_batch([ctx], max(1, len(ctx))))[0]
            return (self.module_.center.weight @ h).numpy()
