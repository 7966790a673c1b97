"""Paragraph-vector (distributed memory) embeddings."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..corpus import PAD_ID, pvdm_contexts
from ..validation import check_choice, check_fraction, check_positive, check_positive_int
from .base import ObjectEmbedder, init_weights, object_embedding_avg, register
from .cbow import noise_distribution

__all__ = ["PvdmNet", "PvdmEmbedder"]


class PvdmNet(nn.Module):
    """Predicts a token from ``[paragraph; context_1; ...; context_C]``."""

    def __init__(self, vocab_size: int, n_docs: int, dim: int, context_size: int, dropout: float = 0.0):
        super().__init__()
        self.context_size = context_size
        self.words = nn.Embedding(vocab_size, dim, padding_idx=PAD_ID)
        self.paragraphs = nn.Embedding(max(1, n_docs), dim)
        self.output = nn.Embedding(vocab_size, dim * (1 + context_size))
        self.dropout = nn.Dropout(dropout)
        init_weights(self)

    def joint(self, paragraph: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        """``paragraph`` holds vectors (B, dim); ``context`` ids (B, C)."""
        words = self.words(context).flatten(1)
        return torch.cat([paragraph, words], dim=1)

    def negative_sampling_loss(self, docs, context, target, negatives) -> torch.Tensor:
        x = self.dropout(self.joint(self.paragraphs(docs), context))
        pos = (self.output(target) * x).sum(-1)
        neg = torch.bmm(self.output(negatives), x.unsqueeze(-1)).squeeze(-1)
        return -(F.logsigmoid(pos) + F.logsigmoid(-neg).sum(-1)).sum()

    def softmax_loss(self, docs, context, target) -> torch.Tensor:
        x = self.dropout(self.joint(self.paragraphs(docs), context))
        return F.cross_entropy(x @ self.output.weight.T, target, reduction="sum")


@register
class PvdmEmbedder(ObjectEmbedder):
    """PV-DM trained with one paragraph row per training object.

    The context of a target is the ``2 * window`` tokens before it, left-padded
    with ``[PAD]`` (whose vector is pinned at zero), so even a first token is
    predicted from the paragraph vector alone. Object vectors are TF-IDF
    averages of the learned word vectors, which also serve as the paragraph
    vector for unseen objects during cloze scoring.
    """

    scheme = "pvdm"

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

    def _module_kwargs(self, sentences):
        return {"n_docs": len(sentences)}

    def _build_module(self, n_docs=1):
        return PvdmNet(len(self.vocab_), n_docs, self.dim, 2 * self.window, self.dropout)

    def _train(self, orgs, sentences, rng):
        docs, contexts, targets = [], [], []
        for d, s in enumerate(sentences):
            for ctx, t in pvdm_contexts(self.vocab_.encode(s), self.window):
                docs.append(d)
                contexts.append(ctx)
                targets.append(t)
        history: list[float] = []
        if not targets or self.epochs == 0:
            return history
        docs_t = torch.tensor(docs, dtype=torch.long)
        ctx_t = torch.tensor(contexts, dtype=torch.long)
        tgt_t = torch.tensor(targets, dtype=torch.long)
        noise = noise_distribution(self.vocab_.counts)
        opt = torch.optim.SGD(self.module_.parameters(), lr=self.lr)
        net = self.module_.train()
        for _ in range(self.epochs):
            order = torch.from_numpy(rng.permutation(len(targets)))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                if self.objective == "negative":
                    neg = torch.multinomial(noise, len(idx) * self.neg_count, replacement=True)
                    loss = net.negative_sampling_loss(docs_t[idx], ctx_t[idx], tgt_t[idx],
                                                      neg.view(len(idx), -1))
                else:
                    loss = net.softmax_loss(docs_t[idx], ctx_t[idx], tgt_t[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item()
            history.append(total / len(targets))
        return history

    @property
    def dim_(self) -> int:
        return self.dim

    @property
    def word_vectors_(self) -> np.ndarray:
        return self.module_.words.weight.detach().double().numpy()

    def _embed_batch(self, sentences):
        wv = self.word_vectors_
        return np.stack([object_embedding_avg(wv, self.vocab_, s) for s in sentences])

    def _cloze_scores(self, ids, position):
        visible = [self.vocab_.itos[t] for i, t in enumerate(ids) if i != position]
        paragraph = object_embedding_avg(self.word_vectors_, self.vocab_, visible)
        width = 2 * self.window
        ctx = ids[max(0, position - width):position]
        ctx = [PAD_ID] * (width - len(ctx)) + ctx
        with torch.no_grad():
            p = torch.as_tensor(paragraph, dtype=self.module_.words.weight.dtype).unsqueeze(0)
            x = self.module_.joint(p, torch.tensor([ctx]))[0]
            return (self.module_.output.weight @ x).numpy()

