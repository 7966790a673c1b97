"""A small BERT encoder pre-trained with masked-token and next-object prediction."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..corpus import (
    CLS_ID,
    MASK_ID,
    MAX_POSITIONS,
    PAD_ID,
    SEP_ID,
    MlmInstance,
    mask_mlm,
    pair_input,
    sample_nop_pairs,
    sentences_from_org,
)
from ..validation import check_choice, check_fraction, check_positive, check_positive_int
from .base import ObjectEmbedder, init_weights, register

__all__ = ["PRESETS", "TinyBert", "BertEmbedder", "collate"]

PRESETS = {
    "desk": {"hidden": 64, "layers": 2, "heads": 4, "intermediate": 128},
    "full": {"hidden": 512, "layers": 8, "heads": 8, "intermediate": 307},
}


class TinyBert(nn.Module):
    """Post-norm transformer encoder with an MLM head and a two-way NOP head."""

    def __init__(self, vocab_size: int, hidden: int = 64, layers: int = 2, heads: int = 4,
                 intermediate: int = 128, max_positions: int = MAX_POSITIONS, type_vocab: int = 2,
                 dropout: float = 0.1, layer_norm_eps: float = 1e-12, tie_weights: bool = True):
        super().__init__()
        self.max_positions = max_positions
        self.tie_weights = tie_weights
        self.token = nn.Embedding(vocab_size, hidden, padding_idx=PAD_ID)
        self.position = nn.Embedding(max_positions, hidden)
        self.segment = nn.Embedding(type_vocab, hidden)
        self.embed_norm = nn.LayerNorm(hidden, eps=layer_norm_eps)
        self.embed_dropout = nn.Dropout(dropout)
        layer = nn.TransformerEncoderLayer(hidden, heads, intermediate, dropout, activation="gelu",
                                           batch_first=True, layer_norm_eps=layer_norm_eps)
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.mlm_dense = nn.Linear(hidden, hidden)
        self.mlm_norm = nn.LayerNorm(hidden, eps=layer_norm_eps)
        self.mlm_bias = nn.Parameter(torch.zeros(vocab_size))
        if not tie_weights:
            self.decoder = nn.Linear(hidden, vocab_size, bias=False)
        self.pooler = nn.Linear(hidden, hidden)
        self.nop = nn.Linear(hidden, 2)
        init_weights(self)
        for sub in self.modules():
            if isinstance(sub, nn.MultiheadAttention):
                nn.init.normal_(sub.in_proj_weight, 0.0, 0.02)
                nn.init.zeros_(sub.in_proj_bias)

    def forward(self, ids: torch.Tensor, segments: torch.Tensor | None = None) -> torch.Tensor:
        """Last hidden states, shape ``(batch, length, hidden)``; ``[PAD]`` keys are masked."""
        if ids.shape[1] > self.max_positions:
            raise ValueError(f"sequence of {ids.shape[1]} exceeds {self.max_positions} positions")
        if segments is None:
            segments = torch.zeros_like(ids)
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        x = self.token(ids) + self.position(positions) + self.segment(segments)
        x = self.embed_dropout(self.embed_norm(x))
        return self.encoder(x, src_key_padding_mask=ids == PAD_ID)

    def mlm_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        h = self.mlm_norm(F.gelu(self.mlm_dense(hidden)))
        weight = self.token.weight if self.tie_weights else self.decoder.weight
        return h @ weight.T + self.mlm_bias

    def nop_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        """Two-way logits from the first position of each sequence."""
        return self.nop(torch.tanh(self.pooler(hidden[:, 0])))

    def forward_instance(self, instance: MlmInstance):
        """(MLM logits per masked position, NOP logits, hidden states) for one instance."""
        ids = torch.tensor([instance.input_ids])
        hidden = self(ids, torch.tensor([instance.segment_ids]))
        positions = torch.tensor(instance.mask_positions, dtype=torch.long)
        return self.mlm_logits(hidden[0, positions]), self.nop_logits(hidden)[0], hidden[0]

    def joint_loss(self, ids, segments, mask_rows, mask_cols, targets, nop_labels) -> torch.Tensor:
        hidden = self(ids, segments)
        mlm = F.cross_entropy(self.mlm_logits(hidden[mask_rows, mask_cols]), targets)
        nop = F.cross_entropy(self.nop_logits(hidden), nop_labels)
        return mlm + nop


def collate(instances: Sequence[MlmInstance]):
    """Pad a batch and flatten masked positions into (row, column) index pairs."""
    width = max(len(x.input_ids) for x in instances)
    ids = torch.full((len(instances), width), PAD_ID, dtype=torch.long)
    segments = torch.zeros((len(instances), width), dtype=torch.long)
    rows, cols, targets = [], [], []
    for i, inst in enumerate(instances):
        ids[i, :len(inst.input_ids)] = torch.tensor(inst.input_ids)
        segments[i, :len(inst.segment_ids)] = torch.tensor(inst.segment_ids)
        rows += [i] * len(inst.mask_positions)
        cols += list(inst.mask_positions)
        targets += list(inst.target_ids)
    labels = torch.tensor([x.nop_label for x in instances], dtype=torch.long)
    return (ids, segments, torch.tensor(rows, dtype=torch.long), torch.tensor(cols, dtype=torch.long),
            torch.tensor(targets, dtype=torch.long), labels)


def warmup_linear(total_steps: int, warmup: float):
    warm = max(1, int(math.ceil(warmup * total_steps)))

    def factor(step: int) -> float:
        if step < warm:
            return (step + 1) / warm
        return max(0.0, (total_steps - step) / max(1, total_steps - warm))

    return factor


@register
class BertEmbedder(ObjectEmbedder):
    """TinyBert pre-trained on object pairs; an object is the ``[CLS]`` state of ``[CLS] tokens``.

    ``preset`` picks the architecture (``"desk"`` or ``"full"``); ``hidden``,
    ``layers``, ``heads`` and ``intermediate`` override single preset fields.
    Optimisation is Adam with linear warmup over the first ``warmup`` fraction
    of steps followed by linear decay, and gradient-norm clipping at ``clip``.
    """

    scheme = "bert"

    def __init__(self, preset="desk", hidden=None, layers=None, heads=None, intermediate=None,
                 dropout=0.1, epochs=100, batch_size=64, lr=1e-4, warmup=0.05, clip=1.0,
                 max_len=MAX_POSITIONS, tie_weights=True, min_freq=1, random_state=0):
        self.preset = preset
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.intermediate = intermediate
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.warmup = warmup
        self.clip = clip
        self.max_len = max_len
        self.tie_weights = tie_weights
        self.min_freq = min_freq
        self.random_state = random_state

    def architecture(self) -> dict:
        check_choice("preset", self.preset, PRESETS)
        arch = dict(PRESETS[self.preset])
        for key in arch:
            if getattr(self, key) is not None:
                arch[key] = check_positive_int(key, getattr(self, key))
        if arch["hidden"] % arch["heads"]:
            raise ValueError("hidden size must be divisible by the number of heads")
        return arch

    def _validate_params(self):
        self.architecture()
        check_fraction("dropout", self.dropout)
        check_positive_int("epochs", self.epochs, allow_zero=True)
        check_positive_int("batch_size", self.batch_size)
        check_positive("lr", self.lr, allow_zero=True)
        check_fraction("warmup", self.warmup, inclusive_one=True)
        check_positive("clip", self.clip)
        check_positive_int("max_len", self.max_len)
        if not 4 <= self.max_len <= MAX_POSITIONS:
            raise ValueError(f"max_len must lie in [4, {MAX_POSITIONS}]")

    def _build_module(self, **kwargs):
        return TinyBert(len(self.vocab_), dropout=self.dropout, tie_weights=self.tie_weights,
                        max_positions=MAX_POSITIONS, **self.architecture())

    def make_instances(self, orgs, rng: np.random.Generator) -> list[MlmInstance]:
        """One epoch of masked object pairs, two per edge, half of them true edges."""
        out = []
        for org in orgs:
            if len(org) < 2 or not org.edges:
                continue
            ids = {s.object: self.vocab_.encode(s.tokens) for s in sentences_from_org(org)}
            for a, b, label in sample_nop_pairs(org, rng):
                seq, seg = pair_input(ids[a], ids[b], self.max_len)
                out.append(mask_mlm(seq, rng, len(self.vocab_), seg, label))
        return out

    def _train(self, orgs, sentences, rng):
        history: list[float] = []
        if self.epochs == 0:
            return history
        n_pairs = sum(2 * len(o.edges) for o in orgs if len(o) >= 2)
        if n_pairs == 0:
            return history
        steps_per_epoch = math.ceil(n_pairs / self.batch_size)
        net = self.module_.train()
        opt = torch.optim.Adam(net.parameters(), lr=self.lr)
        sched = torch.optim.lr_scheduler.LambdaLR(opt, warmup_linear(steps_per_epoch * self.epochs, self.warmup))
        for _ in range(self.epochs):
            instances = self.make_instances(orgs, rng)
            order = rng.permutation(len(instances))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                batch = [instances[i] for i in order[start:start + self.batch_size]]
                loss = net.joint_loss(*collate(batch))
                opt.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(net.parameters(), self.clip)
                opt.step()
                sched.step()
                total += loss.item() * len(batch)
            history.append(total / len(instances))
        return history

    @property
    def dim_(self) -> int:
        return self.architecture()["hidden"]

    def _single(self, tokens: Sequence[str], sep: bool = False) -> list[int]:
        ids = self.vocab_.encode(tokens)[: self.max_len - 2]
        return [CLS_ID] + ids + ([SEP_ID] if sep else [])

    def _embed_batch(self, sentences):
        out = []
        net = self.module_.eval()
        with torch.no_grad():
            for start in range(0, len(sentences), 64):
                chunk = [self._single(s) for s in sentences[start:start + 64]]
                width = max(len(c) for c in chunk)
                ids = torch.tensor([c + [PAD_ID] * (width - len(c)) for c in chunk])
                out.append(net(ids)[:, 0].double().numpy())
        return np.concatenate(out)

    def _cloze_scores(self, ids, position):
        seq = [CLS_ID] + list(ids) + [SEP_ID]
        seq = seq[: self.max_len]
        seq[position + 1] = MASK_ID
        with torch.no_grad():
            hidden = self.module_.eval()(torch.tensor([seq]))
            return self.module_.mlm_logits(hidden[0, position + 1]).numpy()

    def nop_proba(self, a: Sequence[str], b: Sequence[str]) -> float:
        """Probability that object ``a`` references object ``b``."""
        self._check_fitted()
        seq, seg = pair_input(self.vocab_.encode(a), self.vocab_.encode(b), self.max_len)
        with torch.no_grad():
            hidden = self.module_.eval()(torch.tensor([seq]), torch.tensor([seg]))
            return float(torch.softmax(self.module_.nop_logits(hidden), -1)[0, 1])
