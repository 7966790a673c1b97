"""Tokens, vocabularies, TF-IDF weights and self-supervised training instances.

An object is a sentence and each of its IR entries a word. A word is the
attribute path (leading slash dropped) joined to the value type, so values
never reach the embedding models.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ir import IrEntry, IrProgram
from .org import Org
from .parser import ObjectId

logger = logging.getLogger(__name__)

__all__ = [
    "PAD", "UNK", "CLS", "SEP", "MASK", "SPECIALS", "N_SPECIAL",
    "Sentence", "Vocab", "MlmInstance",
    "tokenize", "sentences_from_org", "sentences_from_program", "build_vocab", "tfidf",
    "cbow_windows", "pvdm_contexts", "sample_nop_pairs", "mask_mlm", "pair_input",
    "split_corpus", "mask_count", "write_encoded", "read_encoded",
]

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
N_SPECIAL = len(SPECIALS)
MAX_POSITIONS = 512


def tokenize(entry: IrEntry) -> str:
    attribute = entry.attribute.removeprefix("/")
    return f"{attribute}_{entry.vtype.value}" if attribute else entry.vtype.value


@dataclass(frozen=True)
class Sentence:
    object: ObjectId
    tokens: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)


def sentences_from_program(program: IrProgram) -> list[Sentence]:
    return [Sentence(oid, tuple(tokenize(e) for e in entries)) for oid, entries in program.entries.items()]


def sentences_from_org(org: Org) -> list[Sentence]:
    """One sentence per node, including empty ones for dangling targets."""
    return [Sentence(oid, tuple(tokenize(e) for e in entries)) for oid, entries in org.nodes]


# ---------------------------------------------------------------------------
# vocabulary


@dataclass(frozen=True)
class Vocab:
    """Token ids: specials first, then by descending frequency, ties lexicographic."""

    itos: tuple[str, ...]
    counts: tuple[int, ...]
    df: tuple[int, ...]
    n_sentences: int
    stoi: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.itos[:N_SPECIAL]) != SPECIALS:
            raise ValueError("vocabulary must start with the five special tokens")
        if not len(self.itos) == len(self.counts) == len(self.df):
            raise ValueError("itos, counts and df must have equal length")
        object.__setattr__(self, "stoi", {t: i for i, t in enumerate(self.itos)})

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def idf(self, token_id: int) -> float:
        return math.log((1 + self.n_sentences) / (1 + self.df[token_id])) + 1.0

    def digest(self) -> str:
        h = hashlib.sha256()
        for token, count, df in zip(self.itos, self.counts, self.df):
            h.update(f"{token}\t{count}\t{df}\n".encode())
        h.update(str(self.n_sentences).encode())
        return h.hexdigest()

    def to_text(self) -> str:
        """One token per line in id order; the first five lines are the specials."""
        return "".join(t + "\n" for t in self.itos)

    @classmethod
    def from_text(cls, text: str, counts=None, df=None, n_sentences: int = 0) -> "Vocab":
        itos = tuple(text.splitlines())
        zeros = (0,) * len(itos)
        return cls(itos, tuple(counts) if counts is not None else zeros,
                   tuple(df) if df is not None else zeros, n_sentences)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def build_vocab(sentences: Sequence[Sentence] | Sequence[Sequence[str]], min_freq: int = 1) -> Vocab:
    token_lists = [s.tokens if isinstance(s, Sentence) else tuple(s) for s in sentences]
    if not token_lists:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be at least 1")
    counts = Counter(t for tokens in token_lists for t in tokens)
    df = Counter(t for tokens in token_lists for t in set(tokens))
    for s in SPECIALS:
        counts.pop(s, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    itos = SPECIALS + tuple(kept)
    return Vocab(
        itos,
        (0,) * N_SPECIAL + tuple(counts[t] for t in kept),
        (0,) * N_SPECIAL + tuple(df[t] for t in kept),
        len(token_lists),
    )


def tfidf(tokens: Sequence[str], vocab: Vocab) -> dict[str, float]:
    """Normalized TF-IDF weight per distinct token of one sentence."""
    if not tokens:
        return {}
    counts = Counter(tokens)
    n = len(tokens)
    raw = {t: (c / n) * vocab.idf(vocab.id(t)) if t in vocab else (c / n) * (math.log(1 + vocab.n_sentences) + 1.0)
           for t, c in counts.items()}
    total = sum(raw.values())
    return {t: w / total for t, w in raw.items()}


# ---------------------------------------------------------------------------
# training instances


def cbow_windows(ids: Sequence[int], window: int) -> list[tuple[list[int], int]]:
    if window < 1:
        raise ValueError("window must be at least 1")
    out = []
    for i, center in enumerate(ids):
        context = list(ids[max(0, i - window):i]) + list(ids[i + 1:i + 1 + window])
        if context:
            out.append((context, center))
    return out


def pvdm_contexts(ids: Sequence[int], window: int) -> list[tuple[list[int], int]]:
    """Fixed-width preceding context (``2 * window`` ids, left-padded) for every position."""
    if window < 1:
        raise ValueError("window must be at least 1")
    width = 2 * window
    out = []
    for i, target in enumerate(ids):
        context = list(ids[max(0, i - width):i])
        out.append(([PAD_ID] * (width - len(context)) + context, target))
    return out


def sample_nop_pairs(org: Org, rng: np.random.Generator, n_pairs: int | None = None
                     ) -> list[tuple[ObjectId, ObjectId, int]]:
    """Directed object pairs, half drawn from real edges (label 1) and half from non-edges."""
    nodes = org.node_ids
    edges = org.sorted_edges()
    if len(nodes) < 2:
        raise ValueError("need at least two objects to sample pairs")
    edge_set = set(edges)
    n_non_edges = len(nodes) * (len(nodes) - 1) - sum(1 for a, b in edges if a != b)
    if n_pairs is None:
        n_pairs = 2 * len(edges)
    if not edges and not n_non_edges:
        raise ValueError("graph has neither edges nor non-edges")
    if not edges:
        logger.warning("graph has no edges; emitting only negative pairs")
    if not n_non_edges:
        logger.warning("graph is complete; emitting only positive pairs")
    out = []
    for _ in range(n_pairs):
        positive = rng.random() < 0.5
        if positive and not edges:
            positive = False
        elif not positive and not n_non_edges:
            positive = True
        if positive:
            a, b = edges[int(rng.integers(len(edges)))]
            out.append((a, b, 1))
            continue
        while True:
            i, j = rng.integers(len(nodes), size=2)
            if i != j and (nodes[i], nodes[j]) not in edge_set:
                out.append((nodes[int(i)], nodes[int(j)], 0))
                break
    return out


def mask_count(n: int) -> int:
    return max(1, int(math.floor(0.15 * n + 0.5))) if n > 0 else 0


@dataclass(frozen=True)
class MlmInstance:
    input_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    mask_positions: tuple[int, ...]
    target_ids: tuple[int, ...]
    nop_label: int = 0
    # per masked position: "mask", "random" or "keep"
    replace_kinds: tuple[str, ...] = ()


def mask_mlm(ids: Sequence[int], rng: np.random.Generator, vocab_size: int,
             segment_ids: Sequence[int] | None = None, nop_label: int = 0) -> MlmInstance:
    """Mask 15% of the non-special positions: 80% [MASK], 10% random token, 10% unchanged."""
    ids = list(ids)
    maskable = [i for i, t in enumerate(ids) if t >= N_SPECIAL or t == UNK_ID]
    k = mask_count(len(maskable))
    chosen = sorted(int(p) for p in rng.choice(maskable, size=k, replace=False)) if k else []
    targets, kinds = [], []
    for pos in chosen:
        targets.append(ids[pos])
        u = rng.random()
        if u < 0.8:
            ids[pos] = MASK_ID
            kinds.append("mask")
        elif u < 0.9:
            if vocab_size > N_SPECIAL:
                ids[pos] = int(rng.integers(N_SPECIAL, vocab_size))
            kinds.append("random")
        else:
            kinds.append("keep")
    segments = tuple(segment_ids) if segment_ids is not None else (0,) * len(ids)
    return MlmInstance(tuple(ids), segments, tuple(chosen), tuple(targets), nop_label, tuple(kinds))


def pair_input(a: Sequence[int], b: Sequence[int], max_len: int = MAX_POSITIONS
               ) -> tuple[list[int], list[int]]:
    """``[CLS] a [SEP] b [SEP]`` with segment ids; truncates the tail of b, then of a."""
    a, b = list(a), list(b)
    budget = max_len - 3
    if budget < 0:
        raise ValueError("max_len must leave room for three special tokens")
    overflow = len(a) + len(b) - budget
    if overflow > 0:
        cut = min(overflow, len(b))
        b = b[:len(b) - cut]
        overflow -= cut
        if overflow > 0:
            a = a[:len(a) - overflow]
    ids = [CLS_ID] + a + [SEP_ID] + b + [SEP_ID]
    segments = [0] * (len(a) + 2) + [1] * (len(b) + 1)
    return ids, segments


def split_corpus(items: Sequence, ratios: Sequence[float], seed: int) -> tuple[list, ...]:
    """Seeded shuffle then contiguous split, in the order (train, test[, valid])."""
    if not items:
        raise ValueError("cannot split an empty collection")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative and sum to 1")
    n = len(items)
    order = np.random.default_rng(seed).permutation(n)
    bounds = [0] + [int(math.floor(c * n + 0.5)) for c in np.cumsum(ratios)[:-1]] + [n]
    return tuple([items[int(i)] for i in order[bounds[k]:bounds[k + 1]]] for k in range(len(ratios)))


# ---------------------------------------------------------------------------
# encoded corpus cache


def write_encoded(path: str | Path, sequences: Iterable[Sequence[int]]) -> None:
    """Length-prefixed little-endian uint32 records."""
    with open(path, "wb") as fh:
        for seq in sequences:
            fh.write(struct.pack("<I", len(seq)))
            fh.write(np.asarray(seq, dtype="<u4").tobytes())


def read_encoded(path: str | Path) -> list[list[int]]:
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise ValueError(f"truncated record header at byte {pos}")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        end = pos + 4 * n
        if end > len(data):
            raise ValueError(f"truncated record at byte {pos}")
        out.append(np.frombuffer(data[pos:end], dtype="<u4").astype(int).tolist())
        pos = end
    return out
