"""Estimator plumbing shared by the three embedding schemes."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator

from ..corpus import N_SPECIAL, Vocab, build_vocab, sentences_from_org, tfidf
from ..validation import check_graphs
from .checkpoint import CheckpointError, config_hash, dumps_checkpoint, loads_checkpoint

logger = logging.getLogger(__name__)

__all__ = ["ObjectEmbedder", "object_embedding_avg", "cloze_eval", "majority_cloze_baseline",
           "load_embedder", "init_weights"]

FORMAT_VERSION = 1


def init_weights(module: torch.nn.Module, std: float = 0.02) -> None:
    """Normal(0, std) for weights and embeddings, zeros for biases, unit LayerNorm."""
    for sub in module.modules():
        if isinstance(sub, torch.nn.Linear):
            torch.nn.init.normal_(sub.weight, 0.0, std)
            if sub.bias is not None:
                torch.nn.init.zeros_(sub.bias)
        elif isinstance(sub, torch.nn.Embedding):
            torch.nn.init.normal_(sub.weight, 0.0, std)
            if sub.padding_idx is not None:
                with torch.no_grad():
                    sub.weight[sub.padding_idx].zero_()
        elif isinstance(sub, torch.nn.LayerNorm):
            torch.nn.init.ones_(sub.weight)
            torch.nn.init.zeros_(sub.bias)


def object_embedding_avg(word_vectors: np.ndarray, vocab: Vocab, tokens: Sequence[str]) -> np.ndarray:
    """TF-IDF weighted sum of the word vectors of one sentence."""
    out = np.zeros(word_vectors.shape[1], dtype=np.float64)
    if not tokens:
        logger.debug("empty sentence embedded as the zero vector")
        return out
    for token, weight in tfidf(tokens, vocab).items():
        out += weight * word_vectors[vocab.id(token)]
    return out


class ObjectEmbedder(BaseEstimator):
    """Learns token vectors from object reference graphs and maps objects to vectors.

    ``fit`` and ``transform`` take a sequence of :class:`~pdfir.org.Org`;
    ``transform`` returns one ``(n_nodes, dim)`` array per graph.
    """

    scheme = ""

    # -- subclass hooks -----------------------------------------------------
    def _build_module(self, **kwargs) -> torch.nn.Module:
        raise NotImplementedError

    def _module_kwargs(self, sentences) -> dict:
        return {}

    def _train(self, orgs, sentences: list[tuple[str, ...]], rng: np.random.Generator) -> list[float]:
        raise NotImplementedError

    def _embed_batch(self, sentences: Sequence[Sequence[str]]) -> np.ndarray:
        raise NotImplementedError

    def _cloze_scores(self, ids: list[int], position: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def dim_(self) -> int:
        raise NotImplementedError

    # -- estimator API ------------------------------------------------------
    def fit(self, X, y=None):
        orgs = check_graphs(X)
        self._validate_params()
        sentences = [s.tokens for org in orgs for s in sentences_from_org(org)]
        self.vocab_ = build_vocab(sentences, self.min_freq)
        torch.manual_seed(self.random_state)
        rng = np.random.default_rng(self.random_state)
        self.module_kwargs_ = self._module_kwargs(sentences)
        self.module_ = self._build_module(**self.module_kwargs_)
        self.history_ = self._train(orgs, sentences, rng)
        self.module_.eval()
        return self

    def transform(self, X) -> list[np.ndarray]:
        self._check_fitted()
        orgs = check_graphs(X)
        return [self.embed([s.tokens for s in sentences_from_org(org)]) for org in orgs]

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)

    def embed(self, sentences: Sequence[Sequence[str]]) -> np.ndarray:
        """Object vectors for token sequences, shape ``(len(sentences), dim)``."""
        self._check_fitted()
        if len(sentences) == 0:
            return np.zeros((0, self.dim_))
        return self._embed_batch(sentences)

    def predict_masked(self, tokens: Sequence[str], position: int) -> int:
        """Most likely non-special token id for a blanked ``position``."""
        self._check_fitted()
        ids = self.vocab_.encode(tokens)
        scores = np.asarray(self._cloze_scores(ids, position), dtype=np.float64)
        return int(np.argmax(scores[N_SPECIAL:])) + N_SPECIAL

    def _check_fitted(self):
        if not hasattr(self, "module_"):
            raise RuntimeError(f"{type(self).__name__} is not fitted")

    def _validate_params(self):
        pass

    # -- persistence --------------------------------------------------------
    def config_hash(self) -> str:
        return config_hash({"scheme": self.scheme, **self.get_params()})

    def to_bytes(self) -> bytes:
        self._check_fitted()
        v = self.vocab_
        metadata = {
            "format": FORMAT_VERSION,
            "kind": "embedder",
            "scheme": self.scheme,
            "params": self.get_params(),
            "config_hash": self.config_hash(),
            "module_kwargs": self.module_kwargs_,
            "vocab": {"itos": list(v.itos), "counts": list(v.counts), "df": list(v.df),
                      "n_sentences": v.n_sentences},
            "vocab_hash": v.digest(),
            "history": [float(x) for x in self.history_],
        }
        tensors = {k: t.detach().cpu().numpy() for k, t in self.module_.state_dict().items()}
        return dumps_checkpoint(metadata, tensors)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "ObjectEmbedder":
        metadata, tensors = loads_checkpoint(data)
        if metadata.get("kind") != "embedder":
            raise CheckpointError("checkpoint does not hold an embedding model")
        target = _SCHEMES.get(metadata.get("scheme"))
        if target is None:
            raise CheckpointError(f"unknown embedding scheme {metadata.get('scheme')!r}")
        if cls is not ObjectEmbedder and target is not cls:
            raise CheckpointError(f"checkpoint holds a {metadata['scheme']} model, not {cls.scheme}")
        model = target(**metadata["params"])
        v = metadata["vocab"]
        model.vocab_ = Vocab(tuple(v["itos"]), tuple(v["counts"]), tuple(v["df"]), v["n_sentences"])
        if model.vocab_.digest() != metadata["vocab_hash"]:
            raise CheckpointError("vocabulary hash mismatch")
        model.module_kwargs_ = metadata["module_kwargs"]
        model.module_ = model._build_module(**model.module_kwargs_)
        state = model.module_.state_dict()
        if set(state) != set(tensors):
            raise CheckpointError("checkpoint tensors do not match the model layout")
        model.module_.load_state_dict({k: torch.from_numpy(tensors[k]).to(state[k].dtype) for k in state})
        model.module_.eval()
        model.history_ = metadata["history"]
        return model

    @classmethod
    def load(cls, path: str | Path) -> "ObjectEmbedder":
        return cls.from_bytes(Path(path).read_bytes())


_SCHEMES: dict[str, type] = {}


def register(cls):
    _SCHEMES[cls.scheme] = cls
    return cls


def load_embedder(path: str | Path) -> ObjectEmbedder:
    return ObjectEmbedder.load(path)


# ---------------------------------------------------------------------------
# cloze


def _cloze_positions(sentences: Sequence[Sequence[str]], seed: int) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    return [(i, int(rng.integers(len(s)))) for i, s in enumerate(sentences) if len(s)]


def cloze_eval(model: ObjectEmbedder, sentences: Sequence[Sequence[str]], seed: int = 0) -> float:
    """Exact-match rate when one uniformly chosen token per sentence is blanked."""
    positions = _cloze_positions(sentences, seed)
    if not positions:
        raise ValueError("no non-empty sentences to evaluate")
    hits = 0
    for i, pos in positions:
        truth = model.vocab_.id(sentences[i][pos])
        hits += model.predict_masked(sentences[i], pos) == truth
    return hits / len(positions)


def majority_cloze_baseline(vocab: Vocab, sentences: Sequence[Sequence[str]], seed: int = 0) -> float:
    """Accuracy of always guessing the most frequent training token on the same blanks."""
    positions = _cloze_positions(sentences, seed)
    if not positions:
        raise ValueError("no non-empty sentences to evaluate")
    if len(vocab) <= N_SPECIAL:
        return 0.0
    guess = vocab.itos[N_SPECIAL]
    return sum(sentences[i][pos] == guess for i, pos in positions) / len(positions)
