"""Attributed reference graphs and graph-level classifiers.

:class:`GINClassifier` runs ``K`` isomorphism layers

    h_v <- MLP((1 + eps) * h_v + sum_{u in N(v)} h_u)

followed by a mean readout and a linear two-way head. ``N(v)`` is the
symmetrized neighbour set by default: ``u`` is a neighbour of ``v`` when an
edge runs either way, and a mutual pair still counts once.
:class:`MeanPoolDNNClassifier` is the structure-blind baseline: it sees only
the mean node vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from torch import nn
from torch.nn import functional as F

from .corpus import sentences_from_org
from .embed.checkpoint import CheckpointError, config_hash, dumps_checkpoint, loads_checkpoint
from .org import Org
from .validation import check_choice, check_labels, check_positive, check_positive_int

logger = logging.getLogger(__name__)

__all__ = [
    "Graph", "Aorg", "build_aorg", "as_graph",
    "GinNet", "GINClassifier", "MeanPoolDNNClassifier",
    "Metrics", "evaluate", "load_classifier",
]

DTYPE = torch.float64


@dataclass
class Graph:
    """Node feature matrix plus directed edges given as positions ``(src, dst)``."""

    x: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    label: int | None = None
    name: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("node features must form a 2-D array")
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= len(self.x)):
            raise ValueError("edge endpoint out of range")

    @property
    def n_nodes(self) -> int:
        return len(self.x)

    def adjacency(self) -> np.ndarray:
        """Dense directed 0/1 adjacency, ``A[src, dst] = 1``."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        if len(self.edges):
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        return a

    @classmethod
    def from_adjacency(cls, x, adjacency, label=None, name="") -> "Graph":
        src, dst = np.nonzero(np.asarray(adjacency) > 0.5)
        return cls(x, np.stack([src, dst], axis=1), label, name)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Same graph with node ``i`` moved to position ``perm[i]``."""
        perm = np.asarray(perm)
        x = np.empty_like(self.x)
        x[perm] = self.x
        return Graph(x, perm[self.edges] if len(self.edges) else self.edges, self.label, self.name)


@dataclass
class Aorg:
    """A reference graph whose nodes carry embedding vectors."""

    org: Org
    features: np.ndarray
    label: int | None = None
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != len(self.org):
            raise ValueError(f"{self.features.shape[0]} feature rows for {len(self.org)} nodes")

    def graph(self) -> Graph:
        return Graph(self.features, np.asarray(self.org.edge_index(), dtype=np.int64).reshape(-1, 2),
                     self.label, self.name)


def build_aorg(org: Org, embedder, label: int | None = None, name: str = "") -> Aorg:
    """Embed every node; nodes without IR lines get zero vectors."""
    sentences = [s.tokens for s in sentences_from_org(org)]
    features = np.zeros((len(org), embedder.dim_))
    present = [i for i, s in enumerate(sentences) if s]
    if present:
        vectors = embedder.embed([sentences[i] for i in present])
        if vectors.shape[1] != embedder.dim_:
            raise ValueError(f"embedder produced width {vectors.shape[1]}, expected {embedder.dim_}")
        features[present] = vectors
    return Aorg(org, features, label, name)


def as_graph(item) -> Graph:
    if isinstance(item, Graph):
        return item
    if isinstance(item, Aorg):
        return item.graph()
    raise TypeError(f"expected Graph or Aorg, got {type(item).__name__}")


def _symmetric_pairs(edges: np.ndarray, symmetric: bool) -> np.ndarray:
    """Message pairs ``(src, dst)``; deduplicated, mutual edges counted once."""
    if not len(edges):
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate([edges, edges[:, ::-1]]) if symmetric else edges
    return np.unique(pairs, axis=0)


# ---------------------------------------------------------------------------
# GIN


_ACTIVATIONS = {"relu": nn.ReLU, "identity": nn.Identity}


class GinNet(nn.Module):
    def __init__(self, in_dim: int, hidden: int = 256, n_layers: int = 2, activation: str = "relu",
                 aggregation: str = "sum", learn_eps: bool = True):
        super().__init__()
        self.aggregation = aggregation
        act = _ACTIVATIONS[activation]
        dims = [in_dim] + [hidden] * n_layers
        self.mlps = nn.ModuleList(
            nn.Sequential(nn.Linear(dims[k], hidden), act(), nn.Linear(hidden, hidden), act())
            for k in range(n_layers)
        )
        self.eps = nn.Parameter(torch.zeros(n_layers), requires_grad=learn_eps)
        self.head = nn.Linear(hidden, 2)

    def _layer(self, k: int, h: torch.Tensor, agg: torch.Tensor) -> torch.Tensor:
        return self.mlps[k]((1.0 + self.eps[k]) * h + agg)

    def forward_sparse(self, x, pairs, batch, n_graphs) -> torch.Tensor:
        """Batched logits; ``pairs`` is ``(2, M)`` message pairs ``src -> dst``."""
        src, dst = pairs
        h = x
        if self.aggregation == "mean":
            deg = torch.zeros(len(x), dtype=x.dtype).index_add_(0, dst, torch.ones(len(dst), dtype=x.dtype))
        for k in range(len(self.mlps)):
            agg = torch.zeros_like(h).index_add_(0, dst, h[src])
            if self.aggregation == "mean":
                agg = agg / deg.clamp(min=1).unsqueeze(1)
            h = self._layer(k, h, agg)
        counts = torch.zeros(n_graphs, dtype=x.dtype).index_add_(0, batch, torch.ones(len(x), dtype=x.dtype))
        pooled = torch.zeros(n_graphs, h.shape[1], dtype=x.dtype).index_add_(0, batch, h)
        return self.head(pooled / counts.unsqueeze(1))

    def forward_dense(self, x: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
        """Logits of one graph; ``weights[u, v]`` scales the message ``u -> v``."""
        h = x
        for k in range(len(self.mlps)):
            agg = weights.T @ h
            if self.aggregation == "mean":
                agg = agg / weights.sum(0).clamp(min=1).unsqueeze(1)
            h = self._layer(k, h, agg)
        return self.head(h.mean(0))


class _GraphClassifier(BaseEstimator, ClassifierMixin):
    """Shared training loop, prediction and persistence."""

    kind = ""

    def _build(self, in_dim: int) -> nn.Module:
        raise NotImplementedError

    def _batch_logits(self, graphs: Sequence[Graph]) -> torch.Tensor:
        raise NotImplementedError

    def _validate(self):
        check_positive("lr", self.lr, allow_zero=True)
        check_positive_int("batch_size", self.batch_size)
        check_positive_int("epochs", self.epochs, allow_zero=True)

    def fit(self, X, y=None):
        graphs = [as_graph(g) for g in X]
        if not graphs:
            raise ValueError("no training graphs")
        if y is None:
            y = [g.label for g in graphs]
        y = check_labels(y, len(graphs))
        self._validate()
        dims = {g.x.shape[1] for g in graphs}
        if len(dims) != 1:
            raise ValueError(f"graphs have differing feature widths {sorted(dims)}")
        if any(g.n_nodes == 0 for g in graphs):
            raise ValueError("empty graphs cannot be classified")
        self.n_features_in_ = dims.pop()
        self.classes_ = np.array([0, 1])
        torch.manual_seed(self.random_state)
        rng = np.random.default_rng(self.random_state)
        self.module_ = self._build(self.n_features_in_).to(DTYPE)
        opt = torch.optim.Adam([p for p in self.module_.parameters() if p.requires_grad], lr=self.lr)
        targets = torch.from_numpy(y)
        self.history_ = []
        for _ in range(self.epochs):
            self.module_.train()
            order = rng.permutation(len(graphs))
            total, correct = 0.0, 0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                logits = self._batch_logits([graphs[i] for i in idx])
                loss = F.cross_entropy(logits, targets[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                correct += int((logits.argmax(1) == targets[idx]).sum())
            self.history_.append({"loss": total / len(graphs), "acc": correct / len(graphs)})
        self.module_.eval()
        return self

    def _check_input(self, X) -> list[Graph]:
        if not hasattr(self, "module_"):
            raise RuntimeError(f"{type(self).__name__} is not fitted")
        graphs = [as_graph(g) for g in X]
        for g in graphs:
            if g.n_nodes == 0:
                raise ValueError("empty graphs cannot be classified")
            if g.x.shape[1] != self.n_features_in_:
                raise ValueError(f"feature width {g.x.shape[1]} does not match {self.n_features_in_}")
        return graphs

    def decision_function(self, X) -> np.ndarray:
        """Two logits per graph."""
        graphs = self._check_input(X)
        out = []
        with torch.no_grad():
            for start in range(0, len(graphs), 256):
                out.append(self._batch_logits(graphs[start:start + 256]).numpy())
        return np.concatenate(out) if out else np.zeros((0, 2))

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(1, keepdims=True))
        return z / z.sum(1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(1)

    # -- persistence --------------------------------------------------------
    def config_hash(self) -> str:
        return config_hash({"kind": self.kind, **self.get_params()})

    def to_bytes(self, extra: dict | None = None) -> bytes:
        if not hasattr(self, "module_"):
            raise RuntimeError(f"{type(self).__name__} is not fitted")
        metadata = {
            "format": 1,
            "kind": "classifier",
            "model": self.kind,
            "params": self.get_params(),
            "config_hash": self.config_hash(),
            "n_features_in": self.n_features_in_,
            "history": self.history_,
            "extra": extra or {},
        }
        tensors = {k: v.detach().numpy() for k, v in self.module_.state_dict().items()}
        return dumps_checkpoint(metadata, tensors)

    def save(self, path, extra: dict | None = None) -> None:
        Path(path).write_bytes(self.to_bytes(extra))

    @classmethod
    def from_bytes(cls, data: bytes):
        metadata, tensors = loads_checkpoint(data)
        if metadata.get("kind") != "classifier":
            raise CheckpointError("checkpoint does not hold a graph classifier")
        target = _CLASSIFIERS.get(metadata.get("model"))
        if target is None:
            raise CheckpointError(f"unknown classifier {metadata.get('model')!r}")
        model = target(**metadata["params"])
        model.n_features_in_ = metadata["n_features_in"]
        model.classes_ = np.array([0, 1])
        model.module_ = model._build(model.n_features_in_).to(DTYPE)
        state = model.module_.state_dict()
        if set(state) != set(tensors):
            raise CheckpointError("checkpoint tensors do not match the model layout")
        model.module_.load_state_dict({k: torch.from_numpy(tensors[k]).to(DTYPE) for k in state})
        model.module_.eval()
        model.history_ = metadata["history"]
        model.checkpoint_extra_ = metadata["extra"]
        return model

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


class GINClassifier(_GraphClassifier):
    """Graph isomorphism network over attributed reference graphs.

    Parameters
    ----------
    hidden : width of every MLP layer and of the readout.
    n_layers : number of message-passing layers.
    activation : ``"relu"`` or ``"identity"`` inside the MLPs.
    aggregation : neighbour ``"sum"`` or ``"mean"``.
    symmetric : treat edges as undirected when gathering neighbours.
    learn_eps : train the self weight (initialised at zero).
    lr, batch_size, epochs : Adam schedule.
    """

    kind = "gin"

    def __init__(self, hidden=256, n_layers=2, activation="relu", aggregation="sum", symmetric=True,
                 learn_eps=True, lr=0.01, batch_size=64, epochs=50, random_state=0):
        self.hidden = hidden
        self.n_layers = n_layers
        self.activation = activation
        self.aggregation = aggregation
        self.symmetric = symmetric
        self.learn_eps = learn_eps
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _validate(self):
        super()._validate()
        check_positive_int("hidden", self.hidden)
        check_positive_int("n_layers", self.n_layers)
        check_choice("activation", self.activation, _ACTIVATIONS)
        check_choice("aggregation", self.aggregation, ("sum", "mean"))

    def _build(self, in_dim):
        return GinNet(in_dim, self.hidden, self.n_layers, self.activation, self.aggregation, self.learn_eps)

    def _batch_logits(self, graphs):
        xs, pairs, batch, offset = [], [], [], 0
        for i, g in enumerate(graphs):
            xs.append(g.x)
            pairs.append(_symmetric_pairs(g.edges, self.symmetric) + offset)
            batch.append(np.full(g.n_nodes, i))
            offset += g.n_nodes
        x = torch.from_numpy(np.concatenate(xs)).to(DTYPE)
        p = torch.from_numpy(np.concatenate(pairs).T.copy()).long()
        b = torch.from_numpy(np.concatenate(batch)).long()
        return self.module_.forward_sparse(x, p, b, len(graphs))

    def message_weights(self, adjacency: torch.Tensor) -> torch.Tensor:
        """Weights fed to the dense path for a directed 0/1 adjacency."""
        if self.symmetric:
            return adjacency + adjacency.T - adjacency * adjacency.T
        return adjacency

    def dense_logits(self, x: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
        """Differentiable logits of one graph from features and message weights."""
        return self.module_.forward_dense(x, weights)

    def input_gradients(self, graph, target: int | None = None):
        """Gradients of the cross-entropy for ``target`` w.r.t. node features and message weights."""
        graph = self._check_input([graph])[0]
        target = graph.label if target is None else target
        x = torch.tensor(graph.x, dtype=DTYPE, requires_grad=True)
        w = self.message_weights(torch.tensor(graph.adjacency(), dtype=DTYPE)).detach().requires_grad_(True)
        loss = F.cross_entropy(self.dense_logits(x, w).unsqueeze(0), torch.tensor([int(target)]))
        loss.backward()
        return x.grad.numpy(), w.grad.numpy()


class MeanPoolDNNClassifier(_GraphClassifier):
    """Feed-forward network on the mean node vector; blind to edges."""

    kind = "dnn"

    def __init__(self, hidden=(200, 200), lr=0.01, batch_size=64, epochs=50, random_state=0):
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _validate(self):
        super()._validate()
        for h in self.hidden:
            check_positive_int("hidden", h)

    def _build(self, in_dim):
        dims = [in_dim] + list(self.hidden)
        layers: list[nn.Module] = []
        for a, b in zip(dims[:-1], dims[1:]):
            layers += [nn.Linear(a, b), nn.ReLU()]
        layers.append(nn.Linear(dims[-1], 2))
        return nn.Sequential(*layers)

    def _batch_logits(self, graphs):
        pooled = np.stack([g.x.mean(0) for g in graphs])
        return self.module_(torch.from_numpy(pooled).to(DTYPE))


_CLASSIFIERS = {"gin": GINClassifier, "dnn": MeanPoolDNNClassifier}


def load_classifier(path):
    return _GraphClassifier.load(path)


# ---------------------------------------------------------------------------
# metrics


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class Metrics:
    """Confusion counts with malicious as the positive class; undefined rates are ``None``."""

    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    @property
    def acc(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def tpr(self) -> float | None:
        return _rate(self.tp, self.tp + self.fn)

    @property
    def fnr(self) -> float | None:
        return _rate(self.fn, self.tp + self.fn)

    @property
    def tnr(self) -> float | None:
        return _rate(self.tn, self.tn + self.fp)

    @property
    def fpr(self) -> float | None:
        return _rate(self.fp, self.tn + self.fp)

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Metrics":
        y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
        if len(y_true) == 0:
            raise ValueError("cannot score an empty set")
        if y_true.shape != y_pred.shape:
            raise ValueError("label and prediction shapes differ")
        return cls(int(((y_true == 1) & (y_pred == 1)).sum()), int(((y_true == 1) & (y_pred == 0)).sum()),
                   int(((y_true == 0) & (y_pred == 0)).sum()), int(((y_true == 0) & (y_pred == 1)).sum()))

    def as_dict(self) -> dict:
        return {"acc": self.acc, "tpr": self.tpr, "tnr": self.tnr, "fpr": self.fpr, "fnr": self.fnr,
                "tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}


def evaluate(model, X, y=None) -> Metrics:
    graphs = [as_graph(g) for g in X]
    if y is None:
        y = [g.label for g in graphs]
    return Metrics.from_predictions(np.asarray(y), model.predict(graphs))
