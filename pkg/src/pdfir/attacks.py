"""Feature-space attacks on graph classifiers and the robustness metrics around them.

Three attackers share one report format:

* :func:`grad_argmax_attack` is white-box and greedy. It follows the loss
  gradient with respect to edge weights, adding or removing one edge per step.
* :func:`genetic_attack` needs class scores only. It evolves edit lists made
  of edge flips, node injections and node deletions.
* :func:`random_noise_attack` needs labels only. It adds Gaussian noise to the
  features of the highest-degree nodes.

Every attack works on a copy of the input graph.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from .gin import DTYPE, GINClassifier, Graph, as_graph

__all__ = [
    "AttackBudget", "Edit", "AttackReport", "AttackResult",
    "edge_gradients", "grad_argmax_attack", "genetic_attack", "random_noise_attack",
    "compute_rpr", "compute_tra", "budget_sweep", "ATTACKS",
]


@dataclass(frozen=True)
class AttackBudget:
    max_edits: int = 1000
    max_queries: int = 1000

    def __post_init__(self):
        if self.max_edits < 0 or self.max_queries < 1:
            raise ValueError("max_edits must be >= 0 and max_queries >= 1")


@dataclass(frozen=True)
class Edit:
    op: str
    u: int
    v: int | None = None

    OPS = ("add_edge", "remove_edge", "inject_node", "delete_node", "perturb_node")

    def __post_init__(self):
        if self.op not in self.OPS:
            raise ValueError(f"unknown edit {self.op!r}")


@dataclass
class AttackReport:
    sample_id: str
    method: str
    true_label: int
    clean_label: int
    final_label: int
    n_nodes: int
    edits: list[Edit] = field(default_factory=list)
    edge_changes: int = 0
    queries: int = 0
    gradient_steps: int = 0
    rpr: float = 0.0
    rpr_denominator: str = "max_edges"
    fitness_history: list[float] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.final_label != self.true_label

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edits"] = [asdict(e) for e in self.edits]
        d["success"] = self.success
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class AttackResult:
    report: AttackReport
    graph: Graph


def compute_rpr(edge_changes: int, n_nodes: int, n_edges: int | None = None,
                denominator: str = "max_edges") -> float:
    """Edge changes over the largest possible directed edge count, clamped to [0, 1]."""
    if edge_changes < 0:
        raise ValueError("edge_changes must be non-negative")
    if denominator == "max_edges":
        if n_nodes < 2:
            return 0.0 if edge_changes == 0 else 1.0
        base = n_nodes * (n_nodes - 1)
    elif denominator == "edges":
        if not n_edges:
            return 0.0 if edge_changes == 0 else 1.0
        base = n_edges
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    return min(1.0, edge_changes / base)


def compute_tra(reports: Sequence[AttackReport]) -> float:
    """Share of samples still classified correctly after the attack."""
    if not reports:
        raise ValueError("no attack reports")
    return sum(not r.success for r in reports) / len(reports)


# ---------------------------------------------------------------------------
# shared helpers


def _proba(model, x: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    return model.predict_proba([Graph.from_adjacency(x, adjacency)])[0]


def _finish(report: AttackReport, graph: Graph, x, adjacency, label: int, n_edges: int) -> AttackResult:
    report.final_label = int(label)
    report.rpr = compute_rpr(report.edge_changes, report.n_nodes, n_edges, report.rpr_denominator)
    return AttackResult(report, Graph.from_adjacency(x, adjacency, graph.label, graph.name))


def _true_label(graph: Graph, label: int | None) -> int:
    label = graph.label if label is None else label
    if label is None:
        raise ValueError("graph carries no label and none was given")
    return int(label)


# ---------------------------------------------------------------------------
# GradArgmax


def edge_gradients(model: GINClassifier, graph, label: int | None = None, max_nodes: int = 2000) -> np.ndarray:
    """Gradient of the loss for the true class with respect to each pair weight.

    With symmetric message passing a pair ``{u, v}`` is a single weight used in
    both directions, so the returned matrix is symmetric.
    """
    graph = as_graph(graph)
    if graph.n_nodes > max_nodes:
        raise ValueError(f"graph has {graph.n_nodes} nodes, above the dense limit of {max_nodes}")
    return _pair_gradients(model, graph.x, graph.adjacency(), _true_label(graph, label))


def _pair_gradients(model, x, adjacency, label) -> np.ndarray:
    xt = torch.tensor(x, dtype=DTYPE)
    weights = model.message_weights(torch.tensor(adjacency, dtype=DTYPE)).detach().requires_grad_(True)
    loss = F.cross_entropy(model.dense_logits(xt, weights).unsqueeze(0), torch.tensor([label]))
    (grad,) = torch.autograd.grad(loss, weights)
    g = grad.numpy()
    if model.symmetric:
        return g + g.T - np.diag(np.diag(g))
    return g


def grad_argmax_attack(model: GINClassifier, graph, budget: AttackBudget = AttackBudget(),
                       label: int | None = None, recompute: bool = True,
                       sample_id: str = "") -> AttackResult:
    """Greedy edge edits along the largest loss gradient until the label flips.

    A move removes an existing edge whose gradient is negative or adds a
    missing one whose gradient is positive. Edited pairs are not revisited.
    With ``recompute=False`` the gradient from the clean graph is reused.
    """
    graph = as_graph(graph)
    y = _true_label(graph, label)
    x, adj = graph.x.copy(), graph.adjacency()
    n = graph.n_nodes
    n_edges = len(graph.edges)
    clean = int(np.argmax(_proba(model, x, adj)))
    report = AttackReport(sample_id or graph.name, "gradargmax", y, clean, clean, n, queries=1)
    current = clean
    tabu = np.eye(n, dtype=bool)
    if model.symmetric:
        tabu |= np.tril(np.ones((n, n), dtype=bool))
    grad = None
    while current == y and len(report.edits) < budget.max_edits:
        if grad is None or recompute:
            grad = _pair_gradients(model, x, adj, y)
            report.gradient_steps += 1
        present = (adj + adj.T > 0) if model.symmetric else adj > 0
        legal = ~tabu & ((present & (grad < 0)) | (~present & (grad > 0)))
        if not legal.any():
            break
        score = np.where(legal, np.abs(grad), -1.0)
        u, v = divmod(int(np.argmax(score)), n)
        if present[u, v]:
            adj[u, v] = 0.0
            if model.symmetric:
                adj[v, u] = 0.0
            report.edits.append(Edit("remove_edge", u, v))
        else:
            adj[u, v] = 1.0
            report.edits.append(Edit("add_edge", u, v))
        report.edge_changes += 1
        tabu[u, v] = tabu[v, u] = True
        current = int(np.argmax(_proba(model, x, adj)))
        report.queries += 1
    return _finish(report, graph, x, adj, current, n_edges)


# ---------------------------------------------------------------------------
# genetic search


def _random_gene(rng: np.random.Generator, n: int) -> tuple:
    kind = rng.choice(3, p=[0.6, 0.2, 0.2])
    if kind == 0 and n >= 2:
        u, v = rng.choice(n, size=2, replace=False)
        return ("flip", int(u), int(v))
    if kind == 1 or n < 2:
        return ("inject", int(rng.integers(n)), int(rng.integers(n)), bool(rng.random() < 0.5))
    return ("delete", int(rng.integers(n)))


def _apply_genes(x: np.ndarray, adj: np.ndarray, genes: Sequence[tuple]):
    """Apply an edit list to copies; returns features, adjacency, edits and edge changes."""
    n = len(x)
    x = x.copy()
    adj = adj.copy()
    alive = np.ones(n, dtype=bool)
    edits: list[Edit] = []
    changes = 0
    for gene in genes:
        if gene[0] == "flip":
            _, u, v = gene
            if not (alive[u] and alive[v]):
                continue
            adj[u, v] = 1.0 - adj[u, v]
            edits.append(Edit("add_edge" if adj[u, v] else "remove_edge", u, v))
            changes += 1
        elif gene[0] == "inject":
            _, src, attach, outward = gene
            if not (alive[src] and alive[attach]):
                continue
            new = len(x)
            x = np.vstack([x, x[src]])
            grown = np.zeros((new + 1, new + 1))
            grown[:new, :new] = adj
            if outward:
                grown[new, attach] = 1.0
            else:
                grown[attach, new] = 1.0
            adj = grown
            alive = np.append(alive, True)
            edits.append(Edit("inject_node", new, attach))
            changes += 1
        else:
            _, u = gene
            if not alive[u] or alive.sum() <= 1:
                continue
            changes += int(adj[u].sum() + adj[:, u].sum() - adj[u, u])
            adj[u, :] = 0.0
            adj[:, u] = 0.0
            alive[u] = False
            edits.append(Edit("delete_node", u))
    keep = np.flatnonzero(alive)
    return x[keep], adj[np.ix_(keep, keep)], edits, changes


def genetic_attack(model, graph, budget: AttackBudget = AttackBudget(), population: int = 100,
                   generations: int = 10, tournament: int = 4, mutation_rate: float = 0.1,
                   max_genes: int = 4, rng: np.random.Generator | None = None, label: int | None = None,
                   sample_id: str = "") -> AttackResult:
    """Score-based evolutionary search over edit lists.

    Fitness is one minus the probability of the true class and every fitness
    evaluation is one query, including the clean one. ``generations`` counts
    the initial population. The best individual survives unchanged (elitism
    of one), so the best fitness never decreases between generations.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    graph = as_graph(graph)
    y = _true_label(graph, label)
    x0, adj0 = graph.x.copy(), graph.adjacency()
    n = graph.n_nodes
    clean_p = _proba(model, x0, adj0)
    clean = int(np.argmax(clean_p))
    report = AttackReport(sample_id or graph.name, "genetic", y, clean, clean, n, queries=1)
    best = ([], 1.0 - clean_p[y], clean)
    report.fitness_history.append(float(best[1]))
    gene_cap = min(max_genes, budget.max_edits)
    if clean != y or generations == 0 or gene_cap == 0:
        return _finish(report, graph, x0, adj0, clean, len(graph.edges))

    def evaluate(genes):
        x, adj, _, _ = _apply_genes(x0, adj0, genes)
        p = _proba(model, x, adj)
        report.queries += 1
        return 1.0 - p[y], int(np.argmax(p))

    def mutate(genes):
        out = [(_random_gene(rng, n) if rng.random() < mutation_rate else g) for g in genes]
        return out[:gene_cap] or [_random_gene(rng, n)]

    def select(pop):
        picks = rng.choice(len(pop), size=min(tournament, len(pop)), replace=False)
        return pop[max(picks, key=lambda i: (pop[i][1], -i))][0]

    scored: list[tuple[list, float, int]] = []
    for gen in range(generations):
        if gen == 0:
            candidates = [[_random_gene(rng, n) for _ in range(int(rng.integers(1, gene_cap + 1)))]
                          for _ in range(population)]
        else:
            candidates = []
            for _ in range(population - 1):
                a, b = select(scored), select(scored)
                cut_a = int(rng.integers(0, len(a) + 1))
                cut_b = int(rng.integers(0, len(b) + 1))
                candidates.append(mutate(a[:cut_a] + b[cut_b:]))
        next_scored = [best] if gen > 0 else []
        flipped = False
        for genes in candidates:
            if report.queries >= budget.max_queries:
                break
            fit, lab = evaluate(genes)
            next_scored.append((genes, fit, lab))
            if fit > best[1]:
                best = (genes, fit, lab)
            if lab != y:
                best = (genes, fit, lab)
                flipped = True
                break
        scored = next_scored
        report.fitness_history.append(float(best[1]))
        if flipped or report.queries >= budget.max_queries:
            break
    x, adj, edits, changes = _apply_genes(x0, adj0, best[0])
    report.edits, report.edge_changes = edits, changes
    return _finish(report, graph, x, adj, best[2], len(graph.edges))


# ---------------------------------------------------------------------------
# random noise


def random_noise_attack(model, graph, sigma: float | np.ndarray | None = None, k: int = 10,
                        budget: AttackBudget = AttackBudget(), rng: np.random.Generator | None = None,
                        label: int | None = None, sample_id: str = "") -> AttackResult:
    """Gaussian noise on the ``k`` highest-degree nodes, redrawn until the label flips.

    Only predicted labels are observed. ``sigma`` defaults to a tenth of the
    per-dimension standard deviation of the node features. Degree is in plus
    out degree; ties go to the earlier node.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    graph = as_graph(graph)
    y = _true_label(graph, label)
    x0, adj = graph.x.copy(), graph.adjacency()
    n = graph.n_nodes
    k = max(0, min(k, n, budget.max_edits))
    clean = int(model.predict([Graph.from_adjacency(x0, adj)])[0])
    report = AttackReport(sample_id or graph.name, "random_noise", y, clean, clean, n, queries=1)
    scale = 0.1 * x0.std(axis=0) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float),
                                                                      (x0.shape[1],))
    if clean != y or k == 0 or not np.any(scale > 0):
        return _finish(report, graph, x0, adj, clean, len(graph.edges))
    degree = adj.sum(0) + adj.sum(1)
    targets = np.argsort(-degree, kind="stable")[:k]
    x, current = x0, clean
    while report.queries < budget.max_queries:
        x = x0.copy()
        x[targets] += rng.normal(size=(k, x0.shape[1])) * scale
        current = int(model.predict([Graph.from_adjacency(x, adj)])[0])
        report.queries += 1
        if current != y:
            break
    report.edits = [Edit("perturb_node", int(t)) for t in targets]
    return _finish(report, graph, x, adj, current, len(graph.edges))


ATTACKS: dict[str, Callable] = {
    "gradargmax": grad_argmax_attack,
    "genetic": genetic_attack,
    "random_noise": random_noise_attack,
}


def budget_sweep(model, graphs, method: str, budgets: Sequence[int], seed: int = 0,
                 max_queries: int = 1000, **kwargs) -> list[dict]:
    """TRA and mean RPR per edit budget; every budget restarts from the same seeds."""
    attack = ATTACKS[method]
    rows = []
    for b in budgets:
        reports = []
        for i, g in enumerate(graphs):
            extra = dict(kwargs)
            if method != "gradargmax":
                extra["rng"] = np.random.default_rng([seed, i])
            reports.append(attack(model, g, budget=AttackBudget(b, max_queries), **extra).report)
        rows.append({"budget": b, "tra": compute_tra(reports),
                     "mean_rpr": float(np.mean([r.rpr for r in reports])), "reports": reports})
    return rows
