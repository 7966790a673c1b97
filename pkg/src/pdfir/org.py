"""Object reference graphs built from IR programs."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .ir import IrEntry, IrProgram, VType, parse_ir_text
from .parser import ObjectId

logger = logging.getLogger(__name__)

__all__ = ["Org", "extract_refs", "build_org", "org_to_json", "org_from_json", "save_org", "load_org"]

_REF_TOKEN = re.compile(r"^\d+-\d+$")


def _list_tokens(text: str) -> list[str]:
    """Bare tokens of a rendered list value; strings and hex strings are skipped."""
    tokens: list[str] = []
    i, n = 0, len(text)
    current: list[str] = []

    def flush():
        if current:
            tokens.append("".join(current))
            current.clear()

    while i < n:
        c = text[i]
        if c == "(":
            flush()
            depth = 1
            i += 1
            while i < n and depth:
                if text[i] == "\\":
                    i += 2
                    continue
                depth += {"(": 1, ")": -1}.get(text[i], 0)
                i += 1
            continue
        if c == "<" and text.startswith("<<", i):
            flush()
            i += 2
            continue
        if c == "<":
            flush()
            j = text.find(">", i)
            i = n if j < 0 else j + 1
            continue
        if c == ">" and text.startswith(">>", i):
            flush()
            i += 2
            continue
        if c in "[], ":
            flush()
            i += 1
            continue
        current.append(c)
        i += 1
    flush()
    return tokens


def extract_refs(entry: IrEntry) -> list[ObjectId]:
    if entry.vtype is VType.REF:
        return [ObjectId.parse(entry.value)]
    if entry.vtype is VType.REF_LIST:
        out = []
        for token in _list_tokens(entry.value):
            if _REF_TOKEN.match(token):
                out.append(ObjectId.parse(token))
            else:
                logger.warning("%s %s: skipping malformed reference %r", entry.index, entry.attribute, token)
        return out
    if entry.vtype is VType.MIX_LIST:
        return [ObjectId.parse(t) for t in _list_tokens(entry.value) if _REF_TOKEN.match(t)]
    return []


@dataclass(frozen=True)
class Org:
    """Directed graph with one node per object; edges point from referrer to referee."""

    nodes: tuple[tuple[ObjectId, tuple[IrEntry, ...]], ...]
    edges: frozenset[tuple[ObjectId, ObjectId]]

    def __post_init__(self):
        ids = [n for n, _ in self.nodes]
        if ids != sorted(set(ids)):
            raise ValueError("nodes must be unique and in ascending id order")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge {a}->{b} has an endpoint outside the node set")

    @property
    def node_ids(self) -> list[ObjectId]:
        return [n for n, _ in self.nodes]

    def entries(self, oid: ObjectId) -> tuple[IrEntry, ...]:
        return dict(self.nodes)[oid]

    def sorted_edges(self) -> list[tuple[ObjectId, ObjectId]]:
        return sorted(self.edges)

    def edge_index(self) -> list[tuple[int, int]]:
        """Edges as positions into :attr:`node_ids`."""
        pos = {n: i for i, n in enumerate(self.node_ids)}
        return [(pos[a], pos[b]) for a, b in self.sorted_edges()]

    def __len__(self) -> int:
        return len(self.nodes)


def build_org(program: IrProgram) -> Org:
    nodes: dict[ObjectId, tuple[IrEntry, ...]] = dict(program.entries)
    edges: set[tuple[ObjectId, ObjectId]] = set()
    for oid, entries in program.entries.items():
        for entry in entries:
            for target in extract_refs(entry):
                edges.add((oid, target))
                nodes.setdefault(target, ())
    return Org(tuple(sorted(nodes.items())), frozenset(edges))


def org_to_json(org: Org) -> str:
    doc = {
        "nodes": [{"id": str(n), "ir": [e.format() for e in entries]} for n, entries in org.nodes],
        "edges": [[str(a), str(b)] for a, b in org.sorted_edges()],
    }
    return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"


def org_from_json(text: str) -> Org:
    doc = json.loads(text)
    nodes = []
    for node in doc["nodes"]:
        oid = ObjectId.parse(node["id"])
        program = parse_ir_text("\n".join(node["ir"]))
        entries = program.entries.get(oid, ())
        if len(program.entries) > (1 if entries else 0):
            raise ValueError(f"node {oid} carries IR lines of another object")
        nodes.append((oid, entries))
    edges = frozenset((ObjectId.parse(a), ObjectId.parse(b)) for a, b in doc["edges"])
    return Org(tuple(sorted(nodes)), edges)


def save_org(org: Org, path: str | Path) -> None:
    Path(path).write_text(org_to_json(org), encoding="utf-8")


def load_org(path: str | Path) -> Org:
    return org_from_json(Path(path).read_text(encoding="utf-8"))
