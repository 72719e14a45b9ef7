"""Simple-path enumeration inside ego-nets, random-walk path weights, path featurization.

Every head node is expanded into its maximal simple paths of length <= n. A
path's weight is the probability that a non-revisiting random walker started
at the head traces it, choosing uniformly among the admissible
(edge, unvisited neighbour) continuations at each step and stopping at dead
ends. Weights of one head therefore sum to one.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hin import EgoNet, HinError, HinGraph, UnknownNodeError, bfs_distances
from .trees import PathDataset


class PathExplosionError(RuntimeError):
    """A configured cap on paths per head or ego-net size was exceeded."""


class UnlabeledHeadError(HinError):
    pass


class LayoutMismatchError(HinError):
    pass


@dataclass(frozen=True)
class MetapathSchema:
    """Admissible type sequences for path enumeration.

    ``sequences=None`` is the wildcard: every simple path up to ``max_length``.
    Otherwise each sequence alternates node and edge type names, starting with
    a node type: ``("company", "owns", "admin", ...)``. A path is admissible
    when its type sequence is a prefix of some listed sequence. The length-0
    path is always admissible.
    """

    max_length: int
    sequences: tuple[tuple[str, ...], ...] | None = None
    _prefixes: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_length < 0:
            raise ValueError("max_length must be >= 0")
        if self.sequences is not None:
            seqs = tuple(tuple(s) for s in self.sequences)
            for s in seqs:
                if len(s) == 0 or len(s) % 2 == 0:
                    raise ValueError(f"metapath {s!r} must alternate node/edge types and end on a node type")
            object.__setattr__(self, "sequences", seqs)
            object.__setattr__(self, "_prefixes",
                               frozenset(s[:i] for s in seqs for i in range(1, len(s) + 1, 2)))

    @property
    def wildcard(self) -> bool:
        return self.sequences is None

    def admits(self, type_seq: tuple[str, ...]) -> bool:
        if len(type_seq) == 1:
            return True
        return self.wildcard or type_seq in self._prefixes

    def validate(self, schema) -> None:
        for s in self.sequences or ():
            for i, name in enumerate(s):
                if i % 2 == 0:
                    schema.node_type(name)
                else:
                    schema.edge_type(name)

    def to_dict(self) -> dict:
        return {"max_length": self.max_length,
                "sequences": None if self.sequences is None else [list(s) for s in self.sequences]}

    @classmethod
    def from_dict(cls, d) -> "MetapathSchema":
        seqs = d.get("sequences")
        return cls(int(d["max_length"]), None if seqs is None else tuple(tuple(s) for s in seqs))


def wildcard(n: int) -> MetapathSchema:
    return MetapathSchema(n)


@dataclass(frozen=True)
class SimplePath:
    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    dead_end: bool

    @property
    def length(self) -> int:
        return len(self.edges)

    @property
    def head(self) -> int:
        return self.nodes[0]


def _walk(g: HinGraph, head: int, max_len: int, schema: MetapathSchema | None,
          allowed=None, max_paths: int | None = None) -> list[tuple[SimplePath, float]]:
    """Depth-first enumeration of maximal admissible paths with their walk probabilities."""
    names_n = [t.name for t in g.schema.node_types]
    names_e = [t.name for t in g.schema.edge_types]
    restricted = schema is not None and not schema.wildcard
    out: list[tuple[SimplePath, float]] = []
    nodes = [head]
    edges: list[int] = []
    types = [names_n[g.node_type[head]]] if restricted else None
    visited = {head}

    def continuations(u):
        res = []
        for e, w in g.adjacency[u]:
            if w in visited or (allowed is not None and w not in allowed):
                continue
            if restricted:
                seq = (*types, names_e[g.edge_type[e]], names_n[g.node_type[w]])
                if seq not in schema._prefixes:
                    continue
            res.append((e, w))
        return res

    def rec(u, prob):
        conts = continuations(u) if len(edges) < max_len else ()
        if not conts:
            out.append((SimplePath(tuple(nodes), tuple(edges), len(edges) < max_len), prob))
            if max_paths is not None and len(out) > max_paths:
                raise PathExplosionError(f"head {g.ids[head]!r}: more than {max_paths} paths")
            return
        step = prob / len(conts)
        for e, w in conts:
            nodes.append(w)
            edges.append(e)
            visited.add(w)
            if restricted:
                types.extend((names_e[g.edge_type[e]], names_n[g.node_type[w]]))
            rec(w, step)
            if restricted:
                del types[-2:]
            visited.discard(w)
            edges.pop()
            nodes.pop()

    rec(head, 1.0)
    return out


def enumerate_paths(ego: EgoNet, schema: MetapathSchema | None = None) -> list[SimplePath]:
    """Maximal admissible simple paths from the ego-net's head, in DFS order.

    Paths never leave the ego-net and are at most ``min(schema.max_length, ego.radius)`` long.
    """
    n = ego.radius if schema is None else min(schema.max_length, ego.radius)
    return [p for p, _ in _walk(ego.graph, ego.head, n, schema, allowed=ego.nodes)]


def weighted_paths(g: HinGraph, head: int, n: int, schema: MetapathSchema | None = None,
                   max_paths: int | None = None) -> list[tuple[SimplePath, float]]:
    """Maximal admissible paths of length <= ``n`` from ``head`` with their walk probabilities, DFS order."""
    if not 0 <= head < g.num_nodes:
        raise UnknownNodeError(f"unknown node index {head}")
    return _walk(g, head, n, schema, max_paths=max_paths)


def path_weight(ego: EgoNet, path: SimplePath, schema: MetapathSchema | None = None) -> float:
    """Probability of the non-revisiting uniform random walker tracing ``path``."""
    g = ego.graph
    if not path.nodes or path.nodes[0] != ego.head or len(path.nodes) != len(path.edges) + 1:
        raise HinError("path does not start at the ego-net head")
    names_n = [t.name for t in g.schema.node_types]
    names_e = [t.name for t in g.schema.edge_types]
    restricted = schema is not None and not schema.wildcard
    visited = {path.nodes[0]}
    types = (names_n[g.node_type[path.nodes[0]]],)
    prob = 1.0
    for i, (e, w) in enumerate(zip(path.edges, path.nodes[1:])):
        u = path.nodes[i]
        if w not in ego.nodes or w in visited or (e, w) not in g.adjacency[u]:
            raise HinError(f"path {path.nodes} is inconsistent with the ego-net")
        options = 0
        for e2, w2 in g.adjacency[u]:
            if w2 in visited or w2 not in ego.nodes:
                continue
            if restricted and (*types, names_e[g.edge_type[e2]], names_n[g.node_type[w2]]) not in schema._prefixes:
                continue
            options += 1
        prob /= options
        visited.add(w)
        types = (*types, names_e[g.edge_type[e]], names_n[g.node_type[w]])
    return prob


@dataclass(frozen=True)
class Column:
    slot: str
    type: str
    feature: str
    categorical: bool

    @property
    def name(self) -> str:
        return f"{self.slot}.{self.type}.{self.feature}"


@dataclass(frozen=True)
class ColumnLayout:
    """Fixed column order for featurized paths of length <= n.

    Slot ``H`` (head) holds one block per node type; each step ``k`` adds an
    ``E<k>`` slot with one block per edge type followed by an ``N<k>`` slot
    with one block per node type. Blocks follow schema order.
    """

    n: int
    columns: tuple[Column, ...]
    node_offsets: tuple[tuple[int, ...], ...]  # [slot 0..n][node type] -> first column
    edge_offsets: tuple[tuple[int, ...], ...]  # [step 1..n][edge type] -> first column (index 0 unused)

    @classmethod
    def from_schema(cls, schema, n: int) -> "ColumnLayout":
        cols: list[Column] = []
        node_off, edge_off = [], [()]

        def node_block(slot):
            offs = []
            for t in schema.node_types:
                offs.append(len(cols))
                cols.extend(Column(slot, t.name, f.name, f.categorical) for f in t.features)
            node_off.append(tuple(offs))

        node_block("H")
        for k in range(1, n + 1):
            offs = []
            for t in schema.edge_types:
                offs.append(len(cols))
                cols.extend(Column(f"E{k}", t.name, f.name, f.categorical) for f in t.features)
            edge_off.append(tuple(offs))
            node_block(f"N{k}")
        return cls(n, tuple(cols), tuple(node_off), tuple(edge_off))

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def categorical(self) -> np.ndarray:
        return np.array([c.categorical for c in self.columns], dtype=bool)

    @property
    def digest(self) -> str:
        payload = json.dumps([[c.name, c.categorical] for c in self.columns]).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"n": self.n, "digest": self.digest,
                "columns": [{"slot": c.slot, "type": c.type, "feature": c.feature, "categorical": c.categorical}
                            for c in self.columns]}


def _check_layout(g: HinGraph, layout: ColumnLayout) -> None:
    if ColumnLayout.from_schema(g.schema, layout.n).digest != layout.digest:
        raise LayoutMismatchError("graph schema does not match the column layout")


def _fill(row: np.ndarray, g: HinGraph, path: SimplePath, layout: ColumnLayout) -> None:
    nodes, edges = path.nodes, path.edges
    v0 = nodes[0]
    off = layout.node_offsets[0][g.node_type[v0]]
    f = g.node_features[v0]
    row[off:off + len(f)] = f
    for k in range(1, len(nodes)):
        e = edges[k - 1]
        f = g.edge_features[e]
        if len(f):
            off = layout.edge_offsets[k][g.edge_type[e]]
            row[off:off + len(f)] = f
        v = nodes[k]
        f = g.node_features[v]
        off = layout.node_offsets[k][g.node_type[v]]
        row[off:off + len(f)] = f


def featurize_path(g: HinGraph, path: SimplePath, layout: ColumnLayout) -> np.ndarray:
    """Feature vector of one path; blocks of non-matching types and unused steps are missing (NaN)."""
    _check_layout(g, layout)
    if path.length > layout.n:
        raise LayoutMismatchError(f"path of length {path.length} exceeds layout radius {layout.n}")
    row = np.full(layout.width, np.nan)
    _fill(row, g, path, layout)
    return row


@dataclass
class PathTable:
    """Featurized paths of a set of heads, before labels are attached."""

    X: np.ndarray
    weight: np.ndarray
    head: np.ndarray  # dense node index of each row's head
    group: np.ndarray  # position of the row's head in the requested head sequence
    paths: list[SimplePath]
    layout: ColumnLayout


def featurize_heads(g: HinGraph, heads: Iterable[int], n: int, schema: MetapathSchema | None = None,
                    max_paths: int | None = None, max_ego_nodes: int | None = None) -> PathTable:
    """Enumerate, weight and featurize the paths of every head (dense indices), head order then DFS order."""
    if schema is None:
        schema = wildcard(n)
    elif schema.max_length != n:
        raise ValueError(f"metapath schema max_length {schema.max_length} != radius {n}")
    schema.validate(g.schema)
    layout = ColumnLayout.from_schema(g.schema, n)
    paths, weights, heads_out, groups = [], [], [], []
    for i, v in enumerate(heads):
        v = int(v)
        if not 0 <= v < g.num_nodes:
            raise UnknownNodeError(f"unknown node index {v}")
        if max_ego_nodes is not None:
            size = len(bfs_distances(g, v, n))
            if size > max_ego_nodes:
                raise PathExplosionError(f"ego-net of {g.ids[v]!r} has {size} nodes (cap {max_ego_nodes})")
        for p, w in _walk(g, v, n, schema, max_paths=max_paths):
            paths.append(p)
            weights.append(w)
            heads_out.append(v)
            groups.append(i)
    X = np.full((len(paths), layout.width), np.nan)
    for i, p in enumerate(paths):
        _fill(X[i], g, p, layout)
    return PathTable(X, np.asarray(weights, dtype=float), np.asarray(heads_out, dtype=np.int64),
                     np.asarray(groups, dtype=np.int64), paths, layout)


def build_dataset(g: HinGraph, heads: Iterable[int], n: int, schema: MetapathSchema | None = None,
                  max_paths: int | None = None, max_ego_nodes: int | None = None) -> PathDataset:
    """Training table: one row per (head, path), labelled with the head's label."""
    heads = [int(v) for v in heads]
    for v in heads:
        if not 0 <= v < g.num_nodes:
            raise UnknownNodeError(f"unknown node index {v}")
        if g.labels[v] < 0:
            raise UnlabeledHeadError(f"head {g.ids[v]!r} has no label")
    t = featurize_heads(g, heads, n, schema, max_paths, max_ego_nodes)
    return PathDataset(t.X, t.weight, g.labels[t.head].astype(np.int64), t.head,
                       categorical=t.layout.categorical, layout=t.layout, paths=t.paths)


# --------------------------------------------------------------------------- exports


def write_paths_csv(g: HinGraph, table, path: str | Path) -> None:
    """``head_id,path_nodes,path_edges,weight`` with ``|``-joined node ids and edge indices."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["head_id", "path_nodes", "path_edges", "weight"])
        for p, wt in zip(table.paths, table.weight):
            w.writerow([g.ids[p.head], "|".join(str(g.ids[v]) for v in p.nodes),
                        "|".join(str(e) for e in p.edges), repr(float(wt))])


def write_dataset_csv(g: HinGraph, ds: PathDataset, path: str | Path) -> None:
    """Layout columns plus reserved ``__head``, ``__weight``, ``__label``; missing cells are blank."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ds.layout.names + ["__head", "__weight", "__label"])
        for row, h, wt, y in zip(ds.X, ds.head, ds.weight, ds.label):
            w.writerow(["" if math.isnan(x) else repr(float(x)) for x in row]
                       + [g.ids[h], repr(float(wt)), int(y)])
