"""Heterogeneous information network: schema, immutable graph, ego-nets, CSV/JSON I/O.

A graph is built once from node and edge records and never mutated. Nodes and
edges get dense integer indices in input order; all algorithms work on those
indices and only translate back to external ids at the boundaries.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np

MISSING = float("nan")

REAL = "real"
CATEGORICAL = "categorical"


class HinError(ValueError):
    """Base class for graph validation and ingestion errors."""


class UnknownTypeError(HinError):
    pass


class ArityMismatchError(HinError):
    pass


class DanglingEndpointError(HinError):
    pass


class DuplicateNodeError(HinError):
    pass


class DuplicateEdgeError(HinError):
    pass


class SelfLoopError(HinError):
    pass


class UnknownNodeError(HinError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class GraphParseError(HinError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = REAL

    def __post_init__(self):
        if self.kind not in (REAL, CATEGORICAL):
            raise HinError(f"feature {self.name!r}: kind must be 'real' or 'categorical', got {self.kind!r}")

    @property
    def categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class NodeType:
    name: str
    features: tuple[FeatureSpec, ...] = ()
    index: int = -1

    @property
    def arity(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class EdgeType:
    name: str
    source_type: str | None = None
    target_type: str | None = None
    features: tuple[FeatureSpec, ...] = ()
    index: int = -1

    @property
    def arity(self) -> int:
        return len(self.features)

    def connects(self, a: str, b: str) -> bool:
        if self.source_type is None and self.target_type is None:
            return True
        ends = {self.source_type, self.target_type} - {None}
        if len(ends) == 1 and None in (self.source_type, self.target_type):
            return bool({a, b} & ends)
        return (a, b) in ((self.source_type, self.target_type), (self.target_type, self.source_type))


def _features(spec) -> tuple[FeatureSpec, ...]:
    out = []
    for f in spec or ():
        if isinstance(f, FeatureSpec):
            out.append(f)
        elif isinstance(f, str):
            out.append(FeatureSpec(f))
        else:
            out.append(FeatureSpec(f["name"], f.get("kind", REAL)))
    names = [f.name for f in out]
    if len(set(names)) != len(names):
        raise HinError(f"duplicate feature names in {names}")
    return tuple(out)


class Schema:
    """Registry of node and edge types, in declaration order."""

    def __init__(self, node_types: Iterable, edge_types: Iterable = ()):
        self.node_types: tuple[NodeType, ...] = ()
        self.edge_types: tuple[EdgeType, ...] = ()
        nts = []
        for i, t in enumerate(node_types):
            if isinstance(t, NodeType):
                nts.append(NodeType(t.name, t.features, i))
            else:
                nts.append(NodeType(t["name"], _features(t.get("features")), i))
        ets = []
        for i, t in enumerate(edge_types):
            if isinstance(t, EdgeType):
                ets.append(EdgeType(t.name, t.source_type, t.target_type, t.features, i))
            else:
                ets.append(EdgeType(t["name"], t.get("source_type"), t.get("target_type"),
                                    _features(t.get("features")), i))
        self.node_types = tuple(nts)
        self.edge_types = tuple(ets)
        self._nt = {t.name: t for t in nts}
        self._et = {t.name: t for t in ets}
        if len(self._nt) != len(nts):
            raise HinError("node type names must be unique")
        if len(self._et) != len(ets):
            raise HinError("edge type names must be unique")
        for et in ets:
            for end in (et.source_type, et.target_type):
                if end is not None and end not in self._nt:
                    raise UnknownTypeError(f"edge type {et.name!r} references unknown node type {end!r}")

    def node_type(self, name: str) -> NodeType:
        try:
            return self._nt[name]
        except KeyError:
            raise UnknownTypeError(f"unknown node type {name!r}") from None

    def edge_type(self, name: str) -> EdgeType:
        try:
            return self._et[name]
        except KeyError:
            raise UnknownTypeError(f"unknown edge type {name!r}") from None

    def to_dict(self) -> dict:
        def feats(fs):
            return [{"name": f.name, "kind": f.kind} for f in fs]

        return {
            "node_types": [{"name": t.name, "features": feats(t.features)} for t in self.node_types],
            "edge_types": [
                {"name": t.name, "source_type": t.source_type, "target_type": t.target_type,
                 "features": feats(t.features)}
                for t in self.edge_types
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        return cls(d.get("node_types", ()), d.get("edge_types", ()))

    def __eq__(self, other) -> bool:
        return isinstance(other, Schema) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def __repr__(self) -> str:
        return (f"Schema(node_types={[t.name for t in self.node_types]}, "
                f"edge_types={[t.name for t in self.edge_types]})")


def _as_vector(values, arity: int, what: str, specs=()) -> np.ndarray:
    vals = [] if values is None else list(values)
    if len(vals) != arity:
        raise ArityMismatchError(f"{what}: got {len(vals)} features, type expects {arity}")
    out = np.empty(arity, dtype=float)
    for i, v in enumerate(vals):
        if v is None or (isinstance(v, str) and v.strip() == ""):
            out[i] = MISSING
            continue
        x = float(v)
        if math.isinf(x):
            raise HinError(f"{what}: feature {i} is infinite")
        if specs and specs[i].categorical and not x.is_integer():
            raise HinError(f"{what}: categorical feature {specs[i].name!r} needs an integer code, got {v!r}")
        out[i] = x
    out.flags.writeable = False
    return out


class HinGraph:
    """Typed, attributed, undirected multigraph. Immutable after construction.

    Use :func:`build_graph` to create one. Nodes are addressed by dense index
    ``0..num_nodes-1`` internally; ``ids[i]`` is the external id of node ``i``.
    """

    def __init__(self, schema: Schema, ids, node_type, node_features, labels,
                 src, dst, edge_type, edge_features):
        self.schema = schema
        self.ids: tuple = tuple(ids)
        self.index: dict = {nid: i for i, nid in enumerate(self.ids)}
        self.node_type = np.asarray(node_type, dtype=np.int64)
        self.node_features: tuple[np.ndarray, ...] = tuple(node_features)
        self.labels = np.asarray(labels, dtype=np.int8)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.edge_type = np.asarray(edge_type, dtype=np.int64)
        self.edge_features: tuple[np.ndarray, ...] = tuple(edge_features)
        for a in (self.node_type, self.labels, self.src, self.dst, self.edge_type):
            a.flags.writeable = False

        adj: list[list[tuple[int, int, int]]] = [[] for _ in self.ids]
        for e, (u, v, t) in enumerate(zip(self.src.tolist(), self.dst.tolist(), self.edge_type.tolist())):
            adj[u].append((v, t, e))
            adj[v].append((u, t, e))
        # (edge, neighbour) pairs ordered by neighbour index, then edge type, then edge index
        self.adjacency: tuple[tuple[tuple[int, int], ...], ...] = tuple(
            tuple((e, w) for w, _, e in sorted(lst)) for lst in adj
        )

    @property
    def num_nodes(self) -> int:
        return len(self.ids)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def node(self, node_id) -> int:
        """Dense index of an external node id."""
        try:
            return self.index[node_id]
        except (KeyError, TypeError):
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def type_of(self, v: int) -> NodeType:
        return self.schema.node_types[self.node_type[v]]

    def label(self, v: int) -> int | None:
        y = int(self.labels[v])
        return None if y < 0 else y

    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    def neighbors(self, v: int) -> list[int]:
        return sorted({w for _, w in self.adjacency[v]})

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def with_labels(self, labels: Mapping | Sequence | np.ndarray) -> "HinGraph":
        """Copy of the graph with a new label map (dense-indexed array or id->label mapping)."""
        if isinstance(labels, Mapping):
            arr = np.full(self.num_nodes, -1, dtype=np.int8)
            for nid, y in labels.items():
                arr[self.node(nid)] = -1 if y is None else int(y)
        else:
            arr = np.asarray(labels, dtype=np.int8).copy()
            if arr.shape != (self.num_nodes,):
                raise HinError("label array length must equal node count")
        if np.any((arr != -1) & (arr != 0) & (arr != 1)):
            raise HinError("labels must be 0, 1 or unknown")
        return HinGraph(self.schema, self.ids, self.node_type, self.node_features, arr,
                        self.src, self.dst, self.edge_type, self.edge_features)

    def with_node_features(self, features: Sequence[Sequence[float]]) -> "HinGraph":
        if len(features) != self.num_nodes:
            raise HinError("need one feature vector per node")
        feats = [_as_vector(f, self.type_of(v).arity, f"node {self.ids[v]!r}", self.type_of(v).features) for v, f in enumerate(features)]
        return HinGraph(self.schema, self.ids, self.node_type, feats, self.labels,
                        self.src, self.dst, self.edge_type, self.edge_features)

    def subgraph(self, nodes: Iterable[int]) -> tuple["HinGraph", int]:
        """Induced subgraph on dense node indices; returns (graph, number of dropped edges)."""
        keep = np.zeros(self.num_nodes, dtype=bool)
        keep[list(nodes)] = True
        order = np.flatnonzero(keep)
        remap = -np.ones(self.num_nodes, dtype=np.int64)
        remap[order] = np.arange(len(order))
        emask = keep[self.src] & keep[self.dst]
        touched = keep[self.src] | keep[self.dst]
        dropped = int(np.count_nonzero(touched & ~emask))
        eidx = np.flatnonzero(emask)
        g = HinGraph(self.schema, [self.ids[i] for i in order], self.node_type[order],
                     [self.node_features[i] for i in order], self.labels[order],
                     remap[self.src[eidx]], remap[self.dst[eidx]], self.edge_type[eidx],
                     [self.edge_features[i] for i in eidx])
        return g, dropped

    def __eq__(self, other) -> bool:
        if not isinstance(other, HinGraph):
            return NotImplemented
        same_arrays = all(
            np.array_equal(a, b)
            for a, b in ((self.node_type, other.node_type), (self.labels, other.labels),
                         (self.src, other.src), (self.dst, other.dst),
                         (self.edge_type, other.edge_type))
        )
        return (
            self.schema == other.schema
            and self.ids == other.ids
            and same_arrays
            and all(np.array_equal(a, b, equal_nan=True) for a, b in zip(self.node_features, other.node_features))
            and all(np.array_equal(a, b, equal_nan=True) for a, b in zip(self.edge_features, other.edge_features))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"HinGraph(|V|={self.num_nodes}, |E|={self.num_edges}, {self.schema!r})"


def build_graph(nodes: Iterable, edges: Iterable, schema: Schema | Mapping) -> HinGraph:
    """Validate node and edge records and assemble an immutable :class:`HinGraph`.

    ``nodes`` holds ``(id, type, features[, label])`` tuples and ``edges`` holds
    ``(u, v, type[, features])`` tuples. Dense indices follow input order.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_dict(schema)

    ids, ntype, nfeat, labels = [], [], [], []
    index: dict[Hashable, int] = {}
    for rec in nodes:
        nid, tname, feats = rec[0], rec[1], rec[2]
        label = rec[3] if len(rec) > 3 else None
        t = schema.node_type(tname)
        if nid in index:
            raise DuplicateNodeError(f"duplicate node id {nid!r}")
        index[nid] = len(ids)
        ids.append(nid)
        ntype.append(t.index)
        nfeat.append(_as_vector(feats, t.arity, f"node {nid!r} of type {tname!r}", t.features))
        if label is None or (isinstance(label, float) and math.isnan(label)) or label == "":
            labels.append(-1)
        elif int(label) in (0, 1):
            labels.append(int(label))
        else:
            raise HinError(f"node {nid!r}: label must be 0 or 1, got {label!r}")

    src, dst, etype, efeat = [], [], [], []
    seen: set[tuple[int, int, int]] = set()
    for rec in edges:
        u, v, tname = rec[0], rec[1], rec[2]
        feats = rec[3] if len(rec) > 3 else ()
        t = schema.edge_type(tname)
        for end in (u, v):
            if end not in index:
                raise DanglingEndpointError(f"dangling endpoint: edge ({u!r}, {v!r}) references absent node {end!r}")
        iu, iv = index[u], index[v]
        if iu == iv:
            raise SelfLoopError(f"self-loop on node {u!r}")
        tu, tv = schema.node_types[ntype[iu]].name, schema.node_types[ntype[iv]].name
        if not t.connects(tu, tv):
            raise UnknownTypeError(f"edge type {tname!r} cannot connect {tu!r} and {tv!r}")
        key = (min(iu, iv), max(iu, iv), t.index)
        if key in seen:
            raise DuplicateEdgeError(f"duplicate edge ({u!r}, {v!r}) of type {tname!r}")
        seen.add(key)
        src.append(iu)
        dst.append(iv)
        etype.append(t.index)
        efeat.append(_as_vector(feats, t.arity, f"edge ({u!r}, {v!r}) of type {tname!r}", t.features))

    return HinGraph(schema, ids, ntype, nfeat, labels, src, dst, etype, efeat)


@dataclass(frozen=True)
class EgoNet:
    """Induced subgraph of all nodes within ``radius`` hops of ``head``."""

    graph: HinGraph = field(repr=False)
    head: int
    radius: int
    nodes: frozenset
    edges: frozenset
    distance: Mapping[int, int] = field(repr=False, compare=False)


def bfs_distances(g: HinGraph, v: int, radius: int | None = None) -> dict[int, int]:
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        d = dist[u]
        if radius is not None and d >= radius:
            continue
        for _, w in g.adjacency[u]:
            if w not in dist:
                dist[w] = d + 1
                queue.append(w)
    return dist


def egonet(g: HinGraph, v: int, n: int) -> EgoNet:
    """Ego-net of dense node ``v`` with radius ``n``."""
    if not (isinstance(v, (int, np.integer)) and 0 <= v < g.num_nodes):
        raise UnknownNodeError(f"unknown node {v!r}")
    if n < 0:
        raise ValueError("radius must be >= 0")
    dist = bfs_distances(g, int(v), n)
    nodes = frozenset(dist)
    edges = frozenset(e for u in nodes for e, w in g.adjacency[u] if w in nodes)
    return EgoNet(g, int(v), n, nodes, edges, dist)


# --------------------------------------------------------------------------- I/O


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def save_graph(g: HinGraph, directory: str | Path, provenance: Mapping[str, str] | None = None) -> list[Path]:
    """Write ``schema.json``, ``nodes.<type>.csv`` and ``edges.<type>.csv`` into ``directory``.

    ``provenance`` key/values go into ``schema.json`` and a leading ``#`` line of each CSV.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    prov = dict(provenance or {})
    comment = "# " + " ".join(f"{k}={v}" for k, v in prov.items()) + "\n" if prov else ""
    written = [d / "schema.json"]
    written[0].write_text(json.dumps({**prov, **g.schema.to_dict()}, indent=2) + "\n")
    for t in g.schema.node_types:
        p = d / f"nodes.{t.name}.csv"
        with p.open("w", newline="") as fh:
            fh.write(comment)
            w = csv.writer(fh)
            w.writerow(["node_id", "node_type", "label"] + [f.name for f in t.features])
            for v in np.flatnonzero(g.node_type == t.index):
                y = g.label(v)
                w.writerow([g.ids[v], t.name, "" if y is None else y] + [_fmt(x) for x in g.node_features[v]])
        written.append(p)
    for t in g.schema.edge_types:
        p = d / f"edges.{t.name}.csv"
        with p.open("w", newline="") as fh:
            fh.write(comment)
            w = csv.writer(fh)
            w.writerow(["src", "dst"] + [f.name for f in t.features])
            for e in np.flatnonzero(g.edge_type == t.index):
                w.writerow([g.ids[g.src[e]], g.ids[g.dst[e]]] + [_fmt(x) for x in g.edge_features[e]])
        written.append(p)
    return written


def _read_rows(path: Path, min_fields: int):
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise GraphParseError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
            while header and header[0].startswith("#"):
                header = next(reader)
        except StopIteration:
            raise GraphParseError(f"{path}:1: missing header") from None
        except csv.Error as exc:
            raise GraphParseError(f"{path}:1: {exc}") from None
        if len(header) < min_fields:
            raise GraphParseError(f"{path}:1: header needs at least {min_fields} columns")
        try:
            for row in reader:
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                yield reader.line_num, row
        except csv.Error as exc:
            raise GraphParseError(f"{path}:{reader.line_num}: {exc}") from None


def _maybe_int_ids(values: list[str]) -> bool:
    try:
        return all(str(int(v)) == v for v in values)
    except ValueError:
        return False


def load_graph(schema_file: str | Path, node_files: Mapping[str, str | Path] | None = None,
               edge_files: Mapping[str, str | Path] | None = None) -> HinGraph:
    """Load a graph bundle.

    ``schema_file`` may be the bundle directory or its ``schema.json``. Per-type
    node/edge CSVs default to ``nodes.<type>.csv`` / ``edges.<type>.csv`` beside
    the schema; a missing edge file means no edges of that type. Node ids are
    parsed as integers when every id in the bundle is an integer literal.
    """
    sp = Path(schema_file)
    if sp.is_dir():
        sp = sp / "schema.json"
    try:
        schema = Schema.from_dict(json.loads(sp.read_text()))
    except OSError as exc:
        raise GraphParseError(f"{sp}: cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"{sp}:{exc.lineno}: {exc.msg}") from None
    base = sp.parent
    node_files = dict(node_files or {})
    edge_files = dict(edge_files or {})

    raw_nodes = []
    for t in schema.node_types:
        p = Path(node_files.get(t.name, base / f"nodes.{t.name}.csv"))
        if not p.exists() and t.name not in node_files:
            continue
        for line, row in _read_rows(p, 3):
            if len(row) < 3:
                raise GraphParseError(f"{p}:{line}: expected node_id,node_type,label,...")
            nid, tname, label, feats = row[0], row[1], row[2].strip(), row[3:]
            if tname != t.name:
                raise UnknownTypeError(f"{p}:{line}: node {nid!r} has type {tname!r}, file is for {t.name!r}")
            if len(feats) != t.arity:
                raise ArityMismatchError(
                    f"{p}:{line}: node {nid!r} has {len(feats)} features, type {t.name!r} expects {t.arity}")
            if label not in ("", "0", "1"):
                raise GraphParseError(f"{p}:{line}: label must be blank, 0 or 1, got {label!r}")
            try:
                vals = [None if f.strip() == "" or f.strip().lower() == "nan" else float(f) for f in feats]
            except ValueError as exc:
                raise GraphParseError(f"{p}:{line}: {exc}") from None
            raw_nodes.append((line, p, nid, tname, vals, None if label == "" else int(label)))

    raw_edges = []
    for t in schema.edge_types:
        p = Path(edge_files.get(t.name, base / f"edges.{t.name}.csv"))
        if not p.exists() and t.name not in edge_files:
            continue
        for line, row in _read_rows(p, 2):
            if len(row) != 2 + t.arity:
                raise ArityMismatchError(
                    f"{p}:{line}: edge row has {len(row) - 2} features, type {t.name!r} expects {t.arity}")
            try:
                vals = [None if f.strip() == "" or f.strip().lower() == "nan" else float(f) for f in row[2:]]
            except ValueError as exc:
                raise GraphParseError(f"{p}:{line}: {exc}") from None
            raw_edges.append((line, p, row[0], row[1], t.name, vals))

    ids = [r[2] for r in raw_nodes] + [r[2] for r in raw_edges] + [r[3] for r in raw_edges]
    conv = int if ids and _maybe_int_ids(ids) else str
    nodes = [(conv(nid), t, vals, lab) for _, _, nid, t, vals, lab in raw_nodes]
    edges = [(conv(u), conv(v), t, vals) for _, _, u, v, t, vals in raw_edges]
    return build_graph(nodes, edges, schema)
