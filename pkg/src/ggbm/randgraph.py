"""Random graph models, i.i.d. node attributes and the two synthetic fraud labelers.

Generators return homogeneous :class:`~ggbm.hin.HinGraph` objects with one node
type ``node`` (one feature ``x``, missing until :func:`assign_features`) and
one featureless edge type ``link``.

Erdős–Rényi, stochastic block, Watts–Strogatz and Barabási–Albert graphs come
from networkx. Kleinberg's grid (truncated to ``n_nodes``, undirected) and the
Bianconi–Barabási fitness model are built here.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import networkx as nx
import numpy as np

from .hin import HinGraph, Schema, build_graph, bfs_distances
from .paths import weighted_paths, wildcard

MODELS = ("ER", "SBM", "WS", "Kleinberg", "BA", "BB")
MODEL_NAMES = {
    "BA": "Barabási–Albert",
    "BB": "Bianconi-Barabási",
    "ER": "Erdős–Rényi",
    "Kleinberg": "Kleinberg Small World",
    "SBM": "Stochastic Block Model",
    "WS": "Watts-Strogatz",
}
AGGREGATIONS = ("min", "max", "mean")

HOMOGENEOUS_SCHEMA = Schema(
    [{"name": "node", "features": [{"name": "x", "kind": "real"}]}],
    [{"name": "link", "source_type": "node", "target_type": "node", "features": []}],
)


@dataclass
class GraphModelParams:
    model: str
    n_nodes: int = 200
    seed: int = 0
    p: float = 0.02  # ER
    blocks: list[int] | None = None  # SBM; default: 4 equal blocks
    p_in: float = 0.08
    p_out: float = 0.005
    k: int = 4  # WS ring degree
    beta: float = 0.1  # WS rewiring
    side: int | None = None  # Kleinberg grid side; default ceil(sqrt(n_nodes))
    exponent: float = 2.0  # Kleinberg clustering exponent
    long_range: int = 1  # Kleinberg long-range contacts per node
    m: int = 2  # BA / BB attachments

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model: must be one of {MODELS} (got {self.model!r})")
        if self.n_nodes < 2:
            raise ValueError("n_nodes: must be >= 2")
        for name in ("p", "p_in", "p_out", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}: probability must be in [0, 1] (got {v!r})")
        if self.model in ("BA", "BB") and not 1 <= self.m < self.n_nodes:
            raise ValueError(f"m: must satisfy 1 <= m < n_nodes (got {self.m!r})")
        if self.model == "WS" and not (0 <= self.k < self.n_nodes):
            raise ValueError(f"k: must satisfy 0 <= k < n_nodes (got {self.k!r})")
        if self.model == "SBM" and self.blocks is not None:
            if sum(self.blocks) != self.n_nodes or min(self.blocks) < 1:
                raise ValueError(f"blocks: sizes must be positive and sum to n_nodes (got {self.blocks!r})")
        if self.model == "Kleinberg":
            side = self.grid_side
            if side * side < self.n_nodes:
                raise ValueError(f"side: grid {side}x{side} cannot hold {self.n_nodes} nodes")
            if self.long_range < 0 or self.exponent < 0:
                raise ValueError("long_range and exponent must be >= 0")

    @property
    def grid_side(self) -> int:
        return self.side if self.side is not None else math.isqrt(self.n_nodes - 1) + 1

    @property
    def block_sizes(self) -> list[int]:
        if self.blocks is not None:
            return list(self.blocks)
        q, r = divmod(self.n_nodes, 4)
        return [q + (i < r) for i in range(4)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown graph model fields: {sorted(unknown)}")
        return cls(**d)


def _kleinberg(prm: GraphModelParams, rng: np.random.Generator) -> set[tuple[int, int]]:
    n, side = prm.n_nodes, prm.grid_side
    coords = np.array([(i // side, i % side) for i in range(n)])
    edges = set()
    for u in range(n):
        r, c = coords[u]
        for dr, dc in ((0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if rr < side and cc < side:
                v = rr * side + cc
                if v < n:
                    edges.add((u, v))
    if prm.long_range:
        for u in range(n):
            d = np.abs(coords - coords[u]).sum(axis=1).astype(float)
            wts = np.zeros(n)
            mask = d > 0
            wts[mask] = d[mask] ** -prm.exponent
            wts /= wts.sum()
            for v in rng.choice(n, size=prm.long_range, replace=False, p=wts):
                edges.add((min(u, int(v)), max(u, int(v))))
    return edges


def _bianconi_barabasi(prm: GraphModelParams, rng: np.random.Generator) -> set[tuple[int, int]]:
    n, m = prm.n_nodes, prm.m
    fitness = rng.uniform(0.0, 1.0, size=n)
    degree = np.zeros(n)
    edges = set()
    for v in range(1, m + 1):  # initial star on m + 1 nodes
        edges.add((0, v))
        degree[0] += 1
        degree[v] += 1
    for t in range(m + 1, n):
        attract = fitness[:t] * degree[:t]
        if attract.sum() <= 0:
            attract = np.ones(t)
        targets = rng.choice(t, size=m, replace=False, p=attract / attract.sum())
        for u in targets:
            edges.add((int(u), t))
            degree[u] += 1
            degree[t] += 1
    return edges


def generate(params: GraphModelParams) -> HinGraph:
    """Draw one simple undirected graph; deterministic given ``params.seed``."""
    prm, n, seed = params, params.n_nodes, int(params.seed)
    if prm.model == "ER":
        edges = nx.gnp_random_graph(n, prm.p, seed=seed).edges()
    elif prm.model == "SBM":
        sizes = prm.block_sizes
        probs = [[prm.p_in if i == j else prm.p_out for j in range(len(sizes))] for i in range(len(sizes))]
        edges = nx.stochastic_block_model(sizes, probs, seed=seed).edges()
    elif prm.model == "WS":
        edges = nx.watts_strogatz_graph(n, prm.k, prm.beta, seed=seed).edges()
    elif prm.model == "BA":
        edges = nx.barabasi_albert_graph(n, prm.m, seed=seed).edges()
    elif prm.model == "Kleinberg":
        edges = _kleinberg(prm, np.random.default_rng(seed))
    else:
        edges = _bianconi_barabasi(prm, np.random.default_rng(seed))
    pairs = sorted({(min(u, v), max(u, v)) for u, v in edges})
    return build_graph([(i, "node", [None]) for i in range(n)],
                       [(u, v, "link") for u, v in pairs], HOMOGENEOUS_SCHEMA)


def assign_features(g: HinGraph, seed: int) -> HinGraph:
    """Give every node one i.i.d. N(0, 1) feature."""
    if len(g.schema.node_types) != 1 or g.schema.node_types[0].arity != 1:
        raise ValueError("assign_features needs a homogeneous graph with one univariate node type")
    x = np.random.default_rng(seed).standard_normal(g.num_nodes)
    return g.with_node_features(x[:, None])


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def likelihood(x):
    """Standard normal density."""
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


@dataclass
class ScenarioConfig:
    scenario: int = 1
    n: int = 2
    agg: str = "mean"
    fraud_rate: float = 0.10

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError(f"scenario: must be 1 or 2 (got {self.scenario!r})")
        if self.n < 0:
            raise ValueError("n: must be >= 0")
        if self.agg not in AGGREGATIONS:
            raise ValueError(f"agg: must be one of {AGGREGATIONS} (got {self.agg!r})")
        if not 0 < self.fraud_rate < 0.5:
            raise ValueError(f"fraud_rate: must be in (0, 0.5) (got {self.fraud_rate!r})")


def _node_x(g: HinGraph) -> np.ndarray:
    x = np.array([f[0] for f in g.node_features])
    if np.isnan(x).any():
        raise ValueError("node features are not assigned")
    return x


def scenario1_scores(g: HinGraph, n: int) -> np.ndarray:
    """Mean likelihood over the ego-net of radius ``n`` (head included)."""
    lik = likelihood(_node_x(g))
    return np.array([lik[list(bfs_distances(g, v, n))].mean() for v in range(g.num_nodes)])


def scenario2_scores(g: HinGraph, n: int, agg: str) -> np.ndarray:
    """Mean over the maximal simple paths of the aggregated likelihoods along each path."""
    lik = likelihood(_node_x(g))
    fn = {"min": np.min, "max": np.max, "mean": np.mean}[agg]
    schema = wildcard(n)
    out = np.empty(g.num_nodes)
    for v in range(g.num_nodes):
        vals = [fn(lik[list(p.nodes)]) for p, _ in weighted_paths(g, v, n, schema)]
        out[v] = float(np.mean(vals))
    return out


def labels_from_scores(scores: np.ndarray, rate: float) -> np.ndarray:
    """Exactly floor(rate * N) positives: the lowest scores, ties broken by lower node index."""
    scores = np.asarray(scores, dtype=float)
    k = math.floor(rate * len(scores) + 1e-9)
    order = np.lexsort((np.arange(len(scores)), scores))
    y = np.zeros(len(scores), dtype=np.int8)
    y[order[:k]] = 1
    return y


def scenario1_labels(g: HinGraph, cfg: ScenarioConfig) -> np.ndarray:
    return labels_from_scores(scenario1_scores(g, cfg.n), cfg.fraud_rate)


def scenario2_labels(g: HinGraph, cfg: ScenarioConfig) -> np.ndarray:
    return labels_from_scores(scenario2_scores(g, cfg.n, cfg.agg), cfg.fraud_rate)


def scenario_labels(g: HinGraph, cfg: ScenarioConfig) -> np.ndarray:
    return scenario1_labels(g, cfg) if cfg.scenario == 1 else scenario2_labels(g, cfg)


def simulate(params: GraphModelParams, cfg: ScenarioConfig, feature_seed: int) -> HinGraph:
    """Graph + N(0, 1) features + scenario labels."""
    g = assign_features(generate(params), feature_seed)
    return g.with_labels(scenario_labels(g, cfg))
