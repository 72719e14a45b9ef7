"""G-GBM: gradient boosting on probability-weighted featurized ego-net paths.

Training expands every labelled head into its paths, labels each path with its
head's label and uses the random-walk path probability as case weight.
Prediction re-enumerates the paths of a node on whatever graph it is given and
returns ``sum_p P(p) * eta(x_p)``, so scoring a changed or new graph needs no
refit.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .hin import HinError, HinGraph, Schema
from .paths import (ColumnLayout, LayoutMismatchError, MetapathSchema, build_dataset, featurize_heads,
                    wildcard)
from .trees import (BoostedEnsemble, PathDataset, SingleClassError, TrainConfig, fit_model, gain_importance,
                    permutation_importance)


@dataclass
class GgbmModel:
    ensemble: BoostedEnsemble
    metapaths: MetapathSchema
    n: int
    layout: ColumnLayout
    graph_schema: Schema
    threshold: float = 0.5
    max_paths: int | None = None
    max_ego_nodes: int | None = None

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.layout.n != self.n:
            raise ValueError("layout radius differs from model radius")

    def to_dict(self) -> dict:
        d = self.ensemble.to_dict()
        d.update(n=self.n, schema=self.metapaths.to_dict(), psi=self.threshold, layout=self.layout.to_dict(),
                 graph_schema=self.graph_schema.to_dict(), max_paths=self.max_paths,
                 max_ego_nodes=self.max_ego_nodes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GgbmModel":
        gs = Schema.from_dict(d["graph_schema"])
        n = int(d["n"])
        layout = ColumnLayout.from_schema(gs, n)
        if layout.digest != d["layout"]["digest"]:
            raise LayoutMismatchError("stored layout does not match the stored graph schema")
        return cls(BoostedEnsemble.from_dict(d), MetapathSchema.from_dict(d["schema"]), n, layout, gs,
                   float(d["psi"]), d.get("max_paths"), d.get("max_ego_nodes"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "GgbmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(g: HinGraph, heads: Iterable[int] | None, schema: MetapathSchema | None, n: int,
        cfg: TrainConfig | None = None, valid: tuple[HinGraph, Iterable[int] | None] | None = None,
        threshold: float = 0.5, max_paths: int | None = None, max_ego_nodes: int | None = None) -> GgbmModel:
    """Train G-GBM on the labelled ``heads`` (dense indices; ``None`` = every labelled node).

    ``valid`` is an optional ``(graph, heads)`` pair used for early stopping.
    """
    cfg = cfg or TrainConfig()
    schema = schema or wildcard(n)
    heads = g.labeled_nodes() if heads is None else np.asarray(list(heads), dtype=np.int64)
    if len(heads) == 0:
        raise ValueError("no training heads")
    ys = g.labels[heads]
    if np.any(ys < 0):
        from .paths import UnlabeledHeadError
        raise UnlabeledHeadError("every training head needs a label")
    if np.all(ys == ys[0]):
        raise SingleClassError("single-class heads: both labels must be present")
    ds = build_dataset(g, heads, n, schema, max_paths, max_ego_nodes)
    vds = None
    if valid is not None:
        vg, vheads = valid
        vheads = vg.labeled_nodes() if vheads is None else list(vheads)
        vds = build_dataset(vg, vheads, n, schema, max_paths, max_ego_nodes)
    ens = fit_model(ds, cfg, vds)
    return GgbmModel(ens, schema, n, ds.layout, g.schema, threshold, max_paths, max_ego_nodes)


def _check_graph(m: GgbmModel, g: HinGraph) -> None:
    if ColumnLayout.from_schema(g.schema, m.n).digest != m.layout.digest or g.schema != m.graph_schema:
        raise LayoutMismatchError("graph schema does not conform to the model's schema")


def path_predictions(m: GgbmModel, g: HinGraph, nodes: Iterable[int]):
    """Per-path table and per-path predictions for the given dense node indices."""
    _check_graph(m, g)
    table = featurize_heads(g, nodes, m.n, m.metapaths, m.max_paths, m.max_ego_nodes)
    return table, m.ensemble.predict_proba(table.X)


def predict_nodes(m: GgbmModel, g: HinGraph, nodes: Iterable[int] | None = None) -> np.ndarray:
    """Probability-weighted path predictions, one score per node (dense indices, default all)."""
    nodes = np.arange(g.num_nodes) if nodes is None else np.asarray(list(nodes), dtype=np.int64)
    if len(nodes) == 0:
        return np.zeros(0)
    table, proba = path_predictions(m, g, nodes)
    return np.bincount(table.group, weights=table.weight * proba, minlength=len(nodes))


def predict_node(m: GgbmModel, g: HinGraph, v: int) -> float:
    """``sum_p P(p) * eta(x_p)`` over the paths of dense node ``v``."""
    if not (isinstance(v, (int, np.integer)) and 0 <= v < g.num_nodes):
        from .hin import UnknownNodeError
        raise UnknownNodeError(f"unknown node {v!r}")
    table, proba = path_predictions(m, g, [int(v)])
    return float(np.dot(table.weight, proba))


def classify(p: float, psi: float = 0.5) -> int:
    """1 iff ``p >= psi``."""
    return int(p >= psi)


# --------------------------------------------------------------------------- importance


@dataclass
class GroupedImportance:
    columns: dict[str, float]
    by_slot: dict[str, float]
    by_slot_type: dict[str, float]
    by_level: dict[int, float]
    kind: str = "gain"
    _layout: ColumnLayout | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return float(sum(self.columns.values()))

    def write_csv(self, path) -> None:
        """Rows ``group,key,score`` for columns, slot/type blocks, slots and levels."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "group", "key", "score"])
            for group, d in (("column", self.columns), ("slot_type", self.by_slot_type),
                             ("slot", self.by_slot), ("level", self.by_level)):
                for k, v in d.items():
                    w.writerow([self.kind, group, k, repr(float(v))])


def _level(slot: str) -> int:
    return 0 if slot == "H" else int(slot[1:])


def group_scores(layout: ColumnLayout, scores: np.ndarray, kind: str = "gain") -> GroupedImportance:
    cols, by_slot, by_st, by_level = {}, defaultdict(float), defaultdict(float), defaultdict(float)
    for c, s in zip(layout.columns, scores):
        s = float(s)
        cols[c.name] = s
        by_slot[c.slot] += s
        by_st[f"{c.slot}({c.type})"] += s
        by_level[_level(c.slot)] += s
    for k in range(layout.n + 1):
        by_level.setdefault(k, 0.0)
    slots = ["H"] + [f"{p}{k}" for k in range(1, layout.n + 1) for p in ("E", "N")]
    for s in slots:
        by_slot.setdefault(s, 0.0)
    by_slot = {s: by_slot[s] for s in slots}
    return GroupedImportance(cols, by_slot, dict(by_st), dict(sorted(by_level.items())), kind, layout)


def importance_grouped(m: GgbmModel, eval_ds: PathDataset | None = None, kind: str = "gain",
                       seed: int = 0, repeats: int = 5) -> GroupedImportance:
    """Gain or permutation importance aggregated by slot (H, E1, N1, ...), slot/type and level."""
    if kind == "gain":
        scores = gain_importance(m.ensemble)
    elif kind == "permutation":
        if eval_ds is None:
            raise ValueError("permutation importance needs an evaluation dataset")
        if eval_ds.layout is None or eval_ds.layout.digest != m.layout.digest:
            raise LayoutMismatchError("evaluation dataset layout digest differs from the model's")
        scores = permutation_importance(m.ensemble, eval_ds, seed=seed, repeats=repeats)
    else:
        raise ValueError(f"unknown importance kind {kind!r}")
    return group_scores(m.layout, scores, kind)


def write_predictions_csv(g: HinGraph, nodes, scores, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "score", "label"])
        for v, s in zip(nodes, scores):
            y = g.label(int(v))
            w.writerow([g.ids[v], repr(float(s)), "" if y is None else y])
