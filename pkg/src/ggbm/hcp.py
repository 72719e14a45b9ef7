"""Provider-beneficiary graph from health-care claims, plus a community-based train/test split.

Providers get four features built from their claims (claim count, mean and
population std of the paid amount, distinct beneficiaries). Beneficiaries keep
the features supplied for them. The split keeps whole communities on one side,
so no path can cross from train into test.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .hin import GraphParseError, HinError, HinGraph, Schema, build_graph, save_graph

PROVIDER = "provider"
BENEFICIARY = "beneficiary"
EDGE = "provider_beneficiary"
PROVIDER_FEATURES = ("n_claims", "mean_amount", "std_amount", "n_beneficiaries")
CENT = Decimal("0.01")


class HcpError(HinError):
    pass


@dataclass(frozen=True)
class ClaimRecord:
    claim_id: str
    provider_id: str
    beneficiary_id: str
    amount: float
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.provider_id or not self.beneficiary_id:
            raise HcpError(f"claim {self.claim_id!r}: provider and beneficiary ids must be nonempty")
        if not self.amount >= 0:
            raise HcpError(f"claim {self.claim_id!r}: amount must be nonnegative (got {self.amount!r})")


def parse_amount(text: str) -> float:
    """Fixed-point currency parse (2 decimals, banker's rounding) converted to float."""
    try:
        d = Decimal(text.strip()).quantize(CENT, rounding=ROUND_HALF_EVEN)
    except InvalidOperation:
        raise ValueError(f"not a decimal amount: {text!r}") from None
    if not d.is_finite():
        raise ValueError(f"not a finite amount: {text!r}")
    return float(d)


def _rows(path: Path):
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise GraphParseError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise GraphParseError(f"{path}:1: missing header")
        yield reader.fieldnames
        for row in reader:
            yield reader.line_num, row


def read_claims(path, amount_column: str = "amount_paid") -> list[ClaimRecord]:
    """Read ``claim_id,provider_id,beneficiary_id,<amount_column>,...``; extra columns become attributes."""
    path = Path(path)
    it = _rows(path)
    header = next(it)
    need = ("claim_id", "provider_id", "beneficiary_id", amount_column)
    missing = [c for c in need if c not in header]
    if missing:
        raise GraphParseError(f"{path}:1: missing columns {missing}")
    out = []
    for line, row in it:
        try:
            amount = parse_amount(row[amount_column] or "")
            out.append(ClaimRecord(row["claim_id"].strip(), row["provider_id"].strip(),
                                   row["beneficiary_id"].strip(), amount,
                                   {k: v for k, v in row.items() if k not in need}))
        except (ValueError, AttributeError) as exc:
            raise GraphParseError(f"{path}:{line}: {exc}") from None
    return out


def read_beneficiaries(path) -> tuple[list[str], dict[str, list[float]]]:
    """``beneficiary_id,f_0,...`` -> (feature names, id -> feature values). Blank cells are missing."""
    path = Path(path)
    it = _rows(path)
    header = next(it)
    if not header or header[0] != "beneficiary_id":
        raise GraphParseError(f"{path}:1: first column must be beneficiary_id")
    names = list(header[1:])
    feats: dict[str, list[float]] = {}
    for line, row in it:
        bid = (row["beneficiary_id"] or "").strip()
        if bid in feats:
            raise GraphParseError(f"{path}:{line}: duplicate beneficiary {bid!r}")
        try:
            feats[bid] = [math.nan if not (row[c] or "").strip() else float(row[c]) for c in names]
        except ValueError as exc:
            raise GraphParseError(f"{path}:{line}: {exc}") from None
    return names, feats


_LABELS = {"0": 0, "1": 1, "no": 0, "yes": 1}


def read_provider_labels(path) -> dict[str, int]:
    """``provider_id,label`` with labels 0/1 (or No/Yes)."""
    path = Path(path)
    it = _rows(path)
    header = next(it)
    if "provider_id" not in header or "label" not in header:
        raise GraphParseError(f"{path}:1: need provider_id,label columns")
    out = {}
    for line, row in it:
        lab = _LABELS.get((row["label"] or "").strip().lower())
        if lab is None:
            raise GraphParseError(f"{path}:{line}: label must be 0/1 or No/Yes, got {row['label']!r}")
        out[row["provider_id"].strip()] = lab
    return out


def build_provider_features(claims: Iterable[ClaimRecord],
                            providers: Iterable[str] | None = None) -> dict[str, np.ndarray]:
    """Per provider: (claim count, mean amount, population std of amount, distinct beneficiaries).

    Mean and variance come from exact rational sums, so they are correctly rounded
    and do not depend on claim order.
    """
    amounts: dict[str, list[float]] = defaultdict(list)
    benes: dict[str, set] = defaultdict(set)
    for c in claims:
        amounts[c.provider_id].append(c.amount)
        benes[c.provider_id].add(c.beneficiary_id)
    wanted = sorted(amounts) if providers is None else list(providers)
    out = {}
    for p in wanted:
        a = amounts.get(p)
        if not a:
            raise HcpError(f"provider {p!r} has no claims")
        exact = [Fraction(x) for x in a]
        mean = sum(exact, Fraction(0)) / len(a)
        var = sum(((x - mean) ** 2 for x in exact), Fraction(0)) / len(a)
        out[p] = np.array([float(len(a)), float(mean), math.sqrt(float(var)), float(len(benes[p]))])
    return out


def hcp_schema(beneficiary_features: Iterable[str]) -> Schema:
    return Schema(
        [{"name": PROVIDER, "features": [{"name": f, "kind": "real"} for f in PROVIDER_FEATURES]},
         {"name": BENEFICIARY, "features": [{"name": f, "kind": "real"} for f in beneficiary_features]}],
        [{"name": EDGE, "source_type": PROVIDER, "target_type": BENEFICIARY, "features": []}],
    )


def build_bipartite_graph(claims: Iterable[ClaimRecord], beneficiary_features: Mapping[str, Iterable[float]],
                          feature_names: Iterable[str] | None = None,
                          provider_labels: Mapping[str, int] | None = None) -> HinGraph:
    """One node per provider and per referenced beneficiary, one edge per distinct (provider, beneficiary).

    Providers come first (sorted by id), then beneficiaries (sorted by id).
    Provider and beneficiary ids must not collide.
    """
    claims = list(claims)
    pf = build_provider_features(claims)
    pairs = sorted({(c.provider_id, c.beneficiary_id) for c in claims})
    benes = sorted({b for _, b in pairs})
    absent = [b for b in benes if b not in beneficiary_features]
    if absent:
        raise HcpError(f"missing beneficiary features for {len(absent)} beneficiaries, e.g. {absent[:3]}")
    if feature_names is None:
        arity = len(list(beneficiary_features[benes[0]])) if benes else 0
        feature_names = [f"f_{i}" for i in range(arity)]
    labels = provider_labels or {}
    nodes = [(p, PROVIDER, pf[p], labels.get(p)) for p in pf]
    nodes += [(b, BENEFICIARY, list(beneficiary_features[b])) for b in benes]
    return build_graph(nodes, [(p, b, EDGE) for p, b in pairs], hcp_schema(feature_names))


# --------------------------------------------------------------------------- split


def label_propagation(g: HinGraph, max_iter: int = 100) -> tuple[np.ndarray, int]:
    """Synchronous label propagation; each node votes for itself, ties go to the smallest label.

    Returns community ids relabelled ``0..k-1`` in order of first node, and the
    number of sweeps run.
    """
    lab = np.arange(g.num_nodes)
    it = 0
    for it in range(1, max_iter + 1):
        new = lab.copy()
        for v in range(g.num_nodes):
            votes = Counter(lab[w] for _, w in g.adjacency[v])
            votes[lab[v]] += 1
            top = max(votes.values())
            new[v] = min(k for k, c in votes.items() if c == top)
        if np.array_equal(new, lab):
            break
        lab = new
    _, comm = np.unique(lab, return_inverse=True)
    first = {}
    for c in comm.tolist():
        first.setdefault(c, len(first))
    return np.array([first[c] for c in comm.tolist()], dtype=np.int64), it


@dataclass
class Split:
    train: HinGraph
    test: HinGraph
    community: np.ndarray
    test_communities: list[int]
    dropped_edges: int
    iterations: int
    seed: int
    test_fraction: float

    def report(self) -> dict:
        sizes = np.bincount(self.community)

        def stats(h: HinGraph) -> dict:
            prov = h.schema.node_type(PROVIDER).index if any(t.name == PROVIDER for t in h.schema.node_types) else 0
            n_prov = int(np.count_nonzero(h.node_type == prov))
            lab = h.labels[h.labels >= 0]
            return {"nodes": h.num_nodes, "edges": h.num_edges, "providers": n_prov,
                    "other_nodes": h.num_nodes - n_prov,
                    "avg_provider_degree": h.num_edges / n_prov if n_prov else 0.0,
                    "labeled": int(len(lab)), "positives": int(lab.sum())}

        return {"seed": self.seed, "test_fraction": self.test_fraction, "iterations": self.iterations,
                "n_communities": int(len(sizes)), "community_sizes": sorted(sizes.tolist(), reverse=True),
                "test_communities": self.test_communities, "dropped_edges": self.dropped_edges,
                "train": stats(self.train), "test": stats(self.test)}

    def write(self, out) -> list[Path]:
        out = Path(out)
        written = save_graph(self.train, out / "train") + save_graph(self.test, out / "test")
        rep = out / "split_report.json"
        rep.write_text(json.dumps(self.report(), indent=2) + "\n")
        return written + [rep]


def community_split(g: HinGraph, test_fraction: float = 0.3, seed: int = 0, max_iter: int = 100) -> Split:
    """Node-disjoint train/test graphs made of whole label-propagation communities.

    Communities are visited in a seeded random order and added to test until the
    test share of labelled nodes (all nodes when none are labelled) reaches
    ``test_fraction``. Edges between the two sides are dropped and counted.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction: must be in (0, 1) (got {test_fraction!r})")
    comm, iters = label_propagation(g, max_iter)
    mass_node = (g.labels >= 0).astype(float)
    if mass_node.sum() == 0:
        mass_node = np.ones(g.num_nodes)
    mass = np.bincount(comm, weights=mass_node) / mass_node.sum()
    cap = max(test_fraction, 1 - test_fraction)
    if mass.max() > cap:
        raise HcpError(f"one community holds {mass.max():.1%} of the split mass, more than the "
                       f"{cap:.0%} a side may take")
    order = np.random.default_rng(seed).permutation(len(mass))
    chosen, acc = [], 0.0
    for c in order.tolist():
        if acc >= test_fraction:
            break
        chosen.append(c)
        acc += mass[c]
    if len(chosen) == len(mass):
        raise HcpError("every community landed in test; lower test_fraction")
    in_test = np.isin(comm, chosen)
    test, dropped = g.subgraph(np.flatnonzero(in_test))
    train, _ = g.subgraph(np.flatnonzero(~in_test))
    return Split(train, test, comm, sorted(chosen), dropped, iters, seed, test_fraction)


def prepare(claims_path, beneficiaries_path, labels_path=None, *, test_fraction: float = 0.3,
            seed: int = 0, amount_column: str = "amount_paid") -> tuple[HinGraph, Split]:
    claims = read_claims(claims_path, amount_column)
    names, feats = read_beneficiaries(beneficiaries_path)
    labels = read_provider_labels(labels_path) if labels_path else None
    g = build_bipartite_graph(claims, feats, names, labels)
    return g, community_split(g, test_fraction, seed)


def synthetic_claims(directory, n_providers: int = 50, clusters: int = 10, benes_per_cluster: int = 12,
                     claims_per_provider: tuple[int, int] = (1, 8), cross_rate: float = 0.02,
                     fraud_rate: float = 0.2, seed: int = 0) -> dict[str, Path]:
    """Write a small clustered claims fixture (claims.csv, beneficiaries.csv, provider_labels.csv).

    Providers in one cluster mostly bill that cluster's beneficiaries; a
    ``cross_rate`` share of claims goes to a random other beneficiary.
    """
    rng = np.random.default_rng(seed)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n_benes = clusters * benes_per_cluster
    benes = [f"B{i:04d}" for i in range(n_benes)]
    files = {"claims": d / "claims.csv", "beneficiaries": d / "beneficiaries.csv",
             "labels": d / "provider_labels.csv"}
    with files["claims"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["claim_id", "provider_id", "beneficiary_id", "amount_paid", "deductible"])
        cid = 0
        for p in range(n_providers):
            c = p % clusters
            for _ in range(int(rng.integers(claims_per_provider[0], claims_per_provider[1] + 1))):
                b = int(rng.integers(n_benes)) if rng.random() < cross_rate else \
                    c * benes_per_cluster + int(rng.integers(benes_per_cluster))
                cents = int(rng.integers(500, 500_000))
                w.writerow([f"C{cid:06d}", f"P{p:03d}", benes[b], f"{cents // 100}.{cents % 100:02d}",
                            f"{int(rng.integers(0, 3)) * 50}.00"])
                cid += 1
    with files["beneficiaries"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beneficiary_id", "age", "chronic_conditions"])
        for b in benes:
            w.writerow([b, int(rng.integers(20, 95)), int(rng.integers(0, 6))])
    with files["labels"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["provider_id", "label"])
        for p in range(n_providers):
            w.writerow([f"P{p:03d}", "Yes" if rng.random() < fraud_rate else "No"])
    return files
