"""Case-weighted decision trees and gradient boosting with missing-value routing.

Two growth modes share one exact, level-wise split search:

* ``gini_tree`` -- a single classification tree; a split minimizes the
  weighted Gini impurity of the two children, leaves hold the weighted
  class-1 proportion.
* ``boosted`` -- binary logistic boosting; splits maximize the second-order
  gain on case-weighted gradients/hessians, leaves hold ``-G / (H + lambda)``.

Rows with a missing value in the split column are sent to whichever side
gives the lower split score. Real columns split at midpoints between
consecutive distinct values (``x <= t`` goes left); categorical columns use
one-vs-rest splits (``x == c`` goes left). Score ties within ``1e-12`` are
resolved by lowest column, then lowest threshold, then missing-left.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Callable, Sequence

import numba
import numpy as np

GINI = "gini_tree"
BOOSTED = "boosted"
TIE_TOL = 1e-12
MODEL_VERSION = 1


class SingleClassError(ValueError):
    pass


class EmptySetError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = BOOSTED
    n_trees: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1e-3
    reg_lambda: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0
    early_stopping_rounds: int | None = None
    class_weight: tuple[float, float] | None = None  # (negative, positive) multipliers

    def __post_init__(self):
        if self.class_weight is not None:
            self.class_weight = tuple(float(c) for c in self.class_weight)
        self.validate()

    def validate(self) -> None:
        def bad(name, why):
            raise ValueError(f"{name}: {why} (got {getattr(self, name)!r})")

        if self.mode not in (GINI, BOOSTED):
            bad("mode", f"must be {GINI!r} or {BOOSTED!r}")
        if int(self.n_trees) < 1:
            bad("n_trees", "must be >= 1")
        for name in ("learning_rate", "subsample", "colsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                bad(name, "must be in (0, 1]")
        if int(self.max_depth) < 0:
            bad("max_depth", "must be >= 0")
        if self.min_child_weight < 0:
            bad("min_child_weight", "must be >= 0")
        if self.reg_lambda < 0:
            bad("reg_lambda", "must be >= 0")
        if self.early_stopping_rounds is not None and int(self.early_stopping_rounds) < 1:
            bad("early_stopping_rounds", "must be >= 1 or null")
        if self.class_weight is not None and (len(self.class_weight) != 2 or min(self.class_weight) <= 0):
            bad("class_weight", "must be two positive multipliers (negative, positive)")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["class_weight"] is not None:
            d["class_weight"] = list(d["class_weight"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PathDataset:
    """Row-major feature matrix (NaN = missing) with case weights, binary labels and head ids."""

    X: np.ndarray
    weight: np.ndarray
    label: np.ndarray
    head: np.ndarray | None = None
    categorical: np.ndarray | None = None
    layout: object | None = None
    paths: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        n = self.X.shape[0]
        self.weight = np.asarray(self.weight, dtype=float)
        self.label = np.asarray(self.label, dtype=np.int64)
        self.head = np.arange(n) if self.head is None else np.asarray(self.head, dtype=np.int64)
        if self.categorical is None:
            self.categorical = np.zeros(self.X.shape[1], dtype=bool)
        self.categorical = np.asarray(self.categorical, dtype=bool)
        if not (len(self.weight) == len(self.label) == len(self.head) == n):
            raise ValueError("weight, label and head must have one entry per row")
        if len(self.categorical) != self.X.shape[1]:
            raise ValueError("categorical mask must have one entry per column")
        if n and not np.all(self.weight > 0):
            raise ValueError("case weights must be > 0")
        if n and not np.all((self.label == 0) | (self.label == 1)):
            raise ValueError("labels must be 0 or 1")
        if np.isinf(self.X).any():
            raise ValueError("features must be finite or missing")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]


# --------------------------------------------------------------------------- Gini family


def _as_set(S):
    w, y = (np.asarray(a, dtype=float) for a in S)
    return w, y


def weighted_gini(S) -> float:
    """``1 - sum_i (W_i / W)^2`` for a weighted labelled set ``S = (weights, labels)``."""
    w, y = _as_set(S)
    if len(w) == 0 or w.sum() <= 0:
        raise EmptySetError("weighted Gini of an empty set")
    # class shares from exact rational sums: equal weights give exactly count / n
    w0 = sum(map(Fraction, w[y == 0].tolist()), Fraction(0))
    w1 = sum(map(Fraction, w[y == 1].tolist()), Fraction(0))
    p0, p1 = float(w0 / (w0 + w1)), float(w1 / (w0 + w1))
    return 1.0 - (p0 * p0 + p1 * p1)


def gini(labels) -> float:
    """Unweighted Gini impurity of a label vector."""
    y = np.asarray(labels)
    if len(y) == 0:
        raise EmptySetError("Gini of an empty set")
    _, counts = np.unique(y, return_counts=True)
    p = counts / len(y)
    return 1.0 - float(np.sum(p * p))


def split_impurity(S_L, S_R) -> float:
    """Weight-fraction-weighted average of the children's weighted Gini impurities."""
    wl, _ = _as_set(S_L)
    wr, _ = _as_set(S_R)
    WL, WR = wl.sum(), wr.sum()
    if len(wl) == 0 or len(wr) == 0 or WL <= 0 or WR <= 0:
        raise EmptySetError("split side is empty")
    W = WL + WR
    return WL / W * weighted_gini(S_L) + WR / W * weighted_gini(S_R)


def missing_split_choice(S_L, S_R, S_missing) -> tuple[str, float]:
    """Route the missing-value rows to the side that yields the lower split impurity.

    Returns ``("left" | "right", impurity)``; ties and an empty missing set go left.
    """
    wl, yl = _as_set(S_L)
    wr, yr = _as_set(S_R)
    wm, ym = _as_set(S_missing)
    if len(wl) + len(wm) == 0 and len(wr) + len(wm) == 0:
        raise EmptySetError("both sides empty")
    if len(wm) == 0:
        return "left", split_impurity(S_L, S_R)
    options = []
    if len(wr):
        options.append(("left", split_impurity((np.r_[wl, wm], np.r_[yl, ym]), (wr, yr))))
    if len(wl):
        options.append(("right", split_impurity((wl, yl), (np.r_[wr, wm], np.r_[yr, ym]))))
    if not options:
        raise EmptySetError("only missing rows: no split possible")
    best = options[0]
    for opt in options[1:]:
        if opt[1] < best[1] - TIE_TOL:
            best = opt
    return best


# --------------------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _score(mode, lam, wl, bl, cl, wr, br, cr):
    # mode 0: weighted Gini of the split (b = class-1 weight); mode 1: -(G_L^2/(H_L+l) + G_R^2/(H_R+l))
    if mode == 0:
        p1 = bl / wl
        p0 = (wl - bl) / wl
        gl = 1.0 - p1 * p1 - p0 * p0
        q1 = br / wr
        q0 = (wr - br) / wr
        gr = 1.0 - q1 * q1 - q0 * q0
        return (wl * gl + wr * gr) / (wl + wr)
    return -(bl * bl / (cl + lam) + br * br / (cr + lam))


@numba.njit(cache=True)
def _totals(slot_of_row, a, b, c, nslots):
    tw = np.zeros(nslots)
    tb = np.zeros(nslots)
    tc = np.zeros(nslots)
    tn = np.zeros(nslots, dtype=np.int64)
    for r in range(slot_of_row.shape[0]):
        s = slot_of_row[r]
        if s >= 0:
            tw[s] += a[r]
            tb[s] += b[r]
            tc[s] += c[r]
            tn[s] += 1
    return tw, tb, tc, tn


@numba.njit(cache=True)
def _scan_real(order, n_present, x, slot_of_row, a, b, c, tw, tb, tc, tn,
               mode, lam, min_w, tol, col, best_score, best_col, best_thr, best_left, best_cat):
    nslots = tw.shape[0]
    mw = np.zeros(nslots)
    mb = np.zeros(nslots)
    mc = np.zeros(nslots)
    mn = np.zeros(nslots, dtype=np.int64)
    for i in range(n_present, order.shape[0]):
        r = order[i]
        s = slot_of_row[r]
        if s >= 0:
            mw[s] += a[r]
            mb[s] += b[r]
            mc[s] += c[r]
            mn[s] += 1
    aw = np.zeros(nslots)
    ab = np.zeros(nslots)
    ac = np.zeros(nslots)
    an = np.zeros(nslots, dtype=np.int64)
    last = np.zeros(nslots)
    for i in range(n_present):
        r = order[i]
        s = slot_of_row[r]
        if s < 0:
            continue
        xv = x[r]
        if an[s] > 0 and xv > last[s]:
            thr = 0.5 * (last[s] + xv)
            if thr >= xv:
                thr = last[s]
            # present-only right side
            rw = tw[s] - mw[s] - aw[s]
            rb = tb[s] - mb[s] - ab[s]
            rc = tc[s] - mc[s] - ac[s]
            rn = tn[s] - mn[s] - an[s]
            # missing -> left
            lw = aw[s] + mw[s]
            ln = an[s] + mn[s]
            if ln > 0 and rn > 0 and lw >= min_w and rw >= min_w:
                sc = _score(mode, lam, lw, ab[s] + mb[s], ac[s] + mc[s], rw, rb, rc)
                if sc < best_score[s] - tol:
                    best_score[s] = sc
                    best_col[s] = col
                    best_thr[s] = thr
                    best_left[s] = True
                    best_cat[s] = False
            # missing -> right
            if mn[s] > 0:
                rw2 = rw + mw[s]
                if an[s] > 0 and rn + mn[s] > 0 and aw[s] >= min_w and rw2 >= min_w:
                    sc = _score(mode, lam, aw[s], ab[s], ac[s], rw2, rb + mb[s], rc + mc[s])
                    if sc < best_score[s] - tol:
                        best_score[s] = sc
                        best_col[s] = col
                        best_thr[s] = thr
                        best_left[s] = False
                        best_cat[s] = False
        aw[s] += a[r]
        ab[s] += b[r]
        ac[s] += c[r]
        an[s] += 1
        last[s] = xv


@numba.njit(cache=True)
def _apply_splits(X, node_of_row, slot_of_node, split_col, split_thr, split_cat, split_left,
                  left_id, right_id):
    for r in range(node_of_row.shape[0]):
        nd = node_of_row[r]
        if nd < 0:
            continue
        s = slot_of_node[nd]
        if s < 0 or split_col[s] < 0:
            continue
        xv = X[r, split_col[s]]
        if np.isnan(xv):
            go_left = split_left[s]
        elif split_cat[s]:
            go_left = xv == split_thr[s]
        else:
            go_left = xv <= split_thr[s]
        node_of_row[r] = left_id[s] if go_left else right_id[s]


@numba.njit(cache=True)
def _predict(X, feature, threshold, is_cat, missing_left, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        nd = 0
        while feature[nd] >= 0:
            xv = X[r, feature[nd]]
            if np.isnan(xv):
                go_left = missing_left[nd]
            elif is_cat[nd]:
                go_left = xv == threshold[nd]
            else:
                go_left = xv <= threshold[nd]
            nd = left[nd] if go_left else right[nd]
        out[r] = value[nd]
    return out


# --------------------------------------------------------------------------- trees


class DecisionTree:
    """Array-backed binary tree; node 0 is the root, ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, is_cat, missing_left, left, right, value, gain, cover):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.is_cat = np.asarray(is_cat, dtype=np.bool_)
        self.missing_left = np.asarray(missing_left, dtype=np.bool_)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.gain = np.asarray(gain, dtype=float)
        self.cover = np.asarray(cover, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        def rec(i):
            return 0 if self.feature[i] < 0 else 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _predict(X, self.feature, self.threshold, self.is_cat, self.missing_left,
                        self.left, self.right, self.value)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        saved = self.value
        self.value = np.arange(self.n_nodes, dtype=float)
        try:
            return self.predict(X).astype(np.int64)
        finally:
            self.value = saved

    def structure(self) -> list[tuple]:
        """Hashable description of splits and leaves, for structural comparison."""
        return [(int(f), float(t) if f >= 0 else None, bool(c), bool(m), int(l), int(r))
                for f, t, c, m, l, r in zip(self.feature, self.threshold, self.is_cat,
                                            self.missing_left, self.left, self.right)]

    def to_nested(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf_value": float(self.value[i])}
        node = {"column": int(self.feature[i])}
        if self.is_cat[i]:
            node["categories"] = [float(self.threshold[i])]
        else:
            node["threshold"] = float(self.threshold[i])
        node.update(missing_dir="left" if self.missing_left[i] else "right",
                    gain=float(self.gain[i]), cover=float(self.cover[i]),
                    left=self.to_nested(int(self.left[i])), right=self.to_nested(int(self.right[i])))
        return node

    @classmethod
    def from_nested(cls, root: dict) -> "DecisionTree":
        cols = {k: [] for k in ("feature", "threshold", "is_cat", "missing_left",
                                "left", "right", "value", "gain", "cover")}
        queue = [root]
        i = 0
        while i < len(queue):
            node = queue[i]
            if "leaf_value" in node:
                vals = (-1, 0.0, False, True, -1, -1, node["leaf_value"], 0.0, node.get("cover", 0.0))
            else:
                cats = node.get("categories")
                if cats is not None and len(cats) != 1:
                    raise ValueError("only one-vs-rest category splits are supported")
                queue.extend((node["left"], node["right"]))
                vals = (node["column"], cats[0] if cats is not None else node["threshold"], cats is not None,
                        node["missing_dir"] == "left", len(queue) - 2, len(queue) - 1, 0.0,
                        node.get("gain", 0.0), node.get("cover", 0.0))
            for k, v in zip(cols, vals):
                cols[k].append(v)
            i += 1
        return cls(**cols)


def _sorted_orders(X: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    orders = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    present = (~np.isnan(X)).sum(axis=0)
    return orders, present


def _categorical_search(X, j, rows_by_slot, a, b, c, mode, lam, min_w, best):
    best_score, best_col, best_thr, best_left, best_cat = best
    for s, rows in enumerate(rows_by_slot):
        if len(rows) < 2:
            continue
        x = X[rows, j]
        miss = np.isnan(x)
        ra, rb, rc = a[rows], b[rows], c[rows]
        mw, mb, mc, mn = ra[miss].sum(), rb[miss].sum(), rc[miss].sum(), int(miss.sum())
        xp = x[~miss]
        if len(xp) == 0:
            continue
        pa, pb, pc = ra[~miss], rb[~miss], rc[~miss]
        tw, tb, tc, tn = pa.sum(), pb.sum(), pc.sum(), len(xp)
        cats = np.unique(xp)
        stats = []
        for cat in cats:
            m = xp == cat
            cw, cb, cc = pa[m].sum(), pb[m].sum(), pc[m].sum()
            stats.append((cb / cw, float(cat), cw, cb, cc, int(m.sum())))
        stats.sort()
        for _, cat, cw, cb, cc, cn in stats:
            rw, rbb, rcc, rn = tw - cw, tb - cb, tc - cc, tn - cn
            # missing -> left
            if rn > 0 and cw + mw >= min_w and rw >= min_w:
                sc = _score(mode, lam, cw + mw, cb + mb, cc + mc, rw, rbb, rcc)
                if sc < best_score[s] - TIE_TOL:
                    best_score[s], best_col[s], best_thr[s], best_left[s], best_cat[s] = sc, j, cat, True, True
            if mn > 0 and rn + mn > 0 and cw >= min_w and rw + mw >= min_w:
                sc = _score(mode, lam, cw, cb, cc, rw + mw, rbb + mb, rcc + mc)
                if sc < best_score[s] - TIE_TOL:
                    best_score[s], best_col[s], best_thr[s], best_left[s], best_cat[s] = sc, j, cat, False, True


def fit_tree(ds: PathDataset, cfg: TrainConfig, targets: tuple[np.ndarray, np.ndarray] | None = None,
             rows: np.ndarray | None = None, columns: Sequence[int] | None = None,
             orders=None) -> DecisionTree:
    """Grow one tree greedily, level by level.

    In ``gini_tree`` mode the split score is the weighted Gini of the split.
    In ``boosted`` mode ``targets`` holds case-weighted (gradient, hessian) per
    row and leaves store ``-G / (H + lambda)``. ``rows`` restricts training to
    a row subset, ``columns`` to a column subset.
    """
    X = ds.X
    N, C = X.shape
    if N == 0:
        raise EmptySetError("cannot fit a tree on zero rows")
    w = ds.weight
    if cfg.mode == GINI:
        mode, lam = 0, 0.0
        a, b, c = w, w * ds.label, np.zeros(N)
    else:
        if targets is None:
            raise ValueError("boosted trees need (gradient, hessian) targets")
        mode, lam = 1, float(cfg.reg_lambda)
        a = w
        b, c = (np.asarray(t, dtype=float) for t in targets)
    min_w = float(cfg.min_child_weight)
    if orders is None:
        orders = _sorted_orders(X)
    order_list, present = orders
    cols = list(range(C)) if columns is None else sorted(int(j) for j in columns)
    cat_cols = ds.categorical

    node_of_row = np.zeros(N, dtype=np.int64)
    if rows is not None:
        node_of_row[:] = -1
        node_of_row[rows] = 0

    feat, thr, iscat, mleft, left, right, value, gain, cover = ([] for _ in range(9))

    def new_node():
        for lst, v in ((feat, -1), (thr, 0.0), (iscat, False), (mleft, True), (left, -1), (right, -1),
                       (value, 0.0), (gain, 0.0), (cover, 0.0)):
            lst.append(v)
        return len(feat) - 1

    new_node()
    active = [0]
    root_w = None
    depth = 0
    while active:
        nslots = len(active)
        slot_of_node = -np.ones(len(feat), dtype=np.int64)
        slot_of_node[active] = np.arange(nslots)
        slot_of_row = np.where(node_of_row >= 0, slot_of_node[np.maximum(node_of_row, 0)], -1)
        tw, tb, tc, tn = _totals(slot_of_row, a, b, c, nslots)
        if root_w is None:
            root_w = tw[0]
            if tn[0] == 0:
                raise EmptySetError("no rows selected")
        for s, nd in enumerate(active):
            cover[nd] = tw[s]
            value[nd] = tb[s] / tw[s] if mode == 0 else -tb[s] / (tc[s] + lam)

        if depth >= cfg.max_depth:
            break
        best_score = np.full(nslots, np.inf)
        best_col = -np.ones(nslots, dtype=np.int64)
        best_thr = np.zeros(nslots)
        best_left = np.ones(nslots, dtype=np.bool_)
        best_cat = np.zeros(nslots, dtype=np.bool_)
        rows_by_slot = None
        for j in cols:
            if cat_cols[j]:
                if rows_by_slot is None:
                    srt = np.argsort(slot_of_row, kind="stable")
                    bounds = np.searchsorted(slot_of_row[srt], np.arange(nslots + 1))
                    rows_by_slot = [srt[bounds[s]:bounds[s + 1]] for s in range(nslots)]
                _categorical_search(X, j, rows_by_slot, a, b, c, mode, lam, min_w,
                                    (best_score, best_col, best_thr, best_left, best_cat))
            else:
                _scan_real(order_list[j], present[j], X[:, j], slot_of_row, a, b, c, tw, tb, tc, tn,
                           mode, lam, min_w, TIE_TOL, j, best_score, best_col, best_thr, best_left, best_cat)

        split_col = -np.ones(nslots, dtype=np.int64)
        left_id = -np.ones(nslots, dtype=np.int64)
        right_id = -np.ones(nslots, dtype=np.int64)
        next_active = []
        for s, nd in enumerate(active):
            if best_col[s] < 0:
                continue
            if mode == 0:
                # an impure node splits unless the split makes it worse (XOR needs a zero-gain first split)
                parent = _score(0, 0.0, tw[s], tb[s], 0.0, tw[s], tb[s], 0.0)
                improvement = parent - best_score[s]
                g = max(0.0, tw[s] / root_w * improvement)
                ok = parent > TIE_TOL and improvement > -TIE_TOL
            else:
                improvement = 0.5 * (-best_score[s] - tb[s] * tb[s] / (tc[s] + lam))
                g = improvement
                ok = improvement > TIE_TOL
            if not ok:
                continue
            l, r = new_node(), new_node()
            feat[nd], thr[nd], iscat[nd], mleft[nd] = int(best_col[s]), float(best_thr[s]), bool(best_cat[s]), bool(best_left[s])
            left[nd], right[nd], gain[nd] = l, r, g
            split_col[s], left_id[s], right_id[s] = best_col[s], l, r
            next_active.extend((l, r))
        if not next_active:
            break
        slot_of_node = -np.ones(len(feat), dtype=np.int64)
        slot_of_node[active] = np.arange(nslots)
        _apply_splits(X, node_of_row, slot_of_node, split_col, best_thr, best_cat, best_left, left_id, right_id)
        active = next_active
        depth += 1

    return DecisionTree(feat, thr, iscat, mleft, left, right, value, gain, cover)


# --------------------------------------------------------------------------- ensembles


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def weighted_log_loss(y, p, w) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))) / np.sum(w))


@dataclass
class BoostedEnsemble:
    mode: str
    trees: list[DecisionTree]
    learning_rate: float
    base_score: float
    config: TrainConfig
    n_features: int
    layout_digest: str | None = None
    column_names: list[str] | None = None
    categorical: np.ndarray | None = None
    history: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        z = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            z += self.learning_rate * t.predict(X)
        return z

    def predict_proba(self, X) -> np.ndarray:
        if self.mode == GINI:
            X = self._check(X)
            return np.mean([t.predict(X) for t in self.trees], axis=0)
        return sigmoid(self.decision_function(X))

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got {X.shape[-1] if X.ndim else 0}")
        return X

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "mode": self.mode,
            "config": self.config.to_dict(),
            "layout_digest": self.layout_digest,
            "n_features": self.n_features,
            "column_names": self.column_names,
            "categorical": None if self.categorical is None else [bool(c) for c in self.categorical],
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_nested() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedEnsemble":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        cat = d.get("categorical")
        return cls(d["mode"], [DecisionTree.from_nested(t) for t in d["trees"]], float(d["learning_rate"]),
                   float(d["base_score"]), TrainConfig.from_dict(d["config"]), int(d["n_features"]),
                   d.get("layout_digest"), d.get("column_names"),
                   None if cat is None else np.asarray(cat, dtype=bool))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "BoostedEnsemble":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _case_weights(ds: PathDataset, cfg: TrainConfig) -> np.ndarray:
    if cfg.class_weight is None:
        return ds.weight
    neg, pos = cfg.class_weight
    return ds.weight * np.where(ds.label == 1, pos, neg)


def _meta(ds: PathDataset):
    layout = ds.layout
    return (getattr(layout, "digest", None), getattr(layout, "names", None), ds.categorical.copy())


def fit_boosted(ds: PathDataset, cfg: TrainConfig, valid: PathDataset | None = None) -> BoostedEnsemble:
    """Logistic boosting on case-weighted second-order statistics.

    Iteration ``t`` fits a tree to ``g = w (p - y)`` and ``h = w p (1 - p)``.
    With ``cfg.early_stopping_rounds`` and a ``valid`` set, trees after the
    best validation log-loss are dropped.
    """
    if cfg.mode != BOOSTED:
        cfg = TrainConfig(**{**cfg.to_dict(), "mode": BOOSTED})
    y = ds.label.astype(float)
    w = _case_weights(ds, cfg)
    if ds.n_rows == 0 or np.all(y == y[0]):
        raise SingleClassError("single-class data: boosting needs both classes")
    prior = float(np.sum(w * y) / np.sum(w))
    base = math.log(prior / (1.0 - prior))
    rng = np.random.default_rng(cfg.seed)
    orders = _sorted_orders(ds.X)
    N, C = ds.X.shape
    F = np.full(N, base)
    digest, names, cat = _meta(ds)
    model = BoostedEnsemble(BOOSTED, [], cfg.learning_rate, base, cfg, C, digest, names, cat)
    model.history.append(weighted_log_loss(y, sigmoid(F), w))

    if valid is not None:
        Fv = np.full(valid.n_rows, base)
        vw = valid.weight
        best_loss, best_iter = weighted_log_loss(valid.label, sigmoid(Fv), vw), 0

    for t in range(cfg.n_trees):
        p = sigmoid(F)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        rows = None
        if cfg.subsample < 1.0:
            k = max(1, int(round(cfg.subsample * N)))
            rows = np.sort(rng.choice(N, size=k, replace=False))
        columns = None
        if cfg.colsample < 1.0:
            k = max(1, int(round(cfg.colsample * C)))
            columns = np.sort(rng.choice(C, size=k, replace=False))
        tree = fit_tree(ds, cfg, (g, h), rows=rows, columns=columns, orders=orders)
        model.trees.append(tree)
        F += cfg.learning_rate * tree.predict(ds.X)
        model.history.append(weighted_log_loss(y, sigmoid(F), w))
        if valid is not None and cfg.early_stopping_rounds:
            Fv += cfg.learning_rate * tree.predict(valid.X)
            loss = weighted_log_loss(valid.label, sigmoid(Fv), vw)
            if loss < best_loss - TIE_TOL:
                best_loss, best_iter = loss, t + 1
            elif t + 1 - best_iter >= cfg.early_stopping_rounds:
                break
    if valid is not None and cfg.early_stopping_rounds:
        del model.trees[max(best_iter, 1):]
        del model.history[max(best_iter, 1) + 1:]
    return model


def fit_gini_tree(ds: PathDataset, cfg: TrainConfig) -> BoostedEnsemble:
    """Single weighted-Gini classification tree wrapped as a model."""
    if cfg.mode != GINI:
        cfg = TrainConfig(**{**cfg.to_dict(), "mode": GINI})
    if ds.n_rows == 0:
        raise EmptySetError("no rows")
    ds_w = PathDataset(ds.X, _case_weights(ds, cfg), ds.label, ds.head, ds.categorical, ds.layout)
    tree = fit_tree(ds_w, cfg)
    digest, names, cat = _meta(ds)
    return BoostedEnsemble(GINI, [tree], 1.0, 0.0, cfg, ds.n_cols, digest, names, cat)


def fit_model(ds: PathDataset, cfg: TrainConfig, valid: PathDataset | None = None) -> BoostedEnsemble:
    return fit_gini_tree(ds, cfg) if cfg.mode == GINI else fit_boosted(ds, cfg, valid)


def predict_row(model: BoostedEnsemble, row) -> float:
    """Probability of class 1 for a single feature row (NaN = missing)."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.shape[0] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got {row.shape[0] if row.ndim else 0}")
    return float(model.predict_proba(row[None, :])[0])


# --------------------------------------------------------------------------- importance


def gain_importance(model: BoostedEnsemble) -> np.ndarray:
    """Total split gain (impurity reduction in Gini mode) credited to each column."""
    out = np.zeros(model.n_features)
    for t in model.trees:
        internal = t.feature >= 0
        np.add.at(out, t.feature[internal], t.gain[internal])
    return out


def head_auc(ds: PathDataset, proba: np.ndarray) -> float:
    """ROC-AUC of weight-averaged path predictions aggregated per head."""
    from .metrics import roc_auc

    heads, inv = np.unique(ds.head, return_inverse=True)
    num = np.bincount(inv, weights=ds.weight * proba)
    den = np.bincount(inv, weights=ds.weight)
    labels = np.zeros(len(heads), dtype=np.int64)
    labels[inv] = ds.label
    return roc_auc(num / den, labels)


def permutation_importance(model: BoostedEnsemble, ds: PathDataset,
                           metric: Callable[[PathDataset, np.ndarray], float] | None = None,
                           seed: int = 0, repeats: int = 5) -> np.ndarray:
    """Mean metric drop when one column is shuffled across rows (weights stay with rows)."""
    metric = metric or head_auc
    base = metric(ds, model.predict_proba(ds.X))
    rng = np.random.default_rng(seed)
    out = np.zeros(ds.n_cols)
    Xp = ds.X.copy()
    for j in range(ds.n_cols):
        drops = []
        for _ in range(repeats):
            Xp[:, j] = ds.X[rng.permutation(ds.n_rows), j]
            drops.append(base - metric(ds, model.predict_proba(Xp)))
        Xp[:, j] = ds.X[:, j]
        out[j] = float(np.mean(drops))
    return out
