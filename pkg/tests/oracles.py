"""Slow, independent reference implementations used as test oracles."""

import itertools
from collections import deque
from fractions import Fraction

import numpy as np


def bfs_ball(n_nodes, edges, head, radius):
    adj = {v: set() for v in range(n_nodes)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {head: 0}
    q = deque([head])
    while q:
        u = q.popleft()
        if dist[u] == radius:
            continue
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


def maximal_paths_bruteforce(n_nodes, edges, head, n):
    """Every node sequence from ``head`` (checked by permutation) that is a simple path inside the
    radius-``n`` ball and cannot be extended (length n or no unvisited ball neighbour)."""
    ball = set(bfs_ball(n_nodes, edges, head, n))
    adj = {v: set() for v in range(n_nodes)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    others = sorted(ball - {head})
    out = set()
    for k in range(0, min(n, len(others)) + 1):
        for seq in itertools.permutations(others, k):
            p = (head,) + seq
            if all(p[i + 1] in adj[p[i]] for i in range(k)):
                if k == n or not (adj[p[-1]] & ball) - set(p):
                    out.add(p)
    return out


def walk_probability(n_nodes, edges, head, path, n):
    """Exact walker probability with fractions: product of 1/(unvisited ball neighbours)."""
    ball = set(bfs_ball(n_nodes, edges, head, n))
    adj = {v: set() for v in range(n_nodes)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    prob = Fraction(1)
    for i in range(len(path) - 1):
        options = (adj[path[i]] & ball) - set(path[: i + 1])
        prob /= len(options)
    return prob


def gini_w(w, y):
    w, y = np.asarray(w, float), np.asarray(y)
    W = w.sum()
    p = w[y == 1].sum() / W
    return 1 - p * p - (1 - p) ** 2


def best_gini_split(X, w, y, min_w=0.0, tol=1e-12):
    """Exhaustive root split over real columns in (column, threshold, missing-left first) order."""
    best = (np.inf, None, None, None)
    for j in range(X.shape[1]):
        x = X[:, j]
        miss = np.isnan(x)
        vals = np.unique(x[~miss])
        for lo, hi in zip(vals[:-1], vals[1:]):
            t = 0.5 * (lo + hi)
            if t >= hi:
                t = lo
            le = ~miss & (x <= t)
            gt = ~miss & (x > t)
            for missing_left in (True, False):
                if not missing_left and not miss.any():
                    continue
                L = le | (miss & missing_left)
                R = gt | (miss & (not missing_left))
                WL, WR = w[L].sum(), w[R].sum()
                if WL < min_w or WR < min_w:
                    continue
                sc = (WL * gini_w(w[L], y[L]) + WR * gini_w(w[R], y[R])) / (WL + WR)
                if sc < best[0] - tol:
                    best = (sc, j, t, missing_left)
    return best


def auc_pairs(s, y):
    pos = [a for a, b in zip(s, y) if b == 1]
    neg = [a for a, b in zip(s, y) if b == 0]
    tot = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return tot / (len(pos) * len(neg))


def average_precision_steps(s, y):
    """Precision at each distinct threshold times the recall gained there."""
    s, y = np.asarray(s, float), np.asarray(y)
    P = y.sum()
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        sel = s >= t
        tp = y[sel].sum()
        recall = tp / P
        ap += (recall - prev_recall) * tp / sel.sum()
        prev_recall = recall
    return ap
