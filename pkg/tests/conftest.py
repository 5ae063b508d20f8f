"""Shared brute-force oracles."""

from __future__ import annotations

import itertools

import numpy as np
import pytest


def grid_fermat(anchors, weights, res=1e-3, pad=0.0, chunk=200_000):
    """Exhaustive planar grid minimum of sum w_i |X - a_i| over the padded bounding box."""
    anchors = np.asarray(anchors, dtype=float)
    weights = np.asarray(weights, dtype=float)
    lo = anchors.min(axis=0) - pad
    hi = anchors.max(axis=0) + pad
    xs = np.arange(lo[0], hi[0] + res / 2, res)
    ys = np.arange(lo[1], hi[1] + res / 2, res)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    best, arg = np.inf, None
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        val = np.zeros(len(block))
        for a, w in zip(anchors, weights):
            val += w * np.hypot(block[:, 0] - a[0], block[:, 1] - a[1])
        k = int(np.argmin(val))
        if val[k] < best:
            best, arg = float(val[k]), block[k]
    return best, arg


def prufer_tree(seq, n_nodes):
    """Edges of the labelled tree encoded by a Prufer sequence."""
    degree = [1] * n_nodes
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = min(i for i in range(n_nodes) if degree[i] == 1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = [i for i in range(n_nodes) if degree[i] == 1]
    edges.append((u, v))
    return edges


def split_system(edges, n_leaves):
    """Leaf bipartitions induced by the internal edges, as sides not containing leaf 0."""
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    out = set()
    for a, b in edges:
        if a < n_leaves or b < n_leaves:
            continue
        seen, stack, leaves = {a, b}, [b], set()
        while stack:
            x = stack.pop()
            if x < n_leaves:
                leaves.add(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        if 0 in leaves:
            leaves = set(range(n_leaves)) - leaves
        out.add(frozenset(leaves))
    return frozenset(out)


def brute_force_topologies(n, max_degree):
    """Distinct leaf-labelled trees with Steiner degrees in [3, max_degree], by split system."""
    if n == 2:
        return {frozenset()}
    found = set()
    for k in range(1, n - 1):
        nodes = n + k
        steiner = range(n, nodes)
        for seq in itertools.product(steiner, repeat=nodes - 2):
            counts = [seq.count(s) + 1 for s in steiner]
            if all(3 <= c <= max_degree for c in counts):
                found.add(split_system(prufer_tree(seq, nodes), n))
    return found


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
