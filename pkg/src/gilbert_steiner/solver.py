"""Exhaustive minimal-flow search for small instances.

The search enumerates every tree topology whose leaves are the terminals,
derives the edge masses from conservation (unique on a tree), and minimizes
the Gilbert functional over the branching-point positions.  For a fixed
topology the functional is a positively weighted sum of Euclidean lengths and
therefore convex in the positions, so a careful local method finds the global
optimum of each topology.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np

from .cost import eval_cost
from .errors import CapExceededError, ConfigurationError, ConvergenceError
from .flow import (
    BRANCHING,
    TERMINAL,
    Flow,
    Instance,
    Vertex,
    default_merge_tol,
    gilbert_functional,
    make_edge,
    normalize_flow,
)
from .geometry import weighted_fermat

MAX_TERMINALS = 7
TIE_TOL = 1e-10
SMOOTHING_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-8)
SWEEP_RTOL = 1e-12
MAX_SWEEPS = 500
#: Node residual (relative to the node's total weight) accepted as converged.
RESIDUAL_TOL = 1e-7


@dataclass(frozen=True)
class Topology:
    """A tree on leaves ``0..n-1`` and Steiner nodes ``n..n+k-1``."""

    n_leaves: int
    n_steiner: int
    edges: tuple[tuple[int, int], ...]

    @property
    def n_nodes(self) -> int:
        return self.n_leaves + self.n_steiner

    def degree(self, node: int) -> int:
        return sum(node in e for e in self.edges)

    @property
    def steiner_degrees(self) -> tuple[int, ...]:
        return tuple(self.degree(s) for s in range(self.n_leaves, self.n_nodes))

    def neighbours(self, node: int) -> list[int]:
        return [b if a == node else a for a, b in self.edges if node in (a, b)]

    @cached_property
    def splits(self) -> tuple[frozenset, ...]:
        """For every Steiner-Steiner edge, the leaves on the side without leaf 0."""
        out = []
        for a, b in self.edges:
            if a < self.n_leaves or b < self.n_leaves:
                continue
            side = self._side(b, a)
            if 0 in side:
                side = self._side(a, b)
            out.append(frozenset(side))
        return tuple(sorted(out, key=lambda s: sorted(s)))

    def _side(self, start: int, blocked: int) -> set[int]:
        seen, stack, leaves = {start, blocked}, [start], set()
        while stack:
            x = stack.pop()
            if x < self.n_leaves:
                leaves.add(x)
            for y in self.neighbours(x):
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return leaves

    def label(self, ids: Optional[Sequence[str]] = None) -> str:
        """Canonical text form; two topologies on the same labelled leaves agree iff labels agree."""
        ids = list(ids) if ids is not None else [f"{i + 1}" for i in range(self.n_leaves)]
        if self.n_steiner == 0:
            return "-".join(ids)
        if not self.splits:
            return "*(" + ",".join(ids) + ")"
        parts = []
        for s in self.splits:
            left = [ids[i] for i in range(self.n_leaves) if i not in s]
            right = [ids[i] for i in range(self.n_leaves) if i in s]
            parts.append(",".join(left) + "|" + ",".join(right))
        return "; ".join(sorted(parts))


def enumerate_topologies(n_terminals: int, allow_degree4: bool = False) -> Iterator[Topology]:
    """Yield every tree whose leaves are the ``n_terminals`` terminals.

    Steiner nodes have degree 3, or degree 3 or 4 with ``allow_degree4``.  Each
    tree is produced exactly once by inserting leaves one at a time: leaf k
    either subdivides an existing edge with a new Steiner node or, in
    degree-4 mode, attaches to a Steiner node of degree 3.  The number of full
    topologies is ``(2n - 5)!!`` for ``n >= 3``.
    """
    if not isinstance(n_terminals, int) or n_terminals < 2:
        raise ConfigurationError("need at least 2 terminals")
    if n_terminals > MAX_TERMINALS:
        raise CapExceededError(
            f"{n_terminals} terminals exceeds the exhaustive-search cap of {MAX_TERMINALS}"
        )
    n = n_terminals

    def grow(edges: list[tuple[int, int]], next_leaf: int, steiner: list[int]):
        if next_leaf == n:
            yield _relabel(n, edges, steiner)
            return
        new_s = ("s", len(steiner))
        for i, (a, b) in enumerate(edges):
            yield from grow(
                edges[:i] + edges[i + 1 :] + [(a, new_s), (new_s, b), (new_s, next_leaf)],
                next_leaf + 1,
                steiner + [new_s],
            )
        if allow_degree4:
            for s in steiner:
                if sum(s in e for e in edges) == 3:
                    yield from grow(edges + [(s, next_leaf)], next_leaf + 1, steiner)

    yield from grow([(0, 1)], 2, [])


def _relabel(n, edges, steiner) -> Topology:
    index = {s: n + i for i, s in enumerate(steiner)}
    out = []
    for a, b in edges:
        a, b = index.get(a, a), index.get(b, b)
        out.append((min(a, b), max(a, b)))
    return Topology(n, len(steiner), tuple(sorted(out)))


def edge_masses(topology: Topology, instance: Instance) -> dict[tuple[int, int], float]:
    """m(a, b) for every topology edge (a, b): the net terminal mass on b's side."""
    if topology.n_leaves != len(instance.terminals):
        raise ConfigurationError("topology leaves do not match the instance terminals")
    masses = [t.mass for t in instance.terminals]
    out = {}
    for a, b in topology.edges:
        side = topology._side(b, a)
        out[(a, b)] = math.fsum(masses[i] for i in side)
    return out


@dataclass
class Solution:
    flow: Flow
    topology: Topology
    label: str
    value: float
    converged: bool
    iterations: int
    raw_flow: Optional[Flow] = None
    residual: float = 0.0
    history: list[float] = field(default_factory=list)
    #: Second-best topology value minus the chosen value (set by :func:`solve`).
    competitor_gap: Optional[float] = None
    candidates: list[tuple[str, float]] = field(default_factory=list)


class _Problem:
    """Arrays describing the functional of one topology."""

    def __init__(self, topology: Topology, instance: Instance):
        self.topology = topology
        self.instance = instance
        self.n = topology.n_leaves
        self.k = topology.n_steiner
        self.dim = instance.dimension
        self.terminals = instance.positions
        self.masses = edge_masses(topology, instance)
        self.ia = np.array([a for a, _ in topology.edges], dtype=int)
        self.ib = np.array([b for _, b in topology.edges], dtype=int)
        self.w = np.array([eval_cost(instance.cost, abs(self.masses[e])) for e in topology.edges])
        self.diam = instance.diameter
        self.nbrs = [
            [(e_idx, b if a == s else a) for e_idx, (a, b) in enumerate(topology.edges) if s in (a, b)]
            for s in range(self.n, self.n + self.k)
        ]

    def points(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([self.terminals, x.reshape(self.k, self.dim)])

    def value(self, x: np.ndarray) -> float:
        p = self.points(x)
        return math.fsum(self.w * np.linalg.norm(p[self.ia] - p[self.ib], axis=1))

    def smoothed(self, x: np.ndarray, eps: float):
        p = self.points(x)
        diff = p[self.ia] - p[self.ib]
        r = np.sqrt(np.einsum("ij,ij->i", diff, diff) + eps * eps)
        f = float(self.w @ r)
        g_edge = (self.w / r)[:, None] * diff
        grad = np.zeros_like(p)
        np.add.at(grad, self.ia, g_edge)
        np.add.at(grad, self.ib, -g_edge)
        return f, grad[self.n :].ravel()

    def harmonic_start(self) -> np.ndarray:
        """Steiner positions minimizing the weighted sum of squared edge lengths."""
        k, n = self.k, self.n
        lap = np.zeros((k, k))
        rhs = np.zeros((k, self.dim))
        w = np.maximum(self.w, 1e-3 * max(self.w.max(), 1e-300))
        for (a, b), we in zip(self.topology.edges, w):
            for u, v in ((a, b), (b, a)):
                if u >= n:
                    lap[u - n, u - n] += we
                    if v >= n:
                        lap[u - n, v - n] -= we
                    else:
                        rhs[u - n] += we * self.terminals[v]
        return np.linalg.solve(lap, rhs).ravel()

    def smoothed_value(self, x: np.ndarray, eps: float) -> float:
        p = self.points(x)
        diff = p[self.ia] - p[self.ib]
        return math.fsum(self.w * np.sqrt(np.einsum("ij,ij->i", diff, diff) + eps * eps))

    def newton(self, x: np.ndarray, eps: float, steps: int = 100) -> tuple[np.ndarray, int]:
        """Damped Newton on the smoothed functional (exact functional when ``eps == 0``).

        Steps are backtracked until the objective decreases; the loop ends when
        no decreasing step exists or the gradient vanishes.
        """
        n, k, dim = self.n, self.k, self.dim
        val = self.smoothed_value(x, eps)
        eye = np.eye(dim)
        done = 0
        for done in range(1, steps + 1):
            p = self.points(x)
            diff = p[self.ia] - p[self.ib]
            r = np.sqrt(np.einsum("ij,ij->i", diff, diff) + eps * eps)
            live = self.w > 0
            if eps == 0 and np.any(r[live] <= 1e-14 * self.diam):
                break
            r = np.where(live, r, 1.0)
            g_edge = (self.w / r)[:, None] * diff
            grad = np.zeros_like(p)
            np.add.at(grad, self.ia, g_edge)
            np.add.at(grad, self.ib, -g_edge)
            g = grad[n:].ravel()
            if np.linalg.norm(g) <= 1e-15 * max(self.w.sum(), 1e-300):
                break
            unit = diff / r[:, None]
            blocks = (self.w / r)[:, None, None] * (eye - unit[:, :, None] * unit[:, None, :])
            h4 = np.zeros((n + k, n + k, dim, dim))
            np.add.at(h4, (self.ia, self.ia), blocks)
            np.add.at(h4, (self.ib, self.ib), blocks)
            np.add.at(h4, (self.ia, self.ib), -blocks)
            np.add.at(h4, (self.ib, self.ia), -blocks)
            hess = h4[n:, n:].transpose(0, 2, 1, 3).reshape(k * dim, k * dim)
            hess = hess + 1e-13 * max(np.trace(hess), 1e-300) * np.eye(k * dim)
            try:
                step = np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                break
            # Predicted decrease below round-off: nothing left to gain.
            if float(g @ step) <= 1e-15 * val:
                break
            t, moved = 1.0, False
            for _ in range(30):
                cand = x - t * step
                cv = self.smoothed_value(cand, eps)
                if cv < val:
                    x, val, moved = cand, cv, True
                    break
                t *= 0.5
            if not moved:
                break
        return x, done

    def local_problem(self, x: np.ndarray, s: int):
        """Anchors and weights for Steiner node ``s`` (0-based), coincident anchors merged."""
        p = self.points(x)
        snap = 1e-12 * max(self.diam, 1e-300)
        anchors: list[np.ndarray] = []
        weights: list[float] = []
        for e_idx, other in self.nbrs[s]:
            w = self.w[e_idx]
            if w == 0:
                continue
            pos = p[other]
            for i, a in enumerate(anchors):
                if np.linalg.norm(a - pos) <= snap:
                    weights[i] += w
                    break
            else:
                anchors.append(pos)
                weights.append(w)
        return anchors, weights

    def node_residual(self, x: np.ndarray, s: int) -> float:
        anchors, weights = self.local_problem(x, s)
        if not anchors:
            return 0.0
        here = x.reshape(self.k, self.dim)[s]
        total = sum(weights)
        a = np.array(anchors)
        w = np.array(weights)
        d = np.linalg.norm(a - here, axis=1)
        snap = 1e-12 * max(self.diam, 1e-300)
        at = np.nonzero(d <= snap)[0]
        if len(at):
            j = at[0]
            others = [i for i in range(len(a)) if i != j]
            if not others:
                return 0.0
            diff = a[others] - a[j]
            pull = (w[others][:, None] * diff / np.linalg.norm(diff, axis=1)[:, None]).sum(axis=0)
            return max(0.0, float(np.linalg.norm(pull)) - w[j]) / total
        pull = (w[:, None] * (a - here) / d[:, None]).sum(axis=0)
        return float(np.linalg.norm(pull)) / total

    def residual(self, x: np.ndarray) -> float:
        return max((self.node_residual(x, s) for s in range(self.k)), default=0.0)

    def sweep(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        """One cyclic pass of exact per-node minimization; returns (x, all node solves converged)."""
        x = x.copy().reshape(self.k, self.dim)
        ok = True
        for s in range(self.k):
            anchors, weights = self.local_problem(x.ravel(), s)
            if not anchors:
                continue
            if len(anchors) == 1:
                x[s] = anchors[0]
                continue
            before = _local_value(x[s], anchors, weights)
            try:
                res = weighted_fermat(anchors, weights, start=x[s])
            except ConvergenceError as exc:
                res = exc.best
                ok = False
            if res.objective <= before:
                x[s] = res.minimizer
        return x.ravel(), ok


def _local_value(pos, anchors, weights) -> float:
    return float(sum(w * np.linalg.norm(pos - a) for a, w in zip(anchors, weights)))


def _build_flow(problem: _Problem, x: np.ndarray, ids: Sequence[str], steiner_ids: Sequence[str]) -> Flow:
    inst = problem.instance
    pts = problem.points(x)
    names = list(ids) + list(steiner_ids)
    verts = [Vertex(t.id, t.position.copy(), TERMINAL) for t in inst.terminals]
    verts += [Vertex(sid, pts[problem.n + i].copy(), BRANCHING) for i, sid in enumerate(steiner_ids)]
    edges = []
    for a, b in problem.topology.edges:
        m = problem.masses[(a, b)]
        if abs(m) == 0:
            continue
        edges.append(make_edge(names[a], names[b], m))
    return Flow(tuple(verts), tuple(sorted(edges))).with_functional(inst.cost)


def steiner_names(instance: Instance, k: int) -> list[str]:
    """Ids for branching points that cannot clash with terminal ids."""
    taken = set(instance.ids)
    prefix = "s"
    while any(f"{prefix}{i}" in taken for i in range(1, k + 1)):
        prefix += "_"
    return [f"{prefix}{i}" for i in range(1, k + 1)]


def optimize_positions(
    topology: Topology,
    instance: Instance,
    init: Optional[np.ndarray] = None,
    merge_tol: Optional[float] = None,
) -> Solution:
    """Minimize the Gilbert functional of ``topology`` over its Steiner positions.

    Stages: damped Newton with backtracking on the smoothed lengths
    sqrt(|d|^2 + eps^2) for a decreasing schedule of eps, then on the exact
    functional, then cyclic per-node weighted Fermat sweeps until the functional stops
    decreasing.  The best configuration seen is kept, so the recorded history
    is nonincreasing.  Never raises for lack of convergence; the flag on the
    returned solution says whether every node met the optimality residual.
    """
    problem = _Problem(topology, instance)
    ids = instance.ids
    snames = steiner_names(instance, problem.k)
    label = topology.label(ids)
    merge_tol = default_merge_tol(instance) if merge_tol is None else merge_tol

    if problem.k == 0:
        flow = _build_flow(problem, np.zeros(0), ids, snames)
        return Solution(
            normalize_flow(flow, merge_tol, instance.cost), topology, label, flow.functional, True, 0, flow,
            0.0, [flow.functional],
        )

    x = problem.harmonic_start() if init is None else np.asarray(init, dtype=float).ravel().copy()
    if x.shape != (problem.k * problem.dim,):
        raise ConfigurationError(f"initial positions must have shape ({problem.k}, {problem.dim})")
    best_val = problem.value(x)
    history = [best_val]
    iterations = 0

    def accept(cand):
        nonlocal x, best_val
        val = problem.value(cand)
        if val <= best_val:
            x, best_val = cand, val
        history.append(best_val)

    scale = max(problem.diam, 1e-300)
    for eps_rel in SMOOTHING_SCHEDULE + (0.0,):
        cand, steps = problem.newton(x, eps_rel * scale)
        iterations += steps
        accept(cand)

    sweeps_ok = True
    for _ in range(MAX_SWEEPS):
        iterations += 1
        cand, ok = problem.sweep(x)
        sweeps_ok = sweeps_ok and ok
        prev = best_val
        accept(cand)
        if prev - best_val <= SWEEP_RTOL * best_val:
            break

    residual = problem.residual(x)
    converged = bool(sweeps_ok and residual <= RESIDUAL_TOL)
    raw = _build_flow(problem, x, ids, snames)
    return Solution(
        normalize_flow(raw, merge_tol, instance.cost),
        topology,
        label,
        raw.functional,
        converged,
        iterations,
        raw,
        residual,
        history,
    )


def _optimize_one(args):
    topology, instance, merge_tol = args
    return optimize_positions(topology, instance, merge_tol=merge_tol)


def solve(
    instance: Instance,
    allow_degree4: bool = False,
    tie_tol: float = TIE_TOL,
    merge_tol: Optional[float] = None,
    workers: Optional[int] = None,
) -> Solution:
    """Best flow over every enumerated topology.

    Topologies are optimized independently (in ``workers`` processes when
    given); the winner is the smallest value, ties within ``tie_tol`` going to
    the lexicographically smallest topology label.
    """
    topologies = list(enumerate_topologies(len(instance.terminals), allow_degree4))
    merge_tol = default_merge_tol(instance) if merge_tol is None else merge_tol
    jobs = [(t, instance, merge_tol) for t in topologies]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_optimize_one, jobs))
    else:
        results = [_optimize_one(j) for j in jobs]
    best_val = min(r.value for r in results)
    tied = [r for r in results if r.value <= best_val + tie_tol]
    best = min(tied, key=lambda r: r.label)
    others = [r.value for r in results if r is not best]
    best.competitor_gap = (min(others) - best.value) if others else math.inf
    best.candidates = sorted(((r.label, r.value) for r in results), key=lambda lv: (lv[1], lv[0]))
    return best
