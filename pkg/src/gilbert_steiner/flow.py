"""Flows between signed point masses: data model, conservation checks and local audits.

Sign convention.  An edge ``Edge(u, v, m)`` stores ``m = m(u, v)`` for the
canonical orientation ``u < v``; ``m(v, u) = -m``.  The flow identity is

    mu_plus - mu_minus = sum over edges of m(u, v) * (delta_v - delta_u)

so the signed instance mass at a vertex x equals the total mass on edges
pointing into x minus the total on edges pointing out of x.  Branching points
carry zero instance mass.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .cost import CostSpec, eval_cost, h_angle
from .errors import ConfigurationError, DegenerateAngleError, FlowStructureError, NoTriangleError
from .geometry import vector_angle

#: Conservation residual tolerated at every vertex.
DIVERGENCE_TOL = 1e-10
#: Edges lighter than this are dropped during normalization.
ZERO_MASS = 1e-12
#: Default merge radius, as a fraction of the instance diameter.
MERGE_REL = 1e-7

TERMINAL = "terminal"
BRANCHING = "branching"


@dataclass(frozen=True)
class Terminal:
    id: str
    position: np.ndarray
    mass: float


@dataclass(frozen=True, eq=False)
class Instance:
    """Signed point masses on the plane or in space plus a cost function.

    Positive masses are atoms of mu_plus, negative ones atoms of mu_minus.
    """

    dimension: int
    terminals: tuple[Terminal, ...]
    cost: CostSpec

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension!r}")
        terms = tuple(
            Terminal(str(t.id), np.array(t.position, dtype=float), float(t.mass)) for t in self.terminals
        )
        object.__setattr__(self, "terminals", terms)
        if len(terms) < 2:
            raise ConfigurationError("an instance needs at least 2 terminals")
        if not isinstance(self.cost, CostSpec):
            raise ConfigurationError("cost must be a CostSpec")
        ids = [t.id for t in terms]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("terminal ids must be unique")
        for t in terms:
            if t.position.shape != (self.dimension,) or not np.all(np.isfinite(t.position)):
                raise ConfigurationError(f"terminal {t.id}: position must be {self.dimension} finite numbers")
            if not math.isfinite(t.mass) or t.mass == 0:
                raise ConfigurationError(f"terminal {t.id}: mass must be finite and nonzero")
        for a, b in itertools.combinations(terms, 2):
            if np.array_equal(a.position, b.position):
                raise ConfigurationError(f"terminals {a.id} and {b.id} share a position")
        masses = [t.mass for t in terms]
        net = math.fsum(masses)
        if abs(net) > 1e-12 * max(1.0, math.fsum(abs(m) for m in masses)):
            raise ConfigurationError(f"terminal masses must sum to zero (net mass {net!r})")

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.terminals]

    @property
    def masses(self) -> dict[str, float]:
        return {t.id: t.mass for t in self.terminals}

    @property
    def positions(self) -> np.ndarray:
        return np.array([t.position for t in self.terminals])

    @property
    def diameter(self) -> float:
        pts = self.positions
        return float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)))


@dataclass(frozen=True)
class Vertex:
    id: str
    position: np.ndarray
    kind: str = BRANCHING


class Edge(NamedTuple):
    u: str
    v: str
    mass: float

    def outgoing(self, vertex: str) -> float:
        """m(vertex, other end)."""
        if vertex == self.u:
            return self.mass
        if vertex == self.v:
            return -self.mass
        raise KeyError(vertex)

    def other(self, vertex: str) -> str:
        return self.v if vertex == self.u else self.u


def make_edge(a: str, b: str, mass_ab: float) -> Edge:
    """Edge carrying m(a, b) = ``mass_ab``, stored in canonical orientation."""
    if a == b:
        raise FlowStructureError(f"self-loop at {a}")
    return Edge(a, b, float(mass_ab)) if a < b else Edge(b, a, -float(mass_ab))


@dataclass(frozen=True, eq=False)
class Flow:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    functional: Optional[float] = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))
        object.__setattr__(self, "_index", {v.id: v for v in self.vertices})

    def vertex(self, vid: str) -> Vertex:
        return self._index[vid]

    def position(self, vid: str) -> np.ndarray:
        return self._index[vid].position

    def incident(self, vid: str) -> list[Edge]:
        return [e for e in self.edges if vid in (e.u, e.v)]

    def length(self, e: Edge) -> float:
        return float(np.linalg.norm(self.position(e.u) - self.position(e.v)))

    @property
    def branch_points(self) -> list[str]:
        return [v.id for v in self.vertices if v.kind == BRANCHING]

    def with_functional(self, cost: CostSpec) -> "Flow":
        return Flow(self.vertices, self.edges, gilbert_functional(self, cost))


class Violation(NamedTuple):
    kind: str
    where: str
    detail: str


def _check_structure(flow: Flow):
    ids = [v.id for v in flow.vertices]
    if len(set(ids)) != len(ids):
        raise FlowStructureError("vertex ids must be unique")
    known = set(ids)
    for e in flow.edges:
        for end in (e.u, e.v):
            if end not in known:
                raise FlowStructureError(f"edge ({e.u}, {e.v}) references unknown vertex {end!r}")


def divergence(flow: Flow) -> dict[str, float]:
    """Signed mass each vertex receives from the flow: inflow minus outflow."""
    acc: dict[str, list[float]] = {v.id: [] for v in flow.vertices}
    for e in flow.edges:
        acc[e.v].append(e.mass)
        acc[e.u].append(-e.mass)
    return {k: math.fsum(v) for k, v in acc.items()}


def validate_flow(flow: Flow, instance: Instance) -> list[Violation]:
    """Return every numeric or convention violation; structural defects raise.

    Checks canonical orientation, simplicity, nonzero edge masses, and the
    conservation identity at every vertex (terminals must emit their instance
    mass, branching points must balance to zero).
    """
    _check_structure(flow)
    out: list[Violation] = []
    masses = instance.masses
    seen = set()
    for e in flow.edges:
        where = f"{e.u}-{e.v}"
        if e.u == e.v:
            out.append(Violation("self_loop", where, "edge joins a vertex to itself"))
            continue
        if not e.u < e.v:
            out.append(Violation("orientation", where, "edge not stored as (min id, max id)"))
        key = frozenset((e.u, e.v))
        if key in seen:
            out.append(Violation("multi_edge", where, "repeated edge"))
        seen.add(key)
        if not math.isfinite(e.mass) or abs(e.mass) <= 0:
            out.append(Violation("zero_mass", where, f"edge mass {e.mass!r} must be nonzero"))
    kinds = {v.id: v.kind for v in flow.vertices}
    for tid in masses:
        if tid not in kinds:
            out.append(Violation("missing_terminal", tid, "terminal absent from the flow"))
        elif kinds[tid] != TERMINAL:
            out.append(Violation("kind", tid, "terminal vertex marked as branching"))
    for vid, kind in kinds.items():
        if kind == TERMINAL and vid not in masses:
            out.append(Violation("kind", vid, "vertex marked terminal but not in the instance"))
    scale = max(1.0, max(abs(m) for m in masses.values()))
    for vid, div in divergence(flow).items():
        want = masses.get(vid, 0.0)
        if abs(div - want) > DIVERGENCE_TOL * scale:
            what = "terminal" if vid in masses else "branching point"
            out.append(Violation("divergence", vid, f"{what} balance {div!r}, expected {want!r}"))
    return out


def gilbert_functional(flow: Flow, cost: CostSpec) -> float:
    """Sum of C(|m|) times length over the edges, in sorted edge order."""
    terms = [eval_cost(cost, abs(e.mass)) * flow.length(e) for e in sorted(flow.edges)]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# normalization


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def normalize_flow(flow: Flow, merge_tol: float, cost: Optional[CostSpec] = None) -> Flow:
    """Merge near-coincident vertices and tidy the edge set.

    Branching points within ``merge_tol`` of each other, or of a terminal, are
    merged (a terminal absorbs any branching point that lands on it).  Edges
    that became loops are dropped, parallel edges are combined, edges lighter
    than ``ZERO_MASS`` are removed, and branching points of degree 2 whose
    edges carry the same mass are replaced by a single edge.
    """
    if merge_tol < 0:
        raise ConfigurationError("merge_tol must be nonnegative")
    _check_structure(flow)
    verts = {v.id: v for v in flow.vertices}
    uf = _UnionFind(verts)
    ids = sorted(verts)
    for a, b in itertools.combinations(ids, 2):
        va, vb = verts[a], verts[b]
        if va.kind == TERMINAL and vb.kind == TERMINAL:
            continue
        if np.linalg.norm(va.position - vb.position) <= merge_tol:
            uf.union(a, b)
    groups: dict[str, list[str]] = {}
    for vid in ids:
        groups.setdefault(uf.find(vid), []).append(vid)
    rep = {}
    new_verts = {}
    for members in groups.values():
        terms = [m for m in members if verts[m].kind == TERMINAL]
        # Two terminals can only share a group through a chain of branching points.
        keep = terms if terms else [members[0]]
        for t in keep:
            new_verts[t] = verts[t]
        for m in members:
            if m in keep:
                rep[m] = m
            else:
                rep[m] = min(keep, key=lambda k: (np.linalg.norm(verts[k].position - verts[m].position), k))

    acc: dict[tuple[str, str], list[float]] = {}
    for e in flow.edges:
        a, b = rep[e.u], rep[e.v]
        if a == b:
            continue
        ce = make_edge(a, b, e.mass)
        acc.setdefault((ce.u, ce.v), []).append(ce.mass)
    edges = {k: math.fsum(v) for k, v in acc.items()}
    edges = {k: m for k, m in edges.items() if abs(m) >= ZERO_MASS}

    changed = True
    while changed:
        changed = False
        for vid in sorted(new_verts):
            if new_verts[vid].kind != BRANCHING:
                continue
            inc = [k for k in edges if vid in k]
            if not inc:
                del new_verts[vid]
                changed = True
                break
            if len(inc) != 2:
                continue
            (k1, k2) = inc
            e1 = Edge(*k1, edges[k1])
            e2 = Edge(*k2, edges[k2])
            m_in = -e1.outgoing(vid)  # m(other1, vid)
            m_out = e2.outgoing(vid)  # m(vid, other2)
            if abs(m_in - m_out) > ZERO_MASS * max(1.0, abs(m_in)):
                continue
            a, b = e1.other(vid), e2.other(vid)
            del edges[k1], edges[k2], new_verts[vid]
            ce = make_edge(a, b, m_in)
            key = (ce.u, ce.v)
            edges[key] = edges.get(key, 0.0) + ce.mass
            if abs(edges[key]) < ZERO_MASS:
                del edges[key]
            changed = True
            break

    vertices = tuple(new_verts[k] for k in sorted(new_verts, key=lambda k: (new_verts[k].kind != TERMINAL, k)))
    out = Flow(vertices, tuple(Edge(u, v, m) for (u, v), m in sorted(edges.items())))
    if cost is not None:
        out = out.with_functional(cost)
    return out


def branch_degrees(flow: Flow, merge_tol: float) -> dict[str, int]:
    """Degrees of the branching points after :func:`normalize_flow`."""
    norm = normalize_flow(flow, merge_tol)
    return {b: len(norm.incident(b)) for b in norm.branch_points}


def default_merge_tol(instance: Instance) -> float:
    return MERGE_REL * instance.diameter


# ---------------------------------------------------------------------------
# angle audit


class AngleCheck(NamedTuple):
    branch: str
    pair: tuple[str, str]
    angle: float
    required: float
    margin: float  # angle - required

    @property
    def violated(self) -> bool:
        return self.margin < 0


@dataclass
class AngleAudit:
    checks: list[AngleCheck] = field(default_factory=list)
    violations: list[AngleCheck] = field(default_factory=list)
    #: (branch point, neighbour pair, reason) for pairs where no bound exists.
    unavailable: list[tuple[str, tuple[str, str], str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_local_angles(flow: Flow, cost: CostSpec, tol: float = 1e-6) -> AngleAudit:
    """Compare every angle between two edges at a branch point with the bound h.

    Masses are oriented away from the branch point.  A pair is a violation when
    its angle falls short of h(m_i, m_j) by more than ``tol``.
    """
    audit = AngleAudit()
    for b in sorted(flow.branch_points):
        here = flow.position(b)
        inc = sorted(flow.incident(b), key=lambda e: e.other(b))
        for e1, e2 in itertools.combinations(inc, 2):
            pair = (e1.other(b), e2.other(b))
            try:
                req = h_angle(cost, e1.outgoing(b), e2.outgoing(b)).value
            except (NoTriangleError, DegenerateAngleError) as exc:
                audit.unavailable.append((b, pair, str(exc)))
                continue
            r1 = flow.position(pair[0]) - here
            r2 = flow.position(pair[1]) - here
            if not np.any(r1) or not np.any(r2):
                audit.unavailable.append((b, pair, "zero-length edge"))
                continue
            ang = vector_angle(r1, r2)
            check = AngleCheck(b, pair, ang, req, ang - req)
            audit.checks.append(check)
            if check.margin < -tol:
                audit.violations.append(check)
    return audit


def star_flow(center: Sequence[float], instance: Instance, center_id: str = "O") -> Flow:
    """Every terminal joined directly to one branching point at ``center``."""
    verts = [Vertex(t.id, t.position, TERMINAL) for t in instance.terminals]
    verts.append(Vertex(center_id, np.asarray(center, dtype=float), BRANCHING))
    # Terminal mass mu({t}) arrives through its only edge: m(O, t) = mass(t).
    edges = [make_edge(center_id, t.id, t.mass) for t in instance.terminals]
    return Flow(tuple(verts), tuple(edges)).with_functional(instance.cost)
