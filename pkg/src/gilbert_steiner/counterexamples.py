"""Stars with a branching point of degree 4 and the checks that certify them.

Both constructions start from four masses m1..m4 of zero sum and the closed
polychain A0 A1 A2 A3 (A4 = A0) whose side lengths are the costs of the
partial sums, |Ai Aj| = C(|S_j - S_i|) with S_j = m1 + ... + mj.  The unit rays
OB_i point along A_i - A_{i-1}.  Because the polychain closes, the weighted
unit vectors C(|m_i|) OB_i sum to zero, so O is the weighted Fermat point of
the B_i, and consecutive rays meet at exactly the angle bound h(m_i, m_{i+1}).

* In space, an admissible cost gives a genuine tetrahedron; the star is
  optimal whenever both diagonal angles exceed their bounds.
* In the plane, the piecewise-linear cost with C(1)=1, C(2)=1.9, C(3)=2.61
  satisfies 1.9^2 = 1 * (1 + 2.61), so the polychain is an isosceles trapezoid
  inscribed in a circle.  That cost is not admissible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import TRAPEZOID_COST, CostSpec, eval_cost, h_angle
from .errors import ConfigurationError, GilbertSteinerError
from .flow import Flow, Instance, Terminal, star_flow
from .geometry import embed_from_distances, vector_angle
from .solver import Topology, _Problem, enumerate_topologies, optimize_positions

RESIDUAL_TOL = 1e-8
COMPETITOR_SLACK = 1e-9
ANGLE_TOL = 1e-9
#: Diagonal margins must exceed this; smaller values are indistinguishable from equality.
MARGIN_TOL = 1e-9


class HypothesisRejected(GilbertSteinerError):
    """The mass vector does not satisfy the construction's hypotheses."""


class ConstructionError(GilbertSteinerError):
    """A check that must hold for the fixed planar construction failed."""


@dataclass
class StarCertificate:
    instance: Instance
    masses: tuple[float, ...]
    flow: Flow
    star_value: float
    residual: float
    diagonal_margins: tuple[float, float]
    #: Optimized value per two-branch-point topology, keyed by topology label.
    competitor_values: dict[str, float]
    polychain: np.ndarray
    #: (measured angle between OB_i and OB_{i+1}, h(m_i, m_{i+1})) for i = 1..4.
    consecutive_angles: list[tuple[float, float]]
    topologies: dict[str, Topology] = field(default_factory=dict, repr=False)
    rejection: Optional[str] = None

    @property
    def valid(self) -> bool:
        return (
            self.rejection is None
            and self.residual < RESIDUAL_TOL
            and min(self.diagonal_margins) > MARGIN_TOL
            and min(self.competitor_values.values()) >= self.star_value - COMPETITOR_SLACK
        )


def _check_masses(masses: Sequence[float]) -> tuple[float, ...]:
    masses = tuple(float(m) for m in masses)
    if len(masses) != 4:
        raise ConfigurationError("need exactly four masses")
    if any(m == 0 for m in masses):
        raise HypothesisRejected("masses must be nonzero")
    if abs(math.fsum(masses)) > 1e-12 * max(1.0, sum(abs(m) for m in masses)):
        raise ConfigurationError(f"masses must sum to zero, got {math.fsum(masses)!r}")
    for i, j in itertools.combinations(range(4), 2):
        if abs(masses[i] + masses[j]) <= 1e-12:
            raise HypothesisRejected(f"masses m{i + 1} and m{j + 1} sum to zero")
    return masses


def polychain(masses: Sequence[float], cost: CostSpec, dim: int) -> np.ndarray:
    """Points A0..A3 with |Ai Aj| = C(|S_j - S_i|)."""
    sums = [0.0, *itertools.accumulate(masses[:3])]
    d = np.array([[eval_cost(cost, abs(sj - si)) for sj in sums] for si in sums])
    return embed_from_distances(d, dim)


def ray_directions(points: np.ndarray) -> np.ndarray:
    """Unit vectors along A_i - A_{i-1} for i = 1..4 (A4 = A0)."""
    steps = np.roll(points, -1, axis=0) - points  # A1-A0, A2-A1, A3-A2, A0-A3
    return steps / np.linalg.norm(steps, axis=1)[:, None]


def _star_certificate(masses, cost, dim, ids) -> StarCertificate:
    pts = polychain(masses, cost, dim)
    rays = ray_directions(pts)
    terminals = tuple(Terminal(tid, ray, -m) for tid, ray, m in zip(ids, rays, masses))
    inst = Instance(dim, terminals, cost)
    flow = star_flow(np.zeros(dim), inst)
    weights = np.array([eval_cost(cost, abs(m)) for m in masses])
    residual = float(np.linalg.norm(weights @ rays))
    consecutive = [
        (vector_angle(rays[i], rays[(i + 1) % 4]), h_angle(cost, masses[i], masses[(i + 1) % 4]).value)
        for i in range(4)
    ]
    margins = (
        vector_angle(rays[0], rays[2]) - h_angle(cost, masses[0], masses[2]).value,
        vector_angle(rays[1], rays[3]) - h_angle(cost, masses[1], masses[3]).value,
    )
    competitors, tops = {}, {}
    for top in enumerate_topologies(4):
        sol = optimize_positions(top, inst)
        competitors[sol.label] = sol.value
        tops[sol.label] = top
    return StarCertificate(
        inst, tuple(masses), flow, flow.functional, residual, margins, competitors, pts, consecutive, tops
    )


def build_simplex_star(masses: Sequence[float], cost: CostSpec) -> StarCertificate:
    """Degree-4 star in space built from the tetrahedron of partial-sum costs.

    Raises :class:`HypothesisRejected` when two masses cancel.  When a diagonal
    angle does not exceed its bound by more than ``MARGIN_TOL`` the certificate
    is returned with ``rejection`` set and ``valid`` false.  For C(t) = sqrt(t)
    disjoint same-sign partial-sum intervals give orthogonal rays, so margins
    are typically exactly zero and the hypothesis fails.
    """
    if not cost.embeddable:
        raise ConfigurationError(f"{cost.kind} cost is not Hilbert embeddable")
    masses = _check_masses(masses)
    cert = _star_certificate(masses, cost, 3, ("B1", "B2", "B3", "B4"))
    failed = [name for name, m in zip(("B1OB3", "B2OB4"), cert.diagonal_margins) if not m > MARGIN_TOL]
    if failed:
        cert.rejection = "diagonal angle does not exceed its bound at " + ", ".join(failed)
    return cert


def ptolemy_defect(cost: CostSpec, m1: float, m2: float) -> float:
    """C(|m1+m2|)^2 - C(|m1|) (C(|m2|) + C(|2 m1 + m2|))."""
    c = lambda t: eval_cost(cost, abs(t))  # noqa: E731
    return c(m1 + m2) ** 2 - c(m1) * (c(m2) + c(2 * m1 + m2))


def build_trapezoid_star() -> StarCertificate:
    """The planar degree-4 star for masses (1, 1, 1, -3) under the piecewise-linear cost."""
    cost = TRAPEZOID_COST
    masses = (1.0, 1.0, 1.0, -3.0)
    defect = ptolemy_defect(cost, masses[0], masses[1])
    if abs(defect) > 1e-12:
        raise ConstructionError(f"Ptolemy identity fails by {defect!r}")
    cert = _star_certificate(masses, cost, 2, ("B1", "B2", "B3", "B4"))
    problems = []
    for i, (ang, h) in enumerate(cert.consecutive_angles):
        if abs(ang - h) > ANGLE_TOL:
            problems.append(f"angle B{i + 1}OB{(i + 1) % 4 + 1} = {ang!r} differs from h = {h!r}")
    rays = np.array([cert.instance.terminals[i].position for i in range(4)])
    if abs(vector_angle(rays[1], rays[3]) - math.pi) > ANGLE_TOL:
        problems.append("B2 and B4 are not opposite")
    if not min(cert.diagonal_margins) > MARGIN_TOL:
        problems.append(f"diagonal margins {cert.diagonal_margins} not positive")
    if not cert.residual < RESIDUAL_TOL:
        problems.append(f"Fermat residual {cert.residual!r} at O")
    for label, value in cert.competitor_values.items():
        if value < cert.star_value - COMPETITOR_SLACK:
            problems.append(f"competitor {label} beats the star: {value!r} < {cert.star_value!r}")
    if problems:
        raise ConstructionError("; ".join(problems))
    return cert


def simplex_margins(masses: Sequence[float], cost: CostSpec) -> tuple[float, float]:
    """Diagonal margins of the spatial construction without the competitor solves."""
    masses = _check_masses(masses)
    rays = ray_directions(polychain(masses, cost, 3))
    return (
        vector_angle(rays[0], rays[2]) - h_angle(cost, masses[0], masses[2]).value,
        vector_angle(rays[1], rays[3]) - h_angle(cost, masses[1], masses[3]).value,
    )


def search_simplex_masses(cost: CostSpec, max_abs: int = 6) -> list[tuple[tuple[int, ...], tuple[float, float]]]:
    """Integer mass vectors (entries up to ``max_abs``) whose spatial star meets both diagonal bounds.

    Vectors are listed once per cyclic rotation and reflection class of the
    polychain and with the first mass positive.
    """
    found = []
    seen = set()
    rng = [m for m in range(-max_abs, max_abs + 1) if m != 0]
    for m1, m2, m3 in itertools.product(rng, repeat=3):
        m4 = -(m1 + m2 + m3)
        vec = (m1, m2, m3, m4)
        if m4 == 0 or abs(m4) > max_abs or m1 < 0:
            continue
        if any(vec[i] + vec[j] == 0 for i, j in itertools.combinations(range(4), 2)):
            continue
        orbit = set()
        for r in range(4):
            rot = vec[r:] + vec[:r]
            for cand in (rot, rot[::-1], tuple(-x for x in rot), tuple(-x for x in rot[::-1])):
                orbit.add(cand)
        key = min(orbit)
        if key in seen:
            continue
        seen.add(key)
        try:
            margins = simplex_margins(vec, cost)
        except GilbertSteinerError:
            continue
        if min(margins) > MARGIN_TOL:
            found.append((vec, margins))
    return found


def _perturbed_deltas(problem: _Problem, us, vs) -> np.ndarray:
    """Functional change when the two Steiner nodes move from O to ``us`` and ``vs``."""
    n = problem.n
    base = problem.terminals
    total = np.zeros(len(us))
    for (a, b), w in zip(problem.topology.edges, problem.w):
        if w == 0:
            continue

        def pos(node, moved):
            if node < n:
                return np.broadcast_to(base[node], moved[0].shape)
            return moved[node - n]

        new = pos(a, (us, vs)) - pos(b, (us, vs))
        old = pos(a, (np.zeros_like(us), np.zeros_like(vs))) - pos(b, (np.zeros_like(us), np.zeros_like(vs)))
        ln, lo = np.linalg.norm(new, axis=1), np.linalg.norm(old, axis=1)
        denom = ln + lo
        # |x| - |y| = (|x|^2 - |y|^2) / (|x| + |y|) keeps tiny differences accurate.
        diff = np.where(denom > 0, np.einsum("ij,ij->i", new - old, new + old) / np.where(denom > 0, denom, 1), 0.0)
        total += w * diff
    return total


def perturbation_probe(
    cert: StarCertificate,
    n_samples: int = 10_000,
    radius: float = 1e-4,
    pairing: Optional[str] = None,
    seed: int = 0,
) -> float:
    """Smallest change of a two-branch-point competitor's functional near U = V = O.

    Samples random unit directions u, v and step sizes in (0, radius] and
    evaluates L(O + eps u, O + delta v) - L(O, O).  ``pairing`` is a topology
    label from ``cert.competitor_values``; by default every pairing is probed
    and the overall minimum returned.
    """
    if radius < 0:
        raise ConfigurationError("radius must be nonnegative")
    labels = [pairing] if pairing is not None else sorted(cert.topologies)
    dim = cert.instance.dimension
    rng = np.random.default_rng(seed)
    worst = math.inf
    for label in labels:
        top = cert.topologies[label]
        problem = _Problem(top, cert.instance)
        u = rng.normal(size=(n_samples, dim))
        v = rng.normal(size=(n_samples, dim))
        u /= np.linalg.norm(u, axis=1)[:, None]
        v /= np.linalg.norm(v, axis=1)[:, None]
        eps = radius * (1.0 - rng.random(n_samples))
        delta = radius * (1.0 - rng.random(n_samples))
        deltas = _perturbed_deltas(problem, eps[:, None] * u, delta[:, None] * v)
        worst = min(worst, float(deltas.min()))
    return worst
