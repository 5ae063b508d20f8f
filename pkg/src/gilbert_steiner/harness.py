"""Randomized check that optimal flows under power costs branch with degree at most 3."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import PowerCost
from .errors import ConfigurationError
from .flow import Instance, Terminal, branch_degrees, check_local_angles, default_merge_tol, validate_flow
from .solver import TIE_TOL, solve

HARNESS_SIZES = (4, 5)
HARNESS_EXPONENTS = (0.3, 0.5, 0.7, 0.9)
ANGLE_TOL = 1e-6
#: Every proper subset of terminal masses must sum to at least this fraction of max |m|.
SUBSET_SUM_FLOOR = 0.1


def _subset_sums_ok(masses: Sequence[float]) -> bool:
    n = len(masses)
    floor = SUBSET_SUM_FLOOR * max(abs(m) for m in masses)
    for r in range(1, n):
        for combo in itertools.combinations(masses, r):
            if abs(math.fsum(combo)) < floor:
                return False
    return True


def random_masses(rng: np.random.Generator, n: int) -> tuple[float, ...]:
    """Nonzero masses of zero sum with every proper subset sum bounded away from zero."""
    while True:
        head = rng.uniform(0.2, 1.0, size=n - 1) * rng.choice((-1.0, 1.0), size=n - 1)
        masses = tuple(float(m) for m in head) + (-math.fsum(head),)
        if _subset_sums_ok(masses):
            return masses


def random_instance(rng: np.random.Generator, n: int, p: float) -> Instance:
    masses = random_masses(rng, n)
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    terminals = tuple(Terminal(f"t{i + 1}", pts[i], masses[i]) for i in range(n))
    return Instance(2, terminals, PowerCost(p))


@dataclass
class HarnessRow:
    index: int
    instance: Instance
    topology: str
    value: float
    max_degree: int
    competitor_gap: float
    flow_violations: list = field(default_factory=list)
    angle_violations: int = 0
    converged: bool = True
    beaten_by: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.max_degree <= 3 and not self.flow_violations and self.angle_violations == 0 and self.beaten_by is None


def check_instance(index: int, instance: Instance, angle_tol: float = ANGLE_TOL, **solve_kwargs) -> HarnessRow:
    sol = solve(instance, allow_degree4=True, **solve_kwargs)
    merge_tol = solve_kwargs.get("merge_tol") or default_merge_tol(instance)
    degrees = branch_degrees(sol.flow, merge_tol)
    audit = check_local_angles(sol.flow, instance.cost, angle_tol)
    tie_tol = solve_kwargs.get("tie_tol", TIE_TOL)
    beaten = next((label for label, v in sol.candidates if v < sol.value - tie_tol), None)
    return HarnessRow(
        index=index,
        instance=instance,
        topology=sol.label,
        value=sol.value,
        max_degree=max(degrees.values(), default=0),
        competitor_gap=sol.competitor_gap,
        flow_violations=validate_flow(sol.flow, instance),
        angle_violations=len(audit.violations),
        converged=bool(sol.converged),
        beaten_by=beaten,
    )


def run_theorem_harness(samples: int, seed: int, angle_tol: float = ANGLE_TOL, **solve_kwargs) -> list[HarnessRow]:
    """Solve ``samples`` seeded random instances with degree-4 topologies allowed.

    Sizes and exponents cycle so every (n, p) combination is covered when
    ``samples`` is at least 8.
    """
    if samples < 1:
        raise ConfigurationError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    combos = list(itertools.product(HARNESS_SIZES, HARNESS_EXPONENTS))
    rows = []
    for k in range(samples):
        n, p = combos[k % len(combos)]
        rows.append(check_instance(k, random_instance(rng, n, p), angle_tol, **solve_kwargs))
    return rows
