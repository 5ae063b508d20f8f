import math

import numpy as np
import pytest

from conftest import brute_force_topologies, grid_fermat
from gilbert_steiner.cost import TRAPEZOID_COST, PowerCost, eval_cost
from gilbert_steiner.errors import CapExceededError, ConfigurationError
from gilbert_steiner.flow import Instance, Terminal, check_local_angles, validate_flow
from gilbert_steiner.geometry import vector_angle, weighted_fermat
from gilbert_steiner.harness import random_instance
from gilbert_steiner.solver import edge_masses, enumerate_topologies, optimize_positions, solve

SQRT = PowerCost(0.5)


def instance(points, masses, cost=SQRT):
    ts = tuple(Terminal(f"t{i + 1}", np.asarray(p, float), m) for i, (p, m) in enumerate(zip(points, masses)))
    return Instance(len(points[0]), ts, cost)


def double_factorial(k):
    return math.prod(range(k, 0, -2)) if k > 0 else 1


class TestEnumeration:
    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    @pytest.mark.parametrize("allow4", [False, True])
    def test_matches_brute_force(self, n, allow4):
        got = [frozenset(t.splits) for t in enumerate_topologies(n, allow4)]
        assert len(got) == len(set(got))
        assert set(got) == brute_force_topologies(n, 4 if allow4 else 3)

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
    def test_full_count(self, n):
        assert sum(1 for _ in enumerate_topologies(n)) == double_factorial(2 * n - 5)

    def test_small_counts(self):
        assert [sum(1 for _ in enumerate_topologies(n, True)) for n in (2, 3, 4)] == [1, 1, 4]

    def test_structure(self):
        for top in enumerate_topologies(6, True):
            assert all(top.degree(i) == 1 for i in range(6))
            assert all(d in (3, 4) for d in top.steiner_degrees)
            assert len(top.edges) == top.n_nodes - 1

    def test_labels_unique(self):
        labels = [t.label(["a", "b", "c", "d", "e"]) for t in enumerate_topologies(5, True)]
        assert len(labels) == len(set(labels))
        assert "*(a,b,c,d,e)" not in labels  # degree 5 is never generated

    def test_cap(self):
        with pytest.raises(CapExceededError):
            list(enumerate_topologies(8))
        with pytest.raises(ConfigurationError):
            list(enumerate_topologies(1))

    def test_solve_propagates_cap(self, rng):
        pts = rng.uniform(size=(8, 2))
        inst = instance(list(pts), [1, 1, 1, 1, -1, -1, -1, -1])
        with pytest.raises(CapExceededError):
            solve(inst)


class TestEdgeMasses:
    def test_path(self):
        top = next(enumerate_topologies(2))
        inst = instance([(0, 0), (1, 0)], [1, -1])
        assert [abs(m) for m in edge_masses(top, inst).values()] == [1.0]

    def test_star(self):
        star = [t for t in enumerate_topologies(4, True) if t.n_steiner == 1][0]
        inst = instance([(1, 0), (0, 1), (-1, 0), (0, -1)], [1, 1, 1, -3])
        masses = edge_masses(star, inst)
        by_leaf = {min(e): abs(m) for e, m in masses.items()}
        assert by_leaf == {0: 1, 1: 1, 2: 1, 3: 3}

    def test_bridge_of_pairing(self):
        inst = instance([(1, 0), (0, 1), (-1, 0), (0, -1)], [1, 1, 1, -3])
        top = [t for t in enumerate_topologies(4) if t.label(inst.ids) == "t1,t2|t3,t4"][0]
        bridge = [m for (a, b), m in edge_masses(top, inst).items() if a >= 4 and b >= 4]
        assert [abs(m) for m in bridge] == [2.0]

    def test_cut_sums(self, rng):
        inst = random_instance(rng, 5, 0.5)
        masses = np.array([t.mass for t in inst.terminals])
        for top in enumerate_topologies(5, True):
            for (a, b), m in edge_masses(top, inst).items():
                side = top._side(b, a)
                assert m == pytest.approx(masses[list(side)].sum(), abs=1e-15)


class TestOptimizePositions:
    def test_two_terminals(self):
        inst = instance([(0, 0), (3, 4)], [2, -2])
        sol = solve(inst)
        assert sol.value == pytest.approx(math.sqrt(2) * 5, abs=1e-14)
        assert sol.label == "t1-t2"

    def test_equilateral_unit_masses_meet_at_right_angle(self):
        inst = instance([(-1, 0), (1, 0), (0, -math.sqrt(3))], [1, 1, -2])
        top = next(enumerate_topologies(3))
        sol = optimize_positions(top, inst)
        s = sol.flow.position(sol.flow.branch_points[0])
        assert s[0] == pytest.approx(0, abs=1e-9)
        ang = vector_angle(inst.terminals[0].position - s, inst.terminals[1].position - s)
        assert ang == pytest.approx(math.pi / 2, abs=1e-6)

    def test_nearly_collinear_collapses_onto_middle(self):
        pts = [(0, 0), (1, 1e-3), (2, 0)]
        inst = instance(pts, [1, 1, -2])
        sol = solve(inst)
        assert sol.flow.branch_points == []
        w = [1.0, 1.0, math.sqrt(2)]
        vertex = weighted_fermat(np.array(pts, float), w)
        assert vertex.at_anchor == 1
        grid, _ = grid_fermat(pts, w, res=1e-3, pad=0.2)
        assert vertex.objective <= grid + 1e-12
        direct = math.hypot(1, 1e-3) * (1 + math.sqrt(2))
        assert sol.value == pytest.approx(direct, abs=1e-12)

    def test_history_monotone(self, rng):
        inst = random_instance(rng, 5, 0.3)
        for top in list(enumerate_topologies(5, True))[:10]:
            hist = np.array(optimize_positions(top, inst).history)
            assert np.all(np.diff(hist) <= 0)

    def test_restarts_agree(self, rng):
        inst = random_instance(rng, 5, 0.7)
        box_lo, box_hi = inst.positions.min(axis=0), inst.positions.max(axis=0)
        for top in list(enumerate_topologies(5))[:5]:
            values = [optimize_positions(top, inst).value]
            for _ in range(4):
                init = rng.uniform(box_lo, box_hi, size=(top.n_steiner, 2))
                values.append(optimize_positions(top, inst, init=init).value)
            assert max(values) - min(values) < 1e-8

    def test_bad_init_shape(self):
        inst = instance([(0, 0), (1, 0), (0, 1)], [1, 1, -2])
        with pytest.raises(ConfigurationError):
            optimize_positions(next(enumerate_topologies(3)), inst, init=np.zeros(3))


def _pairing_grid(inst, pairing, lo, hi, res):
    """Min over U, V on a grid of the two-branch-point functional for ``pairing`` = ((a, b), (c, d))."""
    pos = inst.positions
    masses = [t.mass for t in inst.terminals]
    c = inst.cost
    (a, b), (cc, d) = pairing
    axes = [np.arange(lo[k], hi[k] + res / 2, res) for k in range(4)]
    ux, uy = np.meshgrid(axes[0], axes[1], indexing="ij")
    vx, vy = np.meshgrid(axes[2], axes[3], indexing="ij")
    u = np.column_stack([ux.ravel(), uy.ravel()])
    v = np.column_stack([vx.ravel(), vy.ravel()])
    fu = sum(eval_cost(c, abs(masses[i])) * np.linalg.norm(u - pos[i], axis=1) for i in (a, b))
    fv = sum(eval_cost(c, abs(masses[i])) * np.linalg.norm(v - pos[i], axis=1) for i in (cc, d))
    wb = eval_cost(c, abs(masses[a] + masses[b]))
    total = fu[:, None] + fv[None, :] + wb * np.linalg.norm(u[:, None, :] - v[None, :, :], axis=2)
    i, j = np.unravel_index(np.argmin(total), total.shape)
    return float(total[i, j]), np.concatenate([u[i], v[j]])


def grid_two_steiner(inst, pairing):
    """Coarse-to-fine grid search; each pairing's functional is convex in (U, V)."""
    lo, hi = np.full(4, -0.2), np.full(4, 1.2)
    best, x = _pairing_grid(inst, pairing, lo, hi, 0.05)
    for res, half in ((5e-3, 0.06), (1e-3, 6e-3)):
        best, x = _pairing_grid(inst, pairing, x - half, x + half, res)
    return best


class TestSolve:
    def test_unit_square_matches_grid(self):
        inst = instance([(0, 0), (0, 1), (1, 1), (1, 0)], [1, 1, -1, -1])
        sol = solve(inst)
        pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
        grid = min(grid_two_steiner(inst, p) for p in pairings)
        assert sol.value == pytest.approx(grid, abs=1e-3)
        assert sol.value <= grid + 1e-12
        # The sources sit on the left edge: the unit-mass pairs run straight across,
        # and the double Y collapses to U = V = centre with value 2 sqrt 2.
        cand = dict(sol.candidates)
        assert sol.value == pytest.approx(2.0, abs=1e-12)
        assert cand["t1,t2|t3,t4"] == pytest.approx(2 * math.sqrt(2), abs=1e-9)

    def test_trapezoid_never_beaten(self):
        from gilbert_steiner.counterexamples import build_trapezoid_star

        inst = build_trapezoid_star().instance
        sol = solve(inst, allow_degree4=True)
        assert sol.value >= 5.61 - 1e-9
        assert sol.label == "*(B1,B2,B3,B4)" or sol.value <= 5.61 + 1e-9
        assert validate_flow(sol.flow, inst) == []

    def test_value_not_above_candidates(self, rng):
        for n in (4, 5):
            inst = random_instance(rng, n, 0.5)
            sol = solve(inst, allow_degree4=True)
            assert all(sol.value <= v + 1e-10 for _, v in sol.candidates)
            assert sol.competitor_gap >= -1e-10
            assert validate_flow(sol.flow, inst) == []
            assert check_local_angles(sol.flow, inst.cost, 1e-6).ok

    def test_tie_goes_to_smallest_label(self):
        inst = build_symmetric_tie()
        sol = solve(inst, tie_tol=1e-6)
        tied = sorted(label for label, v in sol.candidates if v <= sol.value + 1e-6)
        assert sol.label == tied[0]

    def test_workers_match_serial(self, rng):
        inst = random_instance(rng, 5, 0.7)
        a = solve(inst, allow_degree4=True)
        b = solve(inst, allow_degree4=True, workers=2)
        assert (a.label, a.value, a.candidates) == (b.label, b.value, b.candidates)

    def test_three_dimensional(self, rng):
        inst = instance(list(rng.normal(size=(5, 3))), [2, -1, 1, -1.5, -0.5])
        sol = solve(inst)
        assert validate_flow(sol.flow, inst) == []
        assert check_local_angles(sol.flow, inst.cost, 1e-6).ok


def build_symmetric_tie():
    # A square with alternating masses: both non-crossing pairings are mirror images.
    return instance([(0, 0), (1, 0), (1, 1), (0, 1)], [1, -1, 1, -1], TRAPEZOID_COST)
