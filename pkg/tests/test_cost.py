import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_fermat
from gilbert_steiner.cost import (
    TRAPEZOID_COST,
    MeasureAtomsCost,
    PiecewiseLinearCost,
    PowerCost,
    RationalCost,
    check_subadditive,
    cost_from_dict,
    eval_cost,
    h_angle,
    power_measure_integral,
    rational_measure_integral,
    verify_power_admissibility,
    verify_rational_admissibility,
)
from gilbert_steiner.errors import ConfigurationError, DegenerateAngleError, NoTriangleError
from gilbert_steiner.geometry import vector_angle, weighted_fermat

ALL_SPECS = [PowerCost(0.5), RationalCost(1.0), TRAPEZOID_COST, MeasureAtomsCost(((1.0, 1.0), (2.5, 0.3)))]
GRID_0_10 = [(t, s) for t in np.linspace(0, 10, 100) for s in np.linspace(0, 10, 100)]

masses = st.floats(0.05, 20, allow_nan=False).flatmap(lambda m: st.sampled_from([m, -m]))
exponents = st.floats(0.05, 0.95)


class TestEvaluation:
    def test_power(self):
        assert eval_cost(PowerCost(0.5), 4) == 2.0

    def test_trapezoid_values(self):
        assert eval_cost(TRAPEZOID_COST, 1) == 1.0
        assert eval_cost(TRAPEZOID_COST, 2) == pytest.approx(1.9, abs=1e-15)
        assert eval_cost(TRAPEZOID_COST, 3) == pytest.approx(2.61, abs=1e-15)

    def test_trapezoid_closed_form_segments(self):
        closed = [
            (0.5, 0.5),
            (1.5, 0.1 + 0.9 * 1.5),
            (2.5, 0.48 + 0.71 * 2.5),
            (3.5, 1.11 + 0.5 * 3.5),
            (10.0, 1.11 + 0.5 * 10),
        ]
        for t, want in closed:
            assert eval_cost(TRAPEZOID_COST, t) == pytest.approx(want, abs=1e-12)

    def test_rational(self):
        assert eval_cost(RationalCost(1.0), 1) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_atoms_at_pi(self):
        assert eval_cost(MeasureAtomsCost(((1.0, 1.0),)), math.pi) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
    def test_zero_at_origin(self, spec):
        assert eval_cost(spec, 0) == 0.0

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
    def test_deterministic(self, spec):
        vals = {eval_cost(spec, 1.2345) for _ in range(5)}
        assert len(vals) == 1

    def test_negative_argument_rejected(self):
        with pytest.raises(ConfigurationError):
            eval_cost(PowerCost(0.5), -1)

    @pytest.mark.parametrize(
        "data",
        [
            {"type": "power", "p": 1.0},
            {"type": "power", "p": 0},
            {"type": "rational", "c": 0},
            {"type": "piecewise_linear", "breakpoints": [[0, 1], [1, 2]]},
            {"type": "piecewise_linear", "breakpoints": [[0, 0], [1, -1]]},
            {"type": "measure_atoms", "atoms": [[1, 0]]},
            {"type": "measure_atoms", "atoms": [[0, 1]]},
            {"type": "power"},
            {"type": "power", "p": 0.5, "q": 1},
            {"type": "cubic"},
        ],
    )
    def test_invalid_specs(self, data):
        with pytest.raises(ConfigurationError):
            cost_from_dict(data)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
    def test_dict_round_trip(self, spec):
        assert cost_from_dict(spec.to_dict()) == spec

    def test_flags(self):
        assert PowerCost(0.5).admissible and RationalCost(1).admissible
        assert not TRAPEZOID_COST.admissible and not TRAPEZOID_COST.embeddable
        assert MeasureAtomsCost(((1, 1),)).embeddable and not MeasureAtomsCost(((1, 1),)).admissible


class TestHAngle:
    def test_square_root_cost_unit_masses(self):
        h = h_angle(PowerCost(0.5), 1, 1)
        w1, w2, w3 = 1.0, 1.0, math.sqrt(2)
        assert h.value == pytest.approx(math.pi / 2, abs=1e-15)
        assert math.cos(h.value) == pytest.approx((w3**2 - w1**2 - w2**2) / (2 * w1 * w2), abs=1e-15)

    @pytest.mark.parametrize("spec", [PowerCost(0.5), RationalCost(2.0), TRAPEZOID_COST], ids=lambda s: s.kind)
    def test_opposite_masses_give_straight_angle(self, spec):
        assert h_angle(spec, 1, -1).value == pytest.approx(math.pi, abs=1e-15)

    def test_trapezoid_cost(self):
        assert h_angle(TRAPEZOID_COST, 1, 1).value == pytest.approx(math.acos(0.805), abs=1e-12)
        assert h_angle(TRAPEZOID_COST, 1, 1).value == pytest.approx(0.635121, abs=1e-6)

    @pytest.mark.parametrize(
        "spec,m1,m2", [(TRAPEZOID_COST, 1, 1), (PowerCost(0.5), 1, 1), (PowerCost(0.3), 1, 2), (RationalCost(1.0), 1, 0.5)]
    )
    def test_matches_grid_minimizer_angle(self, spec, m1, m2):
        # At the minimizer of w1|X-A1| + w2|X-A2| + w3|X-A3| the unit pulls close,
        # so the angle between the first two edges equals h(m1, m2).
        w = [eval_cost(spec, abs(m1)), eval_cost(spec, abs(m2)), eval_cost(spec, abs(m1 + m2))]
        anchors = np.array([[-1.0, 1.0], [1.0, 1.0], [0.0, -6.0]])
        _, x = grid_fermat(anchors, w, res=1e-3)
        grid_angle = vector_angle(anchors[0] - x, anchors[1] - x)
        fermat = weighted_fermat(anchors, w)
        assert fermat.at_anchor is None
        exact_angle = vector_angle(anchors[0] - fermat.minimizer, anchors[1] - fermat.minimizer)
        h = h_angle(spec, m1, m2).value
        assert grid_angle == pytest.approx(h, abs=5e-3)
        assert exact_angle == pytest.approx(h, abs=1e-9)

    def test_no_triangle(self):
        spec = PiecewiseLinearCost(((0, 0), (1, 0.1), (2, 3)))
        with pytest.raises(NoTriangleError):
            h_angle(spec, 1, 1)

    def test_zero_mass_rejected(self):
        with pytest.raises(DegenerateAngleError):
            h_angle(PowerCost(0.5), 0, 1)

    @settings(max_examples=200, deadline=None)
    @given(masses, masses, st.sampled_from(ALL_SPECS[:2]))
    def test_symmetric(self, a, b, spec):
        assert h_angle(spec, a, b).value == h_angle(spec, b, a).value

    @settings(max_examples=200, deadline=None)
    @given(exponents, masses, masses, st.floats(0.01, 100))
    def test_power_scale_invariance(self, p, a, b, s):
        cost = PowerCost(p)
        assert h_angle(cost, s * a, s * b).value == pytest.approx(h_angle(cost, a, b).value, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 10))
    def test_equal_masses_monotone_in_p(self, m):
        ps = np.linspace(0.05, 0.95, 19)
        hs = [h_angle(PowerCost(float(p)), m, m).value for p in ps]
        direct = [math.acos((2 ** (2 * p) - 2) / 2) for p in ps]
        assert all(b < a for a, b in zip(hs, hs[1:]))
        assert hs == pytest.approx(direct, abs=1e-12)


class TestSubadditivity:
    def test_power(self):
        assert check_subadditive(PowerCost(0.5), GRID_0_10) == []

    def test_trapezoid(self):
        assert check_subadditive(TRAPEZOID_COST, GRID_0_10) == []

    def test_artificial_violation(self):
        spec = PiecewiseLinearCost(((0, 0), (1, 0.1), (2, 3)))
        out = check_subadditive(spec, [(1, 1)])
        assert len(out) == 1
        assert out[0].t == 1 and out[0].s == 1

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.01, 20), st.floats(0.01, 5)), min_size=1, max_size=5))
    def test_measure_atoms_always_subadditive(self, atoms):
        grid = [(t, s) for t in np.linspace(0, 6, 25) for s in np.linspace(0, 6, 25)]
        assert check_subadditive(MeasureAtomsCost(tuple(atoms)), grid) == []


def _power_constant(p):
    # int_0^inf sin^2(y) y^(-2p-1) dy = -2^(2p-1) Gamma(-2p) cos(pi p), in reflected form
    # so that p = 1/2 is not a pole.
    p = mpmath.mpf(p)
    return 2 ** (2 * p - 1) * mpmath.pi / (4 * p * mpmath.gamma(2 * p) * mpmath.sin(mpmath.pi * p))


class TestAdmissibilityQuadrature:
    def test_half_power_constant_is_dirichlet_integral(self):
        assert float(_power_constant(0.5)) == pytest.approx(math.pi / 2, rel=1e-15)

    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_power_integral_against_gamma_closed_form(self, p):
        want = float(_power_constant(p))
        for t in (0.5, 1.0, 3.0):
            got = power_measure_integral(p, t)
            assert got == pytest.approx(want * t ** (2 * p), rel=1e-9)

    def test_power_half(self):
        assert verify_power_admissibility(0.5, [0.5, 1, 2, 4]) < 1e-4

    def test_power_single_sample(self):
        assert verify_power_admissibility(0.5, [1]) == 0.0

    def test_power_heavy_tail(self):
        assert verify_power_admissibility(0.9, [1, 10]) < 1e-3

    def test_rational_unit(self):
        assert verify_rational_admissibility(1.0, [1.0]) < 1e-8
        assert math.sqrt(rational_measure_integral(1.0, 1.0)) == pytest.approx(1 / math.sqrt(2), abs=1e-10)

    def test_rational_zero(self):
        assert rational_measure_integral(1.0, 0.0) == 0.0
        assert verify_rational_admissibility(1.0, [0.0]) == 0.0

    def test_rational_c2(self):
        assert verify_rational_admissibility(2.0, [0.1, 1, 10]) < 1e-6
