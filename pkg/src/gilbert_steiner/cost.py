"""Cost functions C(t), the branching angle bound h(m1, m2), and admissibility checks.

Every cost family is a small frozen dataclass that is callable on a nonnegative
mass.  An admissible cost has the form

    C(t) = sqrt( integral of sin^2(t x) d lambda(x) )

for a Borel measure lambda.  The power family t**p (0 < p < 1) and the rational
family t / sqrt(t^2 + c^2) are admissible; ``MeasureAtomsCost`` evaluates the
same integral for a finite discrete lambda.  Some texts write the integrand as
4 sin^2(t x / 2); the two forms agree after rescaling the support of lambda by
a factor of two, so only the sin^2(t x) form is used here.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from scipy import integrate

from .errors import ConfigurationError, DegenerateAngleError, NoTriangleError, NumericError

#: Slack allowed on the law-of-cosines argument before it is treated as a missing triangle.
COSINE_TOL = 1e-12
#: Subadditivity violations smaller than this are ignored as round-off.
SUBADDITIVE_TOL = 1e-12


class CostSpec:
    """Common interface of the cost families.

    Subclasses are frozen dataclasses; instances are immutable and safe to share
    between threads.
    """

    kind: str = ""
    #: Known to be admissible (Hilbert embeddable with uncountable support).
    admissible: bool = False
    #: Distances C(|a - b|) embed in a Hilbert space, so triangles between
    #: partial sums always exist (possibly degenerate).
    embeddable: bool = False

    def __call__(self, t: float) -> float:
        return eval_cost(self, t)

    def _eval(self, t: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class PowerCost(CostSpec):
    p: float

    kind = "power"
    admissible = True
    embeddable = True

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and 0.0 < self.p < 1.0):
            raise ConfigurationError(f"power cost needs 0 < p < 1, got p={self.p!r}")

    def _eval(self, t):
        return t**self.p if t > 0 else 0.0

    def to_dict(self):
        return {"type": self.kind, "p": self.p}


@dataclass(frozen=True)
class RationalCost(CostSpec):
    """C(t) = t / sqrt(t^2 + c^2), generated by d lambda = 4 c exp(-2 c x) dx."""

    c: float

    kind = "rational"
    admissible = True
    embeddable = True

    def __post_init__(self):
        if not (isinstance(self.c, (int, float)) and self.c > 0 and math.isfinite(self.c)):
            raise ConfigurationError(f"rational cost needs c > 0, got c={self.c!r}")

    def _eval(self, t):
        return t / math.hypot(t, self.c)

    def to_dict(self):
        return {"type": self.kind, "c": self.c}


@dataclass(frozen=True)
class PiecewiseLinearCost(CostSpec):
    """Linear interpolation through ``breakpoints``; the last segment's slope continues beyond."""

    breakpoints: tuple[tuple[float, float], ...]

    kind = "piecewise_linear"

    def __post_init__(self):
        pts = tuple((float(t), float(c)) for t, c in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        if len(pts) < 2:
            raise ConfigurationError("piecewise_linear cost needs at least two breakpoints")
        if pts[0] != (0.0, 0.0):
            raise ConfigurationError("piecewise_linear cost must start at breakpoint (0, 0)")
        ts = [t for t, _ in pts]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("piecewise_linear breakpoints must have strictly increasing t")
        if any(c < 0 or not math.isfinite(c) for _, c in pts):
            raise ConfigurationError("piecewise_linear values must be finite and nonnegative")
        object.__setattr__(self, "_ts", ts)

    def _eval(self, t):
        pts = self.breakpoints
        i = bisect.bisect_right(self._ts, t) - 1
        i = min(max(i, 0), len(pts) - 2)
        (t0, c0), (t1, c1) = pts[i], pts[i + 1]
        value = c0 + (c1 - c0) * (t - t0) / (t1 - t0)
        # Extrapolation with a negative final slope could go below zero.
        return max(value, 0.0)

    def to_dict(self):
        return {"type": self.kind, "breakpoints": [list(bp) for bp in self.breakpoints]}


@dataclass(frozen=True)
class MeasureAtomsCost(CostSpec):
    """C(t) = sqrt(sum w_i sin^2(t x_i)) for a finite measure with atoms (x_i, w_i).

    A finite measure has countable support, so this family is Hilbert embeddable
    but not admissible in the strict sense.
    """

    atoms: tuple[tuple[float, float], ...]

    kind = "measure_atoms"
    embeddable = True

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ConfigurationError("measure_atoms cost needs at least one atom")
        if any(not (w > 0 and math.isfinite(w)) or not math.isfinite(x) for x, w in atoms):
            raise ConfigurationError("measure_atoms weights must be finite and strictly positive")
        if all(x == 0 for x, _ in atoms):
            raise ConfigurationError("measure_atoms needs at least one atom with x != 0")

    def _eval(self, t):
        return math.sqrt(math.fsum(w * math.sin(t * x) ** 2 for x, w in self.atoms))

    def to_dict(self):
        return {"type": self.kind, "atoms": [list(a) for a in self.atoms]}


#: The cost used for the planar degree-4 example: C(1)=1, C(2)=1.9, C(3)=2.61 and
#: slope 0.5 beyond t=3 (the point (4, 3.11) encodes 1.11 + 0.5 t).
TRAPEZOID_COST = PiecewiseLinearCost(((0, 0), (1, 1), (2, 1.9), (3, 2.61), (4, 3.11)))


def eval_cost(spec: CostSpec, t: float) -> float:
    """Evaluate C(t) for ``t >= 0``."""
    if not isinstance(spec, CostSpec):
        raise ConfigurationError(f"not a cost specification: {spec!r}")
    t = float(t)
    if not t >= 0 or math.isinf(t):
        raise ConfigurationError(f"cost argument must be finite and nonnegative, got {t!r}")
    if t == 0:
        return 0.0
    return spec._eval(t)


def cost_from_dict(data: dict) -> CostSpec:
    """Build a cost from its JSON form, e.g. ``{"type": "power", "p": 0.5}``."""
    if not isinstance(data, dict) or "type" not in data:
        raise ConfigurationError("cost must be an object with a 'type' field")
    kind = data["type"]
    expected = {
        "power": ("p",),
        "rational": ("c",),
        "piecewise_linear": ("breakpoints",),
        "measure_atoms": ("atoms",),
    }
    if kind not in expected:
        raise ConfigurationError(f"unknown cost type {kind!r}")
    extra = set(data) - {"type", *expected[kind]}
    if extra:
        raise ConfigurationError(f"unexpected fields for {kind} cost: {sorted(extra)}")
    missing = [k for k in expected[kind] if k not in data]
    if missing:
        raise ConfigurationError(f"{kind} cost is missing {missing}")
    try:
        if kind == "power":
            return PowerCost(_real(data["p"], "p"))
        if kind == "rational":
            return RationalCost(_real(data["c"], "c"))
        if kind == "piecewise_linear":
            return PiecewiseLinearCost(tuple(_pair(bp, "breakpoint") for bp in data["breakpoints"]))
        return MeasureAtomsCost(tuple(_pair(a, "atom") for a in data["atoms"]))
    except TypeError as exc:
        raise ConfigurationError(f"malformed {kind} cost: {exc}") from None


def _real(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{name} must be a number, got {value!r}")
    return float(value)


def _pair(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"each {name} must be a pair of numbers, got {value!r}")
    return (_real(value[0], name), _real(value[1], name))


# ---------------------------------------------------------------------------
# angle bound


@dataclass(frozen=True)
class HAngle:
    """Outer angle between the sides C(|m1|), C(|m2|) of the triangle closed by C(|m1+m2|)."""

    value: float
    sides: tuple[float, float, float]


def h_angle(spec: CostSpec, m1: float, m2: float) -> HAngle:
    """Lower bound on the angle between two edges with masses ``m1``, ``m2`` at a branch point.

    Both masses are taken with the same orientation (e.g. both pointing away
    from the branch point).  Raises :class:`NoTriangleError` when the three cost
    values violate the triangle inequality, which can only happen for costs
    that are not Hilbert embeddable.
    """
    if m1 == 0 or m2 == 0:
        raise DegenerateAngleError("h(m1, m2) needs nonzero masses")
    w1 = eval_cost(spec, abs(m1))
    w2 = eval_cost(spec, abs(m2))
    w3 = eval_cost(spec, abs(m1 + m2))
    if w1 == 0 or w2 == 0:
        raise DegenerateAngleError(f"zero cost side in h({m1}, {m2})")
    # Symmetric in (w1, w2) term by term so that h(a, b) == h(b, a) exactly.
    cosine = (w3 * w3 - (w1 * w1 + w2 * w2)) / (2.0 * w1 * w2)
    if cosine > 1.0 + COSINE_TOL or cosine < -1.0 - COSINE_TOL:
        raise NoTriangleError((w1, w2, w3), cosine)
    cosine = min(1.0, max(-1.0, cosine))
    return HAngle(math.acos(cosine), (w1, w2, w3))


# ---------------------------------------------------------------------------
# subadditivity


class SubadditivityViolation(NamedTuple):
    t: float
    s: float
    lhs: float  # C(t) + C(s)
    rhs: float  # C(t + s)


def check_subadditive(spec: CostSpec, grid: Iterable[tuple[float, float]]) -> list[SubadditivityViolation]:
    """Return every pair with C(t) + C(s) < C(t + s) - 1e-12."""
    out = []
    for t, s in grid:
        lhs = eval_cost(spec, t) + eval_cost(spec, s)
        rhs = eval_cost(spec, t + s)
        if lhs < rhs - SUBADDITIVE_TOL:
            out.append(SubadditivityViolation(t, s, lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# admissibility quadrature


def _quad(func, a, b, **kwargs):
    if math.isinf(b) and kwargs.get("weight") == "cos":
        # The Fourier rule on a semi-infinite range honours epsabs only.
        kwargs.update(epsabs=1e-12, limlst=200)
    else:
        kwargs.update(epsabs=1e-13, epsrel=1e-12)
    result = integrate.quad(func, a, b, full_output=1, limit=200, **kwargs)
    if len(result) > 3:
        raise NumericError(f"quadrature on [{a}, {b}] did not converge: {result[3].splitlines()[0]}")
    return result[0]


def power_measure_integral(p: float, t: float) -> float:
    """Integral of sin^2(t x) x^(-2p-1) over (0, inf), computed by quadrature.

    The range is split at x = 1/t.  On the head the integrand is written as
    (sin(t x)/x)^2 times the algebraic weight x^(1-2p), which handles the
    endpoint singularity for p > 1/2.  On the tail sin^2 = (1 - cos(2 t x))/2;
    the power part integrates in closed form and the oscillatory part uses a
    Fourier-weighted rule for semi-infinite ranges.
    """
    if not 0 < p < 1:
        raise ConfigurationError(f"need 0 < p < 1, got {p!r}")
    if not t > 0:
        raise ConfigurationError(f"need t > 0, got {t!r}")
    a = 1.0 / t

    def head(x):
        return (math.sin(t * x) / x) ** 2 if x > 0 else t * t

    head_val = _quad(head, 0.0, a, weight="alg", wvar=(1.0 - 2.0 * p, 0.0))
    smooth_tail = a ** (-2.0 * p) / (4.0 * p)
    # The semi-infinite Fourier rule only honours an absolute tolerance, so it
    # starts where the amplitude is already small.
    b = 10.0 * max(a, 1.0)
    amplitude = lambda x: x ** (-2.0 * p - 1.0)  # noqa: E731
    osc_tail = 0.5 * (
        _quad(amplitude, a, b, weight="cos", wvar=2.0 * t) + _quad(amplitude, b, math.inf, weight="cos", wvar=2.0 * t)
    )
    return head_val + smooth_tail - osc_tail


def verify_power_admissibility(p: float, t_samples: Sequence[float]) -> float:
    """Max relative deviation of sqrt(integral)/t^p from its value at the first sample.

    A deviation near zero confirms that the measure x^(-2p-1) dx generates a
    multiple of t^p.
    """
    if not t_samples:
        raise ConfigurationError("need at least one sample")
    if any(not t > 0 for t in t_samples):
        raise ConfigurationError("samples must be positive")
    ratios = [math.sqrt(power_measure_integral(p, t)) / t**p for t in t_samples]
    ref = ratios[0]
    return max(abs(r - ref) / ref for r in ratios)


def rational_measure_integral(c: float, t: float) -> float:
    """Integral of sin^2(t x) 4 c exp(-2 c x) over (0, inf), computed by quadrature."""
    if not c > 0:
        raise ConfigurationError(f"need c > 0, got {c!r}")
    if t < 0:
        raise ConfigurationError(f"need t >= 0, got {t!r}")
    if t == 0:
        return 0.0

    def density(x):
        return 2.0 * c * math.exp(-2.0 * c * x)

    return _quad(density, 0.0, math.inf) - _quad(density, 0.0, math.inf, weight="cos", wvar=2.0 * t)


def verify_rational_admissibility(c: float, t_samples: Sequence[float]) -> float:
    """Max absolute deviation between sqrt(integral) and t / sqrt(t^2 + c^2)."""
    if not t_samples:
        raise ConfigurationError("need at least one sample")
    return max(
        abs(math.sqrt(max(rational_measure_integral(c, t), 0.0)) - t / math.hypot(t, c)) for t in t_samples
    )
