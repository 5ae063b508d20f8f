"""Euclidean helpers: weighted Fermat points, angles, turning angles, and MDS embedding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, NotRealizable

#: An iterate this close to an anchor (relative to the anchor spread) counts as a collision.
COLLISION_TOL = 1e-13
#: Step taken off a colliding anchor, relative to the anchor spread.
ESCAPE_STEP = 1e-10
#: Relative eigenvalue threshold separating real dimensions from round-off.
EIGEN_TOL = 1e-9


def as_points(points, dim: Optional[int] = None) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.ndim != 2:
        raise ConfigurationError(f"expected a list of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ConfigurationError(f"expected {dim}-dimensional points, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class FermatResult:
    minimizer: np.ndarray
    at_anchor: Optional[int]
    objective: float
    residual: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)


def fermat_objective(x, anchors, weights) -> float:
    return float(np.dot(weights, np.linalg.norm(anchors - x, axis=1)))


def _pull(anchors, weights, j):
    """Resultant of the weighted unit pulls on anchor ``j`` from every other anchor."""
    diff = np.delete(anchors, j, axis=0) - anchors[j]
    w = np.delete(weights, j)
    return (w[:, None] * diff / np.linalg.norm(diff, axis=1)[:, None]).sum(axis=0)


def weighted_fermat(
    anchors,
    weights,
    start=None,
    tol: float = 1e-14,
    max_iter: int = 100_000,
) -> FermatResult:
    """Minimize ``sum_i w_i |X - a_i|`` over X.

    Each anchor is first tested for vertex optimality: anchor j is the
    minimizer iff the resultant of the unit pulls ``w_i e_i`` from the other
    anchors has norm at most ``w_j``.  Otherwise Weiszfeld iteration runs from
    ``start`` (default: the weighted centroid) until the objective decrease
    drops below ``tol`` relative, and a few Newton steps sharpen the
    stationarity residual ``|sum_i w_i e_i|``.

    Raises :class:`ConfigurationError` for coincident anchors or invalid
    weights and :class:`ConvergenceError` when ``max_iter`` is exhausted.
    """
    anchors = as_points(anchors)
    weights = np.asarray(weights, dtype=float)
    n = len(anchors)
    if weights.shape != (n,):
        raise ConfigurationError("need one weight per anchor")
    if n == 0 or np.any(weights < 0) or not np.any(weights > 0) or not np.all(np.isfinite(weights)):
        raise ConfigurationError("weights must be finite, nonnegative and not all zero")
    spread = float(np.max(np.linalg.norm(anchors - anchors[0], axis=1)))
    if n > 1:
        gaps = np.linalg.norm(anchors[:, None, :] - anchors[None, :, :], axis=2)
        gaps[np.diag_indices(n)] = np.inf
        if gaps.min() <= COLLISION_TOL * spread or gaps.min() == 0:
            raise ConfigurationError("anchors must be pairwise distinct")
    total = float(weights.sum())

    # Vertex test.
    best_j, best_obj = None, math.inf
    pulls = []
    for j in range(n):
        pull = _pull(anchors, weights, j) if n > 1 else np.zeros(anchors.shape[1])
        pulls.append(pull)
        if np.linalg.norm(pull) <= weights[j] + 1e-12 * total:
            obj = fermat_objective(anchors[j], anchors, weights)
            if obj < best_obj:
                best_j, best_obj = j, obj
    if best_j is not None:
        residual = max(0.0, float(np.linalg.norm(pulls[best_j])) - weights[best_j])
        return FermatResult(anchors[best_j].copy(), best_j, best_obj, residual, 0, (best_obj,))

    x = np.asarray(start, dtype=float).copy() if start is not None else weights @ anchors / total
    obj = fermat_objective(x, anchors, weights)
    history = [obj]
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        d = np.linalg.norm(anchors - x, axis=1)
        k = int(np.argmin(d))
        if d[k] <= COLLISION_TOL * spread:
            # Sitting on an anchor that failed the vertex test: step along its descent direction.
            pull = pulls[k]
            x = anchors[k] + ESCAPE_STEP * spread * pull / np.linalg.norm(pull)
            obj = fermat_objective(x, anchors, weights)
            history.append(obj)
            continue
        inv = weights / d
        x_new = inv @ anchors / inv.sum()
        obj_new = fermat_objective(x_new, anchors, weights)
        decrease = obj - obj_new
        x, obj = x_new, obj_new
        history.append(obj)
        if decrease <= tol * obj:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"Weiszfeld iteration did not converge in {max_iter} steps",
            best=FermatResult(x, None, obj, _residual(x, anchors, weights), it, tuple(history)),
        )
    x, obj = _newton_polish(x, obj, anchors, weights, history)
    return FermatResult(x, None, obj, _residual(x, anchors, weights), it, tuple(history))


def _residual(x, anchors, weights) -> float:
    diff = anchors - x
    d = np.linalg.norm(diff, axis=1)
    if np.any(d == 0):
        return math.inf
    return float(np.linalg.norm((weights[:, None] * diff / d[:, None]).sum(axis=0)))


def _newton_polish(x, obj, anchors, weights, history, steps: int = 20):
    dim = anchors.shape[1]
    for _ in range(steps):
        diff = anchors - x
        d = np.linalg.norm(diff, axis=1)
        if np.any(d == 0):
            break
        e = diff / d[:, None]
        grad = -(weights[:, None] * e).sum(axis=0)
        if np.linalg.norm(grad) <= 1e-15 * weights.sum():
            break
        hess = sum(w / di * (np.eye(dim) - np.outer(ei, ei)) for w, di, ei in zip(weights, d, e))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        improved = False
        t = 1.0
        for _ in range(30):
            cand = x - t * step
            cand_obj = fermat_objective(cand, anchors, weights)
            if cand_obj <= obj and _residual(cand, anchors, weights) < np.linalg.norm(grad):
                x, obj = cand, cand_obj
                history.append(obj)
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    return x, obj


def angle(a, apex, b) -> float:
    """Angle ``a - apex - b`` in radians, in [0, pi]."""
    u = np.asarray(a, dtype=float) - np.asarray(apex, dtype=float)
    v = np.asarray(b, dtype=float) - np.asarray(apex, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ConfigurationError("angle needs both rays to have nonzero length")
    return vector_angle(u / nu, v / nv)


def vector_angle(u, v) -> float:
    """Angle between two nonzero vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ConfigurationError("angle needs nonzero vectors")
    u, v = u / nu, v / nv
    # atan2 of |cross| and dot keeps accuracy near 0 and pi, where arccos does not.
    dot = float(np.dot(u, v))
    cross = float(np.linalg.norm(v - dot * u))
    return math.atan2(cross, dot)


def turning_angle_sum(cycle: Sequence) -> float:
    """Sum of pi minus the interior angle at each vertex of a closed polychain.

    For any closed polychain in a Euclidean space the sum is at least 2 pi,
    with equality only for planar configurations.
    """
    pts = as_points(cycle)
    n = len(pts)
    if n < 3:
        raise ConfigurationError("a closed polychain needs at least three points")
    edges = np.roll(pts, -1, axis=0) - pts
    if np.any(np.linalg.norm(edges, axis=1) == 0):
        raise ConfigurationError("consecutive points of the polychain must be distinct")
    # pi - angle(A_{i-1}, A_i, A_{i+1}) equals the angle between consecutive edge vectors.
    return math.fsum(vector_angle(edges[i - 1], edges[i]) for i in range(n))


def embed_from_distances(d, target_dim: int) -> np.ndarray:
    """Coordinates in ``target_dim`` dimensions reproducing the distance matrix ``d``.

    Classical multidimensional scaling.  Raises :class:`NotRealizable` when the
    doubly centred Gram matrix has a significantly negative eigenvalue or more
    than ``target_dim`` significantly positive ones.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ConfigurationError("distance matrix must be square")
    if target_dim not in (2, 3):
        raise ConfigurationError("target dimension must be 2 or 3")
    if np.any(d < 0) or not np.allclose(d, d.T, rtol=0, atol=1e-12 * max(1.0, d.max(initial=0))):
        raise ConfigurationError("distance matrix must be symmetric and nonnegative")
    if np.any(np.diag(d) != 0):
        raise ConfigurationError("distance matrix must have a zero diagonal")
    scale = d.max(initial=0.0)
    if scale == 0:
        return np.zeros((n, target_dim))
    center = np.eye(n) - np.full((n, n), 1.0 / n)
    gram = -0.5 * center @ (d**2) @ center
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = evals[0]
    if evals[-1] < -EIGEN_TOL * top:
        raise NotRealizable(f"negative Gram eigenvalue {evals[-1]:.3e}: not Euclidean", float(evals[-1]))
    if n > target_dim and evals[target_dim] > EIGEN_TOL * top:
        raise NotRealizable(
            f"eigenvalue {evals[target_dim]:.3e} beyond dimension {target_dim}",
            float(evals[target_dim]),
        )
    k = min(target_dim, n)
    coords = np.zeros((n, target_dim))
    coords[:, :k] = evecs[:, :k] * np.sqrt(np.clip(evals[:k], 0.0, None))
    rebuilt = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    err = float(np.max(np.abs(rebuilt - d)))
    if err > 1e-8 * scale:
        raise NotRealizable(f"embedding reproduces distances only to {err:.3e}", float(evals[min(k, n - 1)]))
    return coords
