"""Poincare-ball and Euclidean metric kernel with analytic gradients.

Scalar functions operate on single vectors and validate their inputs.
The ``*_rows`` variants operate on stacked points (one per row) and are
what the trainers call in their inner loops.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

EPS_BALL = 1e-5
MAX_NORM = 1.0 - EPS_BALL
RETRACT_NORM = MAX_NORM * (1.0 - 1e-12)
# Near-zero directions signal a broken upstream layer.
MIN_DIRECTION_NORM = 1e-12


class BallError(ValueError):
    """A point lies on or outside the admissible ball."""


class SpaceKind(str, enum.Enum):
    HYPERBOLIC = "hyperbolic"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value: "str | SpaceKind") -> "SpaceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown space {value!r}; expected 'hyperbolic' or 'euclidean'"
            ) from None


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be nonnegative, got {self}")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")


def _as_vector(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a nonempty 1-d vector, got shape {arr.shape}")
    return arr


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")


def check_ball(x, name: str = "point") -> np.ndarray:
    """Return ``x`` as float64 if every row has norm <= 1 - EPS_BALL.

    Works on a single vector or on a stack of row vectors. Violations are
    reported, never clamped.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise BallError(f"{name} has non-finite coordinates")
    norms = np.linalg.norm(arr, axis=-1)
    if np.any(norms > MAX_NORM):
        worst = float(np.max(norms))
        raise BallError(
            f"{name} outside ball: norm {worst:.17g} exceeds 1 - {EPS_BALL:g}"
        )
    return arr


def retract(x: np.ndarray) -> np.ndarray:
    """Renormalize rows with norm >= 1 - EPS_BALL back onto that radius, in place."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    rows = (norms >= MAX_NORM)[..., 0]
    if np.any(rows):
        # aim a hair inside so roundoff in the rescale cannot land outside
        x[rows] *= RETRACT_NORM / norms[rows]
    return x


def arcosh1p(delta):
    """``arcosh(1 + delta)`` without cancellation for small ``delta``."""
    delta = np.maximum(delta, 0.0)
    return np.log1p(delta + np.sqrt(delta * (delta + 2.0)))


def _poincare_delta(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # arcosh argument minus one
    uu = np.sum(u * u, axis=-1)
    vv = np.sum(v * v, axis=-1)
    diff = np.sum((u - v) ** 2, axis=-1)
    return 2.0 * diff / ((1.0 - uu) * (1.0 - vv))


def hyperbolic_distance(u, v) -> float:
    """Geodesic distance between two points of the Poincare ball."""
    u, v = _as_vector(u), _as_vector(v)
    _check_same_dim(u, v)
    check_ball(u, "u")
    check_ball(v, "v")
    return float(arcosh1p(_poincare_delta(u, v)))


def euclidean_distance(x, y) -> float:
    x, y = _as_vector(x), _as_vector(y)
    _check_same_dim(x, y)
    return float(np.linalg.norm(x - y))


def cosine_distance(x, y) -> float:
    """``1 - cos(x, y)`` on raw (unnormalized) vectors, in [0, 2]."""
    x, y = _as_vector(x), _as_vector(y)
    _check_same_dim(x, y)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < MIN_DIRECTION_NORM or ny < MIN_DIRECTION_NORM:
        raise ValueError("cosine distance undefined for a zero vector")
    cos = float(x @ y) / (nx * ny)
    return float(np.clip(1.0 - cos, 0.0, 2.0))


def combined_hyperbolic_loss(u, v, w: LossWeights) -> float:
    """``alpha * d_H(u, v)**2 + beta * d_cos(u, v)``; zero-weight terms are skipped."""
    out = w.alpha * hyperbolic_distance(u, v) ** 2 if w.alpha else 0.0
    return out + (w.beta * cosine_distance(u, v) if w.beta else 0.0)


def combined_euclidean_loss(x, y, w: LossWeights) -> float:
    out = w.alpha * euclidean_distance(x, y) if w.alpha else 0.0
    return out + (w.beta * cosine_distance(x, y) if w.beta else 0.0)


def combined_loss(u, v, w: LossWeights, space: SpaceKind) -> float:
    if SpaceKind.parse(space) is SpaceKind.HYPERBOLIC:
        return combined_hyperbolic_loss(u, v, w)
    return combined_euclidean_loss(u, v, w)


def loss_gradient(u, v, w: LossWeights, space: SpaceKind) -> np.ndarray:
    """Gradient of the combined loss with respect to ``u`` (``v`` is constant)."""
    u, v = _as_vector(u), _as_vector(v)
    _check_same_dim(u, v)
    space = SpaceKind.parse(space)
    if space is SpaceKind.HYPERBOLIC:
        check_ball(u, "u")
        check_ball(v, "v")
    _, grad = combined_loss_rows(u[None], v[None], w, space)
    return grad[0]


# ---------------------------------------------------------------------------
# row-wise kernels


def hyperbolic_distance_rows(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return arcosh1p(_poincare_delta(u, v))


def euclidean_distance_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x - y, axis=-1)


def distance_rows(u: np.ndarray, v: np.ndarray, space: SpaceKind) -> np.ndarray:
    if space is SpaceKind.HYPERBOLIC:
        return hyperbolic_distance_rows(u, v)
    return euclidean_distance_rows(u, v)


def hyperbolic_distance_grad_rows(u: np.ndarray, v: np.ndarray):
    """d_H and its gradients w.r.t. both arguments.

    Returns ``(d, grad_u, grad_v)``. The gradient of d_H itself is unbounded
    as ``u -> v``; the denominator is floored so coincident points get a
    zero gradient instead of NaN.
    """
    uu = np.sum(u * u, axis=-1, keepdims=True)
    vv = np.sum(v * v, axis=-1, keepdims=True)
    diff = u - v
    dd = np.sum(diff * diff, axis=-1, keepdims=True)
    au, av = 1.0 - uu, 1.0 - vv
    delta = 2.0 * dd / (au * av)
    d = arcosh1p(delta)
    root = np.sqrt(np.maximum(delta * (delta + 2.0), 1e-30))
    coef = 4.0 / (au * av * root)
    grad_u = coef * (diff + dd * u / au)
    grad_v = coef * (-diff + dd * v / av)
    return d[..., 0], grad_u, grad_v


def _squared_hyperbolic_grad_rows(u: np.ndarray, v: np.ndarray):
    """d_H**2 and its gradient w.r.t. ``u``; finite at ``u == v``."""
    uu = np.sum(u * u, axis=-1, keepdims=True)
    vv = np.sum(v * v, axis=-1, keepdims=True)
    diff = u - v
    dd = np.sum(diff * diff, axis=-1, keepdims=True)
    au, av = 1.0 - uu, 1.0 - vv
    delta = 2.0 * dd / (au * av)
    d = arcosh1p(delta)
    # arcosh(1 + t) / sqrt(t (t + 2)) -> 1 as t -> 0
    safe = delta > 0
    root = np.sqrt(np.where(safe, delta * (delta + 2.0), 1.0))
    ratio = np.where(safe, d / root, 1.0)
    grad = 2.0 * ratio * (4.0 / (au * av)) * (diff + dd * u / au)
    return (d * d)[..., 0], grad


def _cosine_grad_rows(x: np.ndarray, y: np.ndarray):
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(nx < MIN_DIRECTION_NORM) or np.any(ny < MIN_DIRECTION_NORM):
        raise ValueError("cosine distance undefined for a zero vector")
    cos = np.sum(x * y, axis=-1, keepdims=True) / (nx * ny)
    grad = -(y / (nx * ny) - cos * x / (nx * nx))
    return (1.0 - cos)[..., 0], grad


def _euclidean_grad_rows(x: np.ndarray, y: np.ndarray):
    diff = x - y
    d = np.linalg.norm(diff, axis=-1, keepdims=True)
    # subgradient 0 at x == y
    grad = np.where(d > 0, diff / np.where(d > 0, d, 1.0), 0.0)
    return d[..., 0], grad


def combined_loss_rows(u: np.ndarray, v: np.ndarray, w: LossWeights, space: SpaceKind):
    """Row-wise combined loss and its gradient w.r.t. ``u``.

    Hyperbolic: ``alpha * d_H**2 + beta * d_cos``. Euclidean:
    ``alpha * d_E + beta * d_cos``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    loss = np.zeros(u.shape[:-1])
    grad = np.zeros_like(u)
    if w.alpha:
        if space is SpaceKind.HYPERBOLIC:
            d, g = _squared_hyperbolic_grad_rows(u, v)
        else:
            d, g = _euclidean_grad_rows(u, v)
        loss += w.alpha * d
        grad += w.alpha * g
    if w.beta:
        d, g = _cosine_grad_rows(u, v)
        loss += w.beta * d
        grad += w.beta * g
    return loss, grad


def pairwise_distances(queries: np.ndarray, points: np.ndarray, space: SpaceKind) -> np.ndarray:
    """Distance matrix of shape (len(queries), len(points))."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    p = np.asarray(points, dtype=np.float64)
    # explicit differences (not the |q|^2 + |p|^2 - 2qp expansion) keep d(x, x) == 0
    sq = np.sum((q[:, None, :] - p[None, :, :]) ** 2, axis=-1)
    if space is SpaceKind.HYPERBOLIC:
        qq = np.sum(q * q, axis=1)[:, None]
        pp = np.sum(p * p, axis=1)[None, :]
        return arcosh1p(2.0 * sq / ((1.0 - qq) * (1.0 - pp)))
    return np.sqrt(sq)
