"""Adam, global-norm clipping and a central-difference gradient checker.

Parameters and gradients are passed around as ``dict[str, np.ndarray]``
(one entry per parameter block).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

Params = Dict[str, np.ndarray]


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> Params:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Blocks missing from ``grads`` are left untouched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in block {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}"
            )
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.lr:
            params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: Params, max_norm: float) -> Params:
    """Scale every block by ``max_norm / total`` when the total L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = global_norm(grads)
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


@dataclass
class GradCheckReport:
    max_rel_error: Dict[str, float]
    tolerance: float
    checked: Dict[str, int]

    @property
    def failed(self) -> list:
        return sorted(k for k, e in self.max_rel_error.items() if not e < self.tolerance)

    @property
    def ok(self) -> bool:
        return not self.failed

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def finite_difference_check(
    loss_fn: Callable[[Params], float],
    params: Params,
    analytic: Params,
    h: float = 1e-6,
    tolerance: float = 1e-4,
    max_coords: int = 64,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare ``analytic`` against central differences of ``loss_fn``.

    Blocks with more than ``max_coords`` entries are probed at a random
    subset of coordinates. The per-coordinate relative error is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps near-zero
    gradients from turning roundoff into huge relative errors.
    ``params`` is perturbed in place and restored.
    """
    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    checked: Dict[str, int] = {}
    for name in sorted(analytic):
        block = params[name]
        flat = block.reshape(-1)
        grad = np.asarray(analytic[name]).reshape(-1)
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        else:
            coords = np.arange(flat.size)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn(params)
            flat[i] = orig - h
            fm = loss_fn(params)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"loss not finite when probing {name}[{i}]")
            numeric = (fp - fm) / (2.0 * h)
            a = grad[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
        errors[name] = worst
        checked[name] = len(coords)
    return GradCheckReport(errors, tolerance, checked)
