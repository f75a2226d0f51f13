"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    worst: tuple | None = None  # (param name, flat index, analytic, numeric)
    per_param: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.max_rel_error


def grad_check(closure, params, eps: float = 1e-6, samples_per_param: int | None = 8,
               rng: np.random.Generator | None = None) -> GradCheckResult:
    """Compare backprop gradients with central differences.

    ``closure()`` must rebuild the graph from ``params`` and return a scalar
    Tensor.  ``params`` is a mapping name -> Tensor (a ParamStore works).
    For each parameter, ``samples_per_param`` flat coordinates are drawn
    (all of them when None).  Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.

    Kinks (max, min, abs) are not special-cased: a coordinate sitting on one
    simply shows up as a large error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = rng or np.random.default_rng(0)
    items = list(params.items())
    for _, p in items:
        p.grad = None
    loss = closure()
    _check_finite(loss)
    loss.backward()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for n, p in items}

    worst_err, worst, checked, per_param = 0.0, None, 0, {}
    for name, p in items:
        flat = p.data.reshape(-1)
        if samples_per_param is None or samples_per_param >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples_per_param, replace=False)
        param_worst = 0.0
        for k in coords:
            numeric = _central(closure, flat, k, eps)
            a = float(analytic[name].reshape(-1)[k])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            checked += 1
            param_worst = max(param_worst, err)
            if worst is None or err > worst_err:
                worst_err, worst = err, (name, int(k), a, numeric)
        per_param[name] = param_worst
    for _, p in items:
        p.grad = None
    return GradCheckResult(worst_err, checked, worst, per_param)


def _central(closure, flat: np.ndarray, k, eps: float) -> float:
    orig = flat[k]
    flat[k] = orig + eps
    up = _scalar(closure())
    flat[k] = orig - eps
    down = _scalar(closure())
    flat[k] = orig
    return (up - down) / (2.0 * eps)


def _scalar(t: Tensor) -> float:
    _check_finite(t)
    return float(np.sum(t.data, dtype=np.float64))


def _check_finite(t: Tensor) -> None:
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError("closure produced a non-finite value")
