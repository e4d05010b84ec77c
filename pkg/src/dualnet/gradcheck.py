"""Analytic-vs-central-difference gradient comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_err: float
    max_abs_err: float
    worst: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"{status}: max rel err {self.max_rel_err:.3e} (tol {self.tol:g}) at {self.worst}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-6, relative: bool = False) -> np.ndarray:
    """Central differences of ``f`` with respect to ``x``, perturbed in place."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = step * max(1.0, abs(orig)) if relative else step
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def gradient_check(
    f: Callable[[], Tensor],
    inputs: Tensor | Sequence[Tensor] | dict,
    tol: float = 1e-6,
    step: float = 1e-6,
    relative_step: bool = False,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` is called with no arguments and must read the current values of
    ``inputs``; the inputs are perturbed in place and restored.
    """
    if isinstance(inputs, Tensor):
        named = {"x": inputs}
    elif isinstance(inputs, dict):
        named = dict(inputs)
    else:
        named = {f"input{i}": t for i, t in enumerate(inputs)}

    with Tape() as tape:
        loss = f()
    grads = backward(loss, tape, wrt=named.values())

    def value():
        return f().item()

    worst_rel, worst_abs, worst = 0.0, 0.0, "-"
    for name, t in named.items():
        numeric = numeric_gradient(value, t.data, step=step, relative=relative_step)
        analytic = grads[t.id]
        rel = relative_error(analytic, numeric, floor)
        if rel.size and rel.max() >= worst_rel:
            idx = np.unravel_index(rel.argmax(), rel.shape)
            worst_rel, worst = float(rel.max()), f"{name}{[int(i) for i in idx]}"
        worst_abs = max(worst_abs, float(np.abs(analytic - numeric).max(initial=0.0)))
    return GradCheckReport(worst_rel, worst_abs, worst, tol)
