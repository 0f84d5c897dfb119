"""Central finite-difference checks against reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Value, backward


class KinkError(RuntimeError):
    """The evaluation point sits on (or next to) a non-differentiable kink."""


def numerical_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5, kink_tol: float = 1e-3) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the array ``x`` (perturbed in place).

    Forward and backward one-sided slopes are compared as well; when they
    disagree beyond ``kink_tol`` (relative) the point sits on a relu, max or
    top-k boundary and :class:`KinkError` is raised.
    """
    f0 = f()
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        central = (fp - fm) / (2 * h)
        if abs((fp - f0) - (f0 - fm)) / h > kink_tol * max(1.0, abs(central)):
            raise KinkError(f"one-sided slopes disagree at {idx}: {(fp - f0) / h} vs {(f0 - fm) / h}")
        grad[idx] = central
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``.

    The floor keeps vanishing gradients (norm below ~1e-6, where central
    differences only resolve ~1e-11 absolute) from reporting roundoff as error.
    """
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(loss_fn: Callable[[], Value], params: Sequence[Value], h: float = 1e-5) -> dict[str, float]:
    """Relative error per parameter tensor between autodiff and finite differences."""
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = [p.grad.copy() for p in params]
    errors = {}
    for k, (p, g) in enumerate(zip(params, analytic)):
        num = numerical_grad(lambda: loss_fn().item(), p.data, h)
        errors[getattr(p, "name", f"param{k}")] = relative_error(g, num)
    return errors
