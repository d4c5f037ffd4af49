"""Damped Newton ascent shared by the likelihood-type estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NewtonResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    status: str
    iterations: int
    trace: list = field(default_factory=list)


def newton_maximize(fun, x0, tol=1e-10, max_iter=200, ridge=1e-10, bound=1e3):
    """Maximize a concave objective.

    ``fun(x)`` returns ``(value, grad, hess)``.  Steps solve
    ``(-hess + ridge*I) dx = grad`` and are halved until the objective does
    not decrease.  Stops when ``max|grad| <= tol``.  Status is ``converged``,
    ``max_iters`` or ``boundary`` (iterate escaped ``bound``, i.e. the
    optimum is at infinity).
    """
    x = np.array(x0, dtype=float)
    val, g, H = fun(x)
    trace = [(x.copy(), float(np.max(np.abs(g))))]
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= tol:
            return NewtonResult(x, val, g, "converged", it - 1, trace)
        A = -H + ridge * np.eye(len(x))
        try:
            step = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        while True:
            xn = x + t * step
            vn, gn, Hn = fun(xn)
            if vn >= val - 1e-13 * max(1.0, abs(val)) or t < 1e-12:
                break
            t *= 0.5
        x, val, g, H = xn, vn, gn, Hn
        trace.append((x.copy(), float(np.max(np.abs(g)))))
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > bound:
            return NewtonResult(x, val, g, "boundary", it, trace)
    status = "converged" if np.max(np.abs(g)) <= tol else "max_iters"
    return NewtonResult(x, val, g, status, max_iter, trace)
