"""Small deterministic optimizers used by the estimator.

Everything is built on one projected BFGS loop with Armijo backtracking.
Gradients fall back to central finite differences when not supplied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 200
FD_STEP = 1e-7


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def fd_gradient(f, x, step=FD_STEP):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _bfgs(f, x0, grad=None, tol=1e-10, gtol=0.0, bounds=None, max_iter=MAX_ITER, initial_step=1.0):
    """Minimize ``f`` from ``x0``; ``bounds`` is ``(lo, hi)`` arrays or None.

    Stops when the (projected) step falls below ``tol`` or the projected
    gradient norm falls below ``gtol``.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if grad is None:
        grad = lambda z: fd_gradient(f, z)  # noqa: E731
    if bounds is not None:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), x.shape) for b in bounds)
        project = lambda z: np.clip(z, lo, hi)  # noqa: E731
    else:
        project = lambda z: z  # noqa: E731
    x = project(x)
    fx = float(f(x))
    g = np.asarray(grad(x), dtype=float)
    H = None
    n = x.size

    for it in range(1, max_iter + 1):
        pg = project(x - g) - x
        if not np.all(np.isfinite(g)):
            return OptimResult(x, fx, it - 1, False)
        if np.linalg.norm(pg) <= gtol or np.linalg.norm(g) == 0:
            return OptimResult(x, fx, it - 1, True)
        if H is None:
            p = -g * (initial_step / np.linalg.norm(g))
        else:
            p = -H @ g
            if g @ p >= 0:  # lost descent; restart
                H = None
                p = -g * (initial_step / np.linalg.norm(g))

        alpha = 1.0
        accepted = False
        for _ in range(60):
            x_new = project(x + alpha * p)
            step = x_new - x
            if np.linalg.norm(step) <= tol:
                break
            f_new = float(f(x_new))
            if f_new <= fx + 1e-4 * (g @ step):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return OptimResult(x, fx, it, True)

        g_new = np.asarray(grad(x_new), dtype=float)
        s, y = step, g_new - g
        sy = s @ y
        if sy > 1e-300 * max(1.0, np.linalg.norm(s) * np.linalg.norm(y)) and sy > 0:
            if H is None:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, fx, g = x_new, f_new, g_new
        if np.linalg.norm(s) <= tol:
            return OptimResult(x, fx, it, True)
    return OptimResult(x, fx, max_iter, False)


def maximize_scalar_bounded(f, lo, hi, x0, tol=1e-9, grad=None, initial_step=None):
    """Local maximum of ``f`` on ``[lo, hi]`` starting from ``x0``."""
    if not lo <= x0 <= hi:
        raise ValueError("x0 must lie inside [lo, hi]")
    neg = lambda z: -f(z[0])  # noqa: E731
    neg_grad = None if grad is None else (lambda z: np.array([-grad(z[0])]))
    if initial_step is None:
        initial_step = 0.25 * (hi - lo) if hi > lo else 1.0
    res = _bfgs(neg, [x0], neg_grad, tol=tol, bounds=([lo], [hi]), initial_step=initial_step)
    return OptimResult(res.x, -res.fun, res.iterations, res.converged)


def minimize_2d(f, x0, tol=1e-8, grad=None, initial_step=1e-3):
    """Unconstrained quasi-Newton minimization of ``f(x, y)``; ``f`` takes a length-2 array."""
    return _bfgs(f, np.asarray(x0, dtype=float), grad, tol=tol, initial_step=initial_step)


def minimize_scalar(f, x0, tol=1e-9, grad=None, initial_step=1.0):
    g = lambda z: f(z[0])  # noqa: E731
    gg = None if grad is None else (lambda z: np.array([grad(z[0])]))
    return _bfgs(g, [x0], gg, tol=tol, initial_step=initial_step)


def quadratic_peak(w_minus: float, w_center: float, w_plus: float) -> float:
    """Vertex offset of the parabola through samples at -1, 0, +1, clamped to [-0.5, 0.5]."""
    denom = 2 * (w_minus + w_plus - 2 * w_center)
    if denom == 0 or not np.isfinite(denom):
        return 0.0
    return float(np.clip((w_minus - w_plus) / denom, -0.5, 0.5))
