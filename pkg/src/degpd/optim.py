"""Finite-difference derivatives and a BFGS maximiser.

The objective may return ``-inf`` (or nan) to reject a point; the line
search backs off instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAD_REL_STEP = 1e-6
HESS_REL_STEP = 1e-4


def fd_gradient(f, x, rel_step=GRAD_REL_STEP):
    """Central-difference gradient with step rel_step * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


def fd_hessian(f, x, grad=None, rel_step=HESS_REL_STEP):
    """Symmetrised central differences of the gradient."""
    x = np.asarray(x, dtype=float)
    if grad is None:
        grad = lambda z: fd_gradient(f, z)  # noqa: E731
    n = x.size
    hess = np.empty((n, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        hess[:, i] = (grad(xp) - grad(xm)) / (xp[i] - xm[i])
    return 0.5 * (hess + hess.T)


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str

    @property
    def grad_max(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def gradient_converged(g, fun, tol):
    return g.size == 0 or np.max(np.abs(g)) <= tol * (1.0 + abs(fun))


def bfgs_maximize(f, x0, grad=None, tol=1e-6, max_iter=500, inv_hess0=None, max_step=5.0):
    """Maximise ``f`` by BFGS with Armijo backtracking.

    Convergence: max|grad| <= tol * (1 + |f|).
    """
    if grad is None:
        grad = lambda z: fd_gradient(f, z)  # noqa: E731
    x = np.array(x0, dtype=float)
    fx = float(f(x))
    if not np.isfinite(fx):
        return OptimResult(x, fx, np.full_like(x, np.nan), 0, False, "non-finite objective at start")
    g = grad(x)
    n = x.size
    eye = np.eye(n)
    H = eye.copy() if inv_hess0 is None else np.array(inv_hess0, dtype=float)
    fresh = inv_hess0 is None
    for it in range(max_iter):
        if gradient_converged(g, fx, tol):
            return OptimResult(x, fx, g, it, True, "gradient tolerance reached")
        if not np.all(np.isfinite(g)):
            return OptimResult(x, fx, g, it, False, "non-finite gradient")
        d = H @ g
        slope = d @ g
        if not slope > 0:
            H = eye.copy()
            fresh = True
            d = g.copy()
            slope = d @ g
        norm = np.max(np.abs(d))
        alpha = min(1.0, max_step / norm) if norm > 0 else 1.0
        accepted = False
        for _ in range(60):
            xn = x + alpha * d
            fn = float(f(xn))
            if np.isfinite(fn) and fn >= fx + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if not fresh:
                H = eye.copy()
                fresh = True
                continue
            msg = "line search failed"
            return OptimResult(x, fx, g, it, gradient_converged(g, fx, tol), msg)
        gn = grad(xn)
        s = xn - x
        y = g - gn  # gradient change of the minimised objective -f
        sy = s @ y
        x, fx, g = xn, fn, gn
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) and np.all(np.isfinite(y)):
            if fresh and inv_hess0 is None:
                H = eye * (sy / (y @ y))
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
            fresh = False
    conv = gradient_converged(g, fx, tol)
    return OptimResult(x, fx, g, max_iter, conv, "iteration cap reached" if not conv else "gradient tolerance reached")
