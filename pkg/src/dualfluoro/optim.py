"""Small derivative-free and least-squares optimizers.

Both are written out rather than delegated to :mod:`scipy.optimize` because
callers need the exact stopping rules below and the accepted-step history.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool
    history: list[float] = field(default_factory=list)


def _diameter(sim: np.ndarray) -> float:
    diff = sim[:, None, :] - sim[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0,
    step,
    xtol: float = 1e-6,
    ftol: float = 1e-9,
    max_iter: int = 50_000,
    max_restarts: int = 2,
    restart_scale: float = 1e-2,
) -> OptimizeResult:
    """Minimize ``fun`` with the Nelder–Mead simplex method.

    The initial simplex is ``x0`` plus one vertex per coordinate offset by
    ``step[i]``. A run stops when the simplex diameter is below ``xtol`` and
    the spread of vertex values is below ``ftol``. After convergence the
    search restarts from the best vertex with a simplex ``restart_scale``
    times the initial one; restarts continue while they improve the value by
    more than ``ftol``. ``max_iter`` caps the total iteration count.
    """
    x0 = np.asarray(x0, dtype=float)
    step = np.broadcast_to(np.asarray(step, dtype=float), x0.shape)
    n = x0.size
    nfev = 0
    nit = 0

    def run(start, edge):
        nonlocal nfev, nit
        sim = np.tile(start, (n + 1, 1))
        sim[1:] += np.diag(edge)
        fsim = np.array([fun(v) for v in sim])
        nfev += n + 1
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        while nit < max_iter:
            if fsim[-1] - fsim[0] <= ftol and _diameter(sim) <= xtol:
                return sim[0], fsim[0], True
            nit += 1
            centroid = sim[:-1].mean(axis=0)
            worst = sim[-1]
            xr = 2.0 * centroid - worst
            fr = fun(xr)
            nfev += 1
            if fr < fsim[0]:
                xe = 3.0 * centroid - 2.0 * worst
                fe = fun(xe)
                nfev += 1
                if fe < fr:
                    sim[-1], fsim[-1] = xe, fe
                else:
                    sim[-1], fsim[-1] = xr, fr
            elif fr < fsim[-2]:
                sim[-1], fsim[-1] = xr, fr
            else:
                if fr < fsim[-1]:
                    xc = 0.5 * (centroid + xr)
                    fc = fun(xc)
                    nfev += 1
                    accept = fc <= fr
                else:
                    xc = 0.5 * (centroid + worst)
                    fc = fun(xc)
                    nfev += 1
                    accept = fc < fsim[-1]
                if accept:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                    fsim[1:] = [fun(v) for v in sim[1:]]
                    nfev += n
            order = np.argsort(fsim, kind="stable")
            sim, fsim = sim[order], fsim[order]
        return sim[0], fsim[0], False

    best_x, best_f, converged = run(x0, step)
    restarts = 0
    while converged and restarts < max_restarts and nit < max_iter:
        restarts += 1
        x, f, conv = run(best_x, step * restart_scale)
        improved = f < best_f - ftol
        if f < best_f:
            best_x, best_f = x, f
        converged = conv
        if not improved:
            break
    return OptimizeResult(x=np.array(best_x), fun=float(best_f), nit=nit, nfev=nfev, converged=converged)


def numeric_jacobian(residuals: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     r0: np.ndarray | None = None, rel_step: float = 1e-7) -> np.ndarray:
    """Forward-difference Jacobian of a residual vector."""
    if r0 is None:
        r0 = residuals(x)
    jac = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        jac[:, i] = (residuals(xp) - r0) / (xp[i] - x[i])
    return jac


def levenberg_marquardt(
    residuals: Callable[[np.ndarray], np.ndarray],
    x0,
    max_iter: int = 200,
    xtol: float = 1e-12,
    gtol: float = 1e-14,
    lam0: float = 1e-3,
) -> OptimizeResult:
    """Minimize ``0.5 * ||residuals(x)||²`` with a damped Gauss–Newton method.

    The Jacobian is differenced numerically. A step is accepted only if it
    reduces the cost, so ``history`` (the cost after every accepted step) is
    non-increasing. ``converged`` is False when ``max_iter`` is exhausted
    before the step or gradient tolerances are met.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residuals(x)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = lam0
    nfev = 1
    for nit in range(1, max_iter + 1):
        jac = numeric_jacobian(residuals, x, r)
        nfev += x.size
        grad = jac.T @ r
        if np.max(np.abs(grad)) <= gtol or cost == 0.0:
            return OptimizeResult(x, cost, nit - 1, nfev, True, history)
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                dx = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + dx
            r_new = residuals(x_new)
            nfev += 1
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if lam > 1e16:
                # No descent possible at machine precision: a stationary point.
                return OptimizeResult(x, cost, nit, nfev, True, history)
        if np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol):
            return OptimizeResult(x, cost, nit, nfev, True, history)
    return OptimizeResult(x, cost, max_iter, nfev, False, history)
