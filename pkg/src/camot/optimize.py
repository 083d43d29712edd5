"""A small bounded Nelder-Mead simplex minimiser."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    reason: str  # "target", "xtol", "maxiter"


def nelder_mead(
    func: Callable[[np.ndarray], float],
    x0: Sequence[float],
    step: float | Sequence[float] = 0.1,
    *,
    target: float = -np.inf,
    xtol: float = 1e-6,
    max_iters: int = 100,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    reflect: float = 1.0,
    expand: float = 2.0,
    contract: float = 0.5,
    shrink: float = 0.5,
) -> SimplexResult:
    """Minimise ``func`` from ``x0``.

    The initial simplex is ``x0`` plus one vertex offset by ``step`` along each
    axis (flipped inward if that would leave ``bounds``). Every trial point is
    clipped into ``bounds``. Iteration stops as soon as the best value drops
    below ``target``, the simplex spans less than ``xtol`` along every axis, or
    ``max_iters`` iterations have run. The best vertex seen is returned.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (dim,))
    if bounds is not None:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (dim,))
    else:
        lo = np.full(dim, -np.inf)
        hi = np.full(dim, np.inf)

    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        return float(func(x))

    def clip(x):
        return np.minimum(np.maximum(x, lo), hi)

    start = clip(x0)
    pts = [start]
    for i in range(dim):
        x = start.copy()
        x[i] = start[i] + steps[i]
        if x[i] > hi[i] or x[i] < lo[i]:
            x[i] = start[i] - steps[i]
        pts.append(clip(x))
    simplex = np.array(pts)
    fvals = np.array([f(x) for x in simplex])

    nit = 0
    reason = "maxiter"
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if fvals[0] < target:
            reason = "target"
            break
        if np.max(np.abs(simplex[1:] - simplex[0])) < xtol:
            reason = "xtol"
            break
        if nit >= max_iters:
            break
        nit += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = clip(centroid + reflect * (centroid - worst))
        fr = f(xr)
        if fr < fvals[0]:
            xe = clip(centroid + expand * (xr - centroid))
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = clip(centroid + contract * (xr - centroid))
            fc = f(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = clip(centroid + contract * (worst - centroid))
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        for i in range(1, dim + 1):
            simplex[i] = clip(simplex[0] + shrink * (simplex[i] - simplex[0]))
            fvals[i] = f(simplex[i])

    best = int(np.argmin(fvals))
    return SimplexResult(simplex[best].copy(), float(fvals[best]), nfev, nit, reason)
