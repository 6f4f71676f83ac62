"""Small smooth convex programs: projected gradient plus a log barrier.

A program is a smooth objective over a box, optionally with simplex groups
(coordinates that are nonnegative and sum to a fixed total) and smooth convex
inequality constraints ``g(x) <= 0``. Constraints are handled by a log
barrier whose weight shrinks by 10x over five stages; each stage is solved by
projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels

CONVERGED = "converged"
ITERATION_LIMIT = "iteration-limit"
INFEASIBLE_START = "infeasible-start"

ARMIJO = 1e-4
SHRINK = 0.5
BARRIER_STAGES = 5
BARRIER_DECAY = 0.1
MAX_BACKTRACK = 60

DEBUG = os.environ.get("SAGMEC_DEBUG", "").strip() not in ("", "0")


class PreconditionError(ValueError):
    pass


class GradientCheckError(AssertionError):
    pass


ObjFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
ConsFn = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass
class ConvexProgram:
    """``objective(x) -> (f, grad)``; ``constraints(x) -> (g[m], jac[m, n])``."""

    dim: int
    objective: ObjFn
    lo: np.ndarray
    hi: np.ndarray
    constraints: Optional[ConsFn] = None
    simplex_groups: Sequence = ()  # index arrays, or (indices, total) pairs

    def __post_init__(self):
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (self.dim,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (self.dim,)).copy()
        if np.any(self.lo > self.hi):
            raise ValueError("box has lo > hi")
        self._groups = _normalise_groups(self.simplex_groups)

    def project(self, x):
        return _project(x, self.lo, self.hi, self._groups)


@dataclass
class SolveResult:
    x: np.ndarray
    status: str
    fun: float
    iterations: int
    stages: int = 0
    history: list = field(default_factory=list)  # objective after every accepted step (per stage)

    @property
    def ok(self) -> bool:
        return self.status == CONVERGED


def _normalise_groups(groups):
    # -> list of (index matrix, totals) batches of equal-size groups
    by_size: dict[int, list] = {}
    for g in groups:
        if isinstance(g, tuple) and len(g) == 2 and np.ndim(g[1]) == 0 and np.ndim(g[0]) == 1:
            idx, total = np.asarray(g[0], dtype=np.int64), float(g[1])
        else:
            idx, total = np.asarray(g, dtype=np.int64), 1.0
        by_size.setdefault(idx.size, []).append((idx, total))
    out = []
    for size, items in sorted(by_size.items()):
        out.append((np.stack([i for i, _ in items]), np.array([t for _, t in items])))
    return out


def _project(x, lo, hi, groups):
    # Grouped coordinates are projected onto their simplex directly (clamping
    # them first would not be a projection); the box then only trims them.
    y = np.clip(x, lo, hi)
    for idx, totals in groups:
        y[idx] = np.clip(kernels.project_simplex_rows(x[idx], totals), lo[idx], hi[idx])
    return y


def project_box_simplex(x, box=None, simplex_groups=()):
    """Box clamp followed by per-group simplex projection (sort based)."""
    x = np.asarray(x, dtype=float)
    if box is None:
        lo, hi = np.full(x.shape, -np.inf), np.full(x.shape, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(box[0], dtype=float), x.shape)
        hi = np.broadcast_to(np.asarray(box[1], dtype=float), x.shape)
    return _project(x, lo, hi, _normalise_groups(simplex_groups))


def check_gradient(fun: ObjFn, x, step: float = 1e-6) -> float:
    """Relative error between an analytic gradient and central differences."""
    x = np.asarray(x, dtype=float)
    _, g = fun(x)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * step)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(g - fd) / scale)


def _barrier(program: ConvexProgram, mu: float) -> ObjFn:
    f, cons = program.objective, program.constraints

    def phi(x):
        fx, gx = f(x)
        g, jac = cons(x)
        if np.any(g >= 0):
            return np.inf, gx
        return fx - mu * np.log(-g).sum(), gx + mu * (jac / (-g)[:, None]).sum(axis=0)

    return phi


def _descend(fun: ObjFn, program: ConvexProgram, x, tol, max_iter, history):
    fx, gx = fun(x)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        pg = x - program.project(x - gx)
        if np.linalg.norm(pg) <= tol:
            return x, fx, it - 1, True
        t = step
        for _ in range(MAX_BACKTRACK):
            xn = program.project(x - t * gx)
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn <= fx + ARMIJO * gx.dot(xn - x):
                break
            t *= SHRINK
        else:
            return x, fx, it, False  # no acceptable step: numerically stationary
        s, y = xn - x, gn - gx
        sy = s.dot(y)
        step = float(np.clip(s.dot(s) / sy, 1e-12, 1e12)) if sy > 0 else min(2.0 * t, 1e12)
        x, fx, gx = xn, fn, gn
        history.append(fx)
    pg = x - program.project(x - gx)
    return x, fx, it, bool(np.linalg.norm(pg) <= tol)


def solve(program: ConvexProgram, x0, tol: float = 1e-8, max_iter: int = 1000, *, debug: bool | None = None,
          mu0: float | None = None) -> SolveResult:
    """Minimise ``program`` from ``x0``; see the module docstring for the method."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(program.dim)
    slack = 1e-9 * np.maximum(1.0, np.abs(x0))
    if np.any(x0 < program.lo - slack) or np.any(x0 > program.hi + slack):
        raise PreconditionError("x0 lies outside the box")
    x = program.project(x0)
    if debug if debug is not None else DEBUG:
        err = check_gradient(program.objective, x)
        if err > 1e-4:
            raise GradientCheckError(f"objective gradient mismatch (rel. err {err:.2e})")
    history: list = []
    if program.constraints is None:
        x, fx, it, conv = _descend(program.objective, program, x, tol, max_iter, history)
        return SolveResult(x, CONVERGED if conv else ITERATION_LIMIT, float(fx), it, 1, history)

    g, _ = program.constraints(x)
    if np.any(g >= 0):
        return SolveResult(x, INFEASIBLE_START, float(program.objective(x)[0]), 0, 0, history)
    if mu0 is None:
        f0, g0 = program.objective(x)
        span = np.where(np.isfinite(program.hi - program.lo), program.hi - program.lo, 1.0)
        scale = max(abs(f0), float(np.abs(g0).dot(span)), 1e-300)
        mu0 = 0.1 * scale / max(len(g), 1)
    mu = mu0
    total = 0
    conv = False
    for stage in range(BARRIER_STAGES):
        x, _, it, conv = _descend(_barrier(program, mu), program, x, tol, max_iter, history)
        total += it
        mu *= BARRIER_DECAY
    fx = float(program.objective(x)[0])
    return SolveResult(x, CONVERGED if conv else ITERATION_LIMIT, fx, total, BARRIER_STAGES, history)
