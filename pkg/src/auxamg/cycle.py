"""Solve phase: nonlinear PCG, the nonlinear AMLI (K-) cycle and the outer loop."""
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, SizeError
from .hierarchy import prolongate, restrict
from .parallel import dot, norm
from .smoother import BACKWARD, FORWARD, smooth
from .sparse import spmv

BREAKDOWN = 1e-300


@dataclass
class CycleOptions:
    n_inner: int = 2
    pre_sweeps: int = 1
    post_sweeps: int = 1
    max_outer: int = 100
    rtol: float = 1e-6
    max_directions: int = None

    def __post_init__(self):
        for name in ("n_inner", "pre_sweeps", "post_sweeps", "max_outer"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be positive")
        if not 0.0 < self.rtol < 1.0:
            raise ArgumentError("rtol must lie in (0, 1)")
        if self.max_directions is not None and self.max_directions < 1:
            raise ArgumentError("max_directions must be positive")


@dataclass
class SolveResult:
    solution: np.ndarray
    residual_history: list
    iterations: int
    converged: bool
    timings: dict = field(default_factory=dict)

    @property
    def relative_residual(self):
        h = self.residual_history
        return h[-1] / h[0] if h and h[0] > 0 else 0.0


class _Directions:
    """Previous search directions ``p_j`` with cached ``A p_j`` and ``(p_j, p_j)_A``."""

    def __init__(self, window=None):
        self.window = window
        self.items = []

    def orthogonalize(self, z):
        p = z.copy()
        for pj, Apj, ej in self.items:
            p -= (dot(z, Apj) / ej) * pj
        return p

    def add(self, p, Ap, energy):
        self.items.append((p, Ap, energy))
        if self.window is not None and len(self.items) > self.window:
            self.items.pop(0)


def _pcg_steps(apply_A, precond, f, n_steps, rtol=None, history=None, window=None):
    """Shared nonlinear PCG iteration; returns ``(u, steps_taken, r)``."""
    u = np.zeros_like(f)
    r = f.copy()
    dirs = _Directions(window)
    f_norm = norm(f)
    steps = 0
    for _ in range(n_steps):
        if rtol is not None and norm(r) <= rtol * f_norm:
            break
        z = precond(r)
        p = dirs.orthogonalize(z)
        Ap = apply_A(p)
        energy = dot(p, Ap)
        if not energy > BREAKDOWN:
            break
        alpha = dot(r, p) / energy
        u += alpha * p
        r -= alpha * Ap
        dirs.add(p, Ap, energy)
        steps += 1
        if history is not None:
            history.append(norm(r))
    return u, steps, r


def nonlinear_pcg(apply_A, precond, f, n):
    """Run ``n`` steps of nonlinear (flexible) PCG from a zero initial guess.

    Each new direction is the preconditioned residual made ``A``-orthogonal
    to all previous directions:
    ``p_i = B[r_i] - sum_j (B[r_i], p_j)_A / (p_j, p_j)_A * p_j``.
    If a direction has (numerically) zero energy ``(p, p)_A`` the current
    iterate is returned.

    Parameters
    ----------
    apply_A : callable
        ``v -> A v`` for an SPD ``A``.
    precond : callable
        ``r -> B[r]``; may be nonlinear.
    f : ndarray
    n : int
        Number of steps, at least 1.

    Returns
    -------
    u : ndarray
    """
    if n < 1:
        raise ArgumentError("nonlinear PCG needs at least one step")
    f = np.asarray(f, dtype=np.float64)
    u, _, _ = _pcg_steps(apply_A, precond, f, n)
    return u


def coarsest_solve(coarsest, f):
    return coarsest.solve(f)


def amli_cycle(hierarchy, level, f, opts=None):
    """Apply the nonlinear AMLI cycle ``B[f]`` at list position ``level`` (0 = finest)."""
    opts = CycleOptions() if opts is None else opts
    levels = hierarchy.levels
    lvl = levels[level]
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (lvl.size,):
        raise SizeError(f"level {level} expects a vector of length {lvl.size}")
    if level == len(levels) - 1:
        return coarsest_solve(hierarchy.coarsest, f)

    coarse = levels[level + 1]
    u = np.zeros_like(f)
    smooth(lvl, f, u, FORWARD, opts.pre_sweeps)

    r = f - spmv(lvl.A, u)
    rc = restrict(r, lvl.agg, lvl.active)
    rc[~coarse.active] = 0.0
    ec = nonlinear_pcg(lambda v: spmv(coarse.A, v),
                       lambda g: amli_cycle(hierarchy, level + 1, g, opts),
                       rc, opts.n_inner)
    u += prolongate(ec, lvl.agg, lvl.active)

    smooth(lvl, f, u, BACKWARD, opts.post_sweeps)
    return u


def solve(A, b, hierarchy, opts=None):
    """Outer flexible-CG iteration preconditioned by one AMLI cycle per step.

    Stops once ``||r_i|| <= rtol * ||b||`` or after ``max_outer`` steps;
    non-convergence is reported through ``converged=False``.
    """
    opts = CycleOptions() if opts is None else opts
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise SizeError(f"right-hand side must have length {A.shape[0]}")
    if hierarchy.levels[0].A is not A and hierarchy.levels[0].A.shape != A.shape:
        raise SizeError("hierarchy was built for a different matrix")
    t0 = time.perf_counter()
    history = [norm(b)]
    if history[0] == 0.0:
        u, steps = np.zeros_like(b), 0
    else:
        u, steps, _ = _pcg_steps(lambda v: spmv(A, v),
                                 lambda r: amli_cycle(hierarchy, 0, r, opts),
                                 b, opts.max_outer, rtol=opts.rtol, history=history,
                                 window=opts.max_directions)
    t_solve = time.perf_counter() - t0
    converged = history[0] == 0.0 or history[-1] <= opts.rtol * history[0]
    timings = {"setup": hierarchy.setup_time, "solve": t_solve,
               "total": hierarchy.setup_time + t_solve}
    return SolveResult(u, history, steps, bool(converged), timings)
