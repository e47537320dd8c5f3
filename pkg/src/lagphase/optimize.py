"""Per-step objective J_n and a barrier-aware L-BFGS minimizer.

Infeasible trial points evaluate to ``inf``; the Armijo test then rejects
them, so every accepted iterate stays admissible without explicit
constraint handling.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .energy import discrete_energy, energy_and_gradient
from .mesh import from_flat

logger = logging.getLogger(__name__)

CONVERGED = "converged"
DECREASE_ONLY = "decrease_only"
FAILED = "failed"


class StepFailure(RuntimeError):
    """A minimization found no admissible point that decreases the objective."""


@dataclass(frozen=True)
class OptimizerConfig:
    lbfgs_memory: int = 10
    max_iterations: int = 1000
    grad_tol: float | None = None
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 60
    f_rel_tol: float = 1e-13  # relative gain below which an iteration counts as stalled
    stall_iterations: int = 5  # consecutive stalled iterations that end the solve

    def __post_init__(self):
        if min(self.lbfgs_memory, self.max_iterations, self.max_backtracks,
               self.stall_iterations) < 1:
            raise ValueError("optimizer budgets must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack_factor < 1:
            raise ValueError("armijo_c and backtrack_factor must lie in (0, 1)")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.f_rel_tol < 0:
            raise ValueError("f_rel_tol must be non-negative")


class StepObjective:
    """J_n(x) = (D (x - x_n)) . (x - x_n) / (2 tau) + F_h(x) on flat vectors."""

    def __init__(self, tri, phi0, model, dissipation, tau, x_ref):
        self.tri = tri
        self.phi0 = np.asarray(phi0, dtype=float)
        self.model = model
        self.D = dissipation
        self.tau = float(tau)
        self.x0 = np.array(x_ref, dtype=float)
        self.fixed = tri.fixed_dofs

    def energy(self, x):
        return discrete_energy(self.model, self.tri, self.phi0, from_flat(x))

    def quadratic(self, x):
        dx = x - self.x0
        return self.D.quadratic(dx) / (2.0 * self.tau)

    def value(self, x):
        f = self.energy(x)
        if not np.isfinite(f):
            return np.inf
        return self.quadratic(x) + f

    def value_and_grad(self, x):
        f, g = energy_and_gradient(self.model, self.tri, self.phi0, from_flat(x))
        dx = x - self.x0
        Ddx = self.D.matrix @ dx
        g = g + Ddx / self.tau
        g[self.fixed] = 0.0
        return float(dx @ Ddx) / (2.0 * self.tau) + f, g

    def gradient(self, x):
        return self.value_and_grad(x)[1]


def objective_value(obj, x):
    return obj.value(np.asarray(x, dtype=float))


def objective_gradient(obj, x):
    return obj.gradient(np.asarray(x, dtype=float))


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    iterations: int
    status: str
    grad_inf: float
    evaluations: int


def _two_loop(g, memory, precondition):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        hy = precondition(y) if precondition else y
        q = (s @ y) / (y @ hy) * (precondition(q) if precondition else q)
    elif precondition:
        q = precondition(q)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(obj, config=None, precondition=None):
    """Minimize ``obj`` from ``obj.x0`` by L-BFGS with Armijo backtracking.

    ``obj`` needs ``x0``, ``fixed`` (bool mask), ``value(x)`` and
    ``value_and_grad(x)``. ``precondition``, if given, applies an approximate
    inverse Hessian; it replaces the identity in the initial L-BFGS matrix.
    """
    config = config or OptimizerConfig()
    fixed = obj.fixed
    x = obj.x0.copy()
    f, g = obj.value_and_grad(x)
    evals = 1
    f_start = f
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return MinimizeResult(x, f, 0, FAILED, np.inf, evals)
    tol = config.grad_tol if config.grad_tol is not None else 1e-8 * max(1.0, abs(f))
    memory = deque(maxlen=config.lbfgs_memory)
    status = DECREASE_ONLY
    it = stalls = 0
    for it in range(config.max_iterations + 1):
        if np.max(np.abs(g)) <= tol:
            status = CONVERGED
            break
        if it == config.max_iterations:
            break
        d = _two_loop(g, memory, precondition)
        d[fixed] = 0.0
        if not memory and precondition is None:
            d /= max(1.0, np.linalg.norm(d))
        gd = g @ d
        if not (np.isfinite(gd) and gd < 0):
            memory.clear()
            d = -g / max(1.0, np.linalg.norm(g))
            gd = g @ d

        alpha = 1.0
        accepted = False
        for _ in range(config.max_backtracks):
            x_new = x + alpha * d
            x_new[fixed] = x[fixed]
            f_new = obj.value(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + config.armijo_c * alpha * gd:
                accepted = True
                break
            alpha *= config.backtrack_factor
        if not accepted:
            # cannot resolve a decrease in floating point: stagnation, not failure
            stalled = abs(gd) <= 1e3 * np.finfo(float).eps * max(1.0, abs(f))
            moved = f < f_start
            status = DECREASE_ONLY if (moved or stalled) else FAILED
            logger.debug("line search failed at iteration %d (|g.d|=%.3e)", it, -gd)
            break
        f_new, g_new = obj.value_and_grad(x_new)
        evals += 1
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            memory.append((s, y, 1.0 / sy))
        else:
            # stale pairs would keep dictating the step scale; restart instead
            memory.clear()
        gain = f - f_new
        x, f, g = x_new, f_new, g_new
        stalls = stalls + 1 if gain <= config.f_rel_tol * max(1.0, abs(f)) else 0
        if stalls >= config.stall_iterations:
            status = CONVERGED
            it += 1
            break
    return MinimizeResult(x, f, it, status, float(np.max(np.abs(g))), evals)
