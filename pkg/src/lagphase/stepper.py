"""Outer time loop of the Lagrangian scheme."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .dissipation import ConfigError, assemble_D
from .energy import Base, discrete_energy
from .eulerian import apply_reinit_with_eulerian
from .mesh import InadmissibleStateError, deformation, from_flat, is_admissible, to_flat
from .optimize import FAILED, OptimizerConfig, StepObjective, minimize

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "time", "energy", "dissipation", "min_detF", "max_speed")


@dataclass(frozen=True)
class SolverConfig:
    tau: float
    nu: float
    model: Base
    energy_tol: float | None = None
    max_steps: int = 100
    eulerian_schedule: tuple = ()
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if self.energy_tol is not None and not self.energy_tol > 0:
            raise ConfigError("energy_tol must be positive")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be non-negative")

    @property
    def eps2(self):
        return self.model.eps2


@dataclass
class StepReport:
    step: int
    status: str
    iterations: int
    energy_before: float
    energy_after: float
    dissipation: float  # (D dXi . dXi) / (2 tau)
    min_detF: float
    max_speed: float

    @property
    def law_residual(self):
        """F_{n+1} + dissipation - F_n; non-positive for an energy-stable step."""
        return self.energy_after + self.dissipation - self.energy_before

    @property
    def ok(self):
        return self.status != FAILED


@dataclass
class TraceRow:
    step: int
    time: float
    energy: float
    dissipation: float
    min_detF: float
    max_speed: float
    energy_before: float
    eulerian: bool = False


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    status: str = "running"
    initial_energy: float = float("nan")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([r.step, repr(r.time)] + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[2:]])
        return buf.getvalue()

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


@dataclass
class StepResult:
    positions: np.ndarray
    report: StepReport


def lagrangian_step(tri, phi0, positions, config, step=0):
    """One implicit Euler step, posed as minimization of J_n over node positions."""
    positions = np.asarray(positions, dtype=float)
    x_n = to_flat(positions)
    try:
        D = assemble_D(tri, phi0, positions, config.nu, frozen_step=step)
        obj = StepObjective(tri, phi0, config.model, D, config.tau, x_n)
        res = minimize(obj, config.optimizer, precondition=D.factorized(1.0 / config.tau))
    except (InadmissibleStateError, np.linalg.LinAlgError, RuntimeError) as exc:
        # a collapsed mesh can make the frozen operator numerically singular
        logger.info("step %d: %s", step, exc)
        res = None
    f_before = discrete_energy(config.model, tri, phi0, positions)
    if res is None or res.status == FAILED:
        _, det = deformation(tri, positions)
        report = StepReport(step, FAILED, res.iterations if res else 0, f_before, f_before, 0.0,
                            float(det.min()), 0.0)
        return StepResult(positions, report)
    x = res.x
    x[obj.fixed] = x_n[obj.fixed]
    new = from_flat(x)
    _, det = deformation(tri, new)
    dx = x - x_n
    report = StepReport(
        step,
        res.status,
        res.iterations,
        f_before,
        obj.energy(x),
        obj.quadratic(x),
        float(det.min()),
        float(np.max(np.abs(dx))) / config.tau,
    )
    return StepResult(new, report)


def reinitialize(tri, phi0, positions):
    """Relabel the current configuration as the new reference mesh."""
    return tri.with_nodes(positions), np.array(phi0, dtype=float)


@dataclass
class RunResult:
    tri: object
    phi0: np.ndarray
    trace: RunTrace
    reports: list

    @property
    def status(self):
        return self.trace.status


def run(tri, phi0, config, callback=None):
    """Step, reinitialize and record until the energy settles or a budget runs out.

    Terminal statuses: ``"converged"`` (|F_{n+1} - F_n| <= energy_tol),
    ``"step_failure"``, ``"max_steps"``. ``callback(step, time, tri, phi0)``
    is invoked after the initial state and after every step.
    """
    phi0 = np.array(phi0, dtype=float)
    if not is_admissible(tri, tri.nodes):
        raise ConfigError("initial mesh is not admissible")
    f0 = discrete_energy(config.model, tri, phi0, tri.nodes)
    tol = config.energy_tol if config.energy_tol is not None else 1e-10 * abs(f0)
    trace = RunTrace(initial_energy=f0)
    reports = []
    schedule = set(int(s) for s in config.eulerian_schedule)
    if callback:
        callback(0, 0.0, tri, phi0)
    trace.status = "max_steps"
    for n in range(config.max_steps):
        step = n + 1
        res = lagrangian_step(tri, phi0, tri.nodes, config, step=n)
        reports.append(res.report)
        if not res.report.ok:
            trace.status = "step_failure"
            logger.info("step %d: minimizer failed", step)
            break
        tri, phi0 = reinitialize(tri, phi0, res.positions)
        rep = res.report
        energy = rep.energy_after
        eulerian = step in schedule
        if eulerian:
            tri, phi0 = apply_reinit_with_eulerian(tri, phi0, tri.nodes, config.tau,
                                                   config.eps2, config.optimizer)
            energy = discrete_energy(config.model, tri, phi0, tri.nodes)
        trace.rows.append(TraceRow(step, step * config.tau, energy, rep.dissipation,
                                   rep.min_detF, rep.max_speed, rep.energy_before, eulerian))
        logger.debug("step %d: F=%.10g iters=%d status=%s", step, energy,
                     rep.iterations, rep.status)
        if callback:
            callback(step, step * config.tau, tri, phi0)
        if not eulerian and abs(rep.energy_after - rep.energy_before) <= tol:
            trace.status = "converged"
            break
    return RunResult(tri, phi0, trace, reports)
