"""Fixed-mesh implicit Euler update of nodal phase values.

Used between Lagrangian steps to let phase values change, which the transport
kinematics otherwise forbids (e.g. for topology changes).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dissipation import apply_constraints, local_mass, stiffness_K0, _scatter
from .energy import Base, discrete_energy, double_well
from .mesh import FIX_BOTH, require_admissible
from .optimize import FAILED, OptimizerConfig, StepFailure, minimize


def eulerian_energy(tri, positions, gamma, eps2):
    """Energy of phi_h = sum gamma_i psi_i on the current mesh (lumped double well)."""
    # identical integrand and quadrature to the Lagrangian base energy
    return discrete_energy(Base(eps2), tri, gamma, positions)


def _current_mesh(tri, positions):
    require_admissible(tri, positions)
    return tri.with_nodes(positions)


def _lumped_weights(cur):
    return np.bincount(cur.elements.ravel(), weights=np.repeat(cur.areas / 3.0, 3),
                       minlength=cur.n_nodes)


def mass_matrix(cur):
    r, c, v = _scatter(cur, cur.areas[:, None, None] * local_mass(1.0))
    n = cur.n_nodes
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


class EulerianObjective:
    """(M (g - g_n)).(g - g_n) / (2 tau) + F_euler(g) with Dirichlet nodes frozen."""

    def __init__(self, cur, gamma_n, tau, eps2, fixed):
        self.M = mass_matrix(cur)
        self.K = stiffness_K0(cur, cur.nodes)
        self.m = _lumped_weights(cur)
        self.tau = float(tau)
        self.eps2 = float(eps2)
        self.x0 = np.array(gamma_n, dtype=float)
        self.fixed = np.asarray(fixed, dtype=bool)

    def energy(self, gamma):
        return 0.5 * gamma @ (self.K @ gamma) + self.m @ double_well(gamma, self.eps2)

    def value(self, gamma):
        d = gamma - self.x0
        return (d @ (self.M @ d)) / (2 * self.tau) + self.energy(gamma)

    def value_and_grad(self, gamma):
        d = gamma - self.x0
        Md = self.M @ d
        Kg = self.K @ gamma
        f = (d @ Md) / (2 * self.tau) + 0.5 * gamma @ Kg + self.m @ double_well(gamma, self.eps2)
        g = Md / self.tau + Kg + self.m * gamma * (gamma * gamma - 1.0) / self.eps2
        g[self.fixed] = 0.0
        return f, g

    def preconditioner(self):
        P = apply_constraints(self.M / self.tau + self.K, self.fixed)
        return spla.factorized(P.tocsc())


def eulerian_step(tri, positions, gamma_n, tau, eps2, dirichlet_mask=None, config=None):
    """One implicit Euler step for the nodal values on the frozen current mesh."""
    cur = _current_mesh(tri, positions)
    if dirichlet_mask is None:
        dirichlet_mask = np.zeros(cur.n_nodes, dtype=bool)
    obj = EulerianObjective(cur, gamma_n, tau, eps2, dirichlet_mask)
    res = minimize(obj, config or OptimizerConfig(), precondition=obj.preconditioner())
    if res.status == FAILED:
        raise StepFailure("Eulerian minimization found no decreasing point")
    gamma = res.x
    gamma[obj.fixed] = obj.x0[obj.fixed]
    return gamma


def dirichlet_nodes(tri):
    return tri.constraints == FIX_BOTH


def apply_reinit_with_eulerian(tri, phi0, positions, tau, eps2, config=None):
    """Relabel the current mesh as reference, then update phase values by one Eulerian step."""
    from .stepper import reinitialize

    new_tri, values = reinitialize(tri, phi0, positions)
    gamma = eulerian_step(new_tri, new_tri.nodes, values, tau, eps2,
                          dirichlet_nodes(new_tri), config)
    return new_tri, gamma
