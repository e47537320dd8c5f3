"""Assembly of the frozen dissipation operator D = M + nu K."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import deformation, element_geometry, require_admissible

# exact integral of psi_i psi_j over a triangle of unit area
LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class ConfigError(ValueError):
    pass


def local_mass(area):
    """Element matrix of psi_i psi_j integrals, ``|tau_e|/12 * (1 + delta_ij)``."""
    return area * LOCAL_MASS


def _scatter(tri, blocks, offset_r=0, offset_c=0):
    """COO triplets for per-element 3x3 blocks."""
    e = tri.elements
    rows = np.repeat(e, 3, axis=1).ravel() + offset_r
    cols = np.tile(e, (1, 3)).ravel() + offset_c
    return rows, cols, blocks.reshape(-1)


def assemble_M(tri, phi0, positions):
    """Modified mass matrix, 2N x 2N, (x-block, y-block) ordering."""
    require_admissible(tri, positions)
    geo = element_geometry(tri, positions, phi0)
    n = tri.n_nodes
    base = (geo.detF * tri.areas)[:, None, None] * LOCAL_MASS
    rows, cols, vals = [], [], []
    for a in range(2):
        for b in range(2):
            w = geo.g[:, a] * geo.g[:, b]
            r, c, v = _scatter(tri, w[:, None, None] * base, a * n, b * n)
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * n, 2 * n),
    )


def stiffness_K0(tri, positions):
    require_admissible(tri, positions)
    _, det = deformation(tri, positions)
    gp = tri.hat_gradients
    local = np.einsum("eai,ebi->eab", gp, gp) * (det * tri.areas)[:, None, None]
    r, c, v = _scatter(tri, local)
    n = tri.n_nodes
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def assemble_K(tri, positions):
    """Block-diagonal diag(K0, K0) of the det-F-weighted stiffness matrix."""
    K0 = stiffness_K0(tri, positions)
    return sp.block_diag([K0, K0], format="csr")


def apply_constraints(matrix, fixed):
    """Zero the rows/columns of frozen DOFs and put 1 on their diagonal."""
    keep = sp.diags((~fixed).astype(float))
    return (keep @ matrix @ keep + sp.diags(fixed.astype(float))).tocsr()


@dataclass(frozen=True)
class DissipationOperator:
    matrix: sp.csr_matrix
    nu: float
    frozen_step: int = 0

    def quadratic(self, v):
        return float(v @ (self.matrix @ v))

    def factorized(self, scale=1.0):
        """Solver for ``(scale * D) u = r``."""
        return spla.factorized((scale * self.matrix).tocsc())

    def cholesky_pivots(self):
        """Squared diagonal of the dense Cholesky factor (raises LinAlgError if not SPD)."""
        A = self.matrix.toarray()
        L = np.linalg.cholesky(A)
        return np.diag(L) ** 2


def assemble_D(tri, phi0, positions, nu, frozen_step=0):
    if not nu > 0:
        raise ConfigError("nu must be positive; M alone is singular")
    D = assemble_M(tri, phi0, positions) + nu * assemble_K(tri, positions)
    return DissipationOperator(apply_constraints(D, tri.fixed_dofs), float(nu), frozen_step)
