"""Discrete free energy of a piecewise-linear flow map and its gradient.

The phase field rides with the mesh: nodal values ``phi0`` never change, and
the energy depends on node positions only through the per-element
deformation tensors. The gradient term is integrated exactly (the pushed
forward phase gradient is constant per element); the double-well term uses
the vertex (lumped) rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import InadmissibleStateError, deformation, inverse_2x2, orientation_ok


@dataclass(frozen=True)
class Base:
    eps2: float

    def __post_init__(self):
        if not self.eps2 > 0:
            raise ValueError("eps2 must be positive")


@dataclass(frozen=True)
class VolumeConstrained(Base):
    Wb: float = 1000.0
    A: float = -3.0

    def __post_init__(self):
        super().__post_init__()
        if self.Wb < 0:
            raise ValueError("Wb must be non-negative")


@dataclass(frozen=True)
class SlightlyCompressible(Base):
    eta: float = 5000.0

    def __post_init__(self):
        super().__post_init__()
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


def double_well(phi, eps2):
    phi = np.asarray(phi, dtype=float)
    return (phi * phi - 1.0) ** 2 / (4.0 * eps2)


def density_W(phi, grad_phi, eps2):
    grad_phi = np.asarray(grad_phi, dtype=float)
    return 0.5 * np.sum(grad_phi * grad_phi, axis=-1) + double_well(phi, eps2)


def _kinematics(tri, phi0, positions):
    F, det = deformation(tri, positions)
    Finv = inverse_2x2(F, det)
    a = np.einsum("ea,eaj->ej", np.asarray(phi0, dtype=float)[tri.elements], tri.hat_gradients)
    g = np.einsum("eji,ej->ei", Finv, a)
    return F, det, Finv, g


def _volume_weights(tri, phi0):
    return tri.areas / 3.0 * np.asarray(phi0, dtype=float)[tri.elements].sum(axis=1)


def volume(tri, phi0, positions):
    """Quadrature of the integral of phi over the current configuration."""
    _, det = deformation(tri, positions)
    return float(np.sum(det * _volume_weights(tri, phi0)))


def _energy_terms(model, tri, phi0, det, g):
    area = tri.areas
    vbar = double_well(np.asarray(phi0)[tri.elements], model.eps2).mean(axis=1)
    w = 0.5 * np.einsum("ei,ei->e", g, g) + vbar
    energy = float(np.sum(area * det * w))
    if isinstance(model, VolumeConstrained):
        vol = float(np.sum(det * _volume_weights(tri, phi0)))
        energy += model.Wb * (vol - model.A) ** 2
    elif isinstance(model, SlightlyCompressible):
        energy += float(np.sum(area * model.eta * (1.0 / det - 2.0 + det)))
    return energy, w


def discrete_energy(model, tri, phi0, positions):
    """F_h at the given node positions; ``inf`` for an inadmissible state."""
    _, det, _, g = _kinematics(tri, phi0, positions)
    if not orientation_ok(tri, np.asarray(positions, dtype=float), det):
        return np.inf
    return _energy_terms(model, tri, phi0, det, g)[0]


def energy_and_gradient(model, tri, phi0, positions):
    """Return ``(F_h, dF_h/dXi)`` with the gradient as a flat 2N vector.

    Raises :class:`InadmissibleStateError` if any det F_e <= 0.
    """
    F, det, Finv, g = _kinematics(tri, phi0, positions)
    if not orientation_ok(tri, np.asarray(positions, dtype=float), det):
        raise InadmissibleStateError("gradient requested at an inadmissible state")
    energy, w = _energy_terms(model, tri, phi0, det, g)
    FinvT = np.swapaxes(Finv, 1, 2)
    # first Piola stress of W det F, per element
    Fg = np.einsum("eij,ej->ei", Finv, g)
    P = det[:, None, None] * (w[:, None, None] * FinvT - np.einsum("ei,ej->eij", g, Fg))
    P *= tri.areas[:, None, None]

    # d det F / dF = det F * F^{-T}; collect every det-only term in one factor
    ddet = np.zeros_like(det)
    if isinstance(model, VolumeConstrained):
        weights = _volume_weights(tri, phi0)
        vol = float(np.sum(det * weights))
        ddet += 2.0 * model.Wb * (vol - model.A) * weights
    elif isinstance(model, SlightlyCompressible):
        ddet += tri.areas * model.eta * (1.0 - 1.0 / det**2)
    P += (ddet * det)[:, None, None] * FinvT

    nodal = np.einsum("eij,eaj->eai", P, tri.hat_gradients)
    n = tri.n_nodes
    idx = tri.elements.ravel()
    grad = np.concatenate([
        np.bincount(idx, weights=nodal[:, :, 0].ravel(), minlength=n),
        np.bincount(idx, weights=nodal[:, :, 1].ravel(), minlength=n),
    ])
    grad[tri.fixed_dofs] = 0.0
    return energy, grad


def discrete_energy_gradient(model, tri, phi0, positions):
    return energy_and_gradient(model, tri, phi0, positions)[1]
