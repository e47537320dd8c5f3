"""Benchmark observables: interface errors, convergence orders, radii, topology."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class InterfaceVanished(ValueError):
    """No mesh edge carries a sign change of phi."""


def quasi1d_exact(x, eps):
    if not eps > 0:
        raise ValueError("eps must be positive")
    return -np.tanh(np.asarray(x, dtype=float) / (math.sqrt(2.0) * eps))


def linf_interface_error(tri, phi, positions, eps, nodes=None, band=3.0):
    """Max nodal error against the 1D profile over nodes with |x| <= band * eps.

    ``nodes`` optionally restricts the candidate nodes (e.g. one row of the
    strip mesh).
    """
    positions = np.asarray(positions, dtype=float)
    phi = np.asarray(phi, dtype=float)
    idx = np.arange(len(phi)) if nodes is None else np.asarray(nodes)
    x = positions[idx, 0]
    sel = idx[np.abs(x) <= band * eps]
    if sel.size == 0:
        raise ValueError("no nodes inside the interface band")
    return float(np.max(np.abs(phi[sel] - quasi1d_exact(positions[sel, 0], eps))))


def interface_points(tri, phi, positions):
    """Zero crossings of phi along mesh edges, by linear interpolation."""
    positions = np.asarray(positions, dtype=float)
    phi = np.asarray(phi, dtype=float)
    a, b = tri.edges.T
    pa, pb = phi[a], phi[b]
    cross = ((pa < 0) & (pb > 0)) | ((pa > 0) & (pb < 0))
    if not cross.any():
        raise InterfaceVanished("interface vanished")
    a, b, pa, pb = a[cross], b[cross], pa[cross], pb[cross]
    t = (pa / (pa - pb))[:, None]
    return positions[a] + t * (positions[b] - positions[a])


def interface_radius(tri, phi, positions, centre=(0.0, 0.0)):
    pts = interface_points(tri, phi, positions) - np.asarray(centre)
    return float(np.mean(np.linalg.norm(pts, axis=1)))


def interface_roundness(tri, phi, positions, centre=(0.0, 0.0)):
    """Radial standard deviation divided by mean radius of the zero level set."""
    r = np.linalg.norm(interface_points(tri, phi, positions) - np.asarray(centre), axis=1)
    return float(np.std(r) / np.mean(r))


def count_components(tri, phi, positive=True):
    """Connected components of {phi > 0} (or {phi < 0}) on the mesh edge graph."""
    phi = np.asarray(phi, dtype=float)
    mask = phi > 0 if positive else phi < 0
    a, b = tri.edges.T
    keep = mask[a] & mask[b]
    n = len(phi)
    graph = coo_matrix((np.ones(keep.sum()), (a[keep], b[keep])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return len(np.unique(labels[mask]))


def mean_curvature_radius(t, r0=0.5):
    return np.sqrt(np.maximum(r0 * r0 - 2.0 * np.asarray(t, dtype=float), 0.0))


@dataclass
class ErrorReport:
    h: float
    tau: float
    linf: float
    order: float | None = None


def convergence_table(runs):
    """Observed orders log2(e_{k-1}/e_k) for runs with halving mesh size.

    ``runs`` is a sequence of ``(h, tau, error)`` triples (or mappings with
    those keys), ordered from coarse to fine.
    """
    rows = []
    for r in runs:
        if isinstance(r, dict):
            rows.append((float(r["h"]), float(r["tau"]), float(r["error"])))
        else:
            h, tau, err = r
            rows.append((float(h), float(tau), float(err)))
    reports = []
    for k, (h, tau, err) in enumerate(rows):
        order = None
        if k:
            h_prev, _, err_prev = rows[k - 1]
            if not math.isclose(h_prev, 2 * h, rel_tol=1e-9):
                raise ValueError(f"mesh sizes must halve: {h_prev} -> {h}")
            order = math.log2(err_prev / err)
        reports.append(ErrorReport(h, tau, err, order))
    return reports
