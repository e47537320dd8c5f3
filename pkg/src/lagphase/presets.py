"""Benchmark presets: initial data, meshes, boundary recipes and default parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import Base, SlightlyCompressible, VolumeConstrained
from .mesh import build_uniform_mesh

SQUARE = ((-1.0, 1.0), (-1.0, 1.0))
STRIP = ((-1.0, 1.0), (-0.1, 0.1))


def phi_quasi1d(X, Y):
    return -np.tanh(5 * X)


def phi_circle(X, Y):
    return np.tanh(10 * (np.hypot(X, Y) - 0.5))


def phi_ellipse(X, Y):
    return -np.tanh(10 * (np.sqrt(X**2 + 4 * Y**2) - 0.5))


def phi_four_bubbles(X, Y):
    centres = [(0.4, 0.0), (-0.4, 0.0), (0.0, 0.4), (0.0, -0.4)]
    return -sum(np.tanh(15 * (np.hypot(X - cx, Y - cy) - 1 / 3)) for cx, cy in centres) + 3


def phi_two_ellipses(X, Y):
    r1 = np.sqrt(X**2 + 4 * Y**2)
    r2 = np.sqrt(4 * X**2 + Y**2)
    return np.maximum(-np.tanh(15 * (r1 - 0.7)), -np.tanh(15 * (r2 - 0.7)))


def phi_failcase(X, Y):
    return 2.5 * (X**2 - 1) * (Y**2 - 1) - 1


@dataclass(frozen=True)
class BenchmarkPreset:
    name: str
    phi0: object
    domain: tuple
    constraints: str
    model: str  # "base" | "volume" | "compressible"
    defaults: dict = field(default_factory=dict)

    def params(self, **overrides):
        p = dict(self.defaults)
        p.update({k: v for k, v in overrides.items() if v is not None})
        return p

    def build(self, **overrides):
        """Return ``(tri, phi0_values, params)`` for the preset."""
        p = self.params(**overrides)
        tri = build_uniform_mesh(p["nx"], p["ny"], self.domain, self.constraints,
                                 pattern=p["pattern"])
        X, Y = tri.nodes.T
        return tri, np.asarray(self.phi0(X, Y), dtype=float), p

    def energy_model(self, p):
        if self.model == "volume":
            return VolumeConstrained(p["eps2"], p["Wb"], p["A"])
        if self.model == "compressible":
            return SlightlyCompressible(p["eps2"], p["eta"])
        return Base(p["eps2"])


_COMMON = dict(nx=20, ny=20, pattern="crossed", tau=1e-2, energy_tol=None,
               eulerian_steps=(), Wb=1000.0, A=-3.0, eta=5000.0)

PRESETS = {
    p.name: p
    for p in [
        BenchmarkPreset("quasi1d", phi_quasi1d, SQUARE, "quasi1d", "base",
                        {**_COMMON, "nx": 10, "ny": 10, "eps2": 1e-4, "nu": 0.05,
                         "max_steps": 20}),
        BenchmarkPreset("strip", phi_quasi1d, STRIP, "quasi1d", "base",
                        {**_COMMON, "nx": 10, "ny": 1, "eps2": 1e-3, "nu": 0.05,
                         "max_steps": 20}),
        BenchmarkPreset("circle", phi_circle, SQUARE, "dirichlet", "base",
                        {**_COMMON, "eps2": 1e-3, "nu": 1.0, "max_steps": 10}),
        BenchmarkPreset("volume_single", phi_ellipse, SQUARE, "dirichlet", "volume",
                        {**_COMMON, "eps2": 1e-4, "nu": 10.0, "max_steps": 100}),
        BenchmarkPreset("volume_four", phi_four_bubbles, SQUARE, "dirichlet", "volume",
                        {**_COMMON, "eps2": 1e-4, "nu": 10.0, "max_steps": 50}),
        BenchmarkPreset("compressible", phi_two_ellipses, SQUARE, "free", "compressible",
                        {**_COMMON, "eps2": 1e-4, "nu": 10.0, "max_steps": 50}),
        BenchmarkPreset("failcase", phi_failcase, SQUARE, "dirichlet", "base",
                        {**_COMMON, "eps2": 1e-3, "nu": 10.0, "max_steps": 200}),
    ]
}
