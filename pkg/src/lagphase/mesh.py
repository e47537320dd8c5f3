"""Reference triangulations, per-element kinematics and mesh file I/O.

A flow state is stored as an ``(N, 2)`` array of current node positions.
Optimizers work on the flat vector ``(x_1..x_N, y_1..y_N)``; use
:func:`to_flat` / :func:`from_flat` to move between the two layouts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

FREE, FIX_X, FIX_Y, FIX_BOTH = 0, 1, 2, 3
_TOKENS = {"F": FREE, "X": FIX_X, "Y": FIX_Y, "XY": FIX_BOTH}
_TOKEN_NAMES = {v: k for k, v in _TOKENS.items()}


class MeshFormatError(ValueError):
    """Malformed mesh or snapshot file."""

    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class InadmissibleStateError(ValueError):
    """An element has non-positive det F where an admissible state is required."""


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Reference mesh: nodes, counterclockwise triangles, per-node constraints.

    ``constraints`` holds one code per node: ``FREE``, ``FIX_X``, ``FIX_Y`` or
    ``FIX_BOTH`` (a bitmask, so ``FIX_X | FIX_Y == FIX_BOTH``).
    """

    nodes: np.ndarray
    elements: np.ndarray
    constraints: np.ndarray = field(default=None)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        elements = np.array(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise ValueError("elements must have shape (M, 3)")
        n = len(nodes)
        if elements.size and (elements.min() < 0 or elements.max() >= n):
            raise ValueError("element node index out of range")
        if self.constraints is None:
            constraints = np.zeros(n, dtype=np.int8)
        else:
            constraints = np.array(self.constraints, dtype=np.int8)
            if constraints.shape != (n,):
                raise ValueError("one constraint flag per node is required")
            if constraints.min(initial=0) < 0 or constraints.max(initial=0) > 3:
                raise ValueError("constraint flags must be in 0..3")
        if np.any(signed_areas(nodes, elements) <= 0):
            raise ValueError("non-positive reference area")
        for arr in (nodes, elements, constraints):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "constraints", constraints)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @cached_property
    def areas(self):
        """Reference element areas |tau_e|."""
        return signed_areas(self.nodes, self.elements)

    @cached_property
    def hat_gradients(self):
        """Reference gradients of the three local hat functions, shape (M, 3, 2)."""
        x = self.nodes[self.elements]
        # opposite edge rotated by -90 degrees, over twice the area
        opp = np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)
        rot = np.stack([-opp[..., 1], opp[..., 0]], axis=-1)
        return rot / (2.0 * self.areas)[:, None, None]

    @cached_property
    def fixed_dofs(self):
        """Boolean mask over the flat 2N vector; True where a coordinate is frozen."""
        c = self.constraints
        return np.concatenate([(c & FIX_X) != 0, (c & FIX_Y) != 0])

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        e = self.elements
        pairs = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def with_nodes(self, nodes):
        return Triangulation(nodes, self.elements, self.constraints)

    def same_as(self, other):
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.elements, other.elements)
            and np.array_equal(self.constraints, other.constraints)
        )


def signed_areas(nodes, elements):
    x = np.asarray(nodes)[np.asarray(elements)]
    a = x[:, 1] - x[:, 0]
    b = x[:, 2] - x[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def to_flat(positions):
    return np.ascontiguousarray(np.asarray(positions, dtype=float).T).ravel()


def from_flat(xi):
    xi = np.asarray(xi, dtype=float)
    n = xi.size // 2
    return np.column_stack([xi[:n], xi[n:]])


# ---------------------------------------------------------------- generation

def _boundary_flags(nodes, domain, recipe):
    (x0, x1), (y0, y1) = domain
    x, y = nodes[:, 0], nodes[:, 1]
    on_x = np.isclose(x, x0) | np.isclose(x, x1)
    on_y = np.isclose(y, y0) | np.isclose(y, y1)
    flags = np.zeros(len(nodes), dtype=np.int8)
    if recipe in (None, "free", "none"):
        return flags
    if recipe == "dirichlet":
        flags[on_x | on_y] = FIX_BOTH
    elif recipe == "quasi1d":
        # walls x = const are Dirichlet, walls y = const slip along x
        flags[on_y] = FIX_Y
        flags[on_x] = FIX_BOTH
    elif callable(recipe):
        flags = np.asarray(recipe(nodes), dtype=np.int8)
    else:
        raise ValueError(f"unknown constraint recipe {recipe!r}")
    return flags


def build_uniform_mesh(nx, ny, domain=((0.0, 1.0), (0.0, 1.0)), constraints=None,
                       pattern="diagonal"):
    """Structured triangulation of an axis-aligned rectangle.

    ``pattern="diagonal"`` splits each cell along its lower-left to upper-right
    diagonal (2 triangles per cell). ``pattern="crossed"`` adds a cell-centre
    node and produces 4 triangles per cell.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("empty domain rectangle")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ll = (j * (nx + 1) + i).ravel()
    lr, ul = ll + 1, ll + nx + 1
    ur = ul + 1
    if pattern == "diagonal":
        elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
        elements[0::2] = np.column_stack([ll, lr, ur])
        elements[1::2] = np.column_stack([ll, ur, ul])
    elif pattern == "crossed":
        centres = 0.5 * (nodes[ll] + nodes[ur])
        c = len(nodes) + np.arange(nx * ny)
        nodes = np.vstack([nodes, centres])
        elements = np.empty((4 * nx * ny, 3), dtype=np.int64)
        elements[0::4] = np.column_stack([ll, lr, c])
        elements[1::4] = np.column_stack([lr, ur, c])
        elements[2::4] = np.column_stack([ur, ul, c])
        elements[3::4] = np.column_stack([ul, ll, c])
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    flags = _boundary_flags(nodes, domain, constraints)
    return Triangulation(nodes, elements, flags)


# ---------------------------------------------------------------- kinematics

@dataclass(frozen=True)
class ElementGeometry:
    """Per-element kinematics for a flow state, stored as stacked arrays."""

    hat_gradients: np.ndarray  # (M, 3, 2) reference gradients of psi
    areas: np.ndarray          # (M,) reference areas
    F: np.ndarray              # (M, 2, 2) deformation tensors
    detF: np.ndarray           # (M,)
    grad_phi0: np.ndarray      # (M, 2) reference gradient of phi0
    g: np.ndarray              # (M, 2) pushed-forward gradient F^{-T} grad phi0

    @property
    def admissible(self):
        return bool(np.all(self.detF > 0))


def deformation(tri, positions):
    """Deformation tensors F_e and their determinants."""
    x = np.asarray(positions, dtype=float)[tri.elements]
    F = np.einsum("eai,eaj->eij", x, tri.hat_gradients)
    det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    return F, det


def inverse_2x2(F, det):
    inv = np.empty_like(F)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv[:, 0, 0] = F[:, 1, 1] / det
        inv[:, 1, 1] = F[:, 0, 0] / det
        inv[:, 0, 1] = -F[:, 0, 1] / det
        inv[:, 1, 0] = -F[:, 1, 0] / det
    return inv


def element_geometry(tri, positions, phi0):
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (tri.n_nodes, 2):
        raise ValueError("state node count does not match the triangulation")
    F, det = deformation(tri, positions)
    grad_phi0 = np.einsum("ea,eaj->ej", np.asarray(phi0)[tri.elements], tri.hat_gradients)
    Finv = inverse_2x2(F, det)
    g = np.einsum("eji,ej->ei", Finv, grad_phi0)
    return ElementGeometry(tri.hat_gradients, tri.areas, F, det, grad_phi0, g)


def orientation_ok(tri, positions, det):
    """det F_e > 0 and, for roundoff consistency, positive current signed areas.

    The second test keeps every accepted state usable as a reference mesh.
    """
    return bool(np.all(det > 0) and np.all(signed_areas(positions, tri.elements) > 0))


def is_admissible(tri, positions):
    _, det = deformation(tri, positions)
    return orientation_ok(tri, positions, det)


def require_admissible(tri, positions):
    _, det = deformation(tri, positions)
    if not orientation_ok(tri, positions, det):
        bad = int(np.argmin(det))
        raise InadmissibleStateError(f"element {bad} has det F = {det[bad]:.3e}")


def mesh_quality(tri, positions):
    """Return ``{"min_detF", "min_angle", "max_aspect_ratio"}`` for the current mesh.

    The aspect ratio is circumradius / (2 * inradius); it equals 1 for an
    equilateral triangle.
    """
    require_admissible(tri, positions)
    _, det = deformation(tri, positions)
    x = np.asarray(positions)[tri.elements]
    e = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    lengths = np.linalg.norm(e, axis=2)
    angles = []
    for k in range(3):
        u = -e[:, (k + 2) % 3]
        v = e[:, (k + 1) % 3]
        cos = np.einsum("ei,ei->e", u, v) / (lengths[:, (k + 2) % 3] * lengths[:, (k + 1) % 3])
        angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
    area = signed_areas(positions, tri.elements)
    a, b, c = lengths.T
    circum = a * b * c / (4 * area)
    inr = 2 * area / (a + b + c)
    return {
        "min_detF": float(det.min()),
        "min_angle": float(np.min(angles)),
        "max_aspect_ratio": float(np.max(circum / (2 * inr))),
    }


# ---------------------------------------------------------------- file I/O

def _fmt(v):
    return format(float(v), ".17g")


def save_mesh(tri, path):
    lines = [f"$nodes {tri.n_nodes}"]
    lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in tri.nodes]
    lines.append(f"$elements {tri.n_elements}")
    lines += [f"{i} {j} {k}" for i, j, k in tri.elements]
    lines.append("$constraints")
    lines += [_TOKEN_NAMES[int(c)] for c in tri.constraints]
    Path(path).write_text("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, text):
        self.rows = [(n, s.strip()) for n, s in enumerate(text.splitlines(), 1)]
        self.rows = [(n, s) for n, s in self.rows if s and not s.startswith("#")]
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.rows):
            last = self.rows[-1][0] if self.rows else 0
            raise MeshFormatError(last + 1, f"unexpected end of file, expected {what}")
        row = self.rows[self.pos]
        self.pos += 1
        return row

    def done(self):
        return self.pos >= len(self.rows)


def _header(lines, key):
    n, s = lines.next(f"${key} header")
    parts = s.split()
    if len(parts) != 2 or parts[0] != f"${key}":
        raise MeshFormatError(n, f"expected '${key} <count>', got {s!r}")
    try:
        count = int(parts[1])
    except ValueError:
        raise MeshFormatError(n, f"bad count {parts[1]!r}") from None
    if count < 0:
        raise MeshFormatError(n, "negative count")
    return n, count


def _floats(lines, width, what):
    n, s = lines.next(what)
    parts = s.split()
    if len(parts) != width:
        raise MeshFormatError(n, f"expected {width} values for {what}, got {len(parts)}")
    try:
        return n, [float(p) for p in parts]
    except ValueError:
        raise MeshFormatError(n, f"non-numeric value in {what}") from None


def _read_elements(lines, n_nodes, nodes):
    _, m = _header(lines, "elements")
    elements, where = [], []
    for _ in range(m):
        n, s = lines.next("element")
        parts = s.split()
        if len(parts) != 3:
            raise MeshFormatError(n, f"expected 3 node indices, got {len(parts)}")
        try:
            tri = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(n, "non-integer node index") from None
        if min(tri) < 0 or max(tri) >= n_nodes:
            raise MeshFormatError(n, "node index out of range")
        elements.append(tri)
        where.append(n)
    elements = np.array(elements, dtype=np.int64).reshape(-1, 3)
    if nodes is not None and len(elements):
        bad = np.nonzero(signed_areas(nodes, elements) <= 0)[0]
        if bad.size:
            raise MeshFormatError(where[bad[0]], "non-positive reference area")
    return elements


def load_mesh(path):
    lines = _Lines(Path(path).read_text())
    _, n_nodes = _header(lines, "nodes")
    nodes = np.array([_floats(lines, 2, "node")[1] for _ in range(n_nodes)]).reshape(-1, 2)
    elements = _read_elements(lines, n_nodes, nodes)
    constraints = np.zeros(n_nodes, dtype=np.int8)
    if not lines.done():
        n, s = lines.next("$constraints")
        if s != "$constraints":
            raise MeshFormatError(n, f"expected '$constraints', got {s!r}")
        tokens = []
        while len(tokens) < n_nodes:
            n, s = lines.next("constraint token")
            for tok in s.split():
                if tok not in _TOKENS:
                    raise MeshFormatError(n, f"unknown constraint token {tok!r}")
                tokens.append(_TOKENS[tok])
        if len(tokens) != n_nodes:
            raise MeshFormatError(n, "too many constraint tokens")
        constraints = np.array(tokens, dtype=np.int8)
    if not lines.done():
        n, s = lines.next("end of file")
        raise MeshFormatError(n, f"trailing content {s!r}")
    return Triangulation(nodes, elements, constraints)


def save_snapshot(tri, positions, phi, path, time=0.0):
    positions = np.asarray(positions)
    lines = [f"$snapshot t={_fmt(time)}"]
    lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(p)}" for (x, y), p in zip(positions, phi)]
    lines.append(f"$elements {tri.n_elements}")
    lines += [f"{i} {j} {k}" for i, j, k in tri.elements]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Snapshot:
    time: float
    positions: np.ndarray
    phi: np.ndarray
    elements: np.ndarray


def load_snapshot(path):
    text = Path(path).read_text()
    lines = _Lines(text)
    n, s = lines.next("$snapshot header")
    if not s.startswith("$snapshot t="):
        raise MeshFormatError(n, f"expected '$snapshot t=<time>', got {s!r}")
    try:
        time = float(s[len("$snapshot t="):])
    except ValueError:
        raise MeshFormatError(n, "bad snapshot time") from None
    rows = []
    while not lines.done() and not lines.rows[lines.pos][1].startswith("$elements"):
        rows.append(_floats(lines, 3, "snapshot row")[1])
    data = np.array(rows, dtype=float).reshape(-1, 3)
    elements = _read_elements(lines, len(data), data[:, :2])
    if not lines.done():
        n, s = lines.next("end of file")
        raise MeshFormatError(n, f"trailing content {s!r}")
    return Snapshot(time, data[:, :2].copy(), data[:, 2].copy(), elements)
