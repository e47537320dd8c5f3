import numpy as np
import pytest

from lagphase.mesh import build_uniform_mesh, is_admissible

# 7-point degree-5 Gauss rule on the reference triangle (barycentric, weights sum to 1)
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
GAUSS7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
    [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
])
GAUSS7_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def perturbed_mesh(rng, nx=4, ny=4, amplitude=0.3, constraints=None, domain=((0, 1), (0, 1))):
    """Uniform mesh plus a random admissible displacement of every node.

    Returns ``(tri, positions)``; N = (nx+1)(ny+1) <= 50 for the defaults.
    """
    tri = build_uniform_mesh(nx, ny, domain, constraints)
    h = min((domain[0][1] - domain[0][0]) / nx, (domain[1][1] - domain[1][0]) / ny)
    for _ in range(100):
        pos = tri.nodes + amplitude * h * rng.uniform(-1, 1, tri.nodes.shape)
        if is_admissible(tri, pos):
            return tri, pos
        amplitude *= 0.7
    raise RuntimeError("could not draw an admissible perturbation")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
