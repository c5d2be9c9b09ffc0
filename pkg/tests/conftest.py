import numpy as np
import pytest

from lmh.fem import assemble_mass, assemble_stiffness
from lmh.localized import Region
from lmh.synth import bump_sphere, grid_mesh, icosphere, patch_vertices, tetrahedron


@pytest.fixture(scope="session")
def unit_square():
    """11x11-vertex grid on [0,1]^2 (10x10 cells)."""
    return grid_mesh(10, 10)


@pytest.fixture(scope="session")
def plane():
    """Physically scaled plane (10 x 10 length units, 25x25 vertices)."""
    return grid_mesh(24, 24, width=10.0, height=10.0)


@pytest.fixture(scope="session")
def plane_ops(plane):
    return assemble_stiffness(plane), assemble_mass(plane)


@pytest.fixture(scope="session")
def plane_patch(plane):
    """Central 5x5 binary patch on the plane."""
    idx = patch_vertices(plane, (2.5, 7.5), (2.5, 7.5))
    return Region.binary(plane.n_vertices, idx)


@pytest.fixture(scope="session")
def tetra():
    return tetrahedron()


@pytest.fixture(scope="session")
def sphere():
    """Closed mesh, 162 vertices, radius 5."""
    return icosphere(2, radius=5.0)


@pytest.fixture(scope="session")
def corpus():
    """Small named meshes (all under 500 vertices) for sweep checks."""
    return [
        ("grid10", grid_mesh(10, 10)),
        ("rect", grid_mesh(15, 8, width=2.0, height=1.0)),
        ("ico1", icosphere(1, radius=2.0)),
        ("ico2", icosphere(2, radius=5.0)),
        ("bump", bump_sphere(subdivisions=2, radius=5.0, height=1.0)),
    ]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260825)
