"""Cotangent stiffness and lumped mass assembly for triangle meshes.

The stiffness matrix is stored positive semi-definite: off-diagonal
entries are minus half the summed cotangents of the angles opposite
each edge, diagonals make rows sum to zero, and the Dirichlet energy
of a per-vertex function f is ``f @ W @ f``. The mass matrix is the
lumped (diagonal) one: each vertex receives one third of the area of
its incident triangles, so ``trace(A)`` equals the surface area.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .mesh import MeshError, triangle_areas

# faces thinner than this fraction of the mean triangle area are rejected
DEGENERATE_AREA_FRACTION = 1e-12


def _corner_cotangents(mesh):
    """Cotangent of each triangle corner angle, shape (m, 3).

    Column c holds the cotangent of the angle at vertex ``faces[:, c]``,
    which is the angle opposite the edge formed by the other two
    vertices of the face.
    """
    v = mesh.vertices
    f = mesh.faces
    areas = triangle_areas(mesh)
    floor = DEGENERATE_AREA_FRACTION * areas.mean()
    bad = areas <= floor
    if bad.any():
        raise MeshError(
            f"face {int(np.flatnonzero(bad)[0])} has (near-)zero area; "
            "stiffness weights are undefined"
        )
    cots = np.empty((f.shape[0], 3))
    for c, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        e1 = v[f[:, a]] - v[f[:, c]]
        e2 = v[f[:, b]] - v[f[:, c]]
        # cot = cos/sin = (e1 . e2) / |e1 x e2|, and |e1 x e2| = 2 area
        cots[:, c] = (e1 * e2).sum(axis=1) / (2.0 * areas)
    return cots


def assemble_stiffness(mesh):
    """Cotangent stiffness matrix W as a sparse CSR array.

    Interior edges receive half the sum of the two opposite-angle
    cotangents, boundary edges half of the single one; the sign
    convention makes W positive semi-definite with zero row sums.

    Parameters
    ----------
    mesh : TriMesh

    Returns
    -------
    scipy.sparse.csr_array of shape (n, n)

    Raises
    ------
    MeshError
        If any face has (near-)zero area.
    """
    f = mesh.faces
    cots = _corner_cotangents(mesh)
    n = mesh.n_vertices

    # corner c contributes cot/2 to the edge joining the other two corners
    rows = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    half = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])

    i = np.concatenate([rows, cols, rows, cols])
    j = np.concatenate([cols, rows, rows, cols])
    vals = np.concatenate([-half, -half, half, half])
    W = sparse.coo_array((vals, (i, j)), shape=(n, n)).tocsr()
    W.sum_duplicates()
    return W


def assemble_mass(mesh):
    """Lumped mass matrix A (diagonal) as a sparse CSR array."""
    areas = triangle_areas(mesh)
    a = np.zeros(mesh.n_vertices)
    np.add.at(a, mesh.faces[:, 0], areas / 3.0)
    np.add.at(a, mesh.faces[:, 1], areas / 3.0)
    np.add.at(a, mesh.faces[:, 2], areas / 3.0)
    return sparse.csr_array(sparse.diags_array(a))


def mass_diagonal(A):
    """Diagonal of a mass matrix as a flat array (accepts sparse or array)."""
    if sparse.issparse(A):
        return np.asarray(A.diagonal())
    A = np.asarray(A)
    return np.diag(A) if A.ndim == 2 else A


def energy_terms(W, A, region, phi, f):
    """Dirichlet, region-penalty and subspace-overlap energies of f.

    Parameters
    ----------
    W, A : sparse arrays
        Stiffness and lumped mass.
    region : Region or array_like or None
        Membership values u; the penalty weight is v = (1 - u)^2.
        None means v = 0 everywhere.
    phi : ndarray of shape (n, k') or None
        A-orthonormal functions spanning the subspace to avoid.
    f : ndarray of shape (n,)

    Returns
    -------
    (float, float, float)
        ``(f W f, f A diag(v) f, sum_i (phi_i A f)^2)``.
    """
    f = np.asarray(f, dtype=np.float64)
    a = mass_diagonal(A)
    e_dirichlet = float(f @ (W @ f))
    if region is None:
        e_region = 0.0
    else:
        u = np.asarray(getattr(region, "u", region), dtype=np.float64)
        v = getattr(region, "v", None)
        v = (1.0 - u) ** 2 if v is None else np.asarray(v, dtype=np.float64)
        e_region = float(f @ (a * v * f))
    if phi is None or phi.size == 0:
        e_perp = 0.0
    else:
        e_perp = float(np.sum((phi.T @ (a * f)) ** 2))
    return e_dirichlet, e_region, e_perp


def dump_matrix(M, path):
    """Write a sparse matrix as 0-based ``i j value`` text lines.

    Entries are emitted in row-major order with 17 significant digits,
    which round-trips float64 exactly.
    """
    coo = sparse.coo_array(M)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, val in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {val:.17g}\n")


def load_matrix(path, shape=None):
    """Read a coordinate-format text dump back into a CSR array."""
    rows, cols, vals = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j, val = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(val))
    if shape is None:
        n = max(max(rows), max(cols)) + 1
        shape = (n, n)
    return sparse.coo_array((vals, (rows, cols)), shape=shape).tocsr()
