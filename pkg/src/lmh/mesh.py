"""Triangle mesh container, OFF/OBJ parsing and graph-geodesic utilities."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra


class MeshError(ValueError):
    """Raised when mesh data is malformed or fails validation."""


class TriMesh:
    """Immutable triangle mesh with edge classification.

    Parameters
    ----------
    vertices : array_like of shape (n, 3)
        Vertex positions, converted to float64.
    faces : array_like of shape (m, 3)
        Vertex indices of each triangle, converted to int64.

    Attributes
    ----------
    vertices : ndarray of shape (n, 3)
    faces : ndarray of shape (m, 3)
    interior_edges : ndarray of shape (ki, 2)
        Sorted vertex pairs shared by exactly two faces.
    boundary_edges : ndarray of shape (kb, 2)
        Sorted vertex pairs belonging to exactly one face.

    Raises
    ------
    MeshError
        On empty input, out-of-range indices, degenerate faces, or
        edges shared by more than two faces.
    """

    def __init__(self, vertices, faces):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        if vertices.shape[0] == 0 or faces.shape[0] == 0:
            raise MeshError("empty mesh: need at least one vertex and one face")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertices contain non-finite coordinates")
        if faces.min() < 0:
            raise MeshError("face indices must be non-negative")
        if faces.max() >= vertices.shape[0]:
            raise MeshError(
                f"face index {faces.max()} exceeds vertex count {vertices.shape[0]}"
            )
        degenerate = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if degenerate.any():
            raise MeshError(
                f"face {int(np.flatnonzero(degenerate)[0])} repeats a vertex index"
            )

        self.vertices = vertices
        self.faces = faces
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

        edges = np.sort(
            np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1
        )
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if counts.max() > 2:
            bad = uniq[np.argmax(counts)]
            raise MeshError(
                f"edge ({bad[0]}, {bad[1]}) is shared by {counts.max()} faces; "
                "only edge-manifold meshes are supported"
            )
        self.interior_edges = uniq[counts == 2]
        self.boundary_edges = uniq[counts == 1]
        self._edges = uniq
        for arr in (self.interior_edges, self.boundary_edges, self._edges):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def edges(self):
        """All unique undirected edges as sorted (k, 2) vertex pairs."""
        return self._edges

    def is_closed(self):
        """True when the mesh has no boundary edges."""
        return self.boundary_edges.shape[0] == 0

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_faces} faces)"


def load_mesh(content, fmt):
    """Parse mesh data from text content.

    Parameters
    ----------
    content : str or bytes
        Raw file content.
    fmt : {"off", "obj"}
        Input format. OFF files carry explicit vertex/face counts; OBJ
        files are parsed from ``v``/``f`` records with all other record
        types skipped (normals, texture coordinates, materials).

    Returns
    -------
    TriMesh

    Raises
    ------
    MeshError
        On malformed content or validation failure.
    """
    if isinstance(content, bytes):
        content = content.decode("utf-8", errors="replace")
    fmt = fmt.lower().lstrip(".")
    if fmt == "off":
        return _parse_off(content)
    if fmt == "obj":
        return _parse_obj(content)
    raise MeshError(f"unsupported mesh format '{fmt}' (expected 'off' or 'obj')")


def read_mesh(path):
    """Load a mesh from a file path, dispatching on the suffix."""
    path = str(path)
    suffix = path.rsplit(".", 1)[-1].lower() if "." in path else ""
    with open(path, "r", encoding="utf-8") as fh:
        return load_mesh(fh.read(), suffix)


def _content_lines(text):
    # strip comments and blank lines once, keeping token lists
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def _parse_off(text):
    lines = _content_lines(text)
    if not lines:
        raise MeshError("OFF: empty file")
    head = lines[0]
    if head[0].upper() != "OFF":
        raise MeshError("OFF: missing OFF header")
    if len(head) == 4:
        counts = head[1:4]
        body = lines[1:]
    else:
        if len(lines) < 2:
            raise MeshError("OFF: missing count line")
        counts = lines[1]
        body = lines[2:]
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError) as exc:
        raise MeshError("OFF: malformed count line") from exc
    if len(body) < nv + nf:
        raise MeshError(
            f"OFF: expected {nv} vertex and {nf} face lines, got {len(body)}"
        )
    try:
        vertices = np.array([[float(t) for t in body[i][:3]] for i in range(nv)])
    except ValueError as exc:
        raise MeshError("OFF: malformed vertex line") from exc
    faces = []
    for i in range(nv, nv + nf):
        tokens = body[i]
        try:
            cnt = int(tokens[0])
        except ValueError as exc:
            raise MeshError("OFF: malformed face line") from exc
        if cnt != 3:
            raise MeshError(f"OFF: face with {cnt} vertices; only triangles supported")
        if len(tokens) < 4:
            raise MeshError("OFF: truncated face line")
        faces.append([int(tokens[1]), int(tokens[2]), int(tokens[3])])
    return TriMesh(vertices, np.array(faces, dtype=np.int64))


def _parse_obj(text):
    vertices = []
    faces = []
    for tokens in _content_lines(text):
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise MeshError("OBJ: vertex record with fewer than 3 coordinates")
            vertices.append([float(tokens[1]), float(tokens[2]), float(tokens[3])])
        elif tokens[0] == "f":
            refs = tokens[1:]
            if len(refs) != 3:
                raise MeshError(
                    f"OBJ: face with {len(refs)} vertices; only triangles supported"
                )
            idx = []
            for ref in refs:
                # "i", "i/t", "i/t/n", "i//n" all carry the vertex index first
                try:
                    idx.append(int(ref.split("/")[0]))
                except ValueError as exc:
                    raise MeshError(f"OBJ: malformed face reference '{ref}'") from exc
            if any(i < 1 for i in idx):
                raise MeshError("OBJ: face indices must be positive (1-based)")
            faces.append([i - 1 for i in idx])
        # every other record type is skipped
    if not vertices or not faces:
        raise MeshError("OBJ: no triangle data found")
    return TriMesh(np.array(vertices), np.array(faces, dtype=np.int64))


def write_off(mesh, path):
    """Write a mesh (or a ``(vertices, faces)`` pair) as an OFF file."""
    if isinstance(mesh, tuple):
        vertices, faces = mesh
    else:
        vertices, faces = mesh.vertices, mesh.faces
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{vertices.shape[0]} {faces.shape[0]} 0\n")
        for v in vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def triangle_areas(mesh):
    """Per-face areas from the cross product of two edge vectors."""
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def surface_area(mesh, region=None):
    """Total area, optionally restricted to a binary region.

    Parameters
    ----------
    mesh : TriMesh
    region : optional
        Per-vertex membership values (an array or any object with a
        ``u`` attribute). When given, only faces whose three vertices
        have membership 1 contribute.

    Returns
    -------
    float
    """
    areas = triangle_areas(mesh)
    if region is None:
        return float(areas.sum())
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    if u.shape != (mesh.n_vertices,):
        raise ValueError("region length does not match vertex count")
    keep = (u[mesh.faces] == 1.0).all(axis=1)
    return float(areas[keep].sum())


def edge_graph(mesh):
    """Sparse symmetric adjacency weighted by Euclidean edge length."""
    e = mesh.edges
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.coo_array(
        (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                  np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(n, n),
    )
    return g.tocsr()


def graph_geodesics(mesh, sources):
    """Shortest-path distances along mesh edges.

    Parameters
    ----------
    mesh : TriMesh
    sources : int or sequence of int
        Source vertex (or vertices).

    Returns
    -------
    ndarray
        Distances from the source(s) to every vertex; shape (n,) for a
        scalar source, (len(sources), n) otherwise. Unreachable
        vertices get ``inf``.
    """
    scalar = np.isscalar(sources)
    idx = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    n = mesh.n_vertices
    if idx.size == 0:
        raise ValueError("at least one source vertex is required")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"source index out of range [0, {n})")
    dist = dijkstra(edge_graph(mesh), directed=False, indices=idx)
    return dist[0] if scalar else dist


def intrinsic_diameter(mesh):
    """Double-sweep lower-bound estimate of the graph-geodesic diameter.

    Runs one shortest-path pass from vertex 0, then a second pass from
    the farthest vertex found; returns the largest distance seen.

    Raises
    ------
    MeshError
        If the edge graph is disconnected.
    """
    d0 = graph_geodesics(mesh, 0)
    if np.isinf(d0).any():
        raise MeshError("mesh is disconnected; intrinsic diameter undefined")
    far = int(np.argmax(d0))
    d1 = graph_geodesics(mesh, far)
    return float(d1.max())
