"""Functional-map correspondence between two meshes.

Point-to-point maps are stored in pullback orientation: entry y holds
the index of the corresponding vertex on mesh X, so a function on X is
transported to Y by row selection. The functional map C expresses that
transport in the two spectral bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .fem import mass_diagonal
from .localized import SpectralBasis
from .mesh import graph_geodesics, surface_area


@dataclass
class FunctionalMap:
    """Spectral correspondence matrix with its two bases.

    ``C[j, i] = <T phi_i^X, phi_j^Y>_A_Y`` for the transport T induced
    by a point-to-point map; shape (m_Y, m_X).
    """

    C: np.ndarray
    basis_x: SpectralBasis
    basis_y: SpectralBasis

    @property
    def shape(self):
        return self.C.shape


def stack_bases(bases):
    """Column-concatenate bases on one mesh into a single mixed basis.

    Keeps the block order (spectra are concatenated, not re-sorted),
    which downstream block diagnostics rely on.
    """
    if len(bases) == 1:
        return bases[0]
    n = bases[0].functions.shape[0]
    if any(b.functions.shape[0] != n for b in bases):
        raise ValueError("bases must live on the same mesh")
    return SpectralBasis(
        functions=np.hstack([b.functions for b in bases]),
        spectrum=np.concatenate([b.spectrum for b in bases]),
        dirichlet=np.concatenate([b.dirichlet for b in bases]),
        kind="mixed",
        params={"blocks": [b.n_functions for b in bases],
                "kinds": [b.kind for b in bases]},
    )


def build_fmap(basis_x, basis_y, p2p, A_y):
    """Functional map from a point-to-point correspondence.

    Parameters
    ----------
    basis_x, basis_y : SpectralBasis
        Bases on source mesh X and target mesh Y.
    p2p : array_like of int, shape (n_Y,)
        For each Y-vertex, the index of its X correspondent.
    A_y : sparse array or ndarray
        Mass of mesh Y.

    Returns
    -------
    FunctionalMap
    """
    p2p = np.asarray(p2p, dtype=np.int64)
    n_y = basis_y.functions.shape[0]
    n_x = basis_x.functions.shape[0]
    if p2p.shape != (n_y,):
        raise ValueError(f"p2p must have one entry per Y vertex ({n_y})")
    if p2p.min() < 0 or p2p.max() >= n_x:
        raise ValueError(f"p2p values must index X vertices in [0, {n_x})")
    a_y = mass_diagonal(A_y)
    transported = basis_x.functions[p2p]  # (n_Y, m_X)
    C = basis_y.functions.T @ (a_y[:, None] * transported)
    return FunctionalMap(C=C, basis_x=basis_x, basis_y=basis_y)


def recover_p2p(fmap, basis_x=None, basis_y=None, chunk=2048):
    """Point-to-point map from a functional map by exact nearest neighbor.

    Each Y-vertex embedding row is transported through C and matched to
    the nearest X-vertex embedding row in Euclidean norm; ties resolve
    to the lowest index. The scan is exact (chunked distance matrix).

    Parameters
    ----------
    fmap : FunctionalMap or ndarray
        The map, or a raw C matrix if both bases are passed explicitly.
    basis_x, basis_y : SpectralBasis, optional
        Default to the bases stored in the map.

    Returns
    -------
    ndarray of int, shape (n_Y,)
    """
    C = getattr(fmap, "C", fmap)
    basis_x = basis_x if basis_x is not None else fmap.basis_x
    basis_y = basis_y if basis_y is not None else fmap.basis_y
    emb_x = basis_x.functions
    queries = basis_y.functions @ C  # (n_Y, m_X)
    if queries.shape[1] != emb_x.shape[1]:
        raise ValueError("C dimensions do not match the basis sizes")
    out = np.empty(queries.shape[0], dtype=np.int64)
    for lo in range(0, queries.shape[0], chunk):
        hi = min(lo + chunk, queries.shape[0])
        d = cdist(queries[lo:hi], emb_x)
        out[lo:hi] = np.argmin(d, axis=1)  # argmin takes the lowest index on ties
    return out


@dataclass
class ErrorStats:
    """Geodesic correspondence errors and their cumulative curve."""

    per_vertex: np.ndarray
    mean: float
    thresholds: np.ndarray
    fractions: np.ndarray


def geodesic_error_stats(recovered, truth, mesh, n_thresholds=100, max_threshold=0.5):
    """Normalized geodesic error between two point-to-point maps.

    Both maps must take values on ``mesh``; the per-vertex error is the
    graph-geodesic distance between the recovered and true
    correspondents, normalized by the square root of the mesh area (so
    it is invariant to uniform scaling). The cumulative curve samples
    ``n_thresholds`` evenly spaced thresholds in [0, max_threshold].

    Parameters
    ----------
    recovered, truth : array_like of int
        Same length; vertex indices on ``mesh``.
    mesh : TriMesh
        The mesh the correspondents live on.

    Returns
    -------
    ErrorStats
    """
    recovered = np.asarray(recovered, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if recovered.shape != truth.shape:
        raise ValueError("recovered and truth maps differ in length")
    n = mesh.n_vertices
    for name, arr in (("recovered", recovered), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"{name} map indexes outside [0, {n})")

    scale = 1.0 / np.sqrt(surface_area(mesh))
    eps = np.zeros(recovered.shape[0])
    mismatched = recovered != truth
    if mismatched.any():
        sources = np.unique(truth[mismatched])
        dist = graph_geodesics(mesh, sources)
        row = {int(s): i for i, s in enumerate(sources)}
        idx = np.fromiter((row[int(t)] for t in truth[mismatched]), dtype=np.int64)
        eps[mismatched] = dist[idx, recovered[mismatched]] * scale
    thresholds = np.linspace(0.0, max_threshold, n_thresholds)
    fractions = (eps[None, :] <= thresholds[:, None]).mean(axis=1)
    return ErrorStats(
        per_vertex=eps,
        mean=float(eps.mean()),
        thresholds=thresholds,
        fractions=fractions,
    )


def offblock_energy(fmap, kprime, k):
    """Fraction of squared C mass outside the two diagonal blocks.

    For mixed bases ordered as k' global functions followed by k
    localized ones on both sides, the diagonal blocks are the top-left
    k'-by-k' and the following k-by-k square; everything else is
    cross-talk. Returns a value in [0, 1] (0 for an all-zero C).
    """
    C = getattr(fmap, "C", fmap)
    if kprime < 0 or k < 0 or kprime + k > min(C.shape):
        raise ValueError(
            f"block sizes ({kprime}, {k}) exceed C of shape {C.shape}"
        )
    total = float(np.sum(C**2))
    if total == 0.0:
        return 0.0
    d1 = float(np.sum(C[:kprime, :kprime] ** 2))
    d2 = float(np.sum(C[kprime : kprime + k, kprime : kprime + k] ** 2))
    return (total - d1 - d2) / total
