"""Localized spectral bases on triangle meshes.

Builds the modified operator ``Q = W + mu_r A diag(v) + mu_perp A P``
whose smallest generalized eigenpairs concentrate on a chosen region
while staying A-orthogonal to the first k' global harmonics (P is the
A-orthogonal projector onto their span). Three solver paths exist:

* ``relaxed`` - sparse shift-invert Lanczos with Woodbury inner solves
  (the fast path; the projector is never densified),
* ``hard`` - dense solve on the orthogonal complement with the
  constraint enforced exactly,
* ``oracle`` - dense solve of the relaxed operator, for cross-checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .fem import assemble_mass, assemble_stiffness, mass_diagonal
from .mesh import MeshError, TriMesh, graph_geodesics, intrinsic_diameter
from .solvers import (
    DENSE_ORACLE_MAX_N,
    LowRankShiftedSystem,
    canonical_signs,
    default_shift,
    dense_oracle_eig,
    hard_constraint_eig,
    smallest_eigenpairs,
)

DEFAULT_MU_R = 100.0
DEFAULT_MU_PERP = 1e5


class Region:
    """Per-vertex soft membership u in [0, 1].

    The localization penalty weights are ``v = (1 - u)^2``: zero inside
    the region, one far outside, smooth in between.
    """

    def __init__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 1:
            raise ValueError("membership u must be a flat per-vertex array")
        if not np.all(np.isfinite(u)):
            raise ValueError("membership u contains non-finite values")
        if u.min() < 0.0 or u.max() > 1.0:
            raise ValueError("membership u must lie in [0, 1]")
        self.u = u
        self.u.setflags(write=False)

    @property
    def v(self):
        """Penalty weights (1 - u)^2."""
        return (1.0 - self.u) ** 2

    @property
    def is_binary(self):
        return bool(np.all((self.u == 0.0) | (self.u == 1.0)))

    @property
    def inside(self):
        """Indices of vertices with full membership (u == 1)."""
        return np.flatnonzero(self.u == 1.0)

    @classmethod
    def binary(cls, n, inside):
        """Binary region from a vertex index set or boolean mask."""
        inside = np.asarray(inside)
        u = np.zeros(n)
        if inside.dtype == bool:
            if inside.shape != (n,):
                raise ValueError("boolean mask length must match vertex count")
            u[inside] = 1.0
        else:
            u[inside.astype(np.int64)] = 1.0
        return cls(u)

    @classmethod
    def full(cls, n):
        return cls(np.ones(n))

    def __len__(self):
        return self.u.size

    def __repr__(self):
        kind = "binary" if self.is_binary else "soft"
        return f"Region({self.u.size} vertices, {kind})"


@dataclass
class SpectralBasis:
    """A-orthonormal spectral functions with their eigenvalues.

    Attributes
    ----------
    functions : ndarray of shape (n, m)
        One function per column.
    spectrum : ndarray of shape (m,)
        Generalized eigenvalues, ascending.
    dirichlet : ndarray of shape (m,)
        Dirichlet energies ``psi W psi`` (for padded bases, measured on
        the submesh operator).
    kind : str
        "MH", "LMH", "PMH" or "mixed".
    params : dict
        Solver settings and diagnostics recorded at construction.
    """

    functions: np.ndarray
    spectrum: np.ndarray
    dirichlet: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return self.functions.shape[0]

    @property
    def n_functions(self):
        return self.functions.shape[1]

    def __repr__(self):
        return (
            f"SpectralBasis({self.kind}, {self.n_functions} functions "
            f"on {self.n_vertices} vertices)"
        )


def _as_v(region, n):
    if region is None:
        return np.zeros(n)
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    if u.shape != (n,):
        raise ValueError(f"region has {u.shape[0]} values for {n} vertices")
    return (1.0 - u) ** 2


def _operators(mesh, W, A):
    if W is None:
        W = assemble_stiffness(mesh)
    if A is None:
        A = assemble_mass(mesh)
    return W, A


def _dirichlet_energies(W, Psi):
    return np.einsum("ij,ij->j", Psi, W @ Psi)


def compute_mh(mesh, k, seed=0, W=None, A=None, sigma=None):
    """First k manifold harmonics (global Laplacian eigenbasis).

    Parameters
    ----------
    mesh : TriMesh
    k : int
        Number of eigenpairs, ``1 <= k <= n``.
    seed : int
        Seeds the iterative solver start vector.
    W, A : sparse arrays, optional
        Reuse preassembled operators.
    sigma : float, optional
        Spectral shift; defaults to a small negative value.

    Returns
    -------
    SpectralBasis
    """
    W, A = _operators(mesh, W, A)
    n = W.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if sigma is None:
        sigma = default_shift(W)
    a = mass_diagonal(A)
    system = LowRankShiftedSystem(
        W - sparse.diags_array(sigma * a), None, 0.0, A
    )
    lam, Psi = smallest_eigenpairs(
        lambda x: W @ x, system.solve_shifted, A, k, sigma, seed=seed
    )
    return SpectralBasis(
        functions=Psi,
        spectrum=lam,
        dirichlet=_dirichlet_energies(W, Psi),
        kind="MH",
        params={"k": k, "sigma": sigma, "seed": seed},
    )


def build_lmh_operator(W, A, region, phi, mu_r, mu_perp, sigma=0.0):
    """Assemble the localized operator in low-rank shifted form.

    Parameters
    ----------
    W, A : sparse arrays
    region : Region or array_like or None
        Membership u (penalty weight v = (1 - u)^2).
    phi : ndarray of shape (n, k') or None
        A-orthonormal harmonics spanning the subspace to avoid.
    mu_r, mu_perp : float
        Non-negative penalty weights.
    sigma : float
        Shift applied to the sparse part (for shift-invert solves).

    Returns
    -------
    (LowRankShiftedSystem, callable)
        The shifted system ``W + mu_r A diag(v) - sigma A  (+ low-rank
        part)`` and a closure applying the unshifted operator Q.

    Raises
    ------
    ValueError
        If phi is not A-orthonormal within 1e-6 or a weight is negative.
    """
    if mu_r < 0.0 or mu_perp < 0.0:
        raise ValueError("penalty weights must be non-negative")
    a = mass_diagonal(A)
    n = a.size
    v = _as_v(region, n)
    if phi is None:
        phi = np.zeros((n, 0))
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[0] != n:
        raise ValueError("phi row count does not match vertex count")
    if phi.shape[1]:
        gram = phi.T @ (a[:, None] * phi)
        if np.abs(gram - np.eye(phi.shape[1])).max() > 1e-6:
            raise ValueError("phi must be A-orthonormal (within 1e-6)")

    penalty = mu_r * a * v
    Z = W + sparse.diags_array(penalty - sigma * a)
    B = a[:, None] * phi
    system = LowRankShiftedSystem(Z.tocsr(), B, mu_perp, A)

    def q_apply(x):
        y = W @ x
        y = y + (penalty * x if x.ndim == 1 else penalty[:, None] * x)
        if B.shape[1] and mu_perp != 0.0:
            y = y + mu_perp * (B @ (B.T @ x))
        return y

    return system, q_apply


def default_mu_perp(lam_next):
    """Orthogonality weight comfortably above the (k'+1)-th eigenvalue."""
    return max(DEFAULT_MU_PERP, 10.0 * float(lam_next))


def compute_lmh(
    mesh,
    region,
    k,
    kprime,
    mu_r=DEFAULT_MU_R,
    mu_perp=None,
    phi=None,
    solver="relaxed",
    seed=0,
    W=None,
    A=None,
    sigma=None,
):
    """First k localized harmonics for a region.

    Parameters
    ----------
    mesh : TriMesh
    region : Region
    k : int
        Number of localized functions.
    kprime : int
        Number of global harmonics to stay orthogonal to; requires
        ``k + kprime < n``.
    mu_r : float
        Localization weight.
    mu_perp : float, optional
        Orthogonality weight. Default: ``max(1e5, 10 * lam_{k'+1}(W))``
        when the global harmonics are computed here, else 1e5. A warning
        is issued when an explicit value sits below ``lam_{k'+1}(W)``.
    phi : ndarray, optional
        Precomputed A-orthonormal global harmonics (n, kprime).
    solver : {"relaxed", "hard", "oracle"}
        Fast low-rank path, exact-constraint dense path, or dense solve
        of the relaxed operator.
    seed : int
    W, A : sparse arrays, optional
    sigma : float, optional

    Returns
    -------
    SpectralBasis
        kind "LMH"; ``params["phi_overlap_max"]`` records the achieved
        ``max |phi^T A psi|``. A warning is issued when it exceeds 1e-3.
    """
    W, A = _operators(mesh, W, A)
    n = W.shape[0]
    if kprime < 0:
        raise ValueError("kprime must be non-negative")
    if k < 1 or k + kprime >= n:
        raise ValueError(
            f"need 1 <= k and k + kprime < n = {n}, got k={k}, kprime={kprime}"
        )
    if solver not in ("relaxed", "hard", "oracle"):
        raise ValueError(f"unknown solver path '{solver}'")
    a = mass_diagonal(A)

    lam_next = None
    if phi is None:
        mh = compute_mh(mesh, kprime + 1, seed=seed, W=W, A=A, sigma=sigma)
        phi = mh.functions[:, :kprime]
        lam_next = float(mh.spectrum[kprime])
    else:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (n, kprime):
            raise ValueError("phi must have shape (n, kprime)")
    if mu_perp is None:
        mu_perp = default_mu_perp(lam_next) if lam_next is not None else DEFAULT_MU_PERP
    elif lam_next is not None and mu_perp <= lam_next:
        warnings.warn(
            f"mu_perp={mu_perp:g} is not above lambda_(k'+1)={lam_next:g}; "
            "the spectral gap above the global band is not guaranteed",
            stacklevel=2,
        )

    if sigma is None:
        sigma = default_shift(W)

    if solver == "relaxed":
        system, q_apply = build_lmh_operator(W, A, region, phi, mu_r, mu_perp, sigma)
        lam, Psi = smallest_eigenpairs(
            q_apply, system.solve_shifted, A, k, sigma, seed=seed
        )
    elif solver == "hard":
        lam, Psi = hard_constraint_eig(W, A, region, phi, mu_r, k)
    else:
        if n > DENSE_ORACLE_MAX_N:
            raise ValueError(
                f"oracle path limited to {DENSE_ORACLE_MAX_N} vertices, got {n}"
            )
        _, q_apply = build_lmh_operator(W, A, region, phi, mu_r, mu_perp, 0.0)
        vals, vecs = dense_oracle_eig(q_apply(np.eye(n)), A)
        lam, Psi = vals[:k], vecs[:, :k]

    overlap = float(np.abs(phi.T @ (a[:, None] * Psi)).max()) if kprime else 0.0
    if overlap > 1e-3:
        warnings.warn(
            f"localized basis leaks into the avoided subspace: "
            f"max |phi^T A psi| = {overlap:.3e} > 1e-3 (increase mu_perp)",
            stacklevel=2,
        )
    return SpectralBasis(
        functions=Psi,
        spectrum=lam,
        dirichlet=_dirichlet_energies(W, Psi),
        kind="LMH",
        params={
            "k": k,
            "kprime": kprime,
            "mu_r": mu_r,
            "mu_perp": mu_perp,
            "solver": solver,
            "sigma": sigma,
            "seed": seed,
            "phi_overlap_max": overlap,
        },
    )


def extract_submesh(mesh, region):
    """Submesh induced by the u == 1 vertices of a binary region.

    Keeps faces whose three vertices are inside; vertices left without
    any face are dropped.

    Returns
    -------
    (TriMesh, ndarray)
        The submesh and the original indices of its vertices.

    Raises
    ------
    MeshError
        If the submesh is empty or fails validation.
    ValueError
        If the region is not binary.
    """
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    if u.shape != (mesh.n_vertices,):
        raise ValueError("region length does not match vertex count")
    if not np.all((u == 0.0) | (u == 1.0)):
        raise ValueError("submesh extraction requires a binary region")
    keep_face = (u[mesh.faces] == 1.0).all(axis=1)
    if not keep_face.any():
        raise MeshError("empty submesh: no face has all three vertices inside")
    faces = mesh.faces[keep_face]
    vidx = np.unique(faces)
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[vidx] = np.arange(vidx.size)
    sub = TriMesh(mesh.vertices[vidx], remap[faces])
    return sub, vidx


def compute_pmh(mesh, region, k, seed=0):
    """Zero-padded harmonics of the submesh induced by a binary region.

    The functions are orthonormal with respect to the submesh mass (not
    the full-mesh one; lumped areas differ along the region boundary).

    Parameters
    ----------
    mesh : TriMesh
    region : Region
        Binary; the induced submesh needs at least 4 vertices.
    k : int
    seed : int

    Returns
    -------
    SpectralBasis
        kind "PMH"; ``params["vertex_indices"]`` maps submesh rows back
        to the original mesh.
    """
    sub, vidx = extract_submesh(mesh, region)
    if sub.n_vertices < 4:
        raise MeshError(
            f"submesh has {sub.n_vertices} vertices; at least 4 are required"
        )
    if not 1 <= k <= sub.n_vertices:
        raise ValueError(f"k must be in [1, {sub.n_vertices}], got {k}")
    basis = compute_mh(sub, k, seed=seed)
    padded = np.zeros((mesh.n_vertices, k))
    padded[vidx] = basis.functions
    return SpectralBasis(
        functions=padded,
        spectrum=basis.spectrum,
        dirichlet=basis.dirichlet,
        kind="PMH",
        params={"k": k, "seed": seed, "vertex_indices": vidx},
    )


def soft_region_from_seeds(mesh, seeds, variance=None):
    """Soft membership from Gaussians of graph-geodesic distance.

    ``u_i = min(1, sum_s exp(-d(i, s)^2 / (2 variance)))`` over the
    seed vertices s.

    Parameters
    ----------
    mesh : TriMesh
    seeds : sequence of int
        Non-empty list of vertex indices.
    variance : float, optional
        Defaults to ``(0.01 * intrinsic_diameter(mesh))**2``.

    Returns
    -------
    Region
    """
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    if seeds.size == 0:
        raise ValueError("at least one seed vertex is required")
    if variance is None:
        variance = (0.01 * intrinsic_diameter(mesh)) ** 2
    if not variance > 0.0:
        raise ValueError("variance must be positive")
    d = graph_geodesics(mesh, seeds)
    d = d.reshape(seeds.size, -1)
    with np.errstate(under="ignore"):
        u = np.exp(-(d**2) / (2.0 * variance)).sum(axis=0)
    return Region(np.minimum(1.0, u))


def region_energy_fraction(basis, A, region):
    """Per-function fraction of A-weighted energy carried inside a region.

    Uses the membership u as the inside weight, which for a binary
    region is exactly the energy fraction on the u == 1 vertices.
    """
    functions = getattr(basis, "functions", basis)
    a = mass_diagonal(A)
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    total = np.einsum("ij,ij->j", functions, a[:, None] * functions)
    inside = np.einsum("ij,ij->j", functions, (a * u)[:, None] * functions)
    return inside / total


@dataclass
class GapReport:
    """Outcome of the spectral-gap check (smallest localized eigenvalue
    against the k'-th global one)."""

    kprime: int
    mu_r: float
    mu_perp: float
    lam_kprime_W: float
    lam_next_W: float
    lam1_Q: float
    gap: float
    threshold: float
    passed: bool


def verify_spectral_gap(
    mesh, region, kprime, mu_r=DEFAULT_MU_R, mu_perp=None, seed=0, W=None, A=None
):
    """Check ``lam_1(Q) >= lam_k'(W)`` for a sufficiently large mu_perp.

    The check never passes silently: the returned report carries the
    measured gap, the threshold ``-1e-6 * lam_k'(W)`` (plus a tiny
    floating-point allowance) and the pass flag.

    Parameters
    ----------
    mesh : TriMesh
    region : Region or None
        None (or all-ones membership) gives the v = 0 control, where
        ``lam_1(Q)`` equals ``lam_{k'+1}(W)``.
    kprime : int
        At least 1.
    mu_r, mu_perp : float
        ``mu_perp`` defaults to ``max(1e5, 10 * lam_{k'+1}(W))``; a
        warning is issued for explicit values at or below
        ``lam_{k'+1}(W)``.

    Returns
    -------
    GapReport
    """
    if kprime < 1:
        raise ValueError("kprime must be at least 1")
    W, A = _operators(mesh, W, A)
    sigma = default_shift(W)
    mh = compute_mh(mesh, kprime + 1, seed=seed, W=W, A=A, sigma=sigma)
    lam_kp = float(mh.spectrum[kprime - 1])
    lam_next = float(mh.spectrum[kprime])
    if mu_perp is None:
        mu_perp = default_mu_perp(lam_next)
    elif mu_perp <= lam_next:
        warnings.warn(
            f"mu_perp={mu_perp:g} does not exceed lambda_(k'+1)={lam_next:g}; "
            "the gap bound assumes it does",
            stacklevel=2,
        )
    phi = mh.functions[:, :kprime]
    system, q_apply = build_lmh_operator(W, A, region, phi, mu_r, mu_perp, sigma)
    lam1 = float(
        smallest_eigenpairs(q_apply, system.solve_shifted, A, 1, sigma, seed=seed)[0][0]
    )
    gap = lam1 - lam_kp
    threshold = -1e-6 * lam_kp - 1e-12 * max(1.0, lam_next)
    return GapReport(
        kprime=kprime,
        mu_r=mu_r,
        mu_perp=float(mu_perp),
        lam_kprime_W=lam_kp,
        lam_next_W=lam_next,
        lam1_Q=lam1,
        gap=gap,
        threshold=threshold,
        passed=bool(gap >= threshold),
    )


@dataclass
class BoundReport:
    """Outcome of the restricted-pencil upper-bound check
    ``lam_i(Q) <= lam_{i+k'}(W_R)`` (within a relative tolerance)."""

    kprime: int
    k: int
    mu_r: float
    mu_perp: float
    tolerance: float
    lmh_spectrum: np.ndarray
    submesh_spectrum: np.ndarray
    margins: np.ndarray
    passed: bool


def restrict_pencil(W, A, region):
    """Principal-submatrix restriction of (W, A) to a binary region.

    Rows and columns outside the region are dropped from both matrices
    without reassembly, so the restricted quadratic forms equal the
    full-mesh energies of zero-extended functions. Interface vertices
    keep their full stiffness diagonal and lumped mass, which pins the
    restriction down at the region boundary (no natural-boundary
    renormalization).

    Returns
    -------
    (W_rr, A_rr, idx)
        Restricted sparse operators and the kept vertex indices.
    """
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    if not np.all((u == 0.0) | (u == 1.0)):
        raise ValueError("pencil restriction requires a binary region")
    idx = np.flatnonzero(u == 1.0)
    if idx.size == 0:
        raise ValueError("region contains no vertices")
    W_rr = W.tocsr()[idx][:, idx]
    a_rr = mass_diagonal(A)[idx]
    return W_rr, sparse.diags_array(a_rr).tocsr(), idx


def verify_upper_bound(
    mesh, region, kprime, k, mu_r=1e4, mu_perp=None, seed=0, tolerance=1e-3
):
    """Check the localized spectrum against the restricted operator.

    With v the indicator of the region complement, each localized
    eigenvalue is bounded by the restricted eigenvalue k' indices
    later: ``lam_i(Q) <= lam_{i+k'}(W_R)``, where (W_R, A_R) is the
    principal-submatrix restriction of the pencil to the region (the
    operator the penalty term drives Q toward as mu_r grows). The
    inequality holds at any mu_r because zero-extended restricted
    eigenfunctions feel no penalty; the report records per-index
    margins rather than raising.

    Parameters
    ----------
    mesh : TriMesh
    region : Region
        Binary.
    kprime, k : int
    mu_r : float
    mu_perp : float, optional
    seed : int
    tolerance : float
        Relative slack on the right-hand side, absorbing solver error
        (a small absolute floor covers eigenvalues at zero).

    Returns
    -------
    BoundReport
    """
    W, A = _operators(mesh, None, None)
    W_rr, A_rr, idx = restrict_pencil(W, A, region)
    sub_k = k + kprime
    if sub_k > idx.size:
        raise ValueError(
            f"region has only {idx.size} vertices; cannot compare "
            f"{sub_k} eigenvalues"
        )
    lmh = compute_lmh(
        mesh, region, k, kprime, mu_r=mu_r, mu_perp=mu_perp, seed=seed, W=W, A=A
    )
    sub_basis = compute_mh(None, sub_k, seed=seed, W=W_rr, A=A_rr)
    rhs = sub_basis.spectrum[kprime : kprime + k]
    # relative slack, with an absolute floor so a zero eigenvalue at
    # -1e-15 does not tighten its own bound
    slack = tolerance * np.abs(rhs) + 1e-9 * max(1.0, float(np.abs(rhs).max()))
    margins = rhs + slack - lmh.spectrum
    return BoundReport(
        kprime=kprime,
        k=k,
        mu_r=mu_r,
        mu_perp=float(lmh.params["mu_perp"]),
        tolerance=tolerance,
        lmh_spectrum=lmh.spectrum,
        submesh_spectrum=sub_basis.spectrum,
        margins=margins,
        passed=bool(np.all(margins >= 0.0)),
    )


@dataclass
class WeylFit:
    """Least-squares line through the upper half of a spectrum."""

    slope: float
    intercept: float
    r_squared: float
    region_area: float

    @property
    def normalized_slope(self):
        """Slope times the square root of the region area."""
        return self.slope * np.sqrt(self.region_area)


def weyl_slope(basis, region_area):
    """Fit ``lam_i - lam_1`` against the index i over the upper half.

    Parameters
    ----------
    basis : SpectralBasis or array_like
        Basis (or raw spectrum) with at least 10 eigenvalues.
    region_area : float
        Area of the region the basis localizes on, recorded for
        cross-region slope comparisons.

    Returns
    -------
    WeylFit
    """
    spectrum = np.asarray(getattr(basis, "spectrum", basis), dtype=np.float64)
    m = spectrum.size
    if m < 10:
        raise ValueError(f"need at least 10 eigenvalues for a stable fit, got {m}")
    y = spectrum - spectrum[0]
    idx = np.arange(1, m + 1, dtype=np.float64)
    lo = m // 2
    xs, ys = idx[lo:], y[lo:]
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return WeylFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        region_area=float(region_area),
    )
