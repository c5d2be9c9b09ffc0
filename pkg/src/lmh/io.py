"""Deterministic text formats for regions, bases, maps and curves.

All floats are written with 17 significant digits, which round-trips
float64 exactly, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .localized import Region, SpectralBasis


def _fmt(x):
    return f"{x:.17g}"


def save_region(region, path):
    """One membership value per line."""
    u = np.asarray(getattr(region, "u", region), dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for val in u:
            fh.write(_fmt(val) + "\n")


def load_region(path):
    u = np.loadtxt(path, dtype=np.float64, ndmin=1)
    return Region(u)


def save_basis(basis, basis_path, spectrum_path=None):
    """Write functions ("n m" header then n rows) and eigenvalues."""
    functions = basis.functions
    n, m = functions.shape
    with open(basis_path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {m}\n")
        for row in functions:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")
    if spectrum_path is not None:
        with open(spectrum_path, "w", encoding="utf-8") as fh:
            for val in basis.spectrum:
                fh.write(_fmt(val) + "\n")


def load_basis(basis_path, spectrum_path=None, kind="MH"):
    """Read a basis file (and optional spectrum file) back.

    Dirichlet energies are not stored in the file format; the loaded
    basis carries NaNs there, and the given ``kind`` label is trusted.
    """
    with open(basis_path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{basis_path}: malformed basis header (expected 'n m')")
        n, m = int(header[0]), int(header[1])
        functions = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if functions.shape != (n, m):
        raise ValueError(
            f"{basis_path}: header promises {n}x{m}, file holds {functions.shape}"
        )
    if spectrum_path is not None:
        spectrum = np.loadtxt(spectrum_path, dtype=np.float64, ndmin=1)
        if spectrum.shape != (m,):
            raise ValueError(f"{spectrum_path}: expected {m} eigenvalues")
    else:
        spectrum = np.full(m, np.nan)
    return SpectralBasis(
        functions=functions,
        spectrum=spectrum,
        dirichlet=np.full(m, np.nan),
        kind=kind,
        params={"source": str(basis_path)},
    )


def save_p2p(p2p, path):
    """One 0-based target vertex index per line."""
    p2p = np.asarray(p2p, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for idx in p2p:
            fh.write(f"{idx}\n")


def load_p2p(path):
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def save_cmatrix(C, path):
    """Write a dense matrix with a "rows cols" header line."""
    C = np.asarray(C, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]}\n")
        for row in C:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")


def load_cmatrix(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed matrix header (expected 'rows cols')")
        r, c = int(header[0]), int(header[1])
        C = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if C.shape != (r, c):
        raise ValueError(f"{path}: header promises {r}x{c}, file holds {C.shape}")
    return C


def save_curve(thresholds, fractions, path):
    """Cumulative error curve as CSV with a "threshold,fraction" header."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    fractions = np.asarray(fractions, dtype=np.float64)
    if thresholds.shape != fractions.shape:
        raise ValueError("thresholds and fractions differ in length")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,fraction\n")
        for t, f in zip(thresholds, fractions):
            fh.write(f"{_fmt(t)},{_fmt(f)}\n")


def load_curve(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def save_scalar_field(values, path):
    """One per-vertex value per line."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for val in values:
            fh.write(_fmt(val) + "\n")


def load_scalar_field(path):
    return np.loadtxt(path, dtype=np.float64, ndmin=1)
