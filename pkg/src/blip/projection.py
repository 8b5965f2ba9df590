"""Approximate orthogonal projection onto the cone of the Bloch dictionary.

For a voxel sequence ``x`` the selected atom maximizes the normalized real
correlation ``Re<D_k, x> / |D_k|`` (lowest index on ties) and the density is
``max(Re<D_k, x> / |D_k|^2, 0)``, where ``<a, b> = sum(conj(a) * b)``.

Two matching paths are provided.  ``exhaustive_match`` scores every atom.
``match`` first screens all atoms with a single BLAS product, keeps every
atom whose screened score is within a rounding bound of the best one, and
rescores only those with the same summation used by the exhaustive path.
Both therefore return bit-identical indices and densities, independent of
BLAS threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import BlochDictionary
from .errors import DimensionError, DomainError

__all__ = [
    "ProjectionResult",
    "ParameterMaps",
    "match",
    "exhaustive_match",
    "project_voxel",
    "project_image",
    "maps_from_match",
]

_BLOCK = 1024
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ProjectionResult:
    atom_index: int
    rho: float
    projected: np.ndarray


@dataclass(frozen=True, eq=False)
class ParameterMaps:
    """Per-voxel density and Bloch parameters over a spatial grid.

    Arrays are flat (length ``N``) in C order of ``grid_dims``.
    ``atom_index`` is set for maps read out of a dictionary and ``None``
    for ground truth.
    """

    rho: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    df: np.ndarray
    grid_dims: tuple
    atom_index: np.ndarray | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.grid_dims)
        object.__setattr__(self, "grid_dims", dims)
        n = int(np.prod(dims))
        for name in ("rho", "t1", "t2", "df"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if a.size != n:
                raise DimensionError(f"{name} has {a.size} entries, grid {dims} needs {n}")
            object.__setattr__(self, name, a)
        if np.any(self.rho < 0):
            raise DomainError("proton density map must be nonnegative")

    @property
    def size(self):
        return self.rho.size

    def image(self, name):
        """Map ``name`` reshaped to ``grid_dims``."""
        return getattr(self, name).reshape(self.grid_dims)

    def __eq__(self, other):
        if not isinstance(other, ParameterMaps):
            return NotImplemented
        return self.grid_dims == other.grid_dims and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("rho", "t1", "t2", "df")
        )

    __hash__ = None


def _scores(a_re, a_im, x_re, x_im):
    # Every score used for a decision goes through this single row reduction.
    return (a_re * x_re + a_im * x_im).sum(axis=-1)


def _density(raw, norm_sq):
    rho = raw / norm_sq
    return np.where(rho > 0, rho, 0.0)


def _check(x, dictionary):
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dictionary.length:
        raise DimensionError(
            f"voxel sequences of length {x.shape[-1]} do not match dictionary length {dictionary.length}"
        )
    finite = np.isfinite(x).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise DomainError(f"non-finite magnetization in voxel {bad}")
    return x.astype(complex, copy=False)


def exhaustive_match(x, dictionary: BlochDictionary):
    """Reference matched filter: score all ``P`` atoms for every voxel.

    Parameters
    ----------
    x : array_like, shape (N, L) or (L,)
    dictionary : BlochDictionary

    Returns
    -------
    atom_index : ndarray of int, shape (N,)
    rho : ndarray, shape (N,)
    """
    x = _check(x, dictionary)
    n = x.shape[0]
    idx = np.zeros(n, dtype=np.intp)
    rho = np.zeros(n)
    for i in range(n):
        raw = _scores(dictionary._re, dictionary._im, x[i].real, x[i].imag)
        k = int(np.argmax(raw / dictionary.atom_norms))
        idx[i] = k
        rho[i] = _density(raw[k], dictionary._norm_sq[k])
    return idx, rho


def match(x, dictionary: BlochDictionary):
    """Screened matched filter, bit-identical to :func:`exhaustive_match`."""
    x = _check(x, dictionary)
    n = x.shape[0]
    idx = np.zeros(n, dtype=np.intp)
    rho = np.zeros(n)
    slack = 64.0 * dictionary.length * _EPS

    for start in range(0, n, _BLOCK):
        xb = x[start:start + _BLOCK]
        x_re = np.ascontiguousarray(xb.real)
        x_im = np.ascontiguousarray(xb.imag)
        x_norm = np.sqrt((x_re * x_re + x_im * x_im).sum(axis=1))
        live = np.flatnonzero(np.any(xb != 0, axis=1))
        if live.size == 0:
            continue

        screen = np.concatenate([x_re[live], x_im[live]], axis=1) @ dictionary._screen
        best = screen.max(axis=1)
        # |screen - exact| <= ~2L eps |x|; candidates within that of the best
        # always contain the exact argmax.
        tol = slack * x_norm[live]
        vox, cand = np.nonzero(screen >= (best - tol)[:, None])

        rows = live[vox]
        raw = _scores(dictionary._re[cand], dictionary._im[cand], x_re[rows], x_im[rows])
        score = raw / dictionary.atom_norms[cand]
        order = np.lexsort((cand, -score, vox))
        first = np.ones(order.size, dtype=bool)
        first[1:] = vox[order[1:]] != vox[order[:-1]]
        pick = order[first]

        out = start + rows[pick]
        idx[out] = cand[pick]
        rho[out] = _density(raw[pick], dictionary._norm_sq[cand[pick]])
    return idx, rho


def project_voxel(x, dictionary: BlochDictionary) -> ProjectionResult:
    """Project one voxel sequence onto the discretized cone."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-D voxel sequence, got shape {x.shape}")
    idx, rho = match(x, dictionary)
    k = int(idx[0])
    return ProjectionResult(k, float(rho[0]), rho[0] * dictionary.atoms[k])


def maps_from_match(idx, rho, dictionary: BlochDictionary, grid_dims) -> ParameterMaps:
    """Read parameter maps out of the look-up table."""
    lut = dictionary.lut[idx]
    return ParameterMaps(rho, lut[:, 0], lut[:, 1], lut[:, 2], grid_dims, atom_index=np.asarray(idx))


def project_image(x, dictionary: BlochDictionary, grid_dims=None, method: str = "fast"):
    """Project every row of an ``N x L`` sequence independently.

    Parameters
    ----------
    x : array_like, shape (N, L)
    dictionary : BlochDictionary
    grid_dims : tuple of int, optional
        Spatial layout of the ``N`` voxels, defaults to ``(N,)``.
    method : {"fast", "exhaustive"}

    Returns
    -------
    projected : ndarray, shape (N, L)
        Row ``i`` is ``rho[i] * atoms[atom_index[i]]``.
    maps : ParameterMaps
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"expected an (N, L) sequence, got shape {x.shape}")
    if method == "fast":
        idx, rho = match(x, dictionary)
    elif method == "exhaustive":
        idx, rho = exhaustive_match(x, dictionary)
    else:
        raise ValueError(f"unknown method {method!r}")
    grid_dims = (x.shape[0],) if grid_dims is None else tuple(grid_dims)
    projected = rho[:, None] * dictionary.atoms[idx]
    return projected, maps_from_match(idx, rho, dictionary, grid_dims)
