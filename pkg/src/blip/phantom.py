"""Synthetic multi-tissue phantoms and their ground-truth magnetization.

The default tissue table uses representative brain values.  They are
assumptions, not measured values, and each sits off the default
dictionary grid on purpose.  Proton densities are kept close together so
the density alone barely separates tissues.

=====  ==============  =======  =======  ====
label  tissue          T1 (ms)  T2 (ms)  rho
=====  ==============  =======  =======  ====
0      scalp / fat      367      83      0.85
1      skull marrow     543      57      0.75
2      CSF             3950     1650     1.00
3      gray matter     1213      102     0.82
4      white matter     787       68     0.70
5      deep nuclei     1053       63     0.78
=====  ==============  =======  =======  ====
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import ExcitationSequence, ParameterGrid, TissueParams, simulate_responses
from .errors import ConfigurationError, DomainError, IngestionError, SimulationError
from .projection import ParameterMaps

__all__ = [
    "TissueSpec",
    "PhantomDefinition",
    "default_tissues",
    "synth_phantom",
    "ground_truth_sequence",
    "snap_to_grid",
]


@dataclass(frozen=True)
class TissueSpec:
    label: int
    params: TissueParams
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "rho", float(self.rho))
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise DomainError(f"tissue {self.label}: rho must be nonnegative, got {self.rho}")


def default_tissues():
    table = [
        (367.0, 83.0, 0.85),
        (543.0, 57.0, 0.75),
        (3950.0, 1650.0, 1.00),
        (1213.0, 102.0, 0.82),
        (787.0, 68.0, 0.70),
        (1053.0, 63.0, 0.78),
    ]
    return tuple(TissueSpec(i, TissueParams(t1, t2, 0.0), rho) for i, (t1, t2, rho) in enumerate(table))


@dataclass(frozen=True, eq=False)
class PhantomDefinition:
    """Integer label map over ``grid_dims`` plus the tissue table."""

    grid_dims: tuple
    label_map: np.ndarray
    tissues: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.grid_dims)
        if not dims or min(dims) < 1:
            raise ConfigurationError(f"grid dimensions must be positive, got {dims}")
        labels = np.array(self.label_map, dtype=np.int64).reshape(dims)
        labels.setflags(write=False)
        tissues = tuple(self.tissues)
        if not tissues:
            raise ConfigurationError("a phantom needs at least one tissue")
        known = [t.label for t in tissues]
        if len(set(known)) != len(known):
            raise ConfigurationError("duplicate tissue labels")
        missing = np.setdiff1d(np.unique(labels), known)
        if missing.size:
            raise IngestionError(f"label {int(missing[0])} in label map has no tissue entry")
        object.__setattr__(self, "grid_dims", dims)
        object.__setattr__(self, "label_map", labels)
        object.__setattr__(self, "tissues", tissues)

    @property
    def N(self):
        return int(np.prod(self.grid_dims))

    def tissue(self, label):
        for t in self.tissues:
            if t.label == label:
                return t
        raise KeyError(label)

    def __eq__(self, other):
        if not isinstance(other, PhantomDefinition):
            return NotImplemented
        return (
            self.grid_dims == other.grid_dims
            and self.tissues == other.tissues
            and np.array_equal(self.label_map, other.label_map)
        )

    __hash__ = None


def _concentric(dims, n, rng):
    # normalized elliptical radius; the outermost label also fills the corners
    axes = [(np.arange(d) + 0.5) / d * 2.0 - 1.0 for d in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    radius = np.sqrt(sum(g * g for g in grids))
    edges = np.linspace(0.0, 0.95, n + 1)[1:-1][::-1]
    if n > 2:
        step = 0.95 / n
        edges = edges + rng.uniform(-0.15, 0.15, size=edges.size) * step
    labels = np.zeros(dims, dtype=np.int64)
    for ring, edge in enumerate(edges, start=1):
        labels[radius < edge] = ring
    return labels


def _blocks(dims, n, rng, block=8):
    shape = tuple(max(1, -(-d // block)) for d in dims)
    count = int(np.prod(shape))
    coarse = rng.integers(0, n, size=count)
    coarse[: min(n, count)] = rng.permutation(n)[: min(n, count)]
    coarse = rng.permutation(coarse).reshape(shape)
    labels = coarse
    for axis, d in enumerate(dims):
        labels = np.repeat(labels, block, axis=axis)
    return labels[tuple(slice(0, d) for d in dims)]


def synth_phantom(kind, grid_dims, tissues=None, seed=0, path=None) -> PhantomDefinition:
    """Build a phantom.

    Parameters
    ----------
    kind : {"concentric", "blocks", "file"}
        ``concentric`` nests one elliptical ring per tissue, first tissue
        outermost, with ring radii jittered by ``seed``.  ``blocks`` tiles
        the grid with 8-voxel blocks of random labels, each label used at
        least once when there are enough blocks.  ``file`` reads ``path``
        (see :func:`blip.formats.read_phantom`); ``grid_dims`` and
        ``tissues`` are then taken from the file.
    grid_dims : tuple of int
    tissues : sequence of TissueSpec, optional
        Defaults to :func:`default_tissues`.  Labels are assigned in the
        order given.
    seed : int
    path : path-like, optional
    """
    if kind == "file":
        from .formats import read_phantom

        if path is None:
            raise ConfigurationError("file phantoms need a path")
        return read_phantom(path)
    tissues = tuple(default_tissues() if tissues is None else tissues)
    if not tissues:
        raise ConfigurationError("a phantom needs at least one tissue")
    dims = tuple(int(d) for d in np.atleast_1d(grid_dims))
    if not dims or min(dims) < 1:
        raise ConfigurationError(f"grid dimensions must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    n = len(tissues)
    if n == 1:
        index = np.zeros(dims, dtype=np.int64)
    elif kind == "concentric":
        index = _concentric(dims, n, rng)
    elif kind == "blocks":
        index = _blocks(dims, n, rng)
    else:
        raise ConfigurationError(f"unknown phantom kind {kind!r}")
    labels = np.array([t.label for t in tissues])[index]
    return PhantomDefinition(dims, labels, tissues)


def ground_truth_sequence(phantom: PhantomDefinition, excitation: ExcitationSequence):
    """``X[i] = rho_i * B(theta_i)`` for every voxel, plus the generating maps."""
    params = np.array([t.params.as_tuple() for t in phantom.tissues])
    try:
        responses = simulate_responses(params, excitation)
    except SimulationError as exc:
        # locate the first tissue that fails, then a voxel carrying it
        for j, t in enumerate(phantom.tissues):
            try:
                simulate_responses(params[j:j + 1], excitation)
            except SimulationError:
                voxel = np.flatnonzero(phantom.label_map.ravel() == t.label)
                where = f"voxel {int(voxel[0])}" if voxel.size else f"tissue {t.label}"
                raise SimulationError(f"{where}: {exc}", time_index=exc.time_index) from exc
        raise

    lookup = {t.label: j for j, t in enumerate(phantom.tissues)}
    index = np.array([lookup[v] for v in phantom.label_map.ravel()], dtype=np.intp) if phantom.N else np.zeros(0, int)
    rho = np.array([t.rho for t in phantom.tissues])[index]
    x = rho[:, None] * responses[index]
    p = params[index]
    return x, ParameterMaps(rho, p[:, 0], p[:, 1], p[:, 2], phantom.grid_dims)


def _nearest(values, grid_values):
    pos = np.clip(np.searchsorted(grid_values, values), 1, len(grid_values) - 1)
    lo, hi = grid_values[pos - 1], grid_values[pos]
    return np.where(values - lo <= hi - values, lo, hi)


def snap_to_grid(phantom: PhantomDefinition, grid: ParameterGrid) -> PhantomDefinition:
    """Move every tissue to the nearest grid value along each axis."""
    axes = [grid.axis_values(a) for a in ("t1", "t2", "df")]
    tissues = []
    for t in phantom.tissues:
        t1, t2, df = (float(_nearest(np.array([v]), ax)[0]) if ax.size > 1 else float(ax[0])
                      for v, ax in zip(t.params.as_tuple(), axes))
        if t2 > t1:
            raise ConfigurationError(f"tissue {t.label} snaps to infeasible t2 > t1")
        tissues.append(TissueSpec(t.label, TissueParams(t1, t2, df), t.rho))
    return PhantomDefinition(phantom.grid_dims, phantom.label_map, tuple(tissues))
