"""Randomized EPI subsampling of the unitary spatial DFT.

At frame ``t`` the decimated k-space axis keeps the frequencies
``shift_t, shift_t + p, ..., shift_t + (M_d - 1) p`` (0-based), where
``M_d = D / p`` and ``D`` is the length of that axis.  Along the other
spatial axis every selected line is fully sampled.  A 1-D grid of ``N``
voxels is treated as ``(N, 1)``.

Samples of one frame are stored line by line: the index of the kept
frequency on the decimated axis is major, the position along the line is
minor.  Voxel ``i`` of an ``(N, L)`` sequence is the C-order flattening of
``grid_dims``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import BlochDictionary, random_chords
from .errors import ConfigurationError, DimensionError, DomainError

__all__ = [
    "SamplingPlan",
    "KSpaceData",
    "RipSummary",
    "make_plan",
    "forward",
    "adjoint",
    "forward_array",
    "adjoint_array",
    "empirical_rip_probe",
    "chord_isometry_ratio",
]


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Undersampling factor, per-frame shifts and grid geometry."""

    p: int
    shifts: np.ndarray
    grid_dims: tuple
    axis: int = 0
    seed: int | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.grid_dims)
        if len(dims) not in (1, 2) or min(dims) < 1:
            raise ConfigurationError(f"grid_dims must be 1-D or 2-D and positive, got {dims}")
        if self.axis not in (0, 1) or self.axis >= len(dims):
            raise ConfigurationError(f"axis {self.axis} invalid for grid {dims}")
        p = int(self.p)
        if p != self.p or p < 1:
            raise ConfigurationError(f"undersampling factor must be a positive integer, got {self.p}")
        if dims[self.axis] % p:
            raise ConfigurationError(f"p = {p} does not divide the decimated axis length {dims[self.axis]}")
        shifts = np.array(self.shifts, dtype=np.int64).reshape(-1)
        if shifts.size < 1:
            raise ConfigurationError("a plan needs at least one frame")
        if shifts.min() < 0 or shifts.max() >= p:
            raise ConfigurationError(f"shifts must lie in [0, {p})")
        shifts.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "grid_dims", dims)
        object.__setattr__(self, "shifts", shifts)

    @property
    def L(self) -> int:
        return self.shifts.size

    @property
    def N(self) -> int:
        return int(np.prod(self.grid_dims))

    @property
    def shape2d(self):
        return self.grid_dims if len(self.grid_dims) == 2 else (self.grid_dims[0], 1)

    @property
    def decimated_length(self) -> int:
        return self.shape2d[self.axis]

    @property
    def line_length(self) -> int:
        return self.shape2d[1 - self.axis]

    @property
    def lines_per_frame(self) -> int:
        return self.decimated_length // self.p

    @property
    def M(self) -> int:
        return self.lines_per_frame * self.line_length

    def selected(self, t: int) -> np.ndarray:
        """Kept frequency indices on the decimated axis at frame ``t``."""
        return self.shifts[t] + self.p * np.arange(self.lines_per_frame)

    def __eq__(self, other):
        if not isinstance(other, SamplingPlan):
            return NotImplemented
        return (
            self.p == other.p
            and self.grid_dims == other.grid_dims
            and self.axis == other.axis
            and self.seed == other.seed
            and np.array_equal(self.shifts, other.shifts)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class KSpaceData:
    """``M x L`` samples, column ``t`` taken with ``plan.shifts[t]``."""

    samples: np.ndarray
    plan: SamplingPlan

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=complex)
        if y.shape != (self.plan.M, self.plan.L):
            raise DimensionError(f"samples shape {y.shape} does not match plan ({self.plan.M}, {self.plan.L})")
        object.__setattr__(self, "samples", y)


def make_plan(p: int, L: int, grid_dims, seed: int = 0, axis: int = 0) -> SamplingPlan:
    """Draw i.i.d. uniform shifts on ``{0, ..., p-1}``, one per frame."""
    if int(L) != L or L < 1:
        raise ConfigurationError(f"L must be a positive integer, got {L}")
    grid_dims = tuple(np.atleast_1d(grid_dims).tolist())
    # validate geometry before drawing so that p is known to be usable
    SamplingPlan(p, np.zeros(1, dtype=np.int64), grid_dims, axis)
    shifts = np.random.default_rng(seed).integers(0, p, size=int(L))
    return SamplingPlan(p, shifts, grid_dims, axis, seed)


def _frames(x, plan):
    """(..., N, L) sequence -> (..., L, D, W) with the decimated axis first."""
    batch = x.shape[:-2]
    rows, cols = plan.shape2d
    img = x.reshape(*batch, rows, cols, plan.L)
    img = np.moveaxis(img, -1, -3)
    return img if plan.axis == 0 else np.swapaxes(img, -1, -2)


def _unframes(frames, plan):
    batch = frames.shape[:-3]
    if plan.axis == 1:
        frames = np.swapaxes(frames, -1, -2)
    img = np.moveaxis(frames, -3, -1)
    return img.reshape(*batch, plan.N, plan.L)


def _line_index(plan):
    return plan.shifts[:, None] + plan.p * np.arange(plan.lines_per_frame)[None, :]


def forward_array(x, plan: SamplingPlan) -> np.ndarray:
    """Apply ``h`` to an array of shape ``(..., N, L)``, returning ``(..., M, L)``."""
    x = np.asarray(x)
    if x.shape[-2:] != (plan.N, plan.L):
        raise DimensionError(f"sequence shape {x.shape[-2:]} does not match plan ({plan.N}, {plan.L})")
    k = np.fft.fft2(_frames(x, plan), axes=(-2, -1), norm="ortho")
    idx = _line_index(plan)[..., None]
    sel = np.take_along_axis(k, np.broadcast_to(idx, k.shape[:-3] + idx.shape[:-1] + (1,)), axis=-2)
    y = sel.reshape(*sel.shape[:-2], plan.M)
    return np.swapaxes(y, -1, -2)


def adjoint_array(y, plan: SamplingPlan) -> np.ndarray:
    """Apply ``h^H`` (zero-fill, inverse unitary DFT) to ``(..., M, L)``."""
    y = np.asarray(y)
    if y.shape[-2:] != (plan.M, plan.L):
        raise DimensionError(f"k-space shape {y.shape[-2:]} does not match plan ({plan.M}, {plan.L})")
    batch = y.shape[:-2]
    lines = np.swapaxes(y, -1, -2).reshape(*batch, plan.L, plan.lines_per_frame, plan.line_length)
    full = np.zeros(batch + (plan.L, plan.decimated_length, plan.line_length), dtype=complex)
    idx = _line_index(plan)[..., None]
    np.put_along_axis(full, np.broadcast_to(idx, batch + idx.shape[:-1] + (1,)), lines, axis=-2)
    return _unframes(np.fft.ifft2(full, axes=(-2, -1), norm="ortho"), plan)


def forward(x, plan: SamplingPlan) -> KSpaceData:
    """``Y[:, t] = P(shift_t) F X[:, t]`` for every frame."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"expected an (N, L) sequence, got shape {x.shape}")
    return KSpaceData(forward_array(x, plan), plan)


def adjoint(y: KSpaceData) -> np.ndarray:
    """Back projection ``F^H P(shift_t)^T Y[:, t]``, shape ``(N, L)``."""
    return adjoint_array(y.samples, y.plan)


@dataclass(frozen=True)
class RipSummary:
    """Distribution of ``r = (N/M) |h(u)|^2 / |u|^2`` over sampled chords."""

    r_min: float
    r_max: float
    r_mean: float
    delta: float
    num_chords: int


def _voxel_coords(plan, voxels):
    rows, cols = plan.shape2d
    r, c = np.divmod(np.asarray(voxels), cols)
    return (r, c) if plan.axis == 0 else (c, r)


def chord_isometry_ratio(u, voxels, plan: SamplingPlan) -> float:
    """``(N/M) |h(U)|^2 / |U|^2`` for an image ``U`` supported on a few voxels.

    ``u`` has shape ``(S, L)`` with the time series of each support voxel.
    Per frame, two voxels interact only when they lie on the same sampled
    line with decimated-axis coordinates congruent modulo ``D / p``; they
    then contribute ``u_v conj(u_w) exp(-2 pi i shift (d_v - d_w) / D)``.
    All other terms cancel exactly, so no transform is needed.
    """
    u = np.asarray(u, dtype=complex)
    voxels = np.asarray(voxels)
    d, w = _voxel_coords(plan, voxels)
    energy = (u.real * u.real + u.imag * u.imag).sum()
    if energy == 0:
        raise DomainError("zero chord")
    cross = 0.0
    m_d = plan.lines_per_frame
    for a in range(len(voxels)):
        for b in range(a + 1, len(voxels)):
            if w[a] != w[b] or (d[a] - d[b]) % m_d:
                continue
            phase = np.exp(-2j * np.pi * plan.shifts * (d[a] - d[b]) / plan.decimated_length)
            cross += 2.0 * (u[a] * np.conj(u[b]) * phase).real.sum()
    return (energy + cross) / energy


def empirical_rip_probe(dictionary: BlochDictionary, plan: SamplingPlan, num_chords: int, seed=0) -> RipSummary:
    """Monte-Carlo estimate of the restricted isometry constant of ``h``.

    Each sample places a dictionary chord on one random voxel, or places
    two independent chords on a random voxel and one of its aliasing
    partners (same line, decimated coordinate shifted by a multiple of
    ``D / p``).  Other two-voxel placements are exact isometries and carry
    no information, so they are not drawn.  With ``p = 1`` no voxel has a
    partner and the second voxel is any other voxel.
    """
    if int(num_chords) != num_chords or num_chords < 1:
        raise DomainError(f"num_chords must be a positive integer, got {num_chords}")
    if dictionary.length != plan.L:
        raise DimensionError(f"dictionary length {dictionary.length} does not match plan length {plan.L}")
    rng = np.random.default_rng(seed)
    ratios = []
    m_d = plan.lines_per_frame
    while len(ratios) < num_chords:
        two = plan.N > 1 and rng.random() < 0.5
        chords, scale = random_chords(dictionary, 2 if two else 1, rng)
        if np.any(np.sqrt((np.abs(chords) ** 2).sum(axis=1)) <= 1e-12 * scale):
            continue
        v = int(rng.integers(plan.N))
        if not two:
            ratios.append(chord_isometry_ratio(chords, [v], plan))
            continue
        if plan.p > 1:
            d, w = _voxel_coords(plan, v)
            d2 = (d + m_d * int(rng.integers(1, plan.p))) % plan.decimated_length
            r2, c2 = (d2, w) if plan.axis == 0 else (w, d2)
            v2 = int(r2 * plan.shape2d[1] + c2)
        else:
            v2 = int((v + rng.integers(1, plan.N)) % plan.N)
        ratios.append(chord_isometry_ratio(chords, [v, v2], plan))
    r = np.asarray(ratios)
    return RipSummary(float(r.min()), float(r.max()), float(r.mean()), float(np.abs(r - 1.0).max()), int(num_chords))
