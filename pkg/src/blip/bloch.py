"""IR-SSFP magnetization responses and the discretized response dictionary.

Conventions
-----------
* Equilibrium magnetization is 1; every sequence starts from an ideal
  inversion (``mxy = 0``, ``mz = -1``).
* Pulses are instantaneous right-handed rotations about the x axis, with
  no RF phase cycling.
* The readout of frame ``t`` is the transverse magnetization at the echo
  time ``TE_t = TR_t / 2``.
* Times are in ms, off-resonance in Hz, flip angles in radians.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, SimulationError

logger = logging.getLogger(__name__)

__all__ = [
    "TissueParams",
    "ExcitationSequence",
    "MagnetizationState",
    "ParameterGrid",
    "BlochDictionary",
    "simulate_response",
    "simulate_responses",
    "simulate_trajectory",
    "scale_response",
    "build_dictionary",
    "default_grid",
    "random_excitation",
    "random_chords",
]

_TWO_PI_PER_MS = 2.0 * np.pi / 1000.0  # Hz * ms -> radians


@dataclass(frozen=True)
class TissueParams:
    """Bloch parameters of a single isochromat."""

    t1: float
    t2: float
    df: float = 0.0

    def __post_init__(self):
        for name in ("t1", "t2", "df"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.t1 <= 0 or self.t2 <= 0:
            raise DomainError(f"t1 and t2 must be positive, got t1={self.t1}, t2={self.t2}")

    def as_tuple(self):
        return (self.t1, self.t2, self.df)


def _readonly(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ExcitationSequence:
    """Flip angles (radians) and repetition times (ms) of length ``L``."""

    flip_angles: np.ndarray
    rep_times: np.ndarray

    def __post_init__(self):
        fa = _readonly(np.atleast_1d(self.flip_angles))
        tr = _readonly(np.atleast_1d(self.rep_times))
        if fa.ndim != 1 or tr.ndim != 1 or fa.shape != tr.shape:
            raise DomainError(
                f"flip_angles and rep_times must be 1-D of equal length, got {fa.shape} and {tr.shape}"
            )
        if fa.size < 1:
            raise DomainError("excitation sequence must have length >= 1")
        if not (np.all(np.isfinite(fa)) and np.all(np.isfinite(tr))):
            raise DomainError("excitation contains non-finite values")
        if np.any(tr <= 0):
            raise DomainError("rep_times must be strictly positive")
        object.__setattr__(self, "flip_angles", fa)
        object.__setattr__(self, "rep_times", tr)

    @classmethod
    def from_degrees(cls, flip_angles_deg, rep_times):
        return cls(np.deg2rad(np.asarray(flip_angles_deg, dtype=float)), rep_times)

    @property
    def length(self) -> int:
        return self.flip_angles.size

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, ExcitationSequence):
            return NotImplemented
        return np.array_equal(self.flip_angles, other.flip_angles) and np.array_equal(
            self.rep_times, other.rep_times
        )

    __hash__ = None

    def truncated(self, length: int) -> "ExcitationSequence":
        """First ``length`` pulses of the sequence."""
        if not 1 <= length <= self.length:
            raise DomainError(f"cannot truncate length {self.length} sequence to {length}")
        return ExcitationSequence(self.flip_angles[:length], self.rep_times[:length])

    def digest(self) -> str:
        """SHA-256 over the little-endian float64 bytes of both arrays."""
        h = hashlib.sha256()
        h.update(self.flip_angles.astype("<f8").tobytes())
        h.update(self.rep_times.astype("<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class MagnetizationState:
    """Complex transverse and real longitudinal magnetization."""

    mxy: complex
    mz: float

    def magnitude_sq(self) -> float:
        return abs(self.mxy) ** 2 + self.mz**2


def random_excitation(length: int, flip_std: float = 10.0, tr: float = 10.0, seed: int = 0):
    """I.i.d. zero-mean Gaussian flip angles with constant repetition time.

    Parameters
    ----------
    length : int
        Number of pulses ``L``.
    flip_std : float
        Standard deviation of the flip angles in degrees.
    tr : float
        Repetition time in ms, identical for every pulse.
    seed : int
        Seed of the generator; equal seeds give bit-identical sequences and a
        longer sequence extends a shorter one drawn with the same seed.
    """
    if int(length) != length or length < 1:
        raise DomainError(f"length must be a positive integer, got {length}")
    if not flip_std > 0:
        raise DomainError(f"flip_std must be positive, got {flip_std}")
    if not tr > 0:
        raise DomainError(f"tr must be positive, got {tr}")
    rng = np.random.default_rng(seed)
    flips = np.deg2rad(rng.normal(0.0, flip_std, size=int(length)))
    return ExcitationSequence(flips, np.full(int(length), float(tr)))


def _simulate(t1, t2, df, excitation, keep_states=False):
    """Vectorized IR-SSFP recursion over a batch of parameter triples."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    df = np.asarray(df, dtype=float)
    n_atoms = t1.shape[0]
    n_frames = excitation.length

    mxy = np.zeros(n_atoms, dtype=complex)
    mz = -np.ones(n_atoms)
    out = np.empty((n_atoms, n_frames), dtype=complex)
    states = [] if keep_states else None

    # overflow is detected below and reported with its time index
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n_frames):
            alpha = excitation.flip_angles[t]
            tr = excitation.rep_times[t]
            ca, sa = np.cos(alpha), np.sin(alpha)
            my = mxy.imag * ca - mz * sa
            mz = mxy.imag * sa + mz * ca
            mxy = mxy.real + 1j * my
            if keep_states:
                states.append((mxy.copy(), mz.copy()))

            te = 0.5 * tr
            out[:, t] = mxy * (np.exp(-te / t2) * np.exp(1j * _TWO_PI_PER_MS * df * te))

            mxy = mxy * (np.exp(-tr / t2) * np.exp(1j * _TWO_PI_PER_MS * df * tr))
            mz = 1.0 + (mz - 1.0) * np.exp(-tr / t1)

    bad = ~np.isfinite(out)
    if bad.any():
        t_bad = int(np.argwhere(bad)[:, 1].min())
        raise SimulationError(f"non-finite magnetization at time index {t_bad}", time_index=t_bad)
    return out, states


def simulate_response(theta: TissueParams, excitation: ExcitationSequence) -> np.ndarray:
    """Unit-density readout sequence ``B(theta; alpha, TR)`` of length ``L``."""
    out, _ = _simulate([theta.t1], [theta.t2], [theta.df], excitation)
    return out[0]


def simulate_responses(params, excitation: ExcitationSequence) -> np.ndarray:
    """Responses for a ``(P, 3)`` array of ``(t1, t2, df)`` rows, shape ``(P, L)``.

    Row ``k`` equals ``simulate_response`` of row ``k`` bit for bit.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[1] != 3:
        raise DomainError(f"expected (P, 3) parameter array, got {params.shape}")
    if np.any(params[:, :2] <= 0) or not np.all(np.isfinite(params)):
        raise DomainError("t1 and t2 must be positive and all parameters finite")
    out, _ = _simulate(params[:, 0], params[:, 1], params[:, 2], excitation)
    return out


def simulate_trajectory(theta: TissueParams, excitation: ExcitationSequence):
    """States immediately after each pulse (before relaxation)."""
    _, states = _simulate([theta.t1], [theta.t2], [theta.df], excitation, keep_states=True)
    return [MagnetizationState(complex(m[0]), float(z[0])) for m, z in states]


def scale_response(rho: float, response) -> np.ndarray:
    """Scale a response by a nonnegative proton density."""
    if not rho >= 0:
        raise DomainError(f"proton density must be nonnegative, got {rho}")
    return rho * np.asarray(response)


def _segments_to_values(segments, name):
    values = []
    for seg in segments:
        if len(seg) != 3:
            raise ConfigurationError(f"segment {seg!r} must be (start, stop, step)", field=name)
        start, stop, step = (float(v) for v in seg)
        if start == stop:
            values.append(np.array([start]))
            continue
        if step <= 0 or stop < start:
            raise ConfigurationError(f"invalid segment {seg!r}", field=name)
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        values.append(start + step * np.arange(n))
    if not values:
        raise ConfigurationError("axis has no segments", field=name)
    return np.unique(np.concatenate(values))


@dataclass(frozen=True)
class ParameterGrid:
    """Piecewise-uniform grid over ``(t1, t2, df)``.

    Each axis is a tuple of inclusive ``(start, stop, step)`` segments; a
    segment with ``start == stop`` contributes a single value.
    """

    t1: tuple
    t2: tuple
    df: tuple = ((0.0, 0.0, 1.0),)

    def __post_init__(self):
        for name in ("t1", "t2", "df"):
            segs = tuple(tuple(float(v) for v in s) for s in getattr(self, name))
            object.__setattr__(self, name, segs)
            _segments_to_values(segs, name)

    def axis_values(self, name):
        return _segments_to_values(getattr(self, name), name)

    def triples(self):
        """Feasible ``(t1, t2, df)`` rows in lexicographic order."""
        t1 = self.axis_values("t1")
        t2 = self.axis_values("t2")
        df = self.axis_values("df")
        if t1.min() <= 0 or t2.min() <= 0:
            raise ConfigurationError("t1 and t2 grid values must be positive")
        g1, g2, g3 = np.meshgrid(t1, t2, df, indexing="ij")
        rows = np.column_stack([g1.ravel(), g2.ravel(), g3.ravel()])
        feasible = rows[:, 1] <= rows[:, 0]
        dropped = int((~feasible).sum())
        if dropped:
            logger.info("dropped %d grid points with t2 > t1", dropped)
        return rows[feasible]

    def to_dict(self):
        return {k: [list(s) for s in getattr(self, k)] for k in ("t1", "t2", "df")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(tuple(s) for s in d[k]) for k in ("t1", "t2", "df") if k in d})


def default_grid() -> ParameterGrid:
    """Default 3379-point grid (df fixed at 0)."""
    return ParameterGrid(
        t1=((100, 2000, 20), (2200, 4900, 300)),
        t2=((20, 100, 5), (110, 200, 10), (300, 2900, 200)),
        df=((0, 0, 1),),
    )


def _row_norms(atoms):
    return np.sqrt((atoms.real * atoms.real + atoms.imag * atoms.imag).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class BlochDictionary:
    """Discretized Bloch response manifold with its look-up table.

    ``lut[k]`` holds the ``(t1, t2, df)`` triple that generated ``atoms[k]``.
    Instances are immutable; the split real/imaginary copies used by the
    matched filter are cached at construction.
    """

    atoms: np.ndarray
    atom_norms: np.ndarray
    lut: np.ndarray
    excitation: ExcitationSequence
    grid: ParameterGrid | None = None
    _re: np.ndarray = field(init=False, repr=False)
    _im: np.ndarray = field(init=False, repr=False)
    _norm_sq: np.ndarray = field(init=False, repr=False)
    _screen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        atoms = _readonly(self.atoms, dtype=complex)
        norms = _readonly(self.atom_norms)
        lut = _readonly(self.lut)
        if atoms.ndim != 2:
            raise ConfigurationError(f"atoms must be 2-D, got shape {atoms.shape}")
        n_atoms, n_frames = atoms.shape
        if n_atoms < 1:
            raise ConfigurationError("dictionary must contain at least one atom")
        if n_frames != self.excitation.length:
            raise ConfigurationError(
                f"atom length {n_frames} does not match excitation length {self.excitation.length}"
            )
        if norms.shape != (n_atoms,) or lut.shape != (n_atoms, 3):
            raise ConfigurationError("atom_norms / lut shapes do not match the atom count")
        if np.any(norms <= 0):
            raise ConfigurationError(f"dictionary has {int((norms <= 0).sum())} zero atoms")
        if len(np.unique(lut, axis=0)) != n_atoms:
            raise ConfigurationError("lut contains duplicate parameter triples")

        re = np.ascontiguousarray(atoms.real)
        im = np.ascontiguousarray(atoms.imag)
        screen = np.ascontiguousarray(np.concatenate([re, im], axis=1).T / norms)
        for name, value in (("atoms", atoms), ("atom_norms", norms), ("lut", lut)):
            object.__setattr__(self, name, value)
        for name, value in (("_re", re), ("_im", im), ("_norm_sq", norms * norms), ("_screen", screen)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_atoms(cls, atoms, lut, excitation, grid=None):
        atoms = np.asarray(atoms, dtype=complex)
        return cls(atoms, _row_norms(atoms), lut, excitation, grid)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def length(self) -> int:
        return self.atoms.shape[1]

    def params(self, k: int) -> TissueParams:
        t1, t2, df = self.lut[k]
        return TissueParams(t1, t2, df)


def build_dictionary(grid: ParameterGrid, excitation: ExcitationSequence) -> BlochDictionary:
    """Simulate one atom per feasible grid point, in lexicographic ``(t1, t2, df)`` order."""
    rows = grid.triples()
    if rows.shape[0] == 0:
        raise ConfigurationError("parameter grid is empty after the t2 <= t1 filter")
    atoms = simulate_responses(rows, excitation)
    return BlochDictionary.from_atoms(atoms, rows, excitation, grid)


def random_chords(dictionary: BlochDictionary, n: int, rng, ray_fraction: float = 0.1):
    """Sample ``n`` chords ``rho1 * D[k1] - rho2 * D[k2]`` of the dictionary cone.

    Scales are uniform on (0, 1]; a fraction ``ray_fraction`` of the chords
    are single-atom rays (``rho2 = 0``).  Chords that cancel to (near) zero
    are returned as well; callers decide how to treat them.

    Returns
    -------
    chords : ndarray, shape (n, L)
    scale : ndarray, shape (n,)
        ``rho1 * |D[k1]| + rho2 * |D[k2]|``, the reference for "near zero".
    """
    k1 = rng.integers(0, dictionary.size, size=n)
    k2 = rng.integers(0, dictionary.size, size=n)
    rho1 = 1.0 - rng.random(n)
    rho2 = 1.0 - rng.random(n)
    rho2[rng.random(n) < ray_fraction] = 0.0
    chords = rho1[:, None] * dictionary.atoms[k1] - rho2[:, None] * dictionary.atoms[k2]
    scale = rho1 * dictionary.atom_norms[k1] + rho2 * dictionary.atom_norms[k2]
    return chords, scale


def grid_to_json(grid: ParameterGrid | None) -> str:
    return json.dumps(grid.to_dict() if grid is not None else None, sort_keys=True)
