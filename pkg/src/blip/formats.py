"""Readers and writers for dictionaries, maps, k-space data, plans and phantoms.

All binary numbers are little-endian; floats are IEEE float64, so every
round trip is bit-exact.  Byte layouts are documented in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .bloch import BlochDictionary, ExcitationSequence, ParameterGrid, TissueParams
from .errors import IngestionError
from .phantom import PhantomDefinition, TissueSpec
from .projection import ParameterMaps
from .sampling import KSpaceData, SamplingPlan

__all__ = [
    "write_dictionary",
    "read_dictionary",
    "write_maps",
    "read_maps",
    "write_maps_text",
    "read_maps_text",
    "write_kspace",
    "read_kspace",
    "write_plan_text",
    "read_plan_text",
    "write_phantom",
    "read_phantom",
    "write_table",
    "read_table",
    "write_trace",
]

_VERSION = 1
MAP_UNITS = {"rho": "a.u.", "t1": "ms", "t2": "ms", "df": "Hz"}


def _f8(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _interleave(z):
    z = np.ascontiguousarray(z, dtype=complex)
    out = np.empty(z.shape + (2,), dtype="<f8")
    out[..., 0] = z.real
    out[..., 1] = z.imag
    return out.tobytes()


def _deinterleave(buf, shape):
    a = np.frombuffer(buf, dtype="<f8").reshape(shape + (2,))
    return a[..., 0] + 1j * a[..., 1]


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n):
        if self.pos + n > len(self.data):
            raise IngestionError(f"truncated {self.what} file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)

    def json(self):
        (n,) = self.unpack("<I")
        return json.loads(self.take(n).decode("utf-8"))

    def done(self):
        if self.pos != len(self.data):
            raise IngestionError(f"{len(self.data) - self.pos} trailing bytes in {self.what} file")


def _magic(reader, magic):
    if reader.take(8) != magic:
        raise IngestionError(f"not a {reader.what} file (bad magic)")
    (version,) = reader.unpack("<I")
    if version != _VERSION:
        raise IngestionError(f"unsupported {reader.what} version {version}")


def _json_bytes(obj):
    raw = json.dumps(obj, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


# -- dictionary -----------------------------------------------------------

def write_dictionary(path, dictionary: BlochDictionary, config_hash: str | None = None):
    """Layout: magic ``BLIPDICT``, u32 version, u64 P, u64 L, 32-byte
    SHA-256 of the excitation, u32 + JSON header (grid spec and
    config_sha256), then atoms (P*L
    interleaved re/im, row-major), norms (P), LUT (P*3), flip angles (L),
    repetition times (L)."""
    exc = dictionary.excitation
    with open(path, "wb") as fh:
        fh.write(b"BLIPDICT")
        fh.write(struct.pack("<IQQ", _VERSION, dictionary.size, dictionary.length))
        fh.write(bytes.fromhex(exc.digest()))
        grid = dictionary.grid.to_dict() if dictionary.grid is not None else None
        fh.write(_json_bytes({"grid": grid, "config_sha256": config_hash}))
        fh.write(_interleave(dictionary.atoms))
        fh.write(_f8(dictionary.atom_norms))
        fh.write(_f8(dictionary.lut))
        fh.write(_f8(exc.flip_angles))
        fh.write(_f8(exc.rep_times))


def read_dictionary(path) -> BlochDictionary:
    r = _Reader(Path(path).read_bytes(), "dictionary")
    _magic(r, b"BLIPDICT")
    n_atoms, n_frames = r.unpack("<QQ")
    digest = r.take(32).hex()
    grid = r.json().get("grid")
    atoms = _deinterleave(r.take(16 * n_atoms * n_frames), (n_atoms, n_frames))
    norms = r.floats(n_atoms)
    lut = r.floats(3 * n_atoms).reshape(n_atoms, 3)
    exc = ExcitationSequence(r.floats(n_frames), r.floats(n_frames))
    r.done()
    if exc.digest() != digest:
        raise IngestionError("excitation hash mismatch")
    return BlochDictionary(atoms, norms, lut, exc, ParameterGrid.from_dict(grid) if grid else None)


# -- parameter maps --------------------------------------------------------

def write_maps(path, maps: ParameterMaps, config_hash: str | None = None):
    """Layout: magic ``BLIPMAPS``, u32 version, u32 + JSON header
    (grid_dims, fields, units, has_atom_index, config_sha256), then each of
    rho, t1, t2, df as N float64, then N int64 atom indices if present."""
    header = {
        "grid_dims": list(maps.grid_dims),
        "fields": ["rho", "t1", "t2", "df"],
        "units": MAP_UNITS,
        "has_atom_index": maps.atom_index is not None,
        "config_sha256": config_hash,
    }
    with open(path, "wb") as fh:
        fh.write(b"BLIPMAPS" + struct.pack("<I", _VERSION))
        fh.write(_json_bytes(header))
        for name in ("rho", "t1", "t2", "df"):
            fh.write(_f8(getattr(maps, name)))
        if maps.atom_index is not None:
            fh.write(np.ascontiguousarray(maps.atom_index, dtype="<i8").tobytes())


def read_maps(path) -> ParameterMaps:
    r = _Reader(Path(path).read_bytes(), "maps")
    _magic(r, b"BLIPMAPS")
    header = r.json()
    dims = tuple(header["grid_dims"])
    n = int(np.prod(dims))
    fields = {name: r.floats(n) for name in header["fields"]}
    idx = np.frombuffer(r.take(8 * n), dtype="<i8").astype(np.intp) if header["has_atom_index"] else None
    r.done()
    return ParameterMaps(fields["rho"], fields["t1"], fields["t2"], fields["df"], dims, atom_index=idx)


def write_maps_text(path, maps: ParameterMaps, config_hash: str | None = None):
    """Human-readable maps: one ``[name] unit`` block per parameter, one
    grid row per line, values printed with 17 significant digits."""
    dims = maps.grid_dims
    rows = dims[0] if len(dims) > 1 else 1
    lines = ["# blip parameter maps v1", "grid_dims " + " ".join(map(str, dims))]
    if config_hash:
        lines.append(f"config_sha256 {config_hash}")
    for name in ("rho", "t1", "t2", "df"):
        lines.append(f"[{name}] {MAP_UNITS[name]}")
        for row in getattr(maps, name).reshape(rows, -1):
            lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_maps_text(path) -> ParameterMaps:
    dims, current, data = None, None, {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("grid_dims"):
            dims = tuple(int(v) for v in line.split()[1:])
        elif line.startswith("config_sha256"):
            continue
        elif line.startswith("["):
            current = line[1:line.index("]")]
            data[current] = []
        elif current is None:
            raise IngestionError(f"unexpected line {raw!r}")
        else:
            data[current].extend(float(v) for v in line.split())
    if dims is None or set(data) != {"rho", "t1", "t2", "df"}:
        raise IngestionError("maps text file is missing grid_dims or a parameter block")
    return ParameterMaps(data["rho"], data["t1"], data["t2"], data["df"], dims)


# -- k-space and plans -----------------------------------------------------

def _plan_header(plan: SamplingPlan):
    return {
        "p": plan.p,
        "L": plan.L,
        "M": plan.M,
        "grid_dims": list(plan.grid_dims),
        "axis": plan.axis,
        "seed": plan.seed,
        "shifts": plan.shifts.tolist(),
    }


def write_kspace(path, y: KSpaceData, config_hash: str | None = None):
    """Layout: magic ``BLIPKSPC``, u32 version, u32 + JSON plan header,
    then the samples frame by frame (column-major), each as M interleaved
    re/im float64 pairs."""
    header = _plan_header(y.plan)
    header["config_sha256"] = config_hash
    with open(path, "wb") as fh:
        fh.write(b"BLIPKSPC" + struct.pack("<I", _VERSION))
        fh.write(_json_bytes(header))
        fh.write(_interleave(y.samples.T))


def read_kspace(path) -> KSpaceData:
    r = _Reader(Path(path).read_bytes(), "k-space")
    _magic(r, b"BLIPKSPC")
    h = r.json()
    plan = SamplingPlan(h["p"], h["shifts"], tuple(h["grid_dims"]), h["axis"], h["seed"])
    samples = _deinterleave(r.take(16 * plan.M * plan.L), (plan.L, plan.M)).T
    r.done()
    return KSpaceData(np.ascontiguousarray(samples), plan)


def write_plan_text(path, plan: SamplingPlan, config_hash: str | None = None):
    lines = ["# blip sampling plan v1"]
    if config_hash:
        lines.append(f"# config_sha256 {config_hash}")
    lines += [
        f"p = {plan.p}",
        f"L = {plan.L}",
        "grid_dims = " + " ".join(map(str, plan.grid_dims)),
        f"axis = {plan.axis}",
        f"seed = {'none' if plan.seed is None else plan.seed}",
        "shifts = " + " ".join(map(str, plan.shifts.tolist())),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan_text(path) -> SamplingPlan:
    fields = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise IngestionError(f"malformed plan line {raw!r}")
        fields[key.strip()] = value.strip()
    try:
        seed = None if fields["seed"] == "none" else int(fields["seed"])
        shifts = [int(v) for v in fields["shifts"].split()]
        plan = SamplingPlan(
            int(fields["p"]), shifts, tuple(int(v) for v in fields["grid_dims"].split()), int(fields["axis"]), seed
        )
    except KeyError as exc:
        raise IngestionError(f"plan file is missing {exc.args[0]!r}") from None
    if plan.L != int(fields["L"]):
        raise IngestionError("shift count does not match L")
    return plan


# -- phantoms --------------------------------------------------------------

def write_phantom(path, phantom: PhantomDefinition, config_hash: str | None = None):
    """Text label map::

        # blip phantom v1
        dims <d0> [<d1>]
        tissue <label> <t1 ms> <t2 ms> <df Hz> <rho>
        ...
        labels
        <one grid row of integer labels per line>
    """
    lines = ["# blip phantom v1"]
    if config_hash:
        lines.append(f"# config_sha256 {config_hash}")
    lines += ["dims " + " ".join(map(str, phantom.grid_dims))]
    for t in phantom.tissues:
        t1, t2, df = t.params.as_tuple()
        lines.append(f"tissue {t.label} {t1:.17g} {t2:.17g} {df:.17g} {t.rho:.17g}")
    lines.append("labels")
    rows = phantom.grid_dims[0] if len(phantom.grid_dims) > 1 else 1
    for row in phantom.label_map.reshape(rows, -1):
        lines.append(" ".join(map(str, row.tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def read_phantom(path) -> PhantomDefinition:
    dims, tissues, labels, in_labels = None, [], [], False
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if in_labels:
                labels.extend(int(v) for v in parts)
            elif parts[0] == "dims":
                dims = tuple(int(v) for v in parts[1:])
            elif parts[0] == "tissue":
                label, t1, t2, df, rho = parts[1:]
                tissues.append(TissueSpec(int(label), TissueParams(float(t1), float(t2), float(df)), float(rho)))
            elif parts[0] == "labels":
                in_labels = True
            else:
                raise IngestionError(f"line {n}: unexpected {raw!r}")
        except ValueError as exc:
            if isinstance(exc, IngestionError):
                raise
            raise IngestionError(f"line {n}: {exc}") from None
    if dims is None or not tissues:
        raise IngestionError("phantom file needs a dims line and at least one tissue")
    if len(labels) != int(np.prod(dims)):
        raise IngestionError(f"expected {int(np.prod(dims))} labels, found {len(labels)}")
    known = {t.label for t in tissues}
    for v in labels:
        if v not in known:
            raise IngestionError(f"unknown label {v} in label map")
    return PhantomDefinition(dims, np.array(labels).reshape(dims), tuple(tissues))


# -- delimited tables ------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, header, rows, config_hash: str | None = None):
    """CSV with an optional ``# config_sha256 <hash>`` first line."""
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_sha256 {config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_table(path):
    """Return ``(header, rows)`` with cells as strings; comment lines skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_trace(path, trace, config_hash: str | None = None):
    write_table(
        path,
        ["iteration", "residual", "stepsize", "ser_db"],
        [(r.iteration, r.residual, r.stepsize, r.ser_db) for r in trace],
        config_hash,
    )


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
