"""Experiment configuration: TOML documents validated up front.

See ``configs/reference.toml`` for a complete, commented example.  Every
problem is reported as :class:`ConfigurationError` with the dotted path
of the offending field, before anything is computed or written.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bloch import ParameterGrid, TissueParams, default_grid
from .errors import BlipError, ConfigurationError
from .phantom import TissueSpec, default_tissues
from .recon import ReconConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "load_config", "parse_config", "KINDS"]

KINDS = ("single_run", "scaling_study", "flatness")


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "concentric"
    dims: tuple = (64, 64)
    path: str | None = None
    tissues: tuple = field(default_factory=default_tissues)


@dataclass(frozen=True)
class ExcitationSpec:
    length: int = 200
    flip_std_deg: float = 10.0
    tr_ms: float = 10.0
    seed: int | None = None


@dataclass(frozen=True)
class SamplingSpec:
    p: int = 16
    axis: int = 0
    seed: int | None = None


@dataclass(frozen=True)
class StudySpec:
    factors: tuple = (4, 8)
    ratios: tuple | None = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)
    lengths: tuple | None = None
    trials: int = 1
    on_grid: bool = True


@dataclass(frozen=True)
class FlatnessSpec:
    lengths: tuple = (100, 200, 400, 800)
    num_chords: int = 5000


@dataclass(frozen=True)
class OutputSpec:
    dir: str | None = None
    figures: bool = True
    text_maps: bool = False
    save_kspace: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    phantom: PhantomSpec
    excitation: ExcitationSpec
    grid: ParameterGrid
    sampling: SamplingSpec
    recon: ReconConfig
    study: StudySpec
    flatness: FlatnessSpec
    output: OutputSpec

    def derived_seed(self, stream: int) -> int:
        return int(np.random.SeedSequence([self.seed, stream]).generate_state(1)[0])

    @property
    def excitation_seed(self) -> int:
        s = self.excitation.seed
        return self.derived_seed(1) if s is None else s

    @property
    def sampling_seed(self) -> int:
        s = self.sampling.seed
        return self.derived_seed(2) if s is None else s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        d["phantom"]["tissues"] = [
            {"label": t.label, "t1": t.params.t1, "t2": t.params.t2, "df": t.params.df, "rho": t.rho}
            for t in self.phantom.tissues
        ]
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output directory."""
        d = self.to_dict()
        d["output"].pop("dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=_int(seed, "seed", 0))


def _int(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigurationError(f"expected an integer, got {v!r}", path)
    if minimum is not None and v < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {v}", path)
    return int(v)


def _float(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"expected a number, got {v!r}", path)
    v = float(v)
    if not np.isfinite(v) or (positive and v <= 0):
        raise ConfigurationError(f"expected a {'positive ' if positive else ''}finite number, got {v}", path)
    return v


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigurationError(f"expected true or false, got {v!r}", path)
    return v


def _table(doc, key, allowed):
    t = doc.get(key, {})
    if not isinstance(t, dict):
        raise ConfigurationError("expected a table", key)
    unknown = sorted(set(t) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}", key)
    return t


def _int_list(v, path, minimum=1):
    if not isinstance(v, list) or not v:
        raise ConfigurationError("expected a non-empty list", path)
    return tuple(_int(x, f"{path}[{i}]", minimum) for i, x in enumerate(v))


def _parse_tissues(items, path):
    if not isinstance(items, list) or not items:
        raise ConfigurationError("expected a non-empty array of tables", path)
    out = []
    for i, t in enumerate(items):
        p = f"{path}[{i}]"
        if not isinstance(t, dict) or set(t) - {"label", "t1", "t2", "df", "rho"}:
            raise ConfigurationError("tissue entries take label, t1, t2, df, rho", p)
        try:
            params = TissueParams(_float(t.get("t1"), p + ".t1"), _float(t.get("t2"), p + ".t2"),
                                  _float(t.get("df", 0.0), p + ".df"))
            out.append(TissueSpec(_int(t.get("label"), p + ".label"), params, _float(t.get("rho"), p + ".rho")))
        except BlipError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc), p) from None
    if len({t.label for t in out}) != len(out):
        raise ConfigurationError("duplicate tissue labels", path)
    return tuple(out)


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed TOML document into an :class:`ExperimentConfig`."""
    top = {"kind", "seed", "phantom", "excitation", "dictionary", "sampling", "recon", "study", "flatness", "output"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}", unknown[0])
    kind = doc.get("kind", "single_run")
    if kind not in KINDS:
        raise ConfigurationError(f"must be one of {', '.join(KINDS)}", "kind")
    if "seed" not in doc:
        raise ConfigurationError("a master seed is required", "seed")
    seed = _int(doc["seed"], "seed", 0)

    t = _table(doc, "phantom", {"kind", "dims", "path", "tissues"})
    pkind = t.get("kind", "concentric")
    if pkind not in ("concentric", "blocks", "file"):
        raise ConfigurationError("must be concentric, blocks or file", "phantom.kind")
    dims = _int_list(t.get("dims", [64, 64]), "phantom.dims")
    if len(dims) > 2:
        raise ConfigurationError("only 1-D and 2-D grids are supported", "phantom.dims")
    path = t.get("path")
    if pkind == "file":
        if not isinstance(path, str):
            raise ConfigurationError("file phantoms need a path", "phantom.path")
        resolved = Path(path) if base_dir is None or Path(path).is_absolute() else base_dir / path
        if not resolved.is_file():
            raise ConfigurationError(f"no such file {str(resolved)!r}", "phantom.path")
        path = str(resolved)
    tissues = _parse_tissues(t["tissues"], "phantom.tissues") if "tissues" in t else default_tissues()
    phantom = PhantomSpec(pkind, dims, path, tissues)

    t = _table(doc, "excitation", {"length", "flip_std_deg", "tr_ms", "seed"})
    excitation = ExcitationSpec(
        _int(t.get("length", 200), "excitation.length", 1),
        _float(t.get("flip_std_deg", 10.0), "excitation.flip_std_deg", positive=True),
        _float(t.get("tr_ms", 10.0), "excitation.tr_ms", positive=True),
        _int(t["seed"], "excitation.seed", 0) if "seed" in t else None,
    )

    t = _table(doc, "dictionary", {"t1", "t2", "df"})
    default = default_grid().to_dict()
    try:
        grid = ParameterGrid.from_dict({k: t.get(k, default[k]) for k in ("t1", "t2", "df")})
        if grid.triples().shape[0] == 0:
            raise ConfigurationError("grid is empty after the t2 <= t1 filter")
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), "dictionary") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"segments must be [start, stop, step] lists ({exc})", "dictionary") from None

    t = _table(doc, "sampling", {"p", "axis", "seed"})
    sampling = SamplingSpec(
        _int(t.get("p", 16), "sampling.p", 1),
        _int(t.get("axis", 0), "sampling.axis", 0),
        _int(t["seed"], "sampling.seed", 0) if "seed" in t else None,
    )
    if sampling.axis >= len(dims):
        raise ConfigurationError(f"axis {sampling.axis} does not exist on a {len(dims)}-D grid", "sampling.axis")
    if pkind != "file" and dims[sampling.axis] % sampling.p:
        raise ConfigurationError(f"p = {sampling.p} does not divide grid axis {dims[sampling.axis]}", "sampling.p")

    t = _table(doc, "recon", {"max_iters", "stepsize", "halt_tol"})
    step = t.get("stepsize", "adaptive")
    if step == "adaptive":
        mode, mu = "adaptive", None
    elif step == "fixed":
        mode, mu = "fixed", None
    else:
        mode, mu = "fixed", _float(step, "recon.stepsize", positive=True)
    halt_tol = _float(t.get("halt_tol", 1e-6), "recon.halt_tol")
    if halt_tol < 0:
        raise ConfigurationError("must be >= 0", "recon.halt_tol")
    recon = ReconConfig(_int(t.get("max_iters", 300), "recon.max_iters", 1), mode, mu, halt_tol)

    t = _table(doc, "study", {"factors", "ratios", "lengths", "trials", "on_grid"})
    factors = _int_list(t.get("factors", [4, 8]), "study.factors")
    if "lengths" in t and "ratios" in t:
        raise ConfigurationError("give either lengths or ratios, not both", "study")
    lengths = _int_list(t["lengths"], "study.lengths") if "lengths" in t else None
    ratios = None
    if lengths is None:
        raw = t.get("ratios", [0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
        if not isinstance(raw, list) or not raw:
            raise ConfigurationError("expected a non-empty list", "study.ratios")
        ratios = tuple(_float(r, f"study.ratios[{i}]", positive=True) for i, r in enumerate(raw))
    if pkind != "file":
        for i, p in enumerate(factors):
            if dims[sampling.axis] % p:
                raise ConfigurationError(f"p = {p} does not divide grid axis {dims[sampling.axis]}",
                                         f"study.factors[{i}]")
    study = StudySpec(factors, ratios, lengths, _int(t.get("trials", 1), "study.trials", 1),
                      _bool(t.get("on_grid", True), "study.on_grid"))

    t = _table(doc, "flatness", {"lengths", "num_chords"})
    flat = FlatnessSpec(_int_list(t.get("lengths", [100, 200, 400, 800]), "flatness.lengths"),
                        _int(t.get("num_chords", 5000), "flatness.num_chords", 1))

    t = _table(doc, "output", {"dir", "figures", "text_maps", "save_kspace"})
    out_dir = t.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigurationError("expected a path string", "output.dir")
    output = OutputSpec(out_dir, _bool(t.get("figures", True), "output.figures"),
                        _bool(t.get("text_maps", False), "output.text_maps"),
                        _bool(t.get("save_kspace", False), "output.save_kspace"))

    return ExperimentConfig(kind, seed, phantom, excitation, grid, sampling, recon, study, flat, output)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {str(path)!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from None
    return parse_config(doc, path.parent)
