"""Command line entry point.

::

    blip run        --config exp.toml --out results/     # kind taken from the config
    blip study      --config exp.toml --out results/
    blip flatness   --config exp.toml --out results/
    blip dict-build --config exp.toml --out results/
    blip phantom-gen --config exp.toml --out results/

The whole configuration is validated, and the phantom resolved, before the
output directory is created.  Exit status is 0 on success, 1 for usage or
configuration errors and 2 when the computation itself fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import formats
from .analysis import flatness, map_errors, scaling_study, ser_db
from .bloch import build_dictionary, random_excitation
from .config import ExperimentConfig, load_config
from .errors import BlipError, ConfigurationError, IngestionError
from .phantom import ground_truth_sequence, synth_phantom
from .recon import blip, mrf_baseline
from .sampling import forward, make_plan

logger = logging.getLogger("blip")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

# stream ids for seeds derived from the master seed
_PHANTOM_STREAM = 0
_FLATNESS_STREAM = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blip", description="Compressed quantitative MRI experiments.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    helps = {
        "run": "run the experiment kind named in the config",
        "study": "L / p^2 scaling study",
        "flatness": "chord flatness against sequence length",
        "dict-build": "build and save the dictionary",
        "phantom-gen": "write the phantom label map",
    }
    for verb, text in helps.items():
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, help="cap BLAS / OpenMP threads")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures and rasters")
        p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    return parser


# -- shared pieces ----------------------------------------------------------

def _phantom(cfg: ExperimentConfig):
    ph = cfg.phantom
    return synth_phantom(ph.kind, ph.dims, ph.tissues, cfg.derived_seed(_PHANTOM_STREAM), ph.path)


def _check_phantom(cfg, phantom):
    # file phantoms are only known after reading, so re-check the grid fit
    dims = phantom.grid_dims
    axis = cfg.sampling.axis
    if axis >= len(dims):
        raise ConfigurationError(f"axis {axis} does not exist on a {len(dims)}-D grid", "sampling.axis")
    factors = (cfg.sampling.p,) + tuple(cfg.study.factors)
    for p in factors:
        if dims[axis] % p:
            raise ConfigurationError(f"p = {p} does not divide grid axis {dims[axis]}", "sampling.p")


def _excitation(cfg, length=None, seed=None):
    e = cfg.excitation
    return random_excitation(length or e.length, e.flip_std_deg, e.tr_ms, cfg.excitation_seed if seed is None else seed)


def _write_config(out, cfg, digest):
    doc = {"config_sha256": digest, "config": cfg.to_dict()}
    (out / "config.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _error_rows(name, ser, errors):
    row = [name, ser]
    for key in ("rho", "t1", "t2", "df"):
        s = errors[key]
        row += [s.median, s.mean, s.max]
    return row


_SUMMARY_HEADER = ["method", "ser_db"] + [
    f"{k}_{s}" for k in ("rho", "t1", "t2", "df") for s in ("median", "mean", "max")
]


# -- pipelines ----------------------------------------------------------------

def run_single(cfg, out, figures, phantom):
    digest = cfg.digest()
    exc = _excitation(cfg)
    dictionary = build_dictionary(cfg.grid, exc)
    x, truth = ground_truth_sequence(phantom, exc)
    plan = make_plan(cfg.sampling.p, exc.length, phantom.grid_dims, cfg.sampling_seed, cfg.sampling.axis)
    y = forward(x, plan)
    logger.info("N=%d L=%d p=%d M=%d P=%d", plan.N, plan.L, plan.p, plan.M, dictionary.size)

    x_mrf, mrf_maps = mrf_baseline(y, dictionary, plan)
    x_blip, blip_maps, trace = blip(y, dictionary, plan, cfg.recon, ground_truth=x)
    ser_mrf, ser_blip = ser_db(x, x_mrf), ser_db(x, x_blip)
    logger.info("SER: MRF %.2f dB, BLIP %.2f dB after %d iterations", ser_mrf, ser_blip, len(trace))

    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, cfg, digest)
    for name, maps in (("truth", truth), ("mrf", mrf_maps), ("blip", blip_maps)):
        formats.write_maps(out / f"maps_{name}.bin", maps, digest)
        if cfg.output.text_maps:
            formats.write_maps_text(out / f"maps_{name}.txt", maps, digest)
    formats.write_plan_text(out / "plan.txt", plan, digest)
    if cfg.output.save_kspace:
        formats.write_kspace(out / "kspace.bin", y, digest)
    formats.write_trace(out / "trace.csv", trace, digest)
    rows = [
        _error_rows("mrf", ser_mrf, map_errors(truth, mrf_maps)),
        _error_rows("blip", ser_blip, map_errors(truth, blip_maps)),
    ]
    formats.write_table(out / "summary.csv", _SUMMARY_HEADER, rows, digest)

    if figures:
        from . import plotting

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        plotting.map_comparison(truth, mrf_maps, blip_maps, fig_dir / "maps.png", digest)
        plotting.convergence_plot(trace, fig_dir / "convergence.png", digest)
        for name, maps in (("truth", truth), ("mrf", mrf_maps), ("blip", blip_maps)):
            plotting.export_rasters(maps, fig_dir / "rasters", name, digest)
    return {"ser_mrf_db": ser_mrf, "ser_blip_db": ser_blip, "iterations": len(trace)}


def run_study(cfg, out, figures, phantom):
    digest = cfg.digest()
    s = cfg.study
    e = cfg.excitation

    def progress(row):
        logger.info("L=%d p=%d L/p^2=%.3g SER=%.2f dB", row.L, row.p, row.ratio, row.mean_ser_db)

    result = scaling_study(
        s.lengths, s.factors, phantom, trials=s.trials, seed=cfg.seed, grid=cfg.grid, recon=cfg.recon,
        flip_std=e.flip_std_deg, tr=e.tr_ms, axis=cfg.sampling.axis, on_grid=s.on_grid,
        progress=progress, ratios=s.ratios,
    )
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, cfg, digest)
    formats.write_table(
        out / "study.csv",
        ["L", "p", "L_over_p2", "mean_ser_db", "trials", "failed"],
        [(r.L, r.p, r.ratio, r.mean_ser_db, r.trials, r.failed) for r in result.rows],
        digest,
    )
    formats.write_table(
        out / "transitions.csv",
        ["p", "transition_L_over_p2"],
        [(p, v) for p, v in result.transitions.items()],
        digest,
    )
    if figures:
        from . import plotting

        plotting.scaling_plot(result.rows, out / "scaling.png", digest)
    return {"transitions": result.transitions}


def run_flatness(cfg, out, figures, phantom=None):
    digest = cfg.digest()
    reports = []
    for L in cfg.flatness.lengths:
        seeds = np.random.SeedSequence([cfg.seed, _FLATNESS_STREAM, L]).generate_state(2)
        exc = _excitation(cfg, L, int(seeds[0]))
        rep = flatness(build_dictionary(cfg.grid, exc), cfg.flatness.num_chords, int(seeds[1]))
        logger.info("L=%d lambda=%.4g lambda^-2/L=%.4g", L, rep.lam, rep.lambda_inv_sq_over_L)
        reports.append(rep)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, cfg, digest)
    formats.write_table(
        out / "flatness.csv",
        ["L", "lambda", "lambda_inv_sq_over_L", "num_chords", "seed"],
        [(r.L, r.lam, r.lambda_inv_sq_over_L, r.num_chords, r.seed) for r in reports],
        digest,
    )
    if figures:
        from . import plotting

        plotting.flatness_plot(reports, out / "flatness.png", digest)
    ratios = [r.lambda_inv_sq_over_L for r in reports]
    return {"spread": max(ratios) / min(ratios)}


def run_dict_build(cfg, out, figures, phantom=None):
    digest = cfg.digest()
    dictionary = build_dictionary(cfg.grid, _excitation(cfg))
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, cfg, digest)
    formats.write_dictionary(out / "dictionary.bdict", dictionary, digest)
    return {"atoms": dictionary.size}


def run_phantom_gen(cfg, out, figures, phantom):
    digest = cfg.digest()
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, cfg, digest)
    formats.write_phantom(out / "phantom.txt", phantom, digest)
    if figures:
        from . import plotting
        from .projection import ParameterMaps

        lookup = {t.label: t for t in phantom.tissues}
        ts = [lookup[v] for v in phantom.label_map.ravel()]
        maps = ParameterMaps(
            [t.rho for t in ts], [t.params.t1 for t in ts], [t.params.t2 for t in ts],
            [t.params.df for t in ts], phantom.grid_dims,
        )
        plotting.export_rasters(maps, out / "rasters", "phantom", digest)
    return {"voxels": phantom.N}


_KIND_PIPELINES = {"single_run": run_single, "scaling_study": run_study, "flatness": run_flatness}
_VERB_PIPELINES = {
    "study": run_study,
    "flatness": run_flatness,
    "dict-build": run_dict_build,
    "phantom-gen": run_phantom_gen,
}


def prepare(args):
    """Validate everything that can be validated without computing."""
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("must be >= 0", "seed")
        cfg = cfg.with_seed(args.seed)
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    out = args.out
    if out is None:
        if cfg.output.dir is None:
            raise UsageError("no output directory: pass --out or set output.dir")
        out = Path(cfg.output.dir)
        if not out.is_absolute():
            out = args.config.parent / out
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {str(out)!r} is not a directory")
    needs_phantom = args.verb in ("phantom-gen", "study") or (args.verb == "run" and cfg.kind != "flatness")
    phantom = None
    if needs_phantom:
        phantom = _phantom(cfg)
        _check_phantom(cfg, phantom)
    figures = cfg.output.figures and not args.no_figures
    pipeline = _KIND_PIPELINES[cfg.kind] if args.verb == "run" else _VERB_PIPELINES[args.verb]
    return cfg, out, figures, phantom, pipeline


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg, out, figures, phantom, pipeline = prepare(args)
    except (ConfigurationError, IngestionError, UsageError) as exc:
        print(f"blip: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=args.threads):
            info = pipeline(cfg, out, figures, phantom)
    except (BlipError, OSError) as exc:
        print(f"blip: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps({"out": str(out), "config_sha256": cfg.digest(), **info}, default=str, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
