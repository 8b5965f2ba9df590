import json
import struct
from pathlib import Path

import numpy as np
import pytest

from blip.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from blip.formats import file_sha256, read_dictionary, read_maps, read_phantom, read_plan_text, read_table

SMALL = """
kind = "{kind}"
seed = 3

[phantom]
kind = "concentric"
dims = [16, 16]

[excitation]
length = 20
{excitation_extra}

[dictionary]
t1 = [[200, 2000, 200]]
t2 = [[20, 200, 20]]

[sampling]
p = 4

[recon]
max_iters = 25

[study]
factors = [1]
lengths = [50]

[flatness]
lengths = [10, 20]
num_chords = 200

[output]
text_maps = true
save_kspace = true
{output_extra}
"""


def write_config(tmp_path, kind="single_run", excitation_extra="", output_extra="", name="c.toml"):
    path = tmp_path / name
    path.write_text(SMALL.format(kind=kind, excitation_extra=excitation_extra, output_extra=output_extra))
    return path


def run(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out


def test_single_run_writes_stamped_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    code, io = run(capsys, "run", "--config", cfg, "--out", out)
    assert code == EXIT_OK, io.err
    info = json.loads(io.out.strip().splitlines()[-1])
    digest = info["config_sha256"]
    assert info["out"] == str(out)
    expected = ["config.json", "maps_truth.bin", "maps_mrf.bin", "maps_blip.bin", "maps_blip.txt", "plan.txt",
                "kspace.bin", "trace.csv", "summary.csv", "figures/maps.png", "figures/convergence.png"]
    for name in expected:
        assert (out / name).is_file(), name
    assert json.loads((out / "config.json").read_text())["config_sha256"] == digest
    for name in ["plan.txt", "trace.csv", "summary.csv", "maps_blip.txt"]:
        assert digest in (out / name).read_text(), name
    for name in ["maps_blip.bin", "kspace.bin"]:
        assert digest.encode() in (out / name).read_bytes(), name
    assert f"config_sha256 {digest}".encode() in (out / "figures" / "maps.png").read_bytes()
    assert any((out / "figures" / "rasters").glob("*.png"))

    header, rows = read_table(out / "summary.csv")
    assert header[:2] == ["method", "ser_db"]
    sers = {r[0]: float(r[1]) for r in rows}
    assert sers["blip"] > sers["mrf"]
    maps = read_maps(out / "maps_blip.bin")
    assert maps.grid_dims == (16, 16)
    assert read_plan_text(out / "plan.txt").p == 4


def test_no_figures_flag_keeps_the_digest(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code, io = run(capsys, "run", "--config", cfg, "--out", tmp_path / "a", "--no-figures")
    assert code == EXIT_OK
    assert not (tmp_path / "a" / "figures").exists()
    code2, io2 = run(capsys, "run", "--config", cfg, "--out", tmp_path / "b")
    assert json.loads(io.out)["config_sha256"] == json.loads(io2.out)["config_sha256"]


def test_reruns_are_byte_identical_across_thread_counts(tmp_path, capsys):
    cfg = write_config(tmp_path)
    for name, threads in (("one", 1), ("two", 2), ("again", 1)):
        code, io = run(capsys, "run", "--config", cfg, "--out", tmp_path / name, "--threads", threads)
        assert code == EXIT_OK, io.err
    files = sorted(p.relative_to(tmp_path / "one") for p in (tmp_path / "one").rglob("*") if p.is_file())
    for rel in files:
        h = file_sha256(tmp_path / "one" / rel)
        assert h == file_sha256(tmp_path / "two" / rel), rel
        assert h == file_sha256(tmp_path / "again" / rel), rel


def test_seed_override_changes_the_digest(tmp_path, capsys):
    cfg = write_config(tmp_path)
    _, a = run(capsys, "phantom-gen", "--config", cfg, "--out", tmp_path / "a")
    _, b = run(capsys, "phantom-gen", "--config", cfg, "--out", tmp_path / "b", "--seed", 99)
    assert json.loads(a.out)["config_sha256"] != json.loads(b.out)["config_sha256"]


@pytest.mark.parametrize(
    "text",
    ['seed = 1\nbogus = 2\n', 'seed = 1\n[sampling]\np = 3\n[phantom]\ndims = [16, 16]\n', 'kind = "single_run"\n',
     'seed = = 1\n'],
)
def test_malformed_configs_exit_1_without_output(tmp_path, capsys, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    code, io = run(capsys, "run", "--config", cfg, "--out", tmp_path / "out")
    assert code == EXIT_USAGE
    assert "configuration error" in io.err
    assert not (tmp_path / "out").exists()


def test_usage_errors_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(capsys, "run", "--config", cfg, "--out", tmp_path / "o", "--threads", 0)[0] == EXIT_USAGE
    assert run(capsys, "run", "--config", cfg)[0] == EXIT_USAGE  # no output directory anywhere
    assert run(capsys, "run", "--config", cfg, "--out", tmp_path / "o", "--seed", -4)[0] == EXIT_USAGE
    assert run(capsys, "frobnicate", "--config", cfg)[0] == EXIT_USAGE
    assert run(capsys, "run")[0] == EXIT_USAGE
    assert run(capsys, "run", "--config", tmp_path / "missing.toml", "--out", tmp_path / "o")[0] == EXIT_USAGE
    (tmp_path / "afile").write_text("")
    assert run(capsys, "run", "--config", cfg, "--out", tmp_path / "afile")[0] == EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_file_phantom_that_does_not_fit_p_exits_1(tmp_path, capsys):
    (tmp_path / "ph.txt").write_text("dims 6\ntissue 0 800 60 0 1\nlabels\n0 0 0 0 0 0\n")
    (tmp_path / "c.toml").write_text('seed = 1\n[phantom]\nkind = "file"\npath = "ph.txt"\n[sampling]\np = 4\n')
    code, _ = run(capsys, "run", "--config", tmp_path / "c.toml", "--out", tmp_path / "o")
    assert code == EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_runtime_failures_exit_2(tmp_path, capsys):
    # a valid but absurd repetition time relaxes every atom to exactly zero
    text = SMALL.format(kind="single_run", excitation_extra="tr_ms = 1e306", output_extra="")
    (tmp_path / "c.toml").write_text(text)
    code, io = run(capsys, "run", "--config", tmp_path / "c.toml", "--out", tmp_path / "o")
    assert code == EXIT_FAILURE
    assert "zero atoms" in io.err

    (tmp_path / "plain").write_text("")
    cfg = write_config(tmp_path)
    code, io = run(capsys, "dict-build", "--config", cfg, "--out", tmp_path / "plain" / "sub")
    assert code == EXIT_FAILURE


def test_output_dir_from_config_is_relative_to_the_config(tmp_path, capsys):
    (tmp_path / "cfgs").mkdir()
    cfg = write_config(tmp_path / "cfgs", output_extra='dir = "../results/x"')
    code, io = run(capsys, "phantom-gen", "--config", cfg)
    assert code == EXIT_OK
    assert (tmp_path / "results" / "x" / "phantom.txt").is_file()


def test_study_at_full_sampling(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="scaling_study")
    code, io = run(capsys, "study", "--config", cfg, "--out", tmp_path / "s")
    assert code == EXIT_OK, io.err
    header, rows = read_table(tmp_path / "s" / "study.csv")
    assert header == ["L", "p", "L_over_p2", "mean_ser_db", "trials", "failed"]
    assert len(rows) == 1
    assert rows[0][:2] == ["50", "1"]
    assert float(rows[0][3]) == 300.0
    header, rows = read_table(tmp_path / "s" / "transitions.csv")
    assert rows == [["1", "50.0"]]
    assert (tmp_path / "s" / "scaling.png").is_file()
    # the run verb dispatches on the config kind
    code, _ = run(capsys, "run", "--config", cfg, "--out", tmp_path / "s2")
    assert code == EXIT_OK
    assert file_sha256(tmp_path / "s" / "study.csv") == file_sha256(tmp_path / "s2" / "study.csv")


def test_flatness_verb(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="flatness")
    code, io = run(capsys, "flatness", "--config", cfg, "--out", tmp_path / "f")
    assert code == EXIT_OK, io.err
    header, rows = read_table(tmp_path / "f" / "flatness.csv")
    assert header == ["L", "lambda", "lambda_inv_sq_over_L", "num_chords", "seed"]
    assert [r[0] for r in rows] == ["10", "20"]
    for r in rows:
        L, lam = int(r[0]), float(r[1])
        assert L**-0.5 <= lam <= 1.0
        assert float(r[2]) == pytest.approx(1 / (lam * lam * L))
    assert (tmp_path / "f" / "flatness.png").is_file()


def test_dict_build_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code, io = run(capsys, "dict-build", "--config", cfg, "--out", tmp_path / "d")
    assert code == EXIT_OK
    d = read_dictionary(tmp_path / "d" / "dictionary.bdict")
    assert d.size == 100 and d.length == 20
    digest = json.loads(io.out)["config_sha256"]
    raw = (tmp_path / "d" / "dictionary.bdict").read_bytes()
    (n,) = struct.unpack("<I", raw[60:64])
    assert json.loads(raw[64:64 + n])["config_sha256"] == digest


def test_phantom_gen(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code, _ = run(capsys, "phantom-gen", "--config", cfg, "--out", tmp_path / "p")
    assert code == EXIT_OK
    ph = read_phantom(tmp_path / "p" / "phantom.txt")
    assert ph.grid_dims == (16, 16)
    assert set(np.unique(ph.label_map)) == set(range(6))
    assert sorted(p.name for p in (tmp_path / "p" / "rasters").glob("*.png")) == [
        "phantom_df.png", "phantom_rho.png", "phantom_t1.png", "phantom_t2.png"]
