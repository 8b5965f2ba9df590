import numpy as np
import pytest

from blip.bloch import build_dictionary, random_excitation
from blip.errors import IngestionError
from blip.formats import (
    file_sha256,
    read_dictionary,
    read_kspace,
    read_maps,
    read_maps_text,
    read_plan_text,
    read_table,
    write_dictionary,
    write_kspace,
    write_maps,
    write_maps_text,
    write_plan_text,
    write_table,
    write_trace,
)
from blip.projection import ParameterMaps
from blip.recon import IterationRecord, ReconTrace
from blip.sampling import forward, make_plan


def _maps(rng, dims=(3, 4), with_index=True):
    n = int(np.prod(dims))
    idx = rng.integers(0, 50, n) if with_index else None
    return ParameterMaps(rng.random(n), rng.uniform(100, 4000, n), rng.uniform(10, 90, n),
                         rng.normal(0, 5, n), dims, atom_index=idx)


def _same_maps(a, b):
    for name in ("rho", "t1", "t2", "df"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.grid_dims == b.grid_dims


def test_dictionary_round_trip_is_bit_exact(small_dict, tmp_path):
    path = tmp_path / "d.bdict"
    write_dictionary(path, small_dict, config_hash="cd" * 32)
    back = read_dictionary(path)
    assert np.array_equal(back.atoms, small_dict.atoms)
    assert np.array_equal(back.atom_norms, small_dict.atom_norms)
    assert np.array_equal(back.lut, small_dict.lut)
    assert back.excitation == small_dict.excitation
    assert back.grid == small_dict.grid
    assert b"cd" * 32 in path.read_bytes()


def test_dictionary_without_grid(tmp_path, small_dict):
    from blip.bloch import BlochDictionary

    d = BlochDictionary.from_atoms(small_dict.atoms[:3], small_dict.lut[:3], small_dict.excitation)
    write_dictionary(tmp_path / "d", d)
    assert read_dictionary(tmp_path / "d").grid is None


def test_dictionary_corruption_is_detected(small_dict, tmp_path):
    path = tmp_path / "d.bdict"
    write_dictionary(path, small_dict)
    data = path.read_bytes()
    (tmp_path / "short").write_bytes(data[:-5])
    with pytest.raises(IngestionError, match="truncated"):
        read_dictionary(tmp_path / "short")
    (tmp_path / "magic").write_bytes(b"NOTADICT" + data[8:])
    with pytest.raises(IngestionError, match="magic"):
        read_dictionary(tmp_path / "magic")
    (tmp_path / "extra").write_bytes(data + b"\0")
    with pytest.raises(IngestionError, match="trailing"):
        read_dictionary(tmp_path / "extra")
    # flip one byte of the stored repetition times
    bad = bytearray(data)
    bad[-3] ^= 0x01
    (tmp_path / "hash").write_bytes(bytes(bad))
    with pytest.raises(IngestionError, match="hash"):
        read_dictionary(tmp_path / "hash")
    bad = bytearray(data)
    bad[8] = 9
    (tmp_path / "ver").write_bytes(bytes(bad))
    with pytest.raises(IngestionError, match="version"):
        read_dictionary(tmp_path / "ver")


@pytest.mark.parametrize("with_index", [True, False])
def test_maps_round_trip(tmp_path, rng, with_index):
    maps = _maps(rng, with_index=with_index)
    write_maps(tmp_path / "m.bin", maps, config_hash="ef" * 32)
    back = read_maps(tmp_path / "m.bin")
    _same_maps(back, maps)
    if with_index:
        assert np.array_equal(back.atom_index, maps.atom_index)
    else:
        assert back.atom_index is None


@pytest.mark.parametrize("dims", [(3, 4), (7,)])
def test_maps_text_round_trip_is_exact(tmp_path, rng, dims):
    maps = _maps(rng, dims)
    write_maps_text(tmp_path / "m.txt", maps, config_hash="01" * 32)
    text = (tmp_path / "m.txt").read_text()
    assert "[t1] ms" in text and "[df] Hz" in text
    _same_maps(read_maps_text(tmp_path / "m.txt"), maps)


def test_maps_text_errors(tmp_path):
    (tmp_path / "a").write_text("grid_dims 1\n1.0\n")
    with pytest.raises(IngestionError):
        read_maps_text(tmp_path / "a")
    (tmp_path / "b").write_text("grid_dims 1\n[rho] a.u.\n1\n")
    with pytest.raises(IngestionError):
        read_maps_text(tmp_path / "b")


def test_kspace_round_trip(tmp_path, rng):
    plan = make_plan(4, 9, (8, 8), seed=3, axis=1)
    x = rng.standard_normal((64, 9)) + 1j * rng.standard_normal((64, 9))
    y = forward(x, plan)
    write_kspace(tmp_path / "k.bin", y)
    back = read_kspace(tmp_path / "k.bin")
    assert back.plan == plan
    assert np.array_equal(back.samples, y.samples)
    data = (tmp_path / "k.bin").read_bytes()
    (tmp_path / "t").write_bytes(data[:-16])
    with pytest.raises(IngestionError):
        read_kspace(tmp_path / "t")


def test_plan_text_round_trip(tmp_path):
    plan = make_plan(8, 40, (16, 32), seed=12)
    write_plan_text(tmp_path / "plan.txt", plan, config_hash="aa" * 32)
    back = read_plan_text(tmp_path / "plan.txt")
    assert back == plan
    assert np.array_equal(back.shifts, plan.shifts)


@pytest.mark.parametrize(
    "text",
    ["p = 2\nL = 2\ngrid_dims = 4\naxis = 0\nseed = 1\n", "p = 2\nbroken line\n",
     "p = 2\nL = 3\ngrid_dims = 4\naxis = 0\nseed = none\nshifts = 0 1\n"],
)
def test_plan_text_errors(tmp_path, text):
    (tmp_path / "p").write_text(text)
    with pytest.raises(IngestionError):
        read_plan_text(tmp_path / "p")


def test_tables_and_traces(tmp_path):
    write_table(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, None)], config_hash="ff" * 32)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "# config_sha256 " + "ff" * 32
    header, rows = read_table(tmp_path / "t.csv")
    assert header == ["a", "b"]
    assert rows == [["1", "0.1"], ["2", ""]]
    assert float(rows[0][1]) == 0.1
    trace = ReconTrace([IterationRecord(1, 0.5, 4.0, 12.5), IterationRecord(2, 0.25, 2.0)])
    write_trace(tmp_path / "trace.csv", trace)
    header, rows = read_table(tmp_path / "trace.csv")
    assert header == ["iteration", "residual", "stepsize", "ser_db"]
    assert rows[1] == ["2", "0.25", "2.0", ""]


def test_file_hash(tmp_path):
    (tmp_path / "x").write_bytes(b"abc")
    assert file_sha256(tmp_path / "x") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_written_files_are_reproducible(small_dict, tmp_path):
    write_dictionary(tmp_path / "a", small_dict, "00" * 32)
    write_dictionary(tmp_path / "b", build_dictionary(small_dict.grid, random_excitation(24, seed=3)), "00" * 32)
    assert file_sha256(tmp_path / "a") == file_sha256(tmp_path / "b")
