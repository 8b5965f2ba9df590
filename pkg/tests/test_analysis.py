import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blip import analysis
from blip.analysis import (
    SER_CLAMP_DB,
    StudyRow,
    flatness,
    map_errors,
    quantization_half_step,
    scaling_study,
    ser_db,
    transition_points,
)
from blip.bloch import BlochDictionary, ExcitationSequence, build_dictionary, default_grid, random_excitation
from blip.errors import DegenerateSamplingError, DimensionError, DomainError
from blip.phantom import ground_truth_sequence, synth_phantom
from blip.projection import ParameterMaps
from blip.recon import ReconConfig, mrf_baseline
from blip.sampling import forward, make_plan


def test_ser_examples():
    x = np.ones((4, 3), complex)
    assert ser_db(x, x) == SER_CLAMP_DB
    assert ser_db(x, np.zeros_like(x)) == 0.0
    assert ser_db(x, 0.9 * x) == pytest.approx(20.0, abs=1e-12)
    assert ser_db(x, x * (1 + 1e-17)) == SER_CLAMP_DB
    with pytest.raises(DomainError):
        ser_db(np.zeros(3), np.ones(3))
    with pytest.raises(DimensionError):
        ser_db(np.ones(3), np.ones(4))


@given(seed=st.integers(0, 2**32 - 1), phase=st.floats(-math.pi, math.pi))
def test_ser_is_invariant_under_unitary_maps(seed, phase):
    g = np.random.default_rng(seed)
    x = g.standard_normal((8, 5)) + 1j * g.standard_normal((8, 5))
    e = x + 0.1 * (g.standard_normal((8, 5)) + 1j * g.standard_normal((8, 5)))
    q, _ = np.linalg.qr(g.standard_normal((8, 8)) + 1j * g.standard_normal((8, 8)))
    u = np.exp(1j * phase)
    assert ser_db(u * (q @ x), u * (q @ e)) == pytest.approx(ser_db(x, e), abs=1e-9)


def _single_atom_dictionary(atom):
    atom = np.asarray(atom, complex)
    exc = ExcitationSequence(np.zeros(atom.size), np.ones(atom.size))
    return BlochDictionary.from_atoms(atom[None], [[100.0, 10.0, 0.0]], exc)


def test_flatness_of_a_one_hot_atom_is_one():
    e = np.zeros(16)
    e[3] = 1.0
    r = flatness(_single_atom_dictionary(e), 200, seed=1)
    assert r.lam == 1.0
    assert r.lambda_inv_sq_over_L == pytest.approx(1 / 16)


def test_flatness_of_a_constant_magnitude_atom():
    L = 25
    atom = np.exp(2j * np.pi * np.arange(L) ** 2 / 7)
    r = flatness(_single_atom_dictionary(atom), 200, seed=1)
    assert r.lam == pytest.approx(L**-0.5, rel=1e-12)
    assert r.lambda_inv_sq_over_L == pytest.approx(1.0, rel=1e-12)


def test_flatness_bounds_and_determinism(small_dict):
    a = flatness(small_dict, 500, seed=3)
    assert small_dict.length**-0.5 <= a.lam <= 1.0
    assert 1 / small_dict.length <= a.lambda_inv_sq_over_L <= 1.0
    assert a == flatness(small_dict, 500, seed=3)
    assert a.L == small_dict.length


def test_flatness_degenerate_draws(small_dict, monkeypatch):
    monkeypatch.setattr(
        analysis, "random_chords", lambda d, n, rng: (np.zeros((n, d.length), complex), np.ones(n))
    )
    with pytest.raises(DegenerateSamplingError):
        flatness(small_dict, 10)
    with pytest.raises(DomainError):
        flatness(small_dict, 0)


def _pm(rho, t1, t2, df):
    return ParameterMaps(rho, t1, t2, df, (len(rho),))


def test_map_error_examples():
    truth = _pm([1.0, 1.0, 0.0], [1000.0, 500.0, 800.0], [100.0, 50.0, 60.0], [0.0, 2.0, 0.0])
    est = _pm([1.1, 0.8, 5.0], [1100.0, 500.0, 1.0], [100.0, 40.0, 1.0], [1.0, -2.0, 9.0])
    e = map_errors(truth, est)
    assert e["rho"].max == pytest.approx(0.2)
    assert e["rho"].mean == pytest.approx(0.15)
    assert e["t1"].median == pytest.approx(0.05)
    assert e["t2"].max == pytest.approx(0.2)
    assert e["df"].max == pytest.approx(4.0)
    only_first = map_errors(truth, est, mask=[True, False, False])
    assert only_first["t1"].max == pytest.approx(0.1)
    with pytest.raises(DomainError):
        map_errors(truth, est, mask=[False, False, False])
    with pytest.raises(DimensionError):
        map_errors(truth, ParameterMaps([1.0], [1.0], [1.0], [0.0], (1,)))


def test_quantization_half_step():
    axis = np.array([100.0, 200.0, 400.0])
    np.testing.assert_allclose(quantization_half_step([150.0, 300.0, 50.0, 500.0], axis),
                               [50 / 150, 100 / 300, 50 / 50, 100 / 500])


def test_full_sampling_errors_are_within_quantization():
    grid = default_grid()
    phantom = synth_phantom("concentric", (16, 16), seed=1)
    exc = random_excitation(200, seed=4)
    d = build_dictionary(grid, exc)
    x, truth = ground_truth_sequence(phantom, exc)
    plan = make_plan(1, 200, (16, 16), seed=0)
    _, est = mrf_baseline(forward(x, plan), d, plan)
    for name in ("t1", "t2"):
        axis = grid.axis_values(name)
        t = getattr(truth, name)
        rel = np.abs(getattr(est, name) - t) / t
        assert np.all(rel <= quantization_half_step(t, axis) + 1e-12), name


def test_transition_points():
    rows = [
        StudyRow(16, 4, 1.0, 10.0, 1, 0),
        StudyRow(32, 4, 2.0, 25.0, 1, 0),
        StudyRow(8, 4, 0.5, float("nan"), 1, 1),
        StudyRow(64, 8, 1.0, 19.9, 1, 0),
    ]
    assert transition_points(rows) == {4: 2.0, 8: None}
    assert transition_points(rows, threshold=5.0) == {4: 1.0, 8: 1.0}


@pytest.fixture(scope="module")
def tiny_study_inputs():
    from blip.bloch import ParameterGrid

    grid = ParameterGrid(t1=((300, 1500, 300),), t2=((30, 150, 30),))
    return grid, synth_phantom("concentric", (8, 8), seed=0)


def test_study_at_full_sampling_reaches_the_clamp(tiny_study_inputs):
    grid, ph = tiny_study_inputs
    res = scaling_study([3, 10], [1], ph, grid=grid, seed=2)
    assert [r.mean_ser_db for r in res.rows] == [SER_CLAMP_DB, SER_CLAMP_DB]
    assert res.transitions == {1: 3.0}


def test_study_cells_do_not_depend_on_order(tiny_study_inputs):
    grid, ph = tiny_study_inputs
    cfg = ReconConfig(max_iters=20)
    a = scaling_study([8, 16], [2, 4], ph, grid=grid, seed=5, recon=cfg)
    b = scaling_study([16, 8], [4, 2], ph, grid=grid, seed=5, recon=cfg)
    key = lambda r: (r.p, r.L)  # noqa: E731
    assert sorted(a.rows, key=key) == sorted(b.rows, key=key)
    c = scaling_study([8, 16], [2, 4], ph, grid=grid, seed=5, recon=cfg)
    assert a.rows == c.rows


def test_study_ratios_and_validation(tiny_study_inputs):
    grid, ph = tiny_study_inputs
    res = scaling_study(None, [2], ph, grid=grid, ratios=[0.5, 1.0], recon=ReconConfig(max_iters=5))
    assert [r.L for r in res.rows] == [2, 4]
    with pytest.raises(DomainError):
        scaling_study(None, [2], ph, grid=grid)
    with pytest.raises(DomainError):
        scaling_study([4], [2], ph, grid=grid, trials=0)
    from blip.errors import ConfigurationError

    with pytest.raises(ConfigurationError):
        scaling_study([4], [3], ph, grid=grid)
