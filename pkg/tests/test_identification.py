import warnings

import numpy as np
import pytest

from filmmanip import identification as ident
from filmmanip.errors import (BoundsError, DatasetError, DegenerateDirectionError,
                              EmptyDatasetError, SingularDesignError)
from filmmanip.identification import BoundsWarning, CalibrationDataset, fit, generate_dataset
from filmmanip.model import Morph, NeedleSpec
from filmmanip.plant import static_response
from filmmanip.presets import paper_config, rigid_config


def dataset_from(cfg, currents, sigma=0.0, seed=0):
    """Tracked needle points for arbitrary currents on a rigid-needle plant."""
    poses = static_response(currents, Morph.MAIN, cfg)
    p_n = poses[:, 3:]
    u = (p_n - poses[:, :3]) / np.linalg.norm(p_n - poses[:, :3], axis=1, keepdims=True)
    p_m = p_n - 20.0 * u
    rng = np.random.default_rng(seed)
    if sigma:
        p_m = p_m + rng.normal(0, sigma, p_m.shape)
        p_n = p_n + rng.normal(0, sigma, p_n.shape)
    return CalibrationDataset(np.arange(len(currents)) * 0.1, currents, p_m, p_n,
                              bounds=(-0.5, 0.4))


def rel_error(coeffs, cfg):
    a, b = cfg.coeffs[Morph.MAIN]
    truth = np.hstack([a, b[:, None]])
    got = np.hstack([coeffs.a, coeffs.b[:, None]])
    return np.max(np.abs(got - truth)) / np.max(np.abs(truth))


@pytest.fixture(scope="module")
def rigid():
    return rigid_config(seed=7)


def test_grid_size_and_metadata(rigid):
    data = generate_dataset(rigid, 8)
    assert len(data) == 4096
    assert data.bounds == (-0.5, 0.4)
    assert data.noise == "none"
    assert data.morph is Morph.MAIN


def test_noiseless_rows_equal_plant():
    cfg = paper_config()
    data = generate_dataset(cfg, 4)
    np.testing.assert_array_equal(data.p_n, static_response(data.currents, Morph.MAIN, cfg)[:, 3:])


def test_unsafe_bounds_need_override(rigid):
    with pytest.raises(BoundsError):
        generate_dataset(rigid, 3, (-0.6, 0.4))
    data = generate_dataset(rigid, 3, (-0.6, 0.4), allow_unsafe=True)
    assert data.bounds == (-0.6, 0.4)


def test_noisy_generation_is_seeded(rigid):
    a = generate_dataset(rigid, 3, seed=4, noise_sigma=0.01)
    b = generate_dataset(rigid, 3, seed=4, noise_sigma=0.01)
    c = generate_dataset(rigid, 3, seed=5, noise_sigma=0.01)
    assert np.array_equal(a.p_m, b.p_m) and not np.array_equal(a.p_m, c.p_m)
    assert "sigma=0.01" in a.noise


def test_exact_recovery_on_rigid_plant(rigid):
    coeffs, diag = fit(generate_dataset(rigid, 8))
    assert rel_error(coeffs, rigid) < 1e-6
    assert diag.max_residual < 1e-9 and diag.rank == 9 and diag.samples == 4096


def test_reference_preset_tip_rows_exact():
    cfg = paper_config()
    coeffs, _ = fit(generate_dataset(cfg, 8))
    a, b = cfg.coeffs[Morph.MAIN]
    np.testing.assert_allclose(coeffs.tip_a, a[3:], atol=1e-9)
    np.testing.assert_allclose(coeffs.tip_b, b[3:], atol=1e-9)


def test_nine_rows_interpolate_exactly(rigid):
    currents = np.random.default_rng(2).uniform(-0.5, 0.4, size=(9, 4))
    _, diag = fit(dataset_from(rigid, currents))
    assert diag.max_residual < 1e-9


def test_rank_one_design_names_directions(rigid):
    currents = np.tile([0.1, 0.2, -0.1, 0.3], (20, 1))
    with pytest.raises(SingularDesignError) as exc:
        fit(dataset_from(rigid, currents))
    assert len(exc.value.directions) == 8


def test_two_level_grid_is_singular(rigid):
    """With two levels per coil, I^2 is affine in I and cannot be separated."""
    with pytest.raises(SingularDesignError) as exc:
        fit(generate_dataset(rigid, 2))
    assert "I1^2" in str(exc.value)


def test_too_few_rows(rigid):
    currents = np.random.default_rng(2).uniform(-0.5, 0.4, size=(8, 4))
    with pytest.raises(DatasetError):
        fit(dataset_from(rigid, currents))
    with pytest.raises(EmptyDatasetError):
        fit(CalibrationDataset(np.zeros(0), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros((0, 3))))


def test_degenerate_needle_reports_row(rigid):
    data = generate_dataset(rigid, 3)
    data.p_m[17] = data.p_n[17]
    with pytest.raises(DegenerateDirectionError) as exc:
        fit(data)
    assert exc.value.row == 17


def test_out_of_bounds_rows_warn_and_stay():
    currents = np.random.default_rng(0).uniform(-0.5, 0.4, size=(12, 4))
    currents[4, 0] = 0.6
    with pytest.warns(BoundsWarning):
        data = dataset_from(rigid_config(), currents)
    assert len(data) == 12 and data.warnings


def test_decreasing_timestamps_rejected():
    with pytest.raises(DatasetError):
        CalibrationDataset([0, 0.2, 0.1], np.zeros((3, 4)), np.zeros((3, 3)), np.ones((3, 3)))


def test_offset_recovery_with_zero_row():
    sigma = 1e-3
    cfg = rigid_config(seed=1)
    data = generate_dataset(cfg, 8, noise_sigma=sigma, seed=3)
    zero_row = np.flatnonzero(np.all(np.isclose(data.currents, 0.0, atol=0.04), axis=1))
    assert len(zero_row)
    coeffs, _ = fit(data)
    truth = static_response(np.zeros(4), Morph.MAIN, cfg)
    assert np.max(np.abs(coeffs.b - truth)) < 3 * sigma


def test_error_shrinks_with_samples():
    cfg = rigid_config(seed=9)
    sigma = 0.01
    medians = []
    for n in (16, 256, 4096):
        errs = []
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            currents = rng.uniform(-0.5, 0.4, size=(n, 4))
            coeffs, _ = fit(dataset_from(cfg, currents, sigma, seed))
            errs.append(rel_error(coeffs, cfg))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_fit_translation_equivariant(rigid):
    data = generate_dataset(rigid, 4, noise_sigma=0.01, seed=1)
    d = np.array([3.0, -7.0, 11.0])
    shifted = CalibrationDataset(data.t, data.currents, data.p_m + d, data.p_n + d)
    c0, _ = fit(data)
    c1, _ = fit(shifted)
    np.testing.assert_allclose(c1.a, c0.a, atol=1e-9)
    np.testing.assert_allclose(c1.b, c0.b + np.tile(d, 2), atol=1e-9)


def test_fit_row_permutation_invariant(rigid):
    data = generate_dataset(rigid, 4, noise_sigma=0.01, seed=1)
    perm = np.random.default_rng(0).permutation(len(data))
    shuffled = CalibrationDataset(data.t, data.currents[perm], data.p_m[perm], data.p_n[perm])
    c0, _ = fit(data)
    c1, _ = fit(shuffled)
    np.testing.assert_allclose(c1.a, c0.a, atol=1e-12)
    np.testing.assert_allclose(c1.b, c0.b, atol=1e-12)


def test_check_design_condition():
    d = ident.design_matrix(np.random.default_rng(0).uniform(-0.5, 0.4, size=(50, 4)))
    rank, cond = ident.check_design(d)
    assert rank == 9 and 1 <= cond < 1e3


def test_needle_length_used_for_platform(rigid):
    data = generate_dataset(rigid, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        c40, _ = fit(data, NeedleSpec(40, 43.6))
        c30, _ = fit(data, NeedleSpec(30, 43.6))
    np.testing.assert_allclose(c30.b[:3] - c40.b[:3], [0, 0, 10], atol=1e-9)
