import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from filmmanip import fileio
from filmmanip.errors import ConfigError, DatasetError, EmptyDatasetError
from filmmanip.identification import generate_dataset
from filmmanip.model import KinematicCoefficients, Morph
from filmmanip.presets import paper_config, rigid_config

PROV = fileio.provenance("test", 0, "0" * 64)


@given(st.floats(allow_nan=True, allow_infinity=True))
def test_fmt_round_trips(x):
    text = fileio.fmt(x)
    back = float(text)
    assert (np.isnan(x) and np.isnan(back)) or back == x


def test_calibration_round_trip(tmp_path):
    data = generate_dataset(rigid_config(seed=2), 3, noise_sigma=0.01, seed=1)
    path = tmp_path / "cal.csv"
    fileio.save_calibration_csv(path, data, PROV)
    back = fileio.load_calibration_csv(path)
    for name in ("t", "currents", "p_m", "p_n"):
        assert np.array_equal(getattr(back, name), getattr(data, name))
    assert back.bounds == data.bounds and back.morph is data.morph


def test_provenance_is_first_line(tmp_path):
    path = tmp_path / "cal.csv"
    fileio.save_calibration_csv(path, generate_dataset(rigid_config(), 2), PROV)
    first = path.read_text().splitlines()[0]
    assert first.startswith("# tool=filmmanip") and "seed=0" in first
    assert "config_sha256=" + "0" * 64 in first


def _write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


HEADER = ",".join(fileio.CALIBRATION_HEADER)


def test_header_mismatch_names_column(tmp_path):
    bad = HEADER.replace("Pm_y", "Pm_q")
    with pytest.raises(DatasetError) as exc:
        fileio.load_calibration_csv(_write(tmp_path, bad + "\n" + ",".join(["0"] * 11) + "\n"))
    assert "'Pm_q'" in str(exc.value) and "column 7" in str(exc.value)


def test_non_numeric_cell_names_row_and_column(tmp_path):
    rows = [",".join(["0.1"] * 11), ",".join(["0.2"] * 5 + ["abc"] + ["0.2"] * 5)]
    with pytest.raises(DatasetError) as exc:
        fileio.load_calibration_csv(_write(tmp_path, "\n".join([HEADER] + rows) + "\n"))
    msg = str(exc.value)
    assert "row 2" in msg and "'Pm_x'" in msg and "'abc'" in msg


def test_short_row_rejected(tmp_path):
    with pytest.raises(DatasetError):
        fileio.load_calibration_csv(_write(tmp_path, HEADER + "\n1,2,3\n"))


@pytest.mark.parametrize("text", ["", "# tool=filmmanip\n", HEADER + "\n"])
def test_empty_files_raise(tmp_path, text):
    with pytest.raises(EmptyDatasetError):
        fileio.load_calibration_csv(_write(tmp_path, text))


def test_out_of_bounds_rows_kept_with_warning(tmp_path):
    rows = []
    for k in range(10):
        i = [0.1, -0.1, 0.2, 0.0] if k != 3 else [0.9, 0.0, 0.0, 0.0]
        rows.append(",".join(str(v) for v in [k * 0.1] + i + [0, 0, 70, 0, 0, 90]))
    text = "# bounds=-0.5,0.4\n" + HEADER + "\n" + "\n".join(rows) + "\n"
    with pytest.warns(UserWarning):
        data = fileio.load_calibration_csv(_write(tmp_path, text))
    assert len(data) == 10 and data.warnings


def test_coefficients_round_trip(tmp_path):
    coeffs = paper_config().coefficients(Morph.MAIN)
    path = tmp_path / "c.json"
    fileio.write_json(path, fileio.coefficients_doc(coeffs), PROV)
    back = fileio.load_coefficients(path)
    assert np.array_equal(back.a, coeffs.a) and np.array_equal(back.b, coeffs.b)
    assert json.loads(path.read_text())["provenance"]["tool"] == "filmmanip"


def test_coefficients_bad_shape(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"a": [[0.0] * 8] * 5, "b": [0.0] * 6}))
    with pytest.raises(DatasetError):
        fileio.load_coefficients(path)
    path.write_text(json.dumps({"b": [0.0] * 6}))
    with pytest.raises(DatasetError) as exc:
        fileio.load_coefficients(path)
    assert "'a'" in str(exc.value)
    path.write_text("{not json")
    with pytest.raises(DatasetError):
        fileio.load_coefficients(path)


def test_empty_config_is_reference_preset():
    assert fileio.configs_equal(fileio.parse_config(""), paper_config())
    assert fileio.configs_equal(fileio.parse_config("preset = paper\n"), paper_config())


def test_rigid_preset_by_name():
    assert fileio.configs_equal(fileio.parse_config("preset = rigid"), rigid_config())


def test_config_overrides():
    cfg = fileio.parse_config("noise_sigma = 0.002\ndyn.zeta1 = 0.1  # damping\nseed = 4\n")
    assert cfg.noise_sigma == 0.002 and cfg.dyn.zeta1 == 0.1 and cfg.seed == 4


def test_config_round_trip():
    cfg = paper_config(noise_sigma=0.003, seed=11)
    back = fileio.parse_config(fileio.dump_config(cfg))
    assert fileio.dump_config(back) == fileio.dump_config(cfg)
    assert fileio.config_hash(back) == fileio.config_hash(cfg)


def test_config_hash_changes_with_content():
    assert fileio.config_hash(paper_config()) != fileio.config_hash(paper_config(seed=1))


@pytest.mark.parametrize("text, needle", [
    ("dyn.f1 = -5", "invalid configuration"),
    ("frobnicate = 1", "frobnicate"),
    ("dyn.nope = 1", "dyn.nope"),
    ("seed = 1\nseed = 2", "duplicate"),
    ("noise_sigma = \"lots\"", "noise_sigma"),
    ("force.m = 2.5", "force.m"),
    ("bypass_dynamics = 1", "bypass_dynamics"),
    ("bounds = [1, 2, 3]", "bounds"),
    ("coeffs.main.a = [1, 2]", "coeffs.main.a"),
    ("preset = stiff", "stiff"),
    ("just words", "line 1"),
])
def test_config_errors_name_the_problem(text, needle):
    with pytest.raises(ConfigError) as exc:
        fileio.parse_config(text)
    assert needle in str(exc.value)


def test_config_coefficient_override():
    a = np.arange(48, dtype=float).reshape(6, 8) / 100
    text = "coeffs.main.a = " + json.dumps(a.tolist())
    cfg = fileio.parse_config(text)
    assert np.array_equal(cfg.coeffs[Morph.MAIN][0], a)
    assert isinstance(cfg.coefficients(Morph.MAIN), KinematicCoefficients)
