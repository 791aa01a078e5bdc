"""File formats: calibration/trajectory/workspace CSV, JSON documents and the
line-oriented plant configuration."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DatasetError, EmptyDatasetError, InvalidInputError
from .identification import CalibrationDataset
from .model import KinematicCoefficients, Morph, NeedleSpec
from .plant import DynamicsParams, ForceCurveParams, PlantConfig
from .presets import PRESETS, paper_config

CALIBRATION_HEADER = ("t", "I1", "I2", "I3", "I4", "Pm_x", "Pm_y", "Pm_z", "Pn_x", "Pn_y", "Pn_z")
TRAJECTORY_HEADER = ("t", "I1", "I2", "I3", "I4", "Pp_x", "Pp_y", "Pp_z", "Pn_x", "Pn_y", "Pn_z")
WORKSPACE_HEADER = ("x", "y", "z", "alpha", "beta", "gamma")
BODE_HEADER = ("freq_hz", "amp_db", "mean_radius_mm")


def fmt(x) -> str:
    """Shortest text that round-trips the float exactly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def provenance(subcommand, seed, config_hash) -> dict:
    return {"tool": "filmmanip", "version": __version__, "subcommand": subcommand,
            "seed": seed, "config_sha256": config_hash}


def _provenance_line(prov: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in prov.items())


def write_csv(path, header, rows, prov: dict, meta: dict | None = None):
    lines = [_provenance_line(prov)]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, doc: dict, prov: dict):
    out = {"provenance": prov}
    out.update(doc)
    Path(path).write_text(json.dumps(out, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON document ({exc})") from None


# --- calibration data -------------------------------------------------------

def _split_comments(text):
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            content = line[1:].strip()
            if "=" in content and " " not in content.split("=", 1)[0]:
                k, v = content.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if line.strip():
            body.append(line)
    return meta, body


def load_calibration_csv(path) -> CalibrationDataset:
    """Parse a calibration log (units s, A, mm).

    ``# key=value`` comment lines may carry ``bounds``, ``morph`` and
    ``noise`` metadata.  Rows outside the recorded bounds are kept and a
    warning is recorded on the dataset.
    """
    text = Path(path).read_text(encoding="utf-8")
    meta, body = _split_comments(text)
    if not body:
        raise EmptyDatasetError(f"{path}: no header and no data rows")
    header = [h.strip() for h in next(csv.reader([body[0]]))]
    for k, expected in enumerate(CALIBRATION_HEADER):
        got = header[k] if k < len(header) else "<missing>"
        if got != expected:
            raise DatasetError(f"{path}: header column {k + 1} is {got!r}, expected {expected!r}")
    if len(header) > len(CALIBRATION_HEADER):
        raise DatasetError(f"{path}: unexpected extra header column {header[len(CALIBRATION_HEADER)]!r}")
    rows = list(csv.reader(body[1:]))
    if not rows:
        raise EmptyDatasetError(f"{path}: header present but no data rows")
    data = np.empty((len(rows), len(CALIBRATION_HEADER)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(CALIBRATION_HEADER):
            raise DatasetError(f"{path}: data row {r} has {len(row)} fields, "
                               f"expected {len(CALIBRATION_HEADER)}")
        for c, cell in enumerate(row):
            try:
                data[r - 1, c] = float(cell.strip())
            except ValueError:
                raise DatasetError(f"{path}: data row {r}, column {CALIBRATION_HEADER[c]!r}: "
                                   f"non-numeric value {cell!r}") from None
    bounds = (-0.5, 0.4)
    if "bounds" in meta:
        try:
            lo, hi = (float(v) for v in meta["bounds"].strip("[]() ").split(","))
            bounds = (lo, hi)
        except ValueError:
            raise DatasetError(f"{path}: bad bounds metadata {meta['bounds']!r}") from None
    morph = Morph.parse(meta["morph"]) if "morph" in meta else Morph.MAIN
    return CalibrationDataset(data[:, 0], data[:, 1:5], data[:, 5:8], data[:, 8:11], morph,
                              bounds, meta.get("noise", "unknown"))


def save_calibration_csv(path, data: CalibrationDataset, prov: dict):
    meta = {"bounds": f"{fmt(data.bounds[0])},{fmt(data.bounds[1])}",
            "morph": data.morph.value, "noise": data.noise.replace(" ", "_")}
    rows = np.column_stack([data.t, data.currents, data.p_m, data.p_n])
    write_csv(path, CALIBRATION_HEADER, rows, prov, meta)


# --- coefficient documents --------------------------------------------------

def coefficients_doc(coeffs: KinematicCoefficients, diagnostics=None) -> dict:
    doc = {"morph": coeffs.morph.value,
           "needle": {"n1": coeffs.needle.n1, "lever": coeffs.needle.lever},
           "a": coeffs.a.tolist(), "b": coeffs.b.tolist()}
    if diagnostics is not None:
        doc["diagnostics"] = {"rms_mm": diagnostics.rms.tolist(),
                              "max_residual_mm": diagnostics.max_residual,
                              "condition": diagnostics.condition,
                              "samples": diagnostics.samples, "rank": diagnostics.rank}
    return doc


def load_coefficients(path) -> KinematicCoefficients:
    doc = read_json(path)
    try:
        needle = NeedleSpec(**doc.get("needle", {}))
        return KinematicCoefficients(doc["a"], doc["b"], doc.get("morph", "Main"), needle)
    except KeyError as exc:
        raise DatasetError(f"{path}: coefficient document lacks {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed coefficient document ({exc})") from None


# --- plant configuration ----------------------------------------------------

_SCALAR_FIELDS = {
    "mismatch": float, "noise_sigma": float, "remanence_enabled": bool, "b_r": float,
    "i_sat": float, "seed": int, "k_lateral": float, "leg_gap_gain": float,
    "center_gap_gain": float, "bypass_dynamics": bool,
}
_VECTOR_FIELDS = {"bounds": 2, "leg_angles_deg": 3}
_SECTIONS = {
    "dyn": (DynamicsParams, {f.name: float for f in dataclasses.fields(DynamicsParams)}),
    "force": (ForceCurveParams, {f.name: (int if f.name == "m" else float)
                                 for f in dataclasses.fields(ForceCurveParams)}),
    "leg_force": (ForceCurveParams, {f.name: (int if f.name == "m" else float)
                                     for f in dataclasses.fields(ForceCurveParams)}),
    "needle": (NeedleSpec, {"n1": float, "lever": float}),
}
_MORPH_KEYS = {m.name.lower(): m for m in Morph}


def _parse_value(raw, key):
    raw = raw.strip()
    try:
        return json.loads(raw, parse_int=float)
    except json.JSONDecodeError:
        if raw and all(ch.isalnum() or ch in "_-." for ch in raw):
            return raw
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None


def _coerce(value, typ, key):
    if typ is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if typ is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _coerce_array(value, shape, key):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a numeric array") from None
    if arr.shape != shape:
        raise ConfigError(f"{key}: expected numeric array of shape {shape}, got {arr.shape}")
    return arr


def parse_config(text: str) -> PlantConfig:
    """Build a plant from ``key = value`` lines; unlisted keys keep preset values."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = _parse_value(raw, key)
    preset = entries.pop("preset", "paper")
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r}")
    base = PRESETS[preset]()
    kwargs = {}
    sections = {name: {} for name in _SECTIONS}
    coeffs = {m: [np.array(a), np.array(b)] for m, (a, b) in base.coeffs.items()}
    for key, value in entries.items():
        parts = key.split(".")
        if len(parts) == 1 and key in _SCALAR_FIELDS:
            kwargs[key] = _coerce(value, _SCALAR_FIELDS[key], key)
        elif len(parts) == 1 and key in _VECTOR_FIELDS:
            kwargs[key] = tuple(_coerce_array(value, (_VECTOR_FIELDS[key],), key).tolist())
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            types = _SECTIONS[parts[0]][1]
            if parts[1] not in types:
                raise ConfigError(f"{key}: unknown key")
            sections[parts[0]][parts[1]] = _coerce(value, types[parts[1]], key)
        elif len(parts) == 3 and parts[0] == "coeffs" and parts[1] in _MORPH_KEYS \
                and parts[2] in ("a", "b"):
            shape = (6, 8) if parts[2] == "a" else (6,)
            coeffs[_MORPH_KEYS[parts[1]]][parts[2] == "b"] = _coerce_array(value, shape, key)
        else:
            raise ConfigError(f"{key}: unknown key")
    try:
        for name in _SECTIONS:
            if sections[name]:
                kwargs[name] = dataclasses.replace(getattr(base, name), **sections[name])
        kwargs["coeffs"] = {m: tuple(v) for m, v in coeffs.items()}
        return base.replace(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path) -> PlantConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _json_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def dump_config(cfg: PlantConfig) -> str:
    """Full, explicit text form; ``parse_config(dump_config(c))`` rebuilds ``c``."""
    out = io.StringIO()
    out.write("preset = paper\n")
    for key in _SCALAR_FIELDS:
        out.write(f"{key} = {_json_value(getattr(cfg, key))}\n")
    for key in _VECTOR_FIELDS:
        out.write(f"{key} = {_json_value(list(getattr(cfg, key)))}\n")
    for name, (_, types) in _SECTIONS.items():
        obj = getattr(cfg, name)
        for field_name in types:
            out.write(f"{name}.{field_name} = {_json_value(getattr(obj, field_name))}\n")
    for m in Morph:
        a, b = cfg.coeffs[m]
        out.write(f"coeffs.{m.name.lower()}.a = {_json_value(a)}\n")
        out.write(f"coeffs.{m.name.lower()}.b = {_json_value(b)}\n")
    return out.getvalue()


def config_hash(cfg: PlantConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def configs_equal(a: PlantConfig, b: PlantConfig) -> bool:
    return dump_config(a) == dump_config(b)


def default_config() -> PlantConfig:
    return paper_config()
