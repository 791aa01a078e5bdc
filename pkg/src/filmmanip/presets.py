"""Named plant presets.

The reference preset (named ``paper``) is built from a few geometric scalars
(``PresetGeometry``).  Those scalars were solved numerically so that the
synthetic plant reproduces a set of target workspace, force and speed figures;
``scripts/calibrate_preset.py`` re-derives them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Morph, NeedleSpec
from .plant import DynamicsParams, ForceCurveParams, PlantConfig

LEG_ANGLES_DEG = (0.0, 120.0, 240.0)


@dataclass(frozen=True)
class PresetGeometry:
    """Scalars defining the per-morph quadratic maps of the preset plant.

    Lengths in mm, linear coefficients in mm/A, quadratic in mm/A^2.
    """

    tip_rest_z: float = 90.0
    needle_len: float = 40.0
    # main morph: lateral tip motion of each leg coil along its leg direction
    lat_a: float = 8.5739
    lat_c: float = 2.5722
    # main morph: vertical tip motion per leg coil and for the central coil
    leg_z_a: float = 0.3
    leg_z_c: float = 0.4
    center_z_a: float = 3.15
    center_z_c: float = 0.5
    # needle tilt: lateral motion of the needle vector, rotated by tilt_phase
    tilt_a: float = 7.71179
    tilt_c: float = 2.31354
    tilt_phase_deg: float = 14.4255
    # leg-latched morphs (leg 1 on +X, others by 120 deg symmetry)
    side_radius: float = 24.215
    side_drop: float = 9.08887
    side_scale: float = 0.3
    side_center_lat: float = 7.069
    side_tilt_deg: float = 25.0
    # central magnet latched: tip parked below rest by the magnet travel
    center_drop: float = 8.0


PAPER_GEOMETRY = PresetGeometry()


def _rot_z(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _columns(direction, lin, quad):
    """3x2 block ``[lin * dir, quad * dir]`` for one coil."""
    d = np.asarray(direction, dtype=float)
    return np.stack([lin * d, quad * d], axis=1)


def _assemble(tip_cols, needle_cols, tip_rest, needle_rest):
    """Build ``(A, B)`` from per-coil 3x2 tip and needle blocks.

    Platform rows are tip minus needle vector.
    """
    a = np.zeros((6, 8))
    for k in range(4):
        a[3:, k], a[3:, k + 4] = tip_cols[k][:, 0], tip_cols[k][:, 1]
        a[:3, k] = tip_cols[k][:, 0] - needle_cols[k][:, 0]
        a[:3, k + 4] = tip_cols[k][:, 1] - needle_cols[k][:, 1]
    b = np.concatenate([np.asarray(tip_rest) - np.asarray(needle_rest), tip_rest])
    return a, b


def main_morph(g: PresetGeometry = PAPER_GEOMETRY):
    legs = [_rot_z(th) @ np.array([1.0, 0.0, 0.0]) for th in LEG_ANGLES_DEG]
    tilt = [_rot_z(th + g.tilt_phase_deg) @ np.array([1.0, 0.0, 0.0]) for th in LEG_ANGLES_DEG]
    z = np.array([0.0, 0.0, 1.0])
    tip_cols = [_columns(legs[k], g.lat_a, g.lat_c) - _columns(z, g.leg_z_a, g.leg_z_c)
                for k in range(3)]
    tip_cols.append(-_columns(z, g.center_z_a, g.center_z_c))
    needle_cols = [_columns(tilt[k], g.tilt_a, g.tilt_c) for k in range(3)]
    needle_cols.append(np.zeros((3, 2)))
    return _assemble(tip_cols, needle_cols, (0.0, 0.0, g.tip_rest_z), (0.0, 0.0, g.needle_len))


def _side_morph_leg1(g: PresetGeometry):
    """Leg 1 latched; coils 2 and 3 keep a scaled version of their main action."""
    legs = [_rot_z(th) @ np.array([1.0, 0.0, 0.0]) for th in LEG_ANGLES_DEG]
    tilt = [_rot_z(th + g.tilt_phase_deg) @ np.array([1.0, 0.0, 0.0]) for th in LEG_ANGLES_DEG]
    z = np.array([0.0, 0.0, 1.0])
    s = g.side_scale
    tip_cols = [np.zeros((3, 2))]
    needle_cols = [np.zeros((3, 2))]
    for k in (1, 2):
        tip_cols.append(s * (_columns(legs[k], g.lat_a, g.lat_c)
                             - _columns(z, g.leg_z_a, g.leg_z_c)))
        needle_cols.append(s * _columns(tilt[k], g.tilt_a, g.tilt_c))
    ratio = g.lat_c / g.lat_a
    tip_cols.append(_columns(legs[0], g.side_center_lat, g.side_center_lat * ratio)
                    - s * _columns(z, g.center_z_a, g.center_z_c))
    needle_cols.append(np.zeros((3, 2)))
    tau = np.radians(g.side_tilt_deg)
    tip_rest = np.array([g.side_radius, 0.0, g.tip_rest_z - g.side_drop])
    needle_rest = g.needle_len * np.array([np.sin(tau), 0.0, np.cos(tau)])
    return tip_cols, needle_cols, tip_rest, needle_rest


def side_morph(k, g: PresetGeometry = PAPER_GEOMETRY):
    """Coefficients with leg ``k`` (0-based) latched, by 120 deg symmetry."""
    tip_cols, needle_cols, tip_rest, needle_rest = _side_morph_leg1(g)
    rot = _rot_z(LEG_ANGLES_DEG[k])
    perm_tip = [None] * 4
    perm_needle = [None] * 4
    for j in range(3):
        perm_tip[(j + k) % 3] = rot @ tip_cols[j]
        perm_needle[(j + k) % 3] = rot @ needle_cols[j]
    perm_tip[3] = rot @ tip_cols[3]
    perm_needle[3] = rot @ needle_cols[3]
    return _assemble(perm_tip, perm_needle, rot @ tip_rest, rot @ needle_rest)


def center_morph(g: PresetGeometry = PAPER_GEOMETRY):
    tip = (0.0, 0.0, g.tip_rest_z - g.center_drop)
    return np.zeros((6, 8)), np.concatenate([np.subtract(tip, (0.0, 0.0, g.needle_len)), tip])


def morph_coefficients(g: PresetGeometry = PAPER_GEOMETRY):
    return {
        Morph.MAIN: main_morph(g),
        Morph.LEG1: side_morph(0, g),
        Morph.LEG2: side_morph(1, g),
        Morph.LEG3: side_morph(2, g),
        Morph.CENTER: center_morph(g),
    }


# Central magnet: two stacked magnets, cap height 2.5 mm, film gap 10.5 mm.
PAPER_FORCE = ForceCurveParams(k_e=40.4163, z0=2.32372, a0=4673.01, a1=7290.71, p=2.0, m=2,
                               d=10.5, h=2.5, i_max_drive=0.5, gap_work_min=6.05624)
# Leg magnets: single magnet, no cap, so a latched leg holds at zero current.
PAPER_LEG_FORCE = ForceCurveParams(k_e=10.0, z0=4.75373, a0=2259.79, a1=1807.84, p=2.0, m=1,
                                   d=8.0, h=0.0, i_max_drive=0.5, gap_work_min=0.0)
PAPER_K_LATERAL = 1.405


def paper_config(**overrides) -> PlantConfig:
    """Plant calibrated to the target workspace, force and dynamics figures."""
    kwargs = dict(coeffs=morph_coefficients(PAPER_GEOMETRY), force=PAPER_FORCE,
                  leg_force=PAPER_LEG_FORCE, dyn=DynamicsParams(), k_lateral=PAPER_K_LATERAL,
                  leg_angles_deg=LEG_ANGLES_DEG, leg_gap_gain=0.3, center_gap_gain=1.0,
                  needle=NeedleSpec())
    kwargs.update(overrides)
    return PlantConfig(**kwargs)


def rigid_config(a=None, seed=0, scale=2.0, **overrides) -> PlantConfig:
    """Plant whose needle keeps a constant vector, so platform rows are exact.

    ``a`` gives the 3x8 tip coefficients of every morph except CenterLatched;
    when omitted they are drawn from ``seed``.
    """
    if a is None:
        a = np.random.default_rng(seed).uniform(-scale, scale, size=(3, 8))
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 8):
        raise ConfigError("rigid tip coefficients must be 3x8")
    needle = np.array([0.0, 0.0, 40.0])
    tip_rest = np.array([0.0, 0.0, 90.0])
    full = np.vstack([a, a])
    b = np.concatenate([tip_rest - needle, tip_rest])
    coeffs = {m: (full, b) for m in Morph if m is not Morph.CENTER}
    coeffs[Morph.CENTER] = (np.zeros((6, 8)), b)
    base = paper_config()
    kwargs = dict(coeffs=coeffs, force=base.force, leg_force=base.leg_force,
                  k_lateral=base.k_lateral)
    kwargs.update(overrides)
    return PlantConfig(**kwargs)


PRESETS = {"paper": paper_config, "rigid": rigid_config}


def get_preset(name: str) -> PlantConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
