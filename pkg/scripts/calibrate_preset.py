"""Re-derive the scalars of the ``paper`` plant preset.

Each stage solves a small least-squares problem against the target figures
listed in ``TARGETS`` and prints the solution next to the value stored in
``filmmanip.presets``.  The leg-magnet force curve and the gap gains are
hand-set and not solved here.

The side-morph stage is not unique: three-fold symmetry caps the composite
Y/X ratio, so ``side_radius`` and ``side_center_lat`` trade off along a flat
valley with equal residual.  The stored pair is one point of that valley, and
the stored lateral gain is rounded.

    python3 scripts/calibrate_preset.py
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.optimize import least_squares

from filmmanip import kinematics, plant, presets
from filmmanip.model import Morph

TARGETS = {
    "main_extents": np.array([14.97, 12.96, 3.51]),  # mm
    "rotation_ranges": np.array([18.5, 18.4]),  # deg
    "composite_extents": np.array([41.47, 52.62, 11.22]),  # mm
    "magnet_force_work": 185.0,  # mN, both magnets at the work distance, full drive
    "blocked_z_main": 79.0,  # mN
    "blocked_z_b4": 235.0,  # mN
    "blocked_x": 10.8,  # mN
    "blocked_y": 8.9,  # mN
}
LEVELS = 8
QUAD_RATIO = 0.3  # quadratic / linear coefficient ratio for lateral and tilt terms


def _config(g):
    return presets.paper_config(coeffs=presets.morph_coefficients(g))


def main_translation(g):
    """Lateral gain from the X extent, central-coil gain from the Z extent."""

    def res(x):
        gg = dataclasses.replace(g, lat_a=x[0], lat_c=QUAD_RATIO * x[0], center_z_a=x[1])
        ext = kinematics.workspace(_config(gg), LEVELS).extents
        return (ext - TARGETS["main_extents"])[[0, 2]]

    s = least_squares(res, [8.0, 3.0], bounds=([0.1, 0.1], [50.0, 20.0]))
    return dataclasses.replace(g, lat_a=s.x[0], lat_c=QUAD_RATIO * s.x[0], center_z_a=s.x[1])


def needle_tilt(g):
    def res(x):
        gg = dataclasses.replace(g, tilt_a=x[0], tilt_c=QUAD_RATIO * x[0], tilt_phase_deg=x[1])
        return kinematics.workspace(_config(gg), LEVELS).rotation_ranges - TARGETS["rotation_ranges"]

    s = least_squares(res, [7.0, 14.0], bounds=([1.0, 0.0], [20.0, 30.0]))
    return dataclasses.replace(g, tilt_a=s.x[0], tilt_c=QUAD_RATIO * s.x[0],
                               tilt_phase_deg=s.x[1])


def side_morphs(g):
    """Latched-leg rest offset, drop and central-coil action, relative error."""
    target = TARGETS["composite_extents"]

    def res(x):
        gg = dataclasses.replace(g, side_radius=x[0], side_center_lat=x[1], side_drop=x[2])
        return (kinematics.morph_workspaces(_config(gg), LEVELS).extents - target) / target

    s = least_squares(res, [24.0, 8.0, 9.5], bounds=([5.0, 0.1, 0.0], [60.0, 30.0, 30.0]))
    return dataclasses.replace(g, side_radius=s.x[0], side_center_lat=s.x[1], side_drop=s.x[2])


def central_force(d=10.5, h=2.5, i_max=0.5, pull_margin=0.45, release_margin=0.25):
    """Central force curve: blocked forces, work-distance force and latch margins.

    With ``phi(z) = k_e (d - z) (z + z0)^2 / (2 a0)`` and ``g = a1 / (2 a0)``,
    pull-in at full drive needs ``max phi < 1 + g i_max`` and release at the cap
    needs ``phi(h) > 1 - g i_max``; both are placed inside those limits by the
    given fractions of ``g``.
    """

    def net(z, ke, z0, a0, a1):
        return (2 * a0 + a1 * i_max) / (z + z0) ** 2 - ke * np.maximum(d - z, 0.0)

    def res(x):
        ke, z0, a0, g, zwd = x
        a1 = 2 * a0 * g
        zg = np.linspace(0.0, d, 1051)
        phi_max = (ke * (d - zg) * (zg + z0) ** 2).max() / (2 * a0)
        phi_h = ke * (d - h) * (h + z0) ** 2 / (2 * a0)
        return [
            (2 * a0 + a1 * i_max) / (zwd + z0) ** 2 - TARGETS["magnet_force_work"],
            net(np.linspace(zwd, d, 2001), ke, z0, a0, a1).max() - TARGETS["blocked_z_main"],
            net(np.linspace(h, zwd, 2001), ke, z0, a0, a1).max() - TARGETS["blocked_z_b4"],
            50 * (phi_max - (1 + pull_margin * g)),
            50 * (phi_h - (1 - release_margin * g)),
        ]

    s = least_squares(res, [90.0, 2.0, 3000.0, 0.6, 6.0],
                      bounds=([1, 0.3, 10, 0.05, 2.6], [1000, 10, 1e6, 1.9, 10]))
    ke, z0, a0, g, zwd = s.x
    return dataclasses.replace(presets.PAPER_FORCE, k_e=ke, z0=z0, a0=a0, a1=2 * a0 * g,
                               gap_work_min=zwd)


def lateral_gain(cfg):
    """Least-squares gain from lateral tip excursion to the X and Y blocked forces."""
    unit = cfg.replace(k_lateral=1.0)
    ex = plant.blocked_force("X", "main", unit)
    ey = plant.blocked_force("Y", "main", unit)
    return (TARGETS["blocked_x"] * ex + TARGETS["blocked_y"] * ey) / (ex ** 2 + ey ** 2)


def _show(name, solved, stored):
    print(f"  {name:16s} solved {solved:12.6g}   stored {stored:12.6g}")


def main():
    g0 = presets.PAPER_GEOMETRY
    g = main_translation(g0)
    g = needle_tilt(g)
    g = side_morphs(g)
    print("geometry")
    for f in ("lat_a", "center_z_a", "tilt_a", "tilt_phase_deg", "side_radius",
              "side_center_lat", "side_drop"):
        _show(f, getattr(g, f), getattr(g0, f))
    force = central_force()
    print("central force curve")
    for f in ("k_e", "z0", "a0", "a1", "gap_work_min"):
        _show(f, getattr(force, f), getattr(presets.PAPER_FORCE, f))
    print("lateral blocked-force gain")
    _show("k_lateral", lateral_gain(presets.paper_config()), presets.PAPER_K_LATERAL)
    cw = kinematics.morph_workspaces(_config(g), LEVELS)
    print("check: main extents", np.round(cw.reports[Morph.MAIN].extents, 3),
          "composite", np.round(cw.extents, 3))


if __name__ == "__main__":
    main()
