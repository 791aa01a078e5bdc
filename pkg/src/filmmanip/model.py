"""Shared domain types and the closed-form needle geometry.

Coil order: coils 1-3 sit under the three legs, coil 4 is the central coil.
Poses are 6-vectors ``[P_p; P_n]`` (platform point, needle tip) in mm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDirectionError, InvalidInputError

MAIN_MORPH_BOUNDS = (-0.5, 0.4)
EPS_DIR = 1e-6
N_COILS = 4
N_REGRESSORS = 2 * N_COILS


class Morph(str, enum.Enum):
    MAIN = "Main"
    LEG1 = "Leg1Latched"
    LEG2 = "Leg2Latched"
    LEG3 = "Leg3Latched"
    CENTER = "CenterLatched"

    @property
    def latched_coil(self):
        """Index (0-based) of the coil holding the latched magnet, or None."""
        return _LATCHED_COIL[self]

    @classmethod
    def from_coil(cls, k):
        return {0: cls.LEG1, 1: cls.LEG2, 2: cls.LEG3, 3: cls.CENTER}[k]

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower()
        for m in cls:
            if key in (m.value.lower(), m.name.lower()):
                return m
        aliases = {"b1": cls.LEG1, "b2": cls.LEG2, "b3": cls.LEG3, "b4": cls.CENTER,
                   "center": cls.CENTER, "leg1": cls.LEG1, "leg2": cls.LEG2,
                   "leg3": cls.LEG3}
        if key in aliases:
            return aliases[key]
        raise InvalidInputError(f"unknown morph {text!r}")


_LATCHED_COIL = {Morph.MAIN: None, Morph.LEG1: 0, Morph.LEG2: 1, Morph.LEG3: 2,
                 Morph.CENTER: 3}


def as_currents(i, bounds=None) -> np.ndarray:
    """Validate a current vector (or a stack of them, shape ``(..., 4)``).

    With ``bounds`` the vector is additionally required to be main-morph safe.
    """
    arr = np.asarray(i, dtype=float)
    if arr.shape[-1:] != (N_COILS,):
        raise InvalidInputError(f"expected 4 coil currents, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("coil currents must be finite")
    if bounds is not None:
        lo, hi = bounds
        if np.any(arr < lo) or np.any(arr > hi):
            raise InvalidInputError(f"currents outside bounds [{lo}, {hi}] A")
    return arr


def augment(i) -> np.ndarray:
    """Return ``[I, I**2]``; works row-wise on stacks of current vectors."""
    arr = as_currents(i)
    return np.concatenate([arr, arr * arr], axis=-1)


def _point(p, name):
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1:] != (3,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return arr


def needle_direction(p_n, p_m, eps=EPS_DIR) -> np.ndarray:
    """Unit vector from ``p_m`` toward ``p_n`` (row-wise for stacks)."""
    d = _point(p_n, "p_n") - _point(p_m, "p_m")
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(norm <= eps):
        bad = np.flatnonzero(np.ravel(norm) <= eps)
        row = int(bad[0]) if d.ndim > 1 else None
        raise DegenerateDirectionError(
            f"needle points closer than {eps} mm; direction undefined", row=row)
    return d / norm


def platform_from_needle(p_n, p_m, n1, eps=EPS_DIR) -> np.ndarray:
    """Platform point ``p_n - n1 * u`` with ``u`` the unit needle axis."""
    if not n1 > 0:
        raise InvalidInputError("needle length must be positive")
    u = needle_direction(p_n, p_m, eps)
    return np.asarray(p_n, dtype=float) - n1 * u


def rotation_from_direction(u_hat, tol=1e-6) -> np.ndarray:
    """Direction-cosine angles (alpha, beta, gamma) in degrees.

    Gamma is the angle to Z, not a spin about the needle; a direction
    cannot encode spin.
    """
    u = np.asarray(u_hat, dtype=float)
    if u.shape[-1:] != (3,) or not np.all(np.isfinite(u)):
        raise InvalidInputError("direction must be a finite 3-vector")
    norm = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise InvalidInputError("direction must be a unit vector")
    return np.degrees(np.arccos(np.clip(u, -1.0, 1.0)))


def translation(p_p, p_p0) -> np.ndarray:
    """``p_p0 - p_p``; the sign is kept as the model defines it."""
    return _point(p_p0, "p_p0") - _point(p_p, "p_p")


def tip_speed(omega_deg_s, lever_mm):
    """Linear speed (m/s) of a point at ``lever_mm`` rotating at ``omega`` deg/s."""
    if not np.all(np.asarray(lever_mm) > 0):
        raise InvalidInputError("lever must be positive")
    return np.asarray(omega_deg_s) * (math.pi / 180.0) * np.asarray(lever_mm) * 1e-3


@dataclass(frozen=True)
class NeedleSpec:
    """Needle length and the effective rotation lever (pivot to tip)."""

    n1: float = 40.0
    lever: float = 43.6

    def __post_init__(self):
        if not self.n1 > 0:
            raise InvalidInputError("needle length must be positive")
        if not self.lever >= self.n1:
            raise InvalidInputError("lever must be at least the needle length")


@dataclass(frozen=True)
class ReferenceState:
    p_p0: tuple

    def __post_init__(self):
        _point(self.p_p0, "p_p0")


@dataclass
class PoseSample:
    t: float
    p_m: np.ndarray
    p_n: np.ndarray
    needle: NeedleSpec = field(default_factory=NeedleSpec)

    @property
    def u_hat(self):
        return needle_direction(self.p_n, self.p_m)

    @property
    def p_p(self):
        return platform_from_needle(self.p_n, self.p_m, self.needle.n1)

    @property
    def r(self):
        return rotation_from_direction(self.u_hat)

    def tr(self, ref: ReferenceState):
        return translation(self.p_p, ref.p_p0)


@dataclass
class KinematicCoefficients:
    """Quadratic current-to-pose model ``X = A @ [I, I^2] + B``.

    ``a`` is 6x8 with rows ``[P_p; P_n]``; ``b`` is the 6-vector offset.
    """

    a: np.ndarray
    b: np.ndarray
    morph: Morph = Morph.MAIN
    needle: NeedleSpec = field(default_factory=NeedleSpec)

    def __post_init__(self):
        self.a = np.array(self.a, dtype=float)
        self.b = np.array(self.b, dtype=float)
        if self.a.shape != (6, N_REGRESSORS) or self.b.shape != (6,):
            raise InvalidInputError(
                f"coefficients must be 6x8 and 6, got {self.a.shape} and {self.b.shape}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise InvalidInputError("coefficients must be finite")
        self.morph = Morph.parse(self.morph) if not isinstance(self.morph, Morph) else self.morph

    def evaluate(self, i) -> np.ndarray:
        return augment(i) @ self.a.T + self.b

    @property
    def tip_a(self):
        return self.a[3:]

    @property
    def tip_b(self):
        return self.b[3:]
