"""Synthetic ground-truth plant.

Hammerstein structure: a per-morph quadratic static map feeds a two-mode
linear filter (DC gain 1) applied to every output channel.  Magnet latching
is decided from parametric elastic/magnetic force curves evaluated at each
magnet's filtered gap.  Remanence is a per-coil sign latch.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import signal

from .errors import InvalidInputError, MorphTransitionError
from .model import (MAIN_MORPH_BOUNDS, KinematicCoefficients, Morph, NeedleSpec,
                    as_currents, augment)

ATTRACT = "attract"
REPEL = "repel"
PULL_IN_RESOLUTION = 0.01  # mm


@dataclass(frozen=True)
class ForceCurveParams:
    """Elastic and magnetic force curves along one magnet's approach path.

    ``z`` is the gap between the coil top and the magnet (mm); the film is
    undeformed at ``z = d``.  Forces are in mN.
    """

    k_e: float
    z0: float
    a0: float
    a1: float
    p: float = 2.0
    m: int = 2
    d: float = 10.5
    h: float = 2.5
    i_max_drive: float = 0.5
    gap_work_min: float = 0.0

    def __post_init__(self):
        if not (self.k_e > 0 and self.a0 > 0 and self.a1 > 0 and self.z0 > 0):
            raise InvalidInputError("k_e, a0, a1 and z0 must be positive")
        if self.m not in (1, 2):
            raise InvalidInputError("magnet count must be 1 or 2")
        if not self.h >= 0:
            raise InvalidInputError("cap height must be non-negative")
        if not (self.d > 0 and self.p > 0 and self.i_max_drive > 0):
            raise InvalidInputError("d, p and i_max_drive must be positive")

    def elastic(self, z):
        return self.k_e * np.maximum(self.d - np.asarray(z, dtype=float), 0.0)

    def magnetic(self, z, i):
        """Net attraction with signed current (positive current attracts)."""
        z = np.asarray(z, dtype=float)
        return (self.m * self.a0 + self.a1 * np.asarray(i, dtype=float)) / (z + self.z0) ** self.p


def force_curves(z, i, mode, fp: ForceCurveParams):
    """Return ``(f_e, f_m)`` at gap ``z`` for drive magnitude ``i``.

    In repel mode the coil term opposes the permanent attraction, so ``f_m``
    is the residual attraction (negative once the drive wins).
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidInputError("gap must be non-negative")
    if mode == ATTRACT:
        sign = 1.0
    elif mode == REPEL:
        sign = -1.0
    else:
        raise InvalidInputError(f"mode must be {ATTRACT!r} or {REPEL!r}")
    return fp.elastic(z), fp.magnetic(z, sign * abs(float(i)))


def pulls_in(fp: ForceCurveParams, i, gap) -> bool:
    """True when attraction beats the elastic force on the whole path [0, gap]."""
    z = np.arange(0.0, max(float(gap), 0.0) + 0.5 * PULL_IN_RESOLUTION, PULL_IN_RESOLUTION)
    return bool(np.all(fp.magnetic(z, i) > fp.elastic(z)))


def releases(fp: ForceCurveParams, i) -> bool:
    """True when the elastic restoring force at the cap gap beats the residual attraction."""
    return bool(fp.elastic(fp.h) > fp.magnetic(fp.h, i))


def latch_predicates(fp: ForceCurveParams):
    """``(pull_in, release)`` at full drive over the approach path ``[0, d]``."""
    return pulls_in(fp, fp.i_max_drive, fp.d), releases(fp, -fp.i_max_drive)


@dataclass(frozen=True)
class DynamicsParams:
    f1: float = 30.0
    f2: float = 50.0
    f_z: float = 40.0
    zeta1: float = 0.05
    zeta2: float = 0.05
    zeta_z: float = 0.05
    dt: float = 0.001

    def __post_init__(self):
        if not (0 < self.f1 < self.f_z < self.f2):
            raise InvalidInputError("need 0 < f1 < f_z < f2")
        for name in ("zeta1", "zeta2", "zeta_z"):
            if not 0 < getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must lie in (0, 1)")
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")

    def transfer_function(self):
        """Continuous ``(num, den)`` with poles at f1, f2 and zeros at f_z."""
        w1, w2, wz = (2 * np.pi * f for f in (self.f1, self.f2, self.f_z))
        gain = (w1 * w2 / wz) ** 2
        num = gain * np.array([1.0, 2 * self.zeta_z * wz, wz * wz])
        den = np.polymul([1.0, 2 * self.zeta1 * w1, w1 * w1],
                         [1.0, 2 * self.zeta2 * w2, w2 * w2])
        return num, den

    def magnitude(self, freqs_hz):
        """Closed-form |H(j 2 pi f)| of the continuous filter."""
        num, den = self.transfer_function()
        s = 2j * np.pi * np.asarray(freqs_hz, dtype=float)
        return np.abs(np.polyval(num, s) / np.polyval(den, s))


@functools.lru_cache(maxsize=32)
def discrete_filter(dyn: DynamicsParams):
    """Zero-order-hold discretisation ``(Ad, Bd, C)`` of the 4-state filter."""
    num, den = dyn.transfer_function()
    a, b, c, d = signal.tf2ss(num, den)
    ad, bd, cd, _, _ = signal.cont2discrete((a, b, c, d), dyn.dt, method="zoh")
    for arr in (ad, bd, cd):
        arr.setflags(write=False)
    return ad, bd.ravel(), cd.ravel()


def _steady_modes(dyn, u):
    """Filter state in equilibrium with constant input ``u`` (per channel)."""
    ad, bd, _ = discrete_filter(dyn)
    s_unit = np.linalg.solve(np.eye(len(bd)) - ad, bd)
    return np.outer(np.asarray(u, dtype=float), s_unit)


# Mismatch perturbation: fixed low-order trigonometric terms per output row.
_PERT_FREQ = np.pi * (1.0 + (np.add.outer(np.arange(6), 2 * np.arange(4)) % 3))
_PERT_PHASE = 0.7 * np.arange(6)[:, None] + 1.3 * np.arange(4)[None, :]


@dataclass(frozen=True)
class PlantConfig:
    """Ground-truth plant parameters.

    ``coeffs`` maps every morph to its ``(A*, B*)`` static map.  Remanence
    offsets ``b_r`` are expressed as equivalent coil current (A).
    """

    coeffs: Mapping
    force: ForceCurveParams
    leg_force: ForceCurveParams
    dyn: DynamicsParams = field(default_factory=DynamicsParams)
    mismatch: float = 0.0
    noise_sigma: float = 0.0
    remanence_enabled: bool = False
    b_r: float = 0.01
    i_sat: float = 0.45
    seed: int = 0
    k_lateral: float = 1.4
    leg_angles_deg: tuple = (0.0, 120.0, 240.0)
    leg_gap_gain: float = 0.5
    center_gap_gain: float = 1.0
    needle: NeedleSpec = field(default_factory=NeedleSpec)
    bounds: tuple = MAIN_MORPH_BOUNDS
    bypass_dynamics: bool = False

    def __post_init__(self):
        coeffs = {}
        for morph in Morph:
            if morph not in self.coeffs and morph.value not in self.coeffs:
                raise InvalidInputError(f"missing coefficients for morph {morph.value}")
            a, b = self.coeffs[morph] if morph in self.coeffs else self.coeffs[morph.value]
            a = np.array(a, dtype=float)
            b = np.array(b, dtype=float)
            if a.shape != (6, 8) or b.shape != (6,):
                raise InvalidInputError(f"{morph.value}: coefficients must be 6x8 and 6")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise InvalidInputError(f"{morph.value}: coefficients must be finite")
            a.setflags(write=False)
            b.setflags(write=False)
            coeffs[morph] = (a, b)
        object.__setattr__(self, "coeffs", coeffs)
        if not self.mismatch >= 0:
            raise InvalidInputError("mismatch must be non-negative")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be non-negative")
        if not (self.i_sat > 0 and self.b_r >= 0 and self.k_lateral > 0):
            raise InvalidInputError("i_sat and k_lateral must be positive, b_r non-negative")
        lo, hi = self.bounds
        if not lo < hi:
            raise InvalidInputError("bounds must satisfy lo < hi")
        center_a = coeffs[Morph.CENTER][0]
        if np.max(np.abs(center_a)) * max(abs(lo), abs(hi)) * 8 > 1e-6:
            raise InvalidInputError("CenterLatched map must collapse to a single point")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def coefficients(self, morph=Morph.MAIN) -> KinematicCoefficients:
        a, b = self.coeffs[morph]
        return KinematicCoefficients(a, b, morph, self.needle)

    def force_params(self, k):
        return self.force if k == 3 else self.leg_force

    @property
    def leg_directions(self):
        th = np.radians(np.asarray(self.leg_angles_deg, dtype=float))
        return np.stack([np.cos(th), np.sin(th), np.zeros(3)], axis=1)


def _as_morph(morph):
    return morph if isinstance(morph, Morph) else Morph.parse(morph)


def remanence_offset(remanence, cfg: PlantConfig):
    if not cfg.remanence_enabled or remanence is None:
        return np.zeros(4)
    return cfg.b_r * np.asarray(remanence, dtype=float)


def static_response(i, morph, cfg: PlantConfig, remanence=None) -> np.ndarray:
    """Quasi-static 6-vector pose; accepts a stack of current vectors."""
    i = as_currents(i)
    morph = _as_morph(morph)
    i_eff = i + remanence_offset(remanence, cfg)
    a, b = cfg.coeffs[morph]
    x = augment(i_eff) @ a.T + b
    if cfg.mismatch > 0 and morph is not Morph.CENTER:
        terms = np.sin(i_eff[..., None, :] * _PERT_FREQ + _PERT_PHASE)
        x = x + cfg.mismatch * terms.mean(axis=-1)
    return x


def _static_gaps(i_eff, morph, cfg: PlantConfig):
    """Quasi-static magnet gaps (mm) for the four coils."""
    a_tip = cfg.coeffs[Morph.MAIN][0][3:]
    dirs = np.vstack([cfg.leg_directions, [0.0, 0.0, -1.0]])
    gaps = np.empty(4)
    for k in range(4):
        own = a_tip[:, k] * i_eff[k] + a_tip[:, k + 4] * i_eff[k] ** 2
        gain = cfg.center_gap_gain if k == 3 else cfg.leg_gap_gain
        fp = cfg.force_params(k)
        gaps[k] = max(fp.d - gain * float(dirs[k] @ own), 0.0)
    k_latched = morph.latched_coil
    if k_latched is not None:
        gaps[k_latched] = cfg.force_params(k_latched).h
    return gaps


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the simulated plant.

    ``modes`` holds the filter state for the six pose channels followed by
    the four magnet-gap channels; ``y`` is the measured (noisy) pose.
    """

    morph: Morph
    x: np.ndarray
    y: np.ndarray
    gaps: np.ndarray
    modes: np.ndarray
    remanence: np.ndarray
    t: float = 0.0
    steps: int = 0


def initial_state(cfg: PlantConfig, morph=Morph.MAIN, i=(0.0, 0.0, 0.0, 0.0)) -> PlantState:
    """Plant at rest in equilibrium with the constant command ``i``."""
    morph = _as_morph(morph)
    i = as_currents(i)
    x = static_response(i, morph, cfg)
    gaps = _static_gaps(i, morph, cfg)
    modes = _steady_modes(cfg.dyn, np.concatenate([x, gaps]))
    return PlantState(morph, x, x.copy(), gaps, modes, np.zeros(4, dtype=int))


def remanence_update(state: PlantState, i, cfg: PlantConfig) -> PlantState:
    """Latch each coil's remanence sign once ``|i_k|`` reaches saturation."""
    i = as_currents(i)
    rem = state.remanence.copy()
    hit = np.abs(i) >= cfg.i_sat
    rem[hit] = np.sign(i[hit]).astype(int)
    return dataclasses.replace(state, remanence=rem)


def _latch_event(morph, i_eff, gaps, cfg: PlantConfig):
    if morph is Morph.MAIN:
        for k in range(4):
            if i_eff[k] > 0 and pulls_in(cfg.force_params(k), i_eff[k], gaps[k]):
                return Morph.from_coil(k)
        return morph
    k = morph.latched_coil
    if releases(cfg.force_params(k), i_eff[k]):
        return Morph.MAIN
    return morph


def step(state: PlantState, i, cfg: PlantConfig, rng=None) -> PlantState:
    """Advance the plant by one ``dt`` with command ``i`` held over the step."""
    i = as_currents(i)
    state = remanence_update(state, i, cfg)
    i_eff = i + remanence_offset(state.remanence, cfg)
    morph = _latch_event(state.morph, i_eff, state.gaps, cfg)
    u = np.concatenate([static_response(i, morph, cfg, state.remanence),
                        _static_gaps(i_eff, morph, cfg)])
    if cfg.bypass_dynamics:
        modes = _steady_modes(cfg.dyn, u)
        out = u
    else:
        ad, bd, cd = discrete_filter(cfg.dyn)
        modes = state.modes @ ad.T + np.outer(u, bd)
        out = modes @ cd
    x, gaps = out[:6], np.maximum(out[6:], 0.0)
    y = x
    if cfg.noise_sigma > 0:
        if rng is None:
            raise InvalidInputError("a random generator is required when noise is enabled")
        y = x + rng.normal(0.0, cfg.noise_sigma, size=6)
    return dataclasses.replace(state, morph=morph, x=x, y=y, gaps=gaps, modes=modes,
                               t=(state.steps + 1) * cfg.dyn.dt, steps=state.steps + 1)


class Plant:
    """Stateful wrapper owning a state and its noise generator."""

    def __init__(self, cfg: PlantConfig, morph=Morph.MAIN, i=(0.0, 0.0, 0.0, 0.0), seed=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.state = initial_state(cfg, morph, i)

    def step(self, i) -> PlantState:
        self.state = step(self.state, i, self.cfg, self.rng)
        return self.state

    def run(self, currents):
        """Step through a ``(N, 4)`` command sequence.

        Returns measured poses ``(N, 6)`` and the morph after each step.
        """
        currents = as_currents(currents)
        poses = np.empty((len(currents), 6))
        morphs = []
        for n, i in enumerate(currents):
            st = self.step(i)
            poses[n] = st.y
            morphs.append(st.morph)
        return poses, morphs


PULSE_CURRENT = 0.5
PULSE_DURATION = 0.05


def morph_transition(state: PlantState, pulse: str, cfg: PlantConfig, rng=None,
                     settle=1.0, current=PULSE_CURRENT, duration=PULSE_DURATION):
    """Apply a scripted switching pulse, then hold zero current for ``settle`` s.

    ``pulse`` is ``enter_side_1``..``enter_side_3``, ``draw_center`` or
    ``exit_to_main``.  Returns ``(final_state, trace)`` where trace is a list
    of ``(t, currents, state)``.
    """
    if pulse.startswith("enter_side_"):
        if state.morph is not Morph.MAIN:
            raise MorphTransitionError(f"{pulse} requires Main, plant is in {state.morph.value}")
        k = int(pulse.rsplit("_", 1)[1]) - 1
        if k not in (0, 1, 2):
            raise MorphTransitionError(f"unknown leg in {pulse!r}")
        sign = 1.0
    elif pulse == "draw_center":
        if state.morph is not Morph.MAIN:
            raise MorphTransitionError(f"{pulse} requires Main, plant is in {state.morph.value}")
        k, sign = 3, 1.0
    elif pulse == "exit_to_main":
        if state.morph is Morph.MAIN:
            raise MorphTransitionError("exit_to_main requires a latched morph")
        k, sign = state.morph.latched_coil, -1.0
    else:
        raise MorphTransitionError(f"unknown pulse {pulse!r}")
    dt = cfg.dyn.dt
    cmd = np.zeros(4)
    cmd[k] = sign * current
    trace = []
    for _ in range(int(round(duration / dt))):
        state = step(state, cmd, cfg, rng)
        trace.append((state.t, cmd.copy(), state))
    zero = np.zeros(4)
    for _ in range(int(round(settle / dt))):
        state = step(state, zero, cfg, rng)
        trace.append((state.t, zero.copy(), state))
    return state, trace


def blocked_force(direction, region, cfg: PlantConfig, samples=2001) -> float:
    """Maximum static force (mN) against a rigid constraint at full drive.

    Z uses net central-coil attraction minus the elastic force over the gap
    range of the region; X and Y use the lateral tip stiffness times the
    largest free tip excursion from rest inside the main-morph current box.
    """
    direction = str(direction).upper()
    region = str(region).lower()
    if direction == "Z":
        fp = cfg.force
        if region == "main":
            lo, hi = fp.gap_work_min, fp.d
        elif region in ("b4-to-main", "b4_to_main"):
            lo, hi = fp.h, fp.gap_work_min
        else:
            raise InvalidInputError(f"unknown region {region!r}")
        z = np.linspace(lo, hi, samples)
        return float(np.max(fp.magnetic(z, fp.i_max_drive) - fp.elastic(z)))
    if direction in ("X", "Y"):
        if region != "main":
            raise InvalidInputError("lateral blocked force is defined for the main morph only")
        axis = 3 if direction == "X" else 4
        lo, hi = cfg.bounds
        levels = np.linspace(lo, hi, 8)
        grid = np.stack(np.meshgrid(*[levels] * 4, indexing="ij"), axis=-1).reshape(-1, 4)
        tip = static_response(grid, Morph.MAIN, cfg)[:, axis]
        rest = static_response(np.zeros(4), Morph.MAIN, cfg)[axis]
        return float(cfg.k_lateral * np.max(np.abs(tip - rest)))
    raise InvalidInputError(f"unknown direction {direction!r}")
