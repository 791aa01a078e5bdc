"""Simulated experiments: path following, tracking metrics, amplitude sweeps,
chirp magnitude estimates and speed extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, MorphViolationError
from .kinematics import IkOptions, current_grid, inverse_batch
from .model import (KinematicCoefficients, Morph, NeedleSpec, as_currents, needle_direction,
                    rotation_from_direction)
from .plant import (PULSE_CURRENT, PULSE_DURATION, Plant, PlantConfig, initial_state,
                    static_response, step)

PHASE_BINS = 360
WARMUP_S = 0.5
SMOOTH_WINDOW = 5


@dataclass(frozen=True)
class PathSpec:
    shape: str = "circle"
    size: float = 0.64  # diameter (circle) or side (square), mm
    frequency: float = 1.0  # cycles per second
    cycles: int = 5
    center: tuple | None = None  # defaults to the zero-current tip
    samples_per_cycle: int = 360
    points: tuple | None = None  # one cycle of custom XYZ offsets

    def __post_init__(self):
        if self.shape not in ("circle", "square", "custom"):
            raise InvalidInputError(f"unknown path shape {self.shape!r}")
        if not self.size > 0:
            raise InvalidInputError("path size must be positive")
        if not self.frequency > 0:
            raise InvalidInputError("path frequency must be positive")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise InvalidInputError("cycles must be an integer >= 1")
        if self.samples_per_cycle < 4:
            raise InvalidInputError("need at least 4 samples per cycle")
        if self.shape == "square" and self.samples_per_cycle % 4:
            raise InvalidInputError("square paths need samples_per_cycle divisible by 4")
        if self.shape == "custom" and self.points is None:
            raise InvalidInputError("custom paths need points")

    @property
    def nominal_speed(self) -> float:
        """Reference path length per second (mm/s)."""
        if self.shape == "circle":
            return math.pi * self.size * self.frequency
        if self.shape == "square":
            return 4.0 * self.size * self.frequency
        pts = np.asarray(self.points, dtype=float)
        closed = np.vstack([pts, pts[:1]])
        return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1))) * self.frequency

    def with_frequency(self, f):
        return replace(self, frequency=float(f))


def path_offsets(spec: PathSpec, phase) -> np.ndarray:
    """Offsets from the path center at cycle phase(s) ``phase`` (in cycles)."""
    frac = np.mod(np.asarray(phase, dtype=float), 1.0)
    if spec.shape == "circle":
        r = 0.5 * spec.size
        ang = 2.0 * np.pi * frac
        return np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros_like(ang)], axis=-1)
    if spec.shape == "square":
        h = 0.5 * spec.size
        corners = np.array([[-h, -h], [h, -h], [h, h], [-h, h], [-h, -h]])
        s = 4.0 * frac
        k = np.minimum(np.floor(s).astype(int), 3)
        u = (s - k)[..., None]
        xy = corners[k] * (1.0 - u) + corners[k + 1] * u
        return np.concatenate([xy, np.zeros(xy.shape[:-1] + (1,))], axis=-1)
    pts = np.asarray(spec.points, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    s = frac * len(pts)
    k = np.minimum(np.floor(s).astype(int), len(pts) - 1)
    u = (s - k)[..., None]
    return closed[k] * (1.0 - u) + closed[k + 1] * u


@dataclass
class Reference:
    t: np.ndarray
    phase: np.ndarray
    targets: np.ndarray


def _center(spec: PathSpec, coeffs: KinematicCoefficients | None):
    if spec.center is not None:
        return np.asarray(spec.center, dtype=float)
    if coeffs is None:
        return np.zeros(3)
    return coeffs.tip_b.copy()


def gen_path(spec: PathSpec, coeffs: KinematicCoefficients | None = None) -> Reference:
    """Uniformly phased tip targets, ``samples_per_cycle`` per cycle."""
    n = spec.cycles * spec.samples_per_cycle
    phase = np.arange(n) / spec.samples_per_cycle
    t = phase / spec.frequency
    return Reference(t, phase, _center(spec, coeffs) + path_offsets(spec, phase))


@dataclass
class Trajectory:
    """Fixed-step record: command ``currents[n]`` applied over ``[t[n], t[n] + dt)``
    and the measured pose at the end of that step."""

    t: np.ndarray
    currents: np.ndarray
    poses: np.ndarray
    dt: float
    phase: np.ndarray | None = None
    targets: np.ndarray | None = None
    spec: PathSpec | None = None
    morphs: list = field(default_factory=list)

    @property
    def tip(self):
        return self.poses[:, 3:]


def follow(plant: PlantConfig, coeffs: KinematicCoefficients, spec: PathSpec,
           opts: IkOptions = IkOptions(), warmup=WARMUP_S, seed=None) -> Trajectory:
    """Open-loop path following at the plant rate.

    The reference is sampled at every plant step; each sample's IK currents
    are held for one step.  Whole warm-up cycles (at least ``warmup`` s) run
    first so the recorded cycles are in steady state.
    """
    if coeffs.morph is Morph.CENTER:
        raise InvalidInputError("the CenterLatched morph cannot follow a path")
    dt = plant.dyn.dt
    f = spec.frequency
    if f >= 0.5 / dt:
        raise InvalidInputError("path frequency must be below the Nyquist rate of the plant")
    warm_cycles = math.ceil(warmup * f) if warmup > 0 else 0
    n_warm = int(round(warm_cycles / f / dt))
    n_rec = int(round(spec.cycles / f / dt))
    n_all = n_warm + n_rec
    t_all = np.arange(n_all) * dt
    phase_all = f * t_all - warm_cycles
    center = _center(spec, coeffs)
    # periodic references repeat, so solve IK once per distinct phase
    frac = np.round(np.mod(phase_all, 1.0), 12)
    uniq, inv = np.unique(frac, return_inverse=True)
    cmd_uniq = inverse_batch(coeffs, center + path_offsets(spec, uniq), opts)
    commands = cmd_uniq[inv]
    rng = np.random.default_rng(plant.seed if seed is None else seed)
    state = initial_state(plant, coeffs.morph, commands[0])
    poses = np.empty((n_all, 6))
    morphs = []
    for n in range(n_all):
        state = step(state, commands[n], plant, rng)
        if state.morph is not coeffs.morph:
            raise MorphViolationError(
                f"sample {n}: plant switched to {state.morph.value} while following a "
                f"{coeffs.morph.value} path")
        poses[n] = state.y
        morphs.append(state.morph)
    rec = slice(n_warm, n_all)
    t = t_all[rec] - t_all[n_warm]
    phase = phase_all[rec]
    targets = center + path_offsets(spec, phase)
    return Trajectory(t, commands[rec], poses[rec], dt, phase, targets, spec, morphs[rec])


@dataclass
class PathMetrics:
    speed: float  # mm/s
    precision: float | None  # um
    accuracy: float  # um
    mean_radius: float | None = None  # mm
    amplitude_db: float | None = None
    cycles: int = 0

    def as_dict(self):
        return {"speed_mm_s": self.speed, "rms_precision_um": self.precision,
                "rms_accuracy_um": self.accuracy, "mean_radius_mm": self.mean_radius,
                "amplitude_db": self.amplitude_db, "cycles": self.cycles}


def phase_bin_spread(deviation, phase, bins=PHASE_BINS):
    """RMS distance of per-sample deviations to their phase-bin mean.

    Returns ``(rms, full_cycles)``; ``rms`` is None with fewer than 2 cycles.
    """
    deviation = np.asarray(deviation, dtype=float)
    phase = np.asarray(phase, dtype=float)
    rel = phase - phase[0]
    cycles = int(math.floor(rel[-1] + 1.0 / bins + 1e-9)) if len(rel) else 0
    if cycles < 2:
        return None, cycles
    b = np.floor(np.mod(phase, 1.0) * bins + 1e-9).astype(int) % bins
    sums = np.zeros((bins, deviation.shape[1]))
    np.add.at(sums, b, deviation)
    counts = np.bincount(b, minlength=bins)
    means = sums / np.maximum(counts, 1)[:, None]
    spread = deviation - means[b]
    return float(np.sqrt(np.mean(np.sum(spread ** 2, axis=1)))), cycles


def metrics(traj: Trajectory, reference=None, bins=PHASE_BINS) -> PathMetrics:
    """Speed, RMS precision/accuracy and, for circles, radius and amplitude.

    ``reference`` optionally overrides the trajectory's phase-matched
    targets.  Precision is the cross-cycle spread of the tracking deviation
    within each phase bin, so a constant bias does not count against it.
    """
    tip = traj.tip
    if len(tip) < 2:
        raise InvalidInputError("trajectory needs at least two samples")
    targets = traj.targets if reference is None else np.asarray(reference, dtype=float)
    if targets is None or targets.shape != tip.shape:
        raise InvalidInputError("reference must give one target per sample")
    length = float(np.sum(np.linalg.norm(np.diff(tip, axis=0), axis=1)))
    speed = length / ((len(tip) - 1) * traj.dt) if len(tip) > 1 else 0.0
    dev = tip - targets
    accuracy = float(np.sqrt(np.mean(np.sum(dev ** 2, axis=1)))) * 1e3
    phase = traj.phase if traj.phase is not None else np.arange(len(tip)) * traj.dt
    precision, cycles = phase_bin_spread(dev, phase, bins)
    if precision is not None:
        precision *= 1e3
    radius = amp = None
    spec = traj.spec
    if spec is not None and spec.shape == "circle":
        xy = tip[:, :2]
        radius = float(np.mean(np.linalg.norm(xy - xy.mean(axis=0), axis=1)))
        amp = 20.0 * math.log10(radius / (0.5 * spec.size)) if radius > 0 else -math.inf
    return PathMetrics(speed, precision, accuracy, radius, amp, cycles)


@dataclass
class BodeRow:
    freq_hz: float
    amp_db: float
    mean_radius_mm: float


def amplitude_sweep(plant: PlantConfig, coeffs: KinematicCoefficients, template: PathSpec,
                    freqs, opts: IkOptions = IkOptions()):
    """Follow the same reference circle at each frequency; one row per frequency."""
    freqs = [float(f) for f in freqs]
    if not freqs:
        raise InvalidInputError("at least one frequency is required")
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise InvalidInputError("frequencies must be strictly increasing")
    nyq = 0.5 / plant.dyn.dt
    if freqs[0] <= 0 or freqs[-1] >= nyq:
        raise InvalidInputError(f"frequencies must lie in (0, {nyq}) Hz")
    if template.shape != "circle":
        raise InvalidInputError("amplitude sweeps use circular paths")
    rows = []
    for f in freqs:
        m = metrics(follow(plant, coeffs, template.with_frequency(f), opts))
        rows.append(BodeRow(f, m.amplitude_db, m.mean_radius))
    return rows


@dataclass
class ChirpResult:
    freq_hz: np.ndarray
    amplitude: np.ndarray  # fundamental amplitude per tip axis, mm
    gain_db: np.ndarray  # dynamic over quasi-static amplitude per axis (nan if undefined)
    t: np.ndarray
    response: np.ndarray
    static: np.ndarray


def chirp_signal(t, f0, f1, duration):
    """Phase (rad) of a linear chirp from ``f0`` to ``f1`` over ``duration``."""
    return 2.0 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t)


def _sinusoid_amplitude(y, theta, mask):
    """Least-squares amplitude of the ``cos/sin(theta)`` component of ``y``."""
    basis = np.stack([np.cos(theta[mask]), np.sin(theta[mask]), np.ones(mask.sum())], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y[mask], rcond=None)
    return np.hypot(coef[0], coef[1])


def chirp_response(plant: PlantConfig, coil, f_range=(1.0, 100.0), duration=100.0,
                   amplitude=0.05, bias=None, n_points=200, window=0.4, min_cycles=3,
                   seed=None) -> ChirpResult:
    """Excite one coil (1-based) with a linear chirp and estimate magnitudes.

    Magnitude at each analysis frequency comes from a windowed sinusoid fit
    at the instantaneous chirp phase.  The plant's own quasi-static response
    to the same command gives the reference amplitude, so ``gain_db`` is the
    dynamic magnification per tip axis.
    """
    if coil not in (1, 2, 3, 4):
        raise InvalidInputError("coil must be 1..4")
    f0, f1 = (float(v) for v in f_range)
    if not 0 < f0 < f1 < 0.5 / plant.dyn.dt:
        raise InvalidInputError("need 0 < f_min < f_max < Nyquist")
    if duration * f0 < min_cycles:
        raise InvalidInputError(f"duration too short for {min_cycles} cycles at {f0} Hz")
    dt = plant.dyn.dt
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    theta = chirp_signal(t, f0, f1, duration)
    base = np.zeros(4) if bias is None else as_currents(bias)
    cmd = np.tile(base, (n, 1))
    cmd[:, coil - 1] += amplitude * np.sin(theta)
    sim = Plant(plant, Morph.MAIN, cmd[0], seed=seed)
    response, morphs = sim.run(cmd)
    if any(m is not Morph.MAIN for m in morphs):
        raise MorphViolationError("the chirp drove the plant out of the main morph")
    static = static_response(cmd, Morph.MAIN, plant)
    freqs = np.linspace(max(f0, min_cycles / window), f1, n_points)
    amp = np.zeros((n_points, 3))
    ref = np.zeros((n_points, 3))
    for k, f in enumerate(freqs):
        tc = (f - f0) / (f1 - f0) * duration
        half = 0.5 * max(window, min_cycles / f)
        mask = (t >= tc - half) & (t <= tc + half)
        if mask.sum() < 8:
            amp[k] = ref[k] = np.nan
            continue
        for ax in range(3):
            amp[k, ax] = _sinusoid_amplitude(response[:, 3 + ax], theta, mask)
            ref[k, ax] = _sinusoid_amplitude(static[:, 3 + ax], theta, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.nanmax(np.abs(static[:, 3:] - static[:, 3:].mean(axis=0)), axis=0)
        valid = ref > 1e-9 * np.maximum(scale, 1e-300)
        gain = np.where(valid & (ref > 0), 20.0 * np.log10(amp / np.where(ref > 0, ref, 1.0)),
                        np.nan)
    return ChirpResult(freqs, amp, gain, t, response, static)


def resonance_peaks(freqs, gain_db, min_prominence=3.0):
    """Frequencies of local maxima standing ``min_prominence`` dB above both
    neighbouring minima."""
    g = np.asarray(gain_db, dtype=float)
    peaks = []
    for k in range(1, len(g) - 1):
        if g[k] >= g[k - 1] and g[k] > g[k + 1]:
            left = np.nanmin(g[:k]) if k else g[k]
            right = np.nanmin(g[k + 1:])
            if g[k] - max(left, right) >= min_prominence:
                peaks.append(float(freqs[k]))
    return peaks


@dataclass
class SpeedMetrics:
    linear_max: np.ndarray  # m/s per tip axis
    angular_max: np.ndarray  # deg/s for alpha, beta
    speed_max: float  # m/s, magnitude


def _smooth(x, window=SMOOTH_WINDOW):
    if len(x) < window:
        return x
    kernel = np.ones(window) / window
    return np.stack([np.convolve(x[:, k], kernel, mode="valid") for k in range(x.shape[1])],
                    axis=1)


def speed_metrics(traj: Trajectory, needle: NeedleSpec = NeedleSpec()) -> SpeedMetrics:
    """Peak tip velocities and needle angular rates.

    Central differences followed by a 5-sample moving average.
    """
    if len(traj.t) < 3:
        raise InvalidInputError("speed extraction needs at least 3 samples")
    dt = traj.dt
    tip = traj.tip
    vel = _smooth(np.gradient(tip, dt, axis=0))
    u = needle_direction(tip, traj.poses[:, :3])
    ang = rotation_from_direction(u)[:, :2]
    omega = _smooth(np.gradient(ang, dt, axis=0))
    return SpeedMetrics(np.max(np.abs(vel), axis=0) * 1e-3,
                        np.max(np.abs(omega), axis=0),
                        float(np.max(np.linalg.norm(vel, axis=1))) * 1e-3)


def step_trajectory(plant: PlantConfig, i_from, i_to, duration=0.1, morph=Morph.MAIN,
                    seed=None) -> Trajectory:
    """Hold ``i_from`` at equilibrium, then switch to ``i_to`` at t = 0."""
    dt = plant.dyn.dt
    n = int(round(duration / dt))
    i_to = as_currents(i_to)
    sim = Plant(plant, morph, i_from, seed=seed)
    cmd = np.tile(i_to, (n, 1))
    poses, morphs = sim.run(cmd)
    return Trajectory(np.arange(n) * dt, cmd, poses, dt, morphs=morphs)


def z_extreme_currents(plant: PlantConfig, levels=8):
    """Grid currents giving the highest and lowest main-morph tip."""
    grid = current_grid(levels, plant.bounds)
    z = static_response(grid, Morph.MAIN, plant)[:, 5]
    return grid[np.argmax(z)], grid[np.argmin(z)]


def completion_time(traj: Trajectory, axis=5):
    """Time from the step to the first extremum of the response on ``axis``.

    That is the instant the commanded travel is first completed and the
    motion reverses.
    """
    y = traj.poses[:, axis]
    direction = None
    for n in range(1, len(y)):
        d = y[n] - y[n - 1]
        if direction is None:
            if d != 0:
                direction = np.sign(d)
            continue
        if np.sign(d) == -direction:
            return traj.t[n - 1] + traj.dt
    return None


def release_trajectory(plant: PlantConfig, duration=0.1, seed=None) -> Trajectory:
    """Central magnet released from the cap by the negative switching pulse."""
    dt = plant.dyn.dt
    n = int(round(duration / dt))
    n_pulse = int(round(PULSE_DURATION / dt))
    cmd = np.zeros((n, 4))
    cmd[:n_pulse, 3] = -PULSE_CURRENT
    sim = Plant(plant, Morph.CENTER, np.zeros(4), seed=seed)
    poses, morphs = sim.run(cmd)
    return Trajectory(np.arange(n) * dt, cmd, poses, dt, morphs=morphs)
