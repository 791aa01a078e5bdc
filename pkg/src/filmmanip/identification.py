"""Characterization datasets and least-squares fitting of the quadratic model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (BoundsError, DatasetError, EmptyDatasetError, InvalidInputError,
                     SingularDesignError)
from .kinematics import current_grid
from .model import (MAIN_MORPH_BOUNDS, N_REGRESSORS, KinematicCoefficients, Morph, NeedleSpec,
                    augment, as_currents, needle_direction, platform_from_needle)
from .plant import PlantConfig, static_response

MIN_ROWS = N_REGRESSORS + 1
REGRESSOR_NAMES = ("I1", "I2", "I3", "I4", "I1^2", "I2^2", "I3^2", "I4^2", "1")
MARKER_OFFSET = 20.0  # mm from tip to the second tracked needle point
SAMPLE_PERIOD = 0.1  # s between characterization rows


class BoundsWarning(UserWarning):
    pass


@dataclass
class CalibrationDataset:
    t: np.ndarray
    currents: np.ndarray
    p_m: np.ndarray
    p_n: np.ndarray
    morph: Morph = Morph.MAIN
    bounds: tuple = MAIN_MORPH_BOUNDS
    noise: str = "none"
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = len(self.t)
        self.currents = np.asarray(self.currents, dtype=float).reshape(n, 4)
        self.p_m = np.asarray(self.p_m, dtype=float).reshape(n, 3)
        self.p_n = np.asarray(self.p_n, dtype=float).reshape(n, 3)
        if not isinstance(self.morph, Morph):
            self.morph = Morph.parse(self.morph)
        self.bounds = tuple(float(b) for b in self.bounds)
        for name in ("t", "currents", "p_m", "p_n"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DatasetError(f"{name} contains non-finite values")
        if n > 1 and np.any(np.diff(self.t) < 0):
            bad = int(np.flatnonzero(np.diff(self.t) < 0)[0]) + 1
            raise DatasetError(f"timestamps decrease at row {bad}")
        lo, hi = self.bounds
        out = np.flatnonzero(np.any((self.currents < lo) | (self.currents > hi), axis=1))
        if len(out):
            msg = (f"{len(out)} row(s) outside bounds [{lo}, {hi}] A, first at row {out[0]}; "
                   "rows retained")
            self.warnings.append(msg)
            warnings.warn(msg, BoundsWarning, stacklevel=3)

    def __len__(self):
        return len(self.t)


def generate_dataset(plant: PlantConfig, levels=8, bounds=MAIN_MORPH_BOUNDS, seed=0,
                     morph=Morph.MAIN, allow_unsafe=False, noise_sigma=None) -> CalibrationDataset:
    """Evaluate the plant statically on the full ``levels**4`` current grid.

    The plant's 6-vector output gives the tip ``p_n`` directly; the second
    tracked point ``p_m`` sits ``MARKER_OFFSET`` mm behind the tip along the
    platform-to-tip axis.  Gaussian noise (``noise_sigma``, default the
    plant's) is added to both tracked points.
    """
    lo, hi = bounds
    safe_lo, safe_hi = plant.bounds
    if (lo < safe_lo or hi > safe_hi) and not allow_unsafe:
        raise BoundsError(f"bounds [{lo}, {hi}] A exceed the safe range [{safe_lo}, {safe_hi}] A; "
                          "pass allow_unsafe to override")
    grid = current_grid(levels, bounds)
    poses = static_response(grid, morph, plant)
    p_n = poses[:, 3:].copy()
    p_m = p_n - MARKER_OFFSET * needle_direction(p_n, poses[:, :3])
    sigma = plant.noise_sigma if noise_sigma is None else float(noise_sigma)
    if sigma < 0:
        raise InvalidInputError("noise_sigma must be non-negative")
    if sigma > 0:
        rng = np.random.default_rng(seed)
        p_m = p_m + rng.normal(0.0, sigma, size=p_m.shape)
        p_n = p_n + rng.normal(0.0, sigma, size=p_n.shape)
    noise = f"gaussian sigma={sigma:g} mm" if sigma > 0 else "none"
    t = np.arange(len(grid)) * SAMPLE_PERIOD
    return CalibrationDataset(t, grid, p_m, p_n, morph, (lo, hi), noise)


@dataclass
class FitDiagnostics:
    rms: np.ndarray
    max_residual: float
    condition: float
    samples: int
    rank: int


def design_matrix(currents) -> np.ndarray:
    v = augment(as_currents(currents))
    return np.hstack([v, np.ones((len(v), 1))])


def _describe(vec, tol=1e-6):
    terms = [f"{c:+.3g}*{name}" for c, name in zip(vec, REGRESSOR_NAMES) if abs(c) > tol]
    return " ".join(terms) if terms else "0"


def check_design(d: np.ndarray, rel_tol=1e-10):
    """Return ``(rank, condition)``; raise if ``d`` is rank deficient.

    Columns are scaled to unit norm first so the test is unit independent.
    """
    norms = np.linalg.norm(d, axis=0)
    zero_cols = norms == 0
    scaled = d / np.where(zero_cols, 1.0, norms)
    _, s, vt = np.linalg.svd(scaled, full_matrices=d.shape[0] < d.shape[1])
    sv = np.zeros(d.shape[1])
    sv[:len(s)] = s
    deficient = sv <= rel_tol * sv[0]
    rank = int(np.sum(~deficient))
    if rank < d.shape[1]:
        directions = [_describe(vt[k] / np.where(zero_cols, 1.0, norms))
                      for k in np.flatnonzero(deficient)]
        raise SingularDesignError(
            f"design matrix has rank {rank} < {d.shape[1]}; unidentifiable combinations: "
            + "; ".join(directions), directions=directions)
    return rank, float(sv[0] / sv[-1])


def fit(data: CalibrationDataset, needle: NeedleSpec = NeedleSpec()):
    """Ordinary least squares of all six pose rows on ``[I, I^2, 1]``.

    Platform points are reconstructed from the two tracked needle points.
    Solved by an orthogonal (SVD-based) least-squares routine.
    """
    n = len(data)
    if n == 0:
        raise EmptyDatasetError("dataset has no rows")
    if n < MIN_ROWS:
        raise DatasetError(f"need at least {MIN_ROWS} rows to fit, got {n}")
    p_p = platform_from_needle(data.p_n, data.p_m, needle.n1)
    y = np.hstack([p_p, data.p_n])
    d = design_matrix(data.currents)
    rank, cond = check_design(d)
    coef, *_ = np.linalg.lstsq(d, y, rcond=None)
    resid = y - d @ coef
    diag = FitDiagnostics(rms=np.sqrt(np.mean(resid ** 2, axis=0)),
                          max_residual=float(np.max(np.abs(resid))), condition=cond,
                          samples=n, rank=rank)
    coeffs = KinematicCoefficients(coef[:-1].T, coef[-1], data.morph, needle)
    return coeffs, diag
