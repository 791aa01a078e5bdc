"""Forward model evaluation, bounded inverse kinematics and workspace sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ConvergenceError, InvalidInputError, UnreachableError
from .model import (MAIN_MORPH_BOUNDS, KinematicCoefficients, Morph, as_currents,
                    needle_direction, rotation_from_direction)
from .plant import PlantConfig, static_response


def forward(coeffs: KinematicCoefficients, i) -> np.ndarray:
    """Pose ``[P_p; P_n]`` for currents ``i`` (stacks allowed)."""
    return coeffs.evaluate(i)


def forward_tip(coeffs: KinematicCoefficients, i) -> np.ndarray:
    return forward(coeffs, i)[..., 3:]


@dataclass(frozen=True)
class IkOptions:
    bounds: tuple = MAIN_MORPH_BOUNDS
    lam: float = 1e-4
    tol: float = 1e-3
    starts_per_coil: int = 3
    max_iter: int = 100

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo < hi:
            raise InvalidInputError("bounds must satisfy lo < hi")
        if not self.lam >= 0:
            raise InvalidInputError("regularization weight must be non-negative")
        if not self.tol > 0:
            raise InvalidInputError("tolerance must be positive")
        if self.starts_per_coil < 1 or self.max_iter < 1:
            raise InvalidInputError("starts_per_coil and max_iter must be at least 1")


def start_grid(opts: IkOptions) -> np.ndarray:
    """Deterministic multistart points, ``starts_per_coil**4`` rows."""
    lo, hi = opts.bounds
    n = opts.starts_per_coil
    levels = np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n)
    grid = np.stack(np.meshgrid(*[levels] * 4, indexing="ij"), axis=-1)
    return grid.reshape(-1, 4)


@dataclass
class IkResult:
    currents: np.ndarray
    residual: float
    converged: bool
    iterations: int


def _solve_batch(a_t, b_t, target, x0, opts: IkOptions, gtol=1e-12):
    """Projected Levenberg-Marquardt on a batch of starting points.

    Minimizes ``|tip(i) - target|^2 + lam |i|^2`` over the current box.
    Variables at a bound whose gradient points outward are frozen for the
    step, and every iterate is projected onto the box.
    """
    lo, hi = opts.bounds
    lam = opts.lam
    lin, quad = a_t[:, :4], a_t[:, 4:]
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    n = len(x)
    mu = np.full(n, 1e-3)
    eye = np.eye(4)

    def residual(x):
        return x @ lin.T + (x * x) @ quad.T + b_t - target

    def cost(r, x):
        return np.einsum("ij,ij->i", r, r) + lam * np.einsum("ij,ij->i", x, x)

    r = residual(x)
    f = cost(r, x)
    done = np.zeros(n, dtype=bool)
    it = 0
    for it in range(1, opts.max_iter + 1):
        jac = lin[None, :, :] + 2.0 * quad[None, :, :] * x[:, None, :]
        grad = np.einsum("nij,ni->nj", jac, r) + lam * x
        active = ((x <= lo) & (grad > 0)) | ((x >= hi) & (grad < 0))
        pg = np.where(active, 0.0, grad)
        done |= np.max(np.abs(pg), axis=1) <= gtol
        if np.all(done):
            break
        h = np.einsum("nij,nik->njk", jac, jac) + (lam + mu)[:, None, None] * eye
        free = ~active
        h = h * free[:, :, None] * free[:, None, :] + eye * active[:, :, None]
        step = -np.linalg.solve(h, pg[..., None])[..., 0]
        x_new = np.clip(x + step, lo, hi)
        r_new = residual(x_new)
        f_new = cost(r_new, x_new)
        better = (f_new < f) & ~done
        x = np.where(better[:, None], x_new, x)
        r = np.where(better[:, None], r_new, r)
        stalled = ~better & ~done
        # a rejected step that no longer moves the point means we are at the optimum
        tiny = np.max(np.abs(x_new - x), axis=1) <= 1e-15 * (1.0 + np.max(np.abs(x), axis=1))
        done |= stalled & tiny
        f = np.where(better, f_new, f)
        mu = np.where(better, np.maximum(mu / 3.0, 1e-12), mu * 4.0)
        done |= mu > 1e12
    tip_err = np.linalg.norm(r, axis=1)
    return x, tip_err, f, done, it


def solve_ik(coeffs: KinematicCoefficients, target_tip, opts: IkOptions = IkOptions(),
             starts=None) -> IkResult:
    """Best multistart solution without raising; see :func:`inverse`."""
    target = np.asarray(target_tip, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise InvalidInputError("target tip must be a finite 3-vector")
    x0 = start_grid(opts) if starts is None else as_currents(np.atleast_2d(starts))
    x, tip_err, f, done, it = _solve_batch(coeffs.tip_a, coeffs.tip_b, target, x0, opts)
    # prefer solutions meeting the tolerance, then the lowest regularized cost
    ok = tip_err <= opts.tol
    pool = np.flatnonzero(ok) if ok.any() else np.arange(len(x))
    best = pool[np.argmin(f[pool] if ok.any() else tip_err[pool])]
    return IkResult(x[best].copy(), float(tip_err[best]), bool(done[best]), it)


def inverse(coeffs: KinematicCoefficients, target_tip, opts: IkOptions = IkOptions(),
            starts=None) -> np.ndarray:
    """In-bounds currents placing the tip at ``target_tip``.

    Raises
    ------
    UnreachableError
        The optimizer converged but the best tip residual exceeds ``opts.tol``.
    ConvergenceError
        No start converged within ``opts.max_iter`` and none met the tolerance.
    """
    res = solve_ik(coeffs, target_tip, opts, starts)
    if res.residual <= opts.tol:
        return res.currents
    if res.converged:
        raise UnreachableError(
            f"target unreachable: best tip residual {res.residual:.6g} mm > {opts.tol} mm",
            residual=res.residual, currents=res.currents)
    raise ConvergenceError(
        f"inverse kinematics did not converge in {opts.max_iter} iterations "
        f"(best residual {res.residual:.6g} mm)")


def inverse_batch(coeffs: KinematicCoefficients, targets, opts: IkOptions = IkOptions(),
                  start=None) -> np.ndarray:
    """Solve many targets at once (one row per target).

    Every row starts from ``start`` (default: zero current, projected onto
    the bounds); rows that miss the tolerance are retried with the full
    multistart grid.  Errors name the failing sample index.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 2 or targets.shape[1] != 3 or not np.all(np.isfinite(targets)):
        raise InvalidInputError("targets must be a finite (N, 3) array")
    x0 = np.zeros((len(targets), 4)) if start is None else np.broadcast_to(
        as_currents(start), (len(targets), 4))
    x, tip_err, _, _, _ = _solve_batch(coeffs.tip_a, coeffs.tip_b, targets, x0, opts)
    for n in np.flatnonzero(tip_err > opts.tol):
        res = solve_ik(coeffs, targets[n], opts)
        if res.residual > opts.tol:
            if not res.converged:
                raise ConvergenceError(f"sample {n}: inverse kinematics did not converge")
            err = UnreachableError(
                f"sample {n}: target unreachable, tip residual {res.residual:.6g} mm",
                residual=res.residual, currents=res.currents)
            err.index = int(n)
            raise err
        x[n] = res.currents
    return x


def current_grid(levels: int, bounds=MAIN_MORPH_BOUNDS) -> np.ndarray:
    """Full Cartesian grid, ``levels**4`` rows, coil 1 varying slowest."""
    if int(levels) != levels or levels < 2:
        raise InvalidInputError("levels must be an integer >= 2")
    lo, hi = bounds
    if not lo < hi:
        raise InvalidInputError("bounds must satisfy lo < hi")
    vals = np.linspace(lo, hi, int(levels))
    grid = np.stack(np.meshgrid(*[vals] * 4, indexing="ij"), axis=-1)
    return grid.reshape(-1, 4)


def _hull_measures(points, rel_tol=1e-9):
    """3-D hull volume and XY-projected hull area (zero when degenerate)."""
    centered = points - points.mean(axis=0)
    scale = max(float(np.max(np.abs(centered))), 1.0) if len(points) else 1.0
    sv = np.linalg.svd(centered, compute_uv=False) if len(points) > 1 else np.zeros(3)
    rank = int(np.sum(sv > rel_tol * scale * np.sqrt(len(points))))
    volume = 0.0
    if rank == 3 and len(points) >= 4:
        try:
            volume = float(ConvexHull(points).volume)
        except QhullError:
            volume = 0.0
    area = 0.0
    xy = centered[:, :2]
    sv2 = np.linalg.svd(xy, compute_uv=False) if len(points) > 1 else np.zeros(2)
    if np.sum(sv2 > rel_tol * scale * np.sqrt(len(points))) == 2 and len(points) >= 3:
        try:
            area = float(ConvexHull(points[:, :2]).volume)
        except QhullError:
            area = 0.0
    return volume, area


@dataclass
class WorkspaceReport:
    points: np.ndarray
    angles: np.ndarray
    currents: np.ndarray
    hull_volume: float
    projected_area: float
    morph: Morph = Morph.MAIN
    levels: int = 8
    bounds: tuple = MAIN_MORPH_BOUNDS

    @property
    def minimum(self):
        return self.points.min(axis=0)

    @property
    def maximum(self):
        return self.points.max(axis=0)

    @property
    def extents(self):
        return self.maximum - self.minimum

    @property
    def rotation_ranges(self):
        """(max - min) of alpha and beta over the cloud, degrees."""
        span = self.angles.max(axis=0) - self.angles.min(axis=0)
        return span[:2]

    def summary(self) -> dict:
        return {
            "morph": self.morph.value,
            "levels": self.levels,
            "bounds": list(self.bounds),
            "points": len(self.points),
            "hull_volume_mm3": self.hull_volume,
            "projected_area_mm2": self.projected_area,
            "extents_mm": self.extents.tolist(),
            "min_mm": self.minimum.tolist(),
            "max_mm": self.maximum.tolist(),
            "alpha_range_deg": float(self.rotation_ranges[0]),
            "beta_range_deg": float(self.rotation_ranges[1]),
        }


def workspace(source, levels=8, bounds=MAIN_MORPH_BOUNDS, morph=None) -> WorkspaceReport:
    """Sample ``source`` (coefficients or plant) on the ``levels**4`` grid.

    Needle directions are taken from platform to tip of each pose.
    """
    grid = current_grid(levels, bounds)
    if isinstance(source, KinematicCoefficients):
        morph = source.morph if morph is None else Morph.parse(morph)
        poses = forward(source, grid)
    elif isinstance(source, PlantConfig):
        morph = Morph.MAIN if morph is None else (
            morph if isinstance(morph, Morph) else Morph.parse(morph))
        poses = static_response(grid, morph, source)
    else:
        raise InvalidInputError("workspace source must be coefficients or a plant config")
    tips = poses[:, 3:]
    u = needle_direction(tips, poses[:, :3])
    angles = rotation_from_direction(u)
    volume, area = _hull_measures(tips)
    return WorkspaceReport(tips, angles, grid, volume, area, morph, int(levels), tuple(bounds))


@dataclass
class CompositeWorkspace:
    reports: dict = field(default_factory=dict)

    @property
    def minimum(self):
        return np.min([r.minimum for r in self.reports.values()], axis=0)

    @property
    def maximum(self):
        return np.max([r.maximum for r in self.reports.values()], axis=0)

    @property
    def extents(self):
        return self.maximum - self.minimum

    def summary(self) -> dict:
        return {
            "composite_extents_mm": self.extents.tolist(),
            "morphs": {m.value: r.summary() for m, r in self.reports.items()},
        }


def morph_workspaces(plant: PlantConfig, levels=8, bounds=MAIN_MORPH_BOUNDS) -> CompositeWorkspace:
    """One report per morph plus composite extents over their union."""
    return CompositeWorkspace({m: workspace(plant, levels, bounds, m) for m in Morph})
