"""Design-parameter search (film thickness T, magnet position P, joint width W,
leg length L) and the film-sag law."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, ObjectiveError
from .kinematics import workspace
from .model import Morph
from .plant import PlantConfig

SAG_ANCHOR_UM = 100.0
SAG_ANCHOR_PERCENT = 1.0
SAG_LIMIT_PERCENT = 2.0


def film_sag_percent(t_um):
    """Gravity sag of the film structure in percent, ``c / t**3``.

    Calibrated so a 100 um film sags 1 %.
    """
    t = np.asarray(t_um, dtype=float)
    if np.any(~(t > 0)):
        raise InvalidInputError("film thickness must be positive")
    out = SAG_ANCHOR_PERCENT * (SAG_ANCHOR_UM / t) ** 3
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DesignParams:
    t: float  # film thickness, um
    p: float  # magnet position, mm
    w: float  # joint width, mm
    l: float  # leg length, mm

    def __post_init__(self):
        for name in ("t", "p", "w", "l"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"design parameter {name} must be positive, got {v}")

    def key(self):
        return tuple(round(v, 9) for v in dataclasses.astuple(self))


PARAM_ORDER = ("t", "p", "w", "l")


@dataclass(frozen=True)
class SearchConfig:
    initial: DesignParams = DesignParams(110.0, 10.0, 3.0, 26.0)
    steps: tuple = (10.0, 1.0, 1.0, 2.0)
    max_restarts: int = 10

    def __post_init__(self):
        if len(self.steps) != 4 or not all(s > 0 for s in self.steps):
            raise InvalidInputError("four positive step sizes are required")
        if self.max_restarts < 1:
            raise InvalidInputError("max_restarts must be at least 1")


@dataclass
class SearchResult:
    params: DesignParams
    value: float
    converged: bool
    passes: int
    evaluations: int
    trace: list = field(default_factory=list)


class _Memo:
    """Evaluates each distinct tuple once and records the evaluation order."""

    def __init__(self, objective):
        self.objective = objective
        self.cache = {}
        self.trace = []

    def __call__(self, params: DesignParams) -> float:
        k = params.key()
        if k not in self.cache:
            try:
                value = float(self.objective(params))
            except ObjectiveError:
                raise
            except Exception as exc:
                raise ObjectiveError(f"objective failed at {params}: {exc}", params) from exc
            if not math.isfinite(value):
                raise ObjectiveError(f"objective returned {value} at {params}", params)
            self.cache[k] = value
            self.trace.append((params, value))
        return self.cache[k]


def _select(memo, base: DesignParams, name, center, step):
    """Argmax over ``center - step, center, center + step``; ties keep ``center``."""
    best_v, best_x = memo(dataclasses.replace(base, **{name: center})), center
    for x in (center - step, center + step):
        if x <= 0:
            continue
        v = memo(dataclasses.replace(base, **{name: x}))
        if v > best_v:
            best_v, best_x = v, x
    return best_x


def coordinate_descent(objective: Callable[[DesignParams], float],
                       cfg: SearchConfig = SearchConfig()) -> SearchResult:
    """Restart-on-change coordinate search over (T, P, W, L).

    Each pass selects T around its initial guess, then P, W and L around
    their current guesses.  A change of P, W or L updates that guess and
    starts a new pass; the thickness guess itself is never moved.  The
    search stops after a pass without changes or after ``max_restarts``
    passes, returning the best tuple seen in the latter case.
    """
    memo = _Memo(objective)
    t_s, p_s, w_s, l_s = cfg.steps
    g = cfg.initial
    t_g, p_g, w_g, l_g = g.t, g.p, g.w, g.l
    passes = 0
    while passes < cfg.max_restarts:
        passes += 1
        t_b = _select(memo, DesignParams(t_g, p_g, w_g, l_g), "t", t_g, t_s)
        p_b = _select(memo, DesignParams(t_b, p_g, w_g, l_g), "p", p_g, p_s)
        if p_b != p_g:
            p_g = p_b
            continue
        w_b = _select(memo, DesignParams(t_b, p_b, w_g, l_g), "w", w_g, w_s)
        if w_b != w_g:
            w_g = w_b
            continue
        l_b = _select(memo, DesignParams(t_b, p_b, w_b, l_g), "l", l_g, l_s)
        if l_b != l_g:
            l_g = l_b
            continue
        best = DesignParams(t_b, p_b, w_b, l_b)
        return SearchResult(best, memo(best), True, passes, len(memo.trace), memo.trace)
    params, value = max(memo.trace, key=lambda pv: pv[1])
    return SearchResult(params, value, False, passes, len(memo.trace), memo.trace)


REFERENCE_DESIGN = DesignParams(120.0, 10.0, 3.0, 26.0)


def relative_stiffness(d: DesignParams, ref: DesignParams = REFERENCE_DESIGN) -> float:
    """Lumped joint stiffness ``w t^3 / l^3`` relative to the reference design."""
    return (d.w / ref.w) * (d.t / ref.t) ** 3 * (ref.l / d.l) ** 3


def actuation_gain(p, p_ref=10.0) -> float:
    """Lever gain of the magnet position; peaks at ``p_ref``."""
    x = p / p_ref
    return x * math.exp(1.0 - x)


@dataclass(frozen=True)
class PaperObjective:
    """Synthetic workspace measure whose search outcome is the reference design.

    ``S = base * gain(p) / stiffness * penalties``.  Softer structures give
    larger motion until the stiffness falls below ``pull_in_margin`` of the
    reference, where the central magnet would snap in; films sagging more
    than 2 % are penalized as well.  This validates the search logic; it is
    not a physical model.
    """

    base: float = 250.0
    pull_in_margin: float = 0.99
    pull_in_width: float = 0.03
    sag_rate: float = 5.0

    def __call__(self, d: DesignParams) -> float:
        stiff = relative_stiffness(d)
        s = self.base * actuation_gain(d.p) / stiff
        margin = stiff / self.pull_in_margin - 1.0
        if margin < 0:
            s *= math.exp(-(margin / self.pull_in_width) ** 2)
        sag = film_sag_percent(d.t)
        if sag > SAG_LIMIT_PERCENT:
            s *= math.exp(-self.sag_rate * (sag - SAG_LIMIT_PERCENT))
        return s


def paper_objective() -> PaperObjective:
    return PaperObjective()


@dataclass
class PlantObjective:
    """Hull volume of the main-morph workspace of a plant derived from a design.

    Displacements scale with ``(p / p_ref) / stiffness`` (linear regime,
    lever gain proportional to magnet position); the elastic force
    constants scale with stiffness.
    """

    template: PlantConfig
    levels: int = 4
    measure: str = "volume"

    def plant_for(self, d: DesignParams) -> PlantConfig:
        stiff = relative_stiffness(d)
        scale = (d.p / REFERENCE_DESIGN.p) / stiff
        a, b = self.template.coeffs[Morph.MAIN]
        coeffs = dict(self.template.coeffs)
        coeffs[Morph.MAIN] = (a * scale, b)
        force = dataclasses.replace(self.template.force, k_e=self.template.force.k_e * stiff)
        leg = dataclasses.replace(self.template.leg_force,
                                  k_e=self.template.leg_force.k_e * stiff)
        return self.template.replace(coeffs=coeffs, force=force, leg_force=leg)

    def __call__(self, d: DesignParams) -> float:
        rep = workspace(self.plant_for(d), self.levels, self.template.bounds, Morph.MAIN)
        if self.measure == "area":
            return rep.projected_area
        return rep.hull_volume


def plant_objective(template: PlantConfig, levels=4, measure="volume") -> PlantObjective:
    if measure not in ("volume", "area"):
        raise InvalidInputError("measure must be 'volume' or 'area'")
    return PlantObjective(template, levels, measure)
