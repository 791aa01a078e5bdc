import collections
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmmanip import design
from filmmanip.design import (DesignParams, PaperObjective, SearchConfig, coordinate_descent,
                              film_sag_percent, paper_objective, plant_objective)
from filmmanip.errors import InvalidInputError, ObjectiveError
from filmmanip.kinematics import workspace
from filmmanip.model import Morph
from filmmanip.presets import paper_config

from oracles import listing_oracle, separable_concave


class Counting:
    def __init__(self, fn):
        self.fn = fn
        self.calls = collections.Counter()

    def __call__(self, d):
        self.calls[d.key()] += 1
        return self.fn(d)


def test_sag_anchor_and_cubic_law():
    assert film_sag_percent(100.0) == 1.0
    assert film_sag_percent(200.0) == pytest.approx(0.125, abs=1e-15)
    with pytest.raises(InvalidInputError):
        film_sag_percent(0.0)


@given(st.floats(1.0, 1e4))
def test_sag_doubling_and_monotone(t):
    assert film_sag_percent(2 * t) == pytest.approx(film_sag_percent(t) / 8, rel=1e-12)
    assert film_sag_percent(t * 1.001) < film_sag_percent(t)


def test_design_params_positive():
    with pytest.raises(InvalidInputError):
        DesignParams(100, 0, 3, 26)
    with pytest.raises(InvalidInputError):
        SearchConfig(steps=(1, 1, 0, 1))


def test_paper_objective_selects_reference_design():
    res = coordinate_descent(paper_objective())
    assert (res.params.t, res.params.p, res.params.w, res.params.l) == (120.0, 10.0, 3.0, 26.0)
    assert res.converged


def test_paper_objective_argmax_is_reference():
    """Over the tuples the search reaches and the full 3^4 neighbourhood box."""
    obj = paper_objective()
    res = coordinate_descent(obj)
    assert max(res.trace, key=lambda pv: pv[1])[0] == design.REFERENCE_DESIGN
    box = [DesignParams(t, p, w, l) for t in (100, 110, 120) for p in (9, 10, 11)
           for w in (2, 3, 4) for l in (24, 26, 28)]
    assert max(box, key=obj) == design.REFERENCE_DESIGN


def test_paper_objective_sag_penalty():
    free = PaperObjective(sag_rate=0.0)
    pen = PaperObjective()
    ratios = []
    for t in (95.0, 85.0, 75.0, 70.0, 65.0):
        # widen the joint so stiffness stays at the reference and only sag varies
        d = DesignParams(t, 10, 3 * (120 / t) ** 3, 26)
        ratios.append(pen(d) / free(d))
    assert ratios[0] == 1.0 and ratios[1] == 1.0
    assert ratios[2] < 1.0 and ratios[2] > ratios[3] > ratios[4]


def test_objective_is_pure():
    obj = paper_objective()
    pts = [DesignParams(t, 10, 3, 26) for t in (100, 110, 120, 130)]
    forward = [obj(p) for p in pts]
    backward = [obj(p) for p in reversed(pts)][::-1]
    assert forward == backward


def test_constant_objective_returns_initial_guess():
    res = coordinate_descent(lambda d: 1.0)
    assert res.params == SearchConfig().initial
    assert res.converged and res.passes == 1


@pytest.mark.parametrize("seed", range(20))
def test_matches_listing_oracle_on_separable_concave(seed):
    obj = separable_concave(seed)
    cfg = SearchConfig()
    res = coordinate_descent(obj, cfg)
    key, converged, passes, distinct = listing_oracle(obj, cfg)
    assert res.params.key() == key
    assert (res.converged, res.passes, res.evaluations) == (converged, passes, distinct)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_search_invariants_on_arbitrary_objectives(seed, max_restarts):
    table = {}
    rng = np.random.default_rng(seed)

    def rough(d):
        k = d.key()
        if k not in table:
            table[k] = float(rng.normal())
        return table[k]

    counted = Counting(rough)
    cfg = SearchConfig(max_restarts=max_restarts)
    res = coordinate_descent(counted, cfg)
    assert max(counted.calls.values()) == 1
    assert res.evaluations == len(counted.calls) <= 12 * max_restarts
    assert res.passes <= max_restarts
    assert res.value >= rough(cfg.initial)
    key, converged, passes, _ = listing_oracle(rough, cfg)
    assert res.params.key() == key and res.converged == converged and res.passes == passes


def test_restart_cap_returns_best_seen():
    # optimum far away along P: every pass moves P by one step
    obj = lambda d: -abs(d.p - 40.0) - abs(d.t - 110.0) / 100
    res = coordinate_descent(obj, SearchConfig(max_restarts=3))
    assert not res.converged and res.passes == 3
    assert res.value == max(v for _, v in res.trace)


def test_objective_failure_names_tuple():
    def broken(d):
        if d.p > 10:
            raise RuntimeError("rig fault")
        return 1.0

    with pytest.raises(ObjectiveError) as exc:
        coordinate_descent(broken)
    assert exc.value.params.p == 11.0


def test_non_finite_objective_rejected():
    with pytest.raises(ObjectiveError):
        coordinate_descent(lambda d: math.nan)


@pytest.fixture(scope="module")
def plant_obj():
    return plant_objective(paper_config(), levels=4)


def test_plant_objective_increases_with_p(plant_obj):
    vals = [plant_obj(DesignParams(120, p, 3, 26)) for p in (8, 9, 10, 11, 12)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_plant_objective_thickness_scaling(plant_obj):
    base = plant_obj.plant_for(DesignParams(120, 10, 3, 26))
    thick = plant_obj.plant_for(DesignParams(240, 10, 3, 26))
    ext_base = workspace(base, 4).extents
    ext_thick = workspace(thick, 4).extents
    np.testing.assert_allclose(ext_base / ext_thick, 8.0, rtol=1e-9)


def test_plant_objective_at_reference_is_finite(plant_obj):
    v = plant_obj(design.REFERENCE_DESIGN)
    assert math.isfinite(v) and v > 0
    a_ref = paper_config().coeffs[Morph.MAIN][0]
    np.testing.assert_allclose(plant_obj.plant_for(design.REFERENCE_DESIGN).coeffs[Morph.MAIN][0],
                               a_ref)


def test_plant_objective_area_measure():
    obj = plant_objective(paper_config(), levels=3, measure="area")
    assert obj(design.REFERENCE_DESIGN) > 0
    with pytest.raises(InvalidInputError):
        plant_objective(paper_config(), measure="length")


def test_trace_records_each_evaluation_once():
    res = coordinate_descent(paper_objective())
    keys = [p.key() for p, _ in res.trace]
    assert len(keys) == len(set(keys)) == res.evaluations
    assert dataclasses.astuple(res.trace[0][0]) == (110.0, 10.0, 3.0, 26.0)
