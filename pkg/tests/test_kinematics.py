import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from filmmanip.errors import ConvergenceError, InvalidInputError, UnreachableError
from filmmanip.kinematics import (IkOptions, current_grid, forward, forward_tip, inverse,
                                  inverse_batch, morph_workspaces, solve_ik, start_grid,
                                  workspace)
from filmmanip.model import KinematicCoefficients, Morph
from filmmanip.plant import static_response
from filmmanip.presets import paper_config, rigid_config

ROT120 = np.array([[-0.5, -np.sqrt(3) / 2, 0], [np.sqrt(3) / 2, -0.5, 0], [0, 0, 1]])


@pytest.fixture(scope="module")
def cfg():
    return paper_config()


@pytest.fixture(scope="module")
def main(cfg):
    return cfg.coefficients(Morph.MAIN)


def test_forward_zero_is_offset(main):
    assert np.array_equal(forward(main, np.zeros(4)), main.b)


@pytest.mark.parametrize("coil", range(4))
def test_single_coil_sweep_is_exact_parabola(main, coil):
    i = np.zeros((21, 4))
    i[:, coil] = np.linspace(-0.5, 0.4, 21)
    x = forward(main, i)
    basis = np.stack([np.ones(21), i[:, coil], i[:, coil] ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    assert np.max(np.abs(basis @ coef - x)) < 1e-12


def test_forward_matches_plant(cfg, main):
    i = np.random.default_rng(5).uniform(-0.5, 0.4, size=(100, 4))
    np.testing.assert_allclose(forward(main, i), static_response(i, Morph.MAIN, cfg), atol=1e-9)


def test_inverse_of_offset_is_zero(main):
    i = inverse(main, main.tip_b)
    assert np.max(np.abs(i)) < 1e-9


def test_inverse_unreachable_reports_residual(main):
    with pytest.raises(UnreachableError) as exc:
        inverse(main, main.tip_b + np.array([100.0, 0, 0]))
    assert exc.value.residual > 0
    lo, hi = IkOptions().bounds
    assert np.all((exc.value.currents >= lo) & (exc.value.currents <= hi))


def test_inverse_convergence_error(main):
    opts = IkOptions(max_iter=1, starts_per_coil=1)
    with pytest.raises(ConvergenceError):
        inverse(main, forward_tip(main, [0.3, -0.4, 0.2, -0.3]), opts)


def test_ik_options_validation():
    with pytest.raises(InvalidInputError):
        IkOptions(lam=-1)
    with pytest.raises(InvalidInputError):
        IkOptions(tol=0)
    with pytest.raises(InvalidInputError):
        IkOptions(bounds=(0.4, -0.5))


def test_start_grid_size():
    assert start_grid(IkOptions()).shape == (81, 4)


@st.composite
def coefficient_sets(draw):
    """Random tip maps with a well conditioned linear part."""
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    lin = rng.normal(size=(3, 4)) * 5
    if np.linalg.cond(lin) > 50:
        lin = np.linalg.svd(lin)[0] @ np.hstack([np.diag([5, 4, 3]), np.zeros((3, 1))]) @ \
            np.linalg.qr(rng.normal(size=(4, 4)))[0]
    quad = rng.normal(size=(3, 4)) * 1.5
    a = np.zeros((6, 8))
    a[3:, :4], a[3:, 4:] = lin, quad
    a[:3] = a[3:]
    b = np.concatenate([[0, 0, 50], [0, 0, 90]])
    return KinematicCoefficients(a, b), rng.uniform(-0.5, 0.4, size=4)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(coefficient_sets())
def test_round_trip_property(case):
    coeffs, i_star = case
    target = forward_tip(coeffs, i_star)
    i = inverse(coeffs, target)
    assert np.linalg.norm(forward_tip(coeffs, i) - target) < IkOptions().tol
    lo, hi = IkOptions().bounds
    assert np.all((i >= lo) & (i <= hi))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-60, 60), min_size=3, max_size=3))
def test_inverse_always_in_bounds(main, offset):
    target = main.tip_b + np.asarray(offset)
    res = solve_ik(main, target)
    lo, hi = IkOptions().bounds
    assert np.all((res.currents >= lo) & (res.currents <= hi))


def test_inverse_batch_matches_single(main):
    rng = np.random.default_rng(1)
    i_star = rng.uniform(-0.5, 0.4, size=(10, 4))
    targets = forward_tip(main, i_star)
    i = inverse_batch(main, targets)
    assert np.max(np.linalg.norm(forward_tip(main, i) - targets, axis=1)) < 1e-3


def test_inverse_batch_names_failing_sample(main):
    targets = np.tile(main.tip_b, (5, 1))
    targets[3, 0] += 100.0
    with pytest.raises(UnreachableError) as exc:
        inverse_batch(main, targets)
    assert exc.value.index == 3
    assert "sample 3" in str(exc.value)


def test_current_grid_order_and_size():
    g = current_grid(3, (-1, 1))
    assert g.shape == (81, 4)
    assert np.array_equal(g[0], [-1, -1, -1, -1]) and np.array_equal(g[1], [-1, -1, -1, 0])
    with pytest.raises(InvalidInputError):
        current_grid(1)


def test_workspace_report_invariants(cfg):
    rep = workspace(cfg, 8)
    assert len(rep.points) == 4096
    np.testing.assert_allclose(rep.extents, rep.points.max(axis=0) - rep.points.min(axis=0))
    assert rep.hull_volume == pytest.approx(ConvexHull(rep.points).volume)
    assert rep.hull_volume > 0 and rep.projected_area > 0


def test_workspace_from_coefficients_matches_plant(cfg, main):
    a = workspace(cfg, 5)
    b = workspace(main, 5)
    np.testing.assert_allclose(a.points, b.points, atol=1e-12)


def test_center_latched_volume_zero(cfg):
    rep = workspace(cfg, 8, morph=Morph.CENTER)
    assert rep.hull_volume <= 1e-12
    assert np.max(rep.extents) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.4), st.floats(0.05, 0.4), st.floats(0.0, 0.1), st.floats(0.0, 0.1))
def test_hull_monotone_in_bounds(lo, hi, dlo, dhi):
    cfg = rigid_config(seed=3)
    small = workspace(cfg, 6, (-lo, hi))
    big = workspace(cfg, 6, (-lo - dlo, hi + dhi))
    assert big.hull_volume >= small.hull_volume - 1e-9


def _xy_vertices(points):
    xy = points[:, :2]
    return xy[ConvexHull(xy).vertices]


def test_main_workspace_three_fold_symmetric(cfg):
    pts = workspace(cfg, 6).points
    center = pts.mean(axis=0)
    verts = _xy_vertices(pts - center)
    rotated = verts @ ROT120[:2, :2].T
    dist = np.linalg.norm(rotated[:, None, :] - verts[None, :, :], axis=2).min(axis=1)
    assert dist.max() < 1e-6


def test_leg_workspaces_related_by_rotation(cfg):
    comp = morph_workspaces(cfg, 5)
    p1 = comp.reports[Morph.LEG1].points
    p2 = comp.reports[Morph.LEG2].points
    p3 = comp.reports[Morph.LEG3].points
    for a, b in ((p1, p2), (p2, p3)):
        rotated = a @ ROT120.T
        dist = np.linalg.norm(rotated[:, None, :] - b[None, :, :], axis=2).min(axis=1)
        assert dist.max() < 1e-6


def test_composite_covers_each_morph(cfg):
    comp = morph_workspaces(cfg, 4)
    assert set(comp.reports) == set(Morph)
    for r in comp.reports.values():
        assert np.all(r.minimum >= comp.minimum) and np.all(r.maximum <= comp.maximum)
    summary = comp.summary()
    assert len(summary["morphs"]) == 5
