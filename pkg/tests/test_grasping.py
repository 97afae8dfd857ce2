from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from picksim.catalog import Strategy, Tool
from picksim.geometry import Container, ContainerKind
from picksim.grasping import (
    GraspCandidate,
    GraspScoringParams,
    StrategyInvalid,
    boundary_distance_norm,
    centroid_grasp,
    combine_score,
    curvature_score,
    pose_pca,
    rgb_centroid_grasp,
    score_candidates,
    select_diverse,
    synthesize,
)
from picksim.perception import SegmentPercept

from .conftest import grid_segment
from .oracles import brute_force_boundary_norm, brute_force_ranking

CONT = Container("c", ContainerKind.TOTE, (0.5, 0.0), (450, 360, 200), 200)
PARAMS = GraspScoringParams()


# -- boundary distance -------------------------------------------------------

def test_boundary_center_of_grid_is_one():
    seg = grid_segment(21, 21)
    center = seg[np.argmin(np.linalg.norm(seg[:, :2] - seg[:, :2].mean(axis=0), axis=1))]
    assert boundary_distance_norm(seg, center) == pytest.approx(1.0)


def test_boundary_point_is_zero():
    seg = grid_segment(15, 15)
    corner = seg[0]
    assert boundary_distance_norm(seg, corner) == 0.0


def test_boundary_norm_matches_brute_force_on_grid():
    seg = grid_segment(21, 21)
    for idx in range(0, seg.shape[0], 37):
        expected = brute_force_boundary_norm(seg, seg[idx])
        assert boundary_distance_norm(seg, seg[idx]) == pytest.approx(expected, abs=1e-12)


def test_boundary_requires_membership():
    seg = grid_segment(8, 8)
    with pytest.raises(ValueError):
        boundary_distance_norm(seg, (0.0, 0.0, 0.0))


# -- curvature ----------------------------------------------------------------

def test_plane_curvature_is_one():
    seg = grid_segment(15, 15)
    interior = seg[15 * 7 + 7]
    assert curvature_score(seg, interior) == pytest.approx(1.0)


def _hemisphere(radius=0.05, pitch=0.005, center=(0.7, 0.2)):
    xs = np.arange(-radius, radius + 1e-9, pitch)
    pts = []
    for x in xs:
        for y in xs:
            r2 = x * x + y * y
            if r2 <= radius * radius:
                pts.append((center[0] + x, center[1] + y,
                            0.05 + math.sqrt(radius * radius - r2)))
    return np.asarray(pts)


def test_hemisphere_pole_flatter_sheet_wins():
    dome = _hemisphere()
    pole = dome[np.argmax(dome[:, 2])]
    sheet = grid_segment(15, 15)
    interior = sheet[15 * 7 + 7]
    assert curvature_score(dome, pole) < curvature_score(sheet, interior)


def test_cylinder_side_less_flat_than_plane():
    radius, pitch = 0.04, 0.005
    ang = np.arange(-1.0, 1.0 + 1e-9, pitch / radius)
    ys = np.arange(0.0, 0.1 + 1e-9, pitch)
    pts = []
    for a in ang:
        for y in ys:
            pts.append((0.7 + radius * math.sin(a), 0.2 + y,
                        0.08 + radius * math.cos(a)))
    cyl = np.asarray(pts)
    side = cyl[np.argmax(cyl[:, 2])]
    sheet = grid_segment(15, 15)
    assert curvature_score(cyl, side) < curvature_score(sheet, sheet[15 * 7 + 7])


def test_curvature_degenerate_neighborhood_raises():
    seg = np.array([[0.6, 0.1, 0.1], [0.7, 0.2, 0.1], [0.8, 0.3, 0.1]])
    with pytest.raises(StrategyInvalid):
        curvature_score(seg, seg[0])


# -- scoring ------------------------------------------------------------------

def test_combine_score_weighting_and_cap():
    assert combine_score(1.0, 1.0, 0.0, 0.0, PARAMS) == pytest.approx(1.0)
    assert combine_score(0.8, 0.4, 0.10, 0.10, PARAMS) == pytest.approx(0.50)
    # penalties beyond the cap are truncated at 20%
    assert combine_score(0.8, 0.4, 0.5, 0.5, PARAMS) == pytest.approx(0.50)


def _random_segment(rng, n_min=30, n_max=500):
    nx = int(rng.integers(5, 23))
    ny = int(rng.integers(max(5, n_min // nx), max(6, min(22, n_max // nx))))
    pitch = 0.005
    x0 = rng.uniform(CONT.x0 + 0.02, CONT.x1 - 0.02 - nx * pitch)
    y0 = rng.uniform(CONT.y0 + 0.02, CONT.y1 - 0.02 - ny * pitch)
    xs = x0 + pitch * np.arange(nx)
    ys = y0 + pitch * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    base_z = rng.uniform(0.03, 0.18)
    z = base_z + rng.uniform(-0.5, 0.5) * gx + rng.uniform(-0.5, 0.5) * gy
    z = z + 0.02 * np.sin(gx * rng.uniform(20, 80)) * np.sin(gy * rng.uniform(20, 80))
    pts = np.column_stack([gx.ravel(), gy.ravel(), z.ravel()])
    keep = rng.random(pts.shape[0]) > 0.15  # ragged masks
    pts = pts[keep]
    return pts


def test_ranking_matches_brute_force_oracle():
    rng = np.random.default_rng(1234)
    compared = 0
    for _ in range(25):
        seg = _random_segment(rng)
        try:
            expected = brute_force_ranking(seg, CONT, PARAMS)
        except ValueError:
            continue
        got = score_candidates(seg, CONT, PARAMS)
        assert len(got) == len(expected)
        for cand, (pos, score) in zip(got, expected):
            assert cand.position == pos
            assert cand.score == score
        compared += 1
    assert compared >= 15


def test_scores_within_bounds_and_sorted():
    rng = np.random.default_rng(5)
    seg = _random_segment(rng)
    ranked = score_candidates(seg, CONT, PARAMS)
    scores = [c.score for c in ranked]
    assert scores == sorted(scores, reverse=True)
    assert all(0.0 <= s <= 1.0 for s in scores)


def test_ranking_translation_invariant():
    seg = grid_segment(12, 12, origin=(0.56, 0.05), z=0.08)
    big = Container("c2", ContainerKind.TOTE, (0.0, 0.0), (2000, 2000, 200), 200)
    base = score_candidates(seg, big, PARAMS)
    shifted = seg + np.array([0.12, 0.09, 0.0])
    moved = score_candidates(shifted, big, PARAMS)
    # same scores in the same order at translated positions
    assert [c.score for c in base] == [c.score for c in moved]
    for a, b in zip(base, moved):
        assert b.position[0] == pytest.approx(a.position[0] + 0.12)
        assert b.position[1] == pytest.approx(a.position[1] + 0.09)


def test_too_few_valid_points_invalid():
    with pytest.raises(StrategyInvalid):
        score_candidates(grid_segment(3, 3), CONT, PARAMS)


def test_thin_strip_all_boundary_invalid():
    strip = grid_segment(30, 1)
    with pytest.raises(StrategyInvalid):
        score_candidates(strip, CONT, PARAMS)


# -- diverse selection --------------------------------------------------------

def _cand(x, y, score):
    return GraspCandidate((x, y, 0.1), (0.0, 0.0, -1.0), Tool.SUCTION, score,
                          Strategy.SURFACE_NORMALS)


def test_select_diverse_keeps_far_apart():
    cands = [_cand(0.1, 0.1, 0.9), _cand(0.3, 0.1, 0.8), _cand(0.5, 0.1, 0.7)]
    assert select_diverse(cands, 3, 0.025) == cands


def test_select_diverse_degenerate_cluster():
    cands = [_cand(0.1, 0.1, 0.9), _cand(0.105, 0.1, 0.8), _cand(0.11, 0.11, 0.7)]
    assert select_diverse(cands, 3, 0.025) == cands[:1]


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40),
       st.floats(0.01, 0.2))
def test_select_diverse_pairwise_distance_property(xy, min_dist):
    cands = [_cand(x, y, 1.0 - i * 1e-3) for i, (x, y) in enumerate(xy)]
    chosen = select_diverse(cands, 3, min_dist)
    assert len(chosen) <= 3
    for i, a in enumerate(chosen):
        for b in chosen[i + 1:]:
            d = math.dist(a.position, b.position)
            assert d >= min_dist
    # output preserves input (score) order: it is a subsequence
    idx = [cands.index(c) for c in chosen]
    assert idx == sorted(idx)


# -- centroid strategies ------------------------------------------------------

def test_centroid_mean_of_two_points():
    cand = centroid_grasp(np.array([[0.0, 0.0, 0.1], [0.2, 0.0, 0.1]]))
    assert cand.position == pytest.approx((0.1, 0.0, 0.1))
    assert cand.approach == (0.0, 0.0, -1.0)
    assert cand.strategy is Strategy.CENTROID


def test_centroid_single_point():
    cand = centroid_grasp(np.array([[0.3, 0.4, 0.05]]))
    assert cand.position == pytest.approx((0.3, 0.4, 0.05))


def test_centroid_matches_numpy_mean():
    rng = np.random.default_rng(9)
    cloud = rng.uniform(0, 1, size=(64, 3))
    cand = centroid_grasp(cloud)
    assert cand.position == pytest.approx(tuple(cloud.mean(axis=0)))


def _percept(points, depth_valid=None, label="item"):
    pts = np.asarray(points, dtype=float)
    dv = np.asarray(depth_valid if depth_valid is not None else np.ones(len(pts)), dtype=bool)
    return SegmentPercept(label=label, confidence=0.8, points=pts, depth_valid=dv,
                          pixel_area=len(pts),
                          centroid_rgb=(float(pts[:, 0].mean()), float(pts[:, 1].mean()), 0.2))


def test_rgb_centroid_without_depth():
    seg = grid_segment(10, 10, origin=(0.6, 0.1))
    p = _percept(seg, depth_valid=np.zeros(len(seg), dtype=bool))
    cand = rgb_centroid_grasp(p, None, CONT)
    assert cand.strategy is Strategy.RGB_CENTROID
    assert cand.descend_until_contact
    assert cand.position[2] == pytest.approx(CONT.top_z)


def test_rgb_centroid_symmetric_segment_on_axis():
    seg = grid_segment(11, 11, origin=(0.6, 0.1))
    p = _percept(seg, depth_valid=np.zeros(len(seg), dtype=bool))
    cand = rgb_centroid_grasp(p, None, CONT)
    assert cand.position[0] == pytest.approx(seg[:, 0].mean())
    assert cand.position[1] == pytest.approx(seg[:, 1].mean())


# -- strategy fallback --------------------------------------------------------

def test_synthesize_surface_normals_with_full_depth():
    seg = grid_segment(15, 15, origin=(0.6, 0.1))
    plan = synthesize(_percept(seg), CONT, None, PARAMS)
    assert plan.strategy is Strategy.SURFACE_NORMALS
    assert 1 <= len(plan.candidates) <= 3


def test_synthesize_forced_strategy_skips_ahead():
    from .conftest import make_spec

    seg = grid_segment(15, 15, origin=(0.6, 0.1))
    meta = make_spec("forced", forced=Strategy.RGB_CENTROID)
    plan = synthesize(_percept(seg, label="forced"), CONT, meta, PARAMS)
    assert plan.strategy is Strategy.RGB_CENTROID


def test_synthesize_boundary_only_segment_falls_to_centroid():
    strip = grid_segment(30, 1, origin=(0.6, 0.1))
    plan = synthesize(_percept(strip), CONT, None, PARAMS)
    assert plan.strategy is Strategy.CENTROID
    assert len(plan.candidates) == 1


def test_synthesize_no_depth_falls_to_rgb():
    seg = grid_segment(12, 12, origin=(0.6, 0.1))
    p = _percept(seg, depth_valid=np.zeros(len(seg), dtype=bool))
    plan = synthesize(p, CONT, None, PARAMS)
    assert plan.strategy is Strategy.RGB_CENTROID


@given(st.integers(2, 18), st.integers(1, 18), st.floats(0.0, 1.0), st.integers(0, 10**6))
def test_fallback_totality(nx, ny, depth_frac, seed):
    rng = np.random.default_rng(seed)
    seg = grid_segment(nx, ny, origin=(0.6, 0.1), z=0.08)
    dv = rng.random(len(seg)) < depth_frac
    plan = synthesize(_percept(seg, depth_valid=dv), CONT, None, PARAMS)
    assert plan.candidates


# -- pose ---------------------------------------------------------------------

def test_pose_pca_x_axis():
    pts = np.array([[x, 0.0, 0.0] for x in np.linspace(0, 0.2, 15)])
    axis = pose_pca(pts)
    assert axis.yaw == pytest.approx(0.0, abs=1e-9)
    assert not axis.low_confidence


def test_pose_pca_diagonal():
    pts = np.array([[t, t, 0.0] for t in np.linspace(0, 0.2, 15)])
    axis = pose_pca(pts)
    assert axis.yaw == pytest.approx(math.pi / 4, abs=1e-6)


def test_pose_pca_scale_invariant():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(40, 2)) @ np.array([[3.0, 0.4], [0.0, 1.0]])
    pts3 = np.column_stack([pts, np.zeros(40)])
    a = pose_pca(pts3)
    b = pose_pca(pts3 * 7.5)
    assert a.yaw == pytest.approx(b.yaw, abs=1e-9)


def test_pose_pca_isotropic_low_confidence():
    seg = grid_segment(11, 11)
    axis = pose_pca(seg)
    assert axis.low_confidence
    assert axis.yaw == 0.0


def test_pose_pca_needs_two_distinct_points():
    with pytest.raises(ValueError):
        pose_pca(np.array([[0.1, 0.1, 0.0]]))
    with pytest.raises(ValueError):
        pose_pca(np.array([[0.1, 0.1, 0.0], [0.1, 0.1, 0.5]]))


def test_dump_candidates_roundtrips(tmp_path):
    import json

    from picksim.grasping import dump_candidates

    seg = grid_segment(12, 12, origin=(0.6, 0.1))
    ranked = score_candidates(seg, CONT, PARAMS)
    path = tmp_path / "candidates.ndjson"
    dump_candidates(ranked[:5], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    recs = [json.loads(l) for l in lines]
    assert [r["rank"] for r in recs] == [0, 1, 2, 3, 4]
    assert recs[0]["score"] >= recs[-1]["score"]


def test_rgb_descent_depth_matches_ground_truth():
    # Executing a descend-until-contact grasp stops at the item's true top.
    from picksim.catalog import Strategy as _S
    from picksim.perception import PerceptionParams, segment_scene, viewpoints_for
    from picksim.world import apply_grasp
    from .conftest import make_spec, tote_world
    from picksim.catalog import VisualClass, Tool as _T

    spec = make_spec("ghost", visual=VisualClass.TRANSPARENT, tool=_T.GRIPPER,
                     p_success=1.0, forced=_S.RGB_CENTROID)
    w, _ = tote_world([spec], seed=51)
    percept = segment_scene(w, viewpoints_for(w, "tote")[0],
                            PerceptionParams.zero_noise())[0]
    plan = synthesize(percept, w.container("tote"), spec, PARAMS)
    assert plan.strategy is _S.RGB_CENTROID
    truth_top = w.items["ghost"].top_height
    _, outcome = apply_grasp(w, plan, "ghost")
    assert w.last_probes[0]["contact_z"] == pytest.approx(truth_top, abs=1e-9)
