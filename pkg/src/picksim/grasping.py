"""Grasp synthesis over segmented point clouds.

Three strategies cover decreasing levels of depth quality:

* surface-normals: score every grid point by distance-from-boundary (75%)
  and local flatness (25%), subtract container penalties capped at 20%, and
  keep the best spatially diverse trio. Approach follows the local normal.
* centroid: single vertical grasp at the mean of the depth-valid points,
  for scattered/unreliable clouds.
* rgb-centroid: vertical descend-until-contact above the color-segment
  center, for items with no usable depth at all.

When a strategy cannot produce a valid grasp the next one is used, so a plan
always exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .catalog import ItemSpec, Strategy, Tool
from .geometry import Container

# Scores are quantized before ranking so that symmetric grid points tie
# exactly and ties resolve by position in every implementation.
SCORE_DECIMALS = 9


class StrategyInvalid(ValueError):
    """The current grasp strategy cannot produce a valid grasp; fall back."""


@dataclass(frozen=True)
class GraspCandidate:
    position: tuple[float, float, float]
    approach: tuple[float, float, float]  # unit vector, direction of tool travel
    tool: Tool
    score: float
    strategy: Strategy
    gripper_yaw: float = 0.0
    descend_until_contact: bool = False

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(c * c for c in self.approach))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError("approach must be a unit vector")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0,1]")


@dataclass(frozen=True)
class GraspPlan:
    strategy: Strategy
    tool: Tool
    candidates: tuple[GraspCandidate, ...]
    aligned_yaw: float = 0.0

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("plan must carry at least one candidate")
        if len(self.candidates) > 3:
            raise ValueError("plan carries at most 3 candidates")


@dataclass
class GraspScoringParams:
    w_boundary: float = 0.75
    w_curvature: float = 0.25
    penalty_cap: float = 0.20
    height_penalty_max: float = 0.10
    wall_angle_penalty_max: float = 0.10
    diversity_min_dist: float = 0.025  # m, ~half the suction cup diameter
    min_valid_points: int = 12
    wall_tilt_threshold: float = 0.35  # rad of approach tilt before wall penalty
    wall_proximity: float = 0.10       # m, wall must be this close along the tilt
    max_scoring_points: int = 400      # larger grids are stride-subsampled

    def __post_init__(self) -> None:
        if abs(self.w_boundary + self.w_curvature - 1.0) > 1e-9:
            raise ValueError("boundary and curvature weights must sum to 1")
        if self.height_penalty_max + self.wall_angle_penalty_max > self.penalty_cap + 1e-9:
            raise ValueError("penalty split exceeds the penalty cap")


class PrincipalAxis(NamedTuple):
    yaw: float
    low_confidence: bool


def _as_points(segment) -> np.ndarray:
    pts = np.asarray(segment, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("segment must be an (n,3) point array")
    return np.ascontiguousarray(pts)


def _point_index(pts: np.ndarray, p) -> int:
    target = np.asarray(p, dtype=np.float64)
    hits = np.where(np.all(pts == target, axis=1))[0]
    if hits.size == 0:
        raise ValueError("query point is not part of the segment")
    return int(hits[0])


def _segment_fields(pts: np.ndarray, min_valid_points: int):
    """Normals, boundary flags and normalized boundary distances for a segment."""
    if pts.shape[0] < min_valid_points:
        raise StrategyInvalid(
            f"segment has {pts.shape[0]} valid points (< {min_valid_points})"
        )
    flags = _kernels.boundary_flags(pts)
    if bool(flags.all()):
        raise StrategyInvalid("all points lie on the segment boundary")
    dists = _kernels.boundary_distances(pts, flags)
    max_dist = float(dists.max())
    if not math.isfinite(max_dist) or max_dist <= 0.0:
        raise StrategyInvalid("no usable interior: boundary distances degenerate")
    return flags, dists, max_dist


def boundary_distance_norm(segment, p) -> float:
    """Distance from p to the nearest boundary point, normalized to [0,1]."""
    pts = _as_points(segment)
    idx = _point_index(pts, p)
    _, dists, max_dist = _segment_fields(pts, min_valid_points=4)
    return float(dists[idx]) / max_dist


def curvature_score(segment, p) -> float:
    """Local flatness at p: 1 for a plane, approaching 0 at sharp features."""
    pts = _as_points(segment)
    idx = _point_index(pts, p)
    normals, degenerate = _kernels.plane_normals(pts)
    if degenerate[idx]:
        raise StrategyInvalid("degenerate neighborhood (<4 points) at query point")
    return float(_kernels.curvature_scores(pts, normals)[idx])


def combine_score(
    boundary: float,
    curvature: float,
    height_penalty: float,
    wall_penalty: float,
    params: GraspScoringParams,
) -> float:
    """Weighted base score minus capped task penalties, clipped at 0."""
    base = params.w_boundary * boundary + params.w_curvature * curvature
    penalty = height_penalty + wall_penalty
    if penalty > params.penalty_cap:
        penalty = params.penalty_cap
    score = base - penalty
    if score < 0.0:
        score = 0.0
    return round(score, SCORE_DECIMALS)


def _height_penalty(z: float, container: Container, params: GraspScoringParams) -> float:
    depth = container.top_z - z
    frac = depth / container.wall_m
    if frac < 0.0:
        frac = 0.0
    elif frac > 1.0:
        frac = 1.0
    return params.height_penalty_max * frac


def _wall_angle_penalty(
    x: float, y: float, nx: float, ny: float, nz: float,
    container: Container, params: GraspScoringParams,
) -> float:
    # Approach is -normal; its tilt from vertical equals the normal's tilt.
    cz = nz
    if cz > 1.0:
        cz = 1.0
    elif cz < -1.0:
        cz = -1.0
    tilt = math.acos(cz)
    if tilt <= params.wall_tilt_threshold:
        return 0.0
    hx, hy = -nx, -ny
    hn = math.sqrt(hx * hx + hy * hy)
    if hn < 1e-12:
        return 0.0
    hx /= hn
    hy /= hn
    # Distance along the tilt direction to each wall plane.
    t = math.inf
    if hx > 1e-12:
        t = min(t, (container.x1 - x) / hx)
    elif hx < -1e-12:
        t = min(t, (container.x0 - x) / hx)
    if hy > 1e-12:
        t = min(t, (container.y1 - y) / hy)
    elif hy < -1e-12:
        t = min(t, (container.y0 - y) / hy)
    if t > params.wall_proximity:
        return 0.0
    ramp = (tilt - params.wall_tilt_threshold) / (0.25 * math.pi - params.wall_tilt_threshold)
    if ramp > 1.0:
        ramp = 1.0
    return params.wall_angle_penalty_max * ramp


def stride_subsample(n_points: int, max_points: int) -> np.ndarray:
    """Deterministic index stride keeping at most max_points of n_points."""
    if n_points <= max_points:
        return np.arange(n_points, dtype=np.int64)
    stride = int(math.ceil(n_points / max_points))
    return np.arange(0, n_points, stride, dtype=np.int64)


def score_candidates(
    segment, container: Container, params: GraspScoringParams, tool: Tool = Tool.SUCTION
) -> list[GraspCandidate]:
    """Rank every grid point of a depth-valid segment as a grasp candidate.

    Points are sorted lexicographically by position first so the stride
    subsample and tie-breaking are independent of input order.
    """
    pts = _as_points(segment)
    if pts.shape[0] == 0:
        raise StrategyInvalid("empty valid point set")
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = np.ascontiguousarray(pts[order])
    keep = stride_subsample(pts.shape[0], params.max_scoring_points)
    pts = np.ascontiguousarray(pts[keep])

    flags, dists, max_dist = _segment_fields(pts, params.min_valid_points)
    normals, degenerate = _kernels.plane_normals(pts)
    curvatures = _kernels.curvature_scores(pts, normals)

    candidates: list[GraspCandidate] = []
    for i in range(pts.shape[0]):
        if degenerate[i]:
            continue
        x, y, z = float(pts[i, 0]), float(pts[i, 1]), float(pts[i, 2])
        nx, ny, nz = float(normals[i, 0]), float(normals[i, 1]), float(normals[i, 2])
        boundary = float(dists[i]) / max_dist
        h_pen = _height_penalty(z, container, params)
        w_pen = _wall_angle_penalty(x, y, nx, ny, nz, container, params)
        score = combine_score(boundary, float(curvatures[i]), h_pen, w_pen, params)
        candidates.append(
            GraspCandidate(
                position=(x, y, z),
                approach=(-nx, -ny, -nz),
                tool=tool,
                score=score,
                strategy=Strategy.SURFACE_NORMALS,
            )
        )
    if not candidates:
        raise StrategyInvalid("no candidate survived the neighborhood checks")
    candidates.sort(key=lambda c: (-c.score, c.position[0], c.position[1], c.position[2]))
    return candidates


def select_diverse(
    ranked: Sequence[GraspCandidate], k: int = 3, min_dist: float = 0.025
) -> list[GraspCandidate]:
    """Greedy top-k keeping pairwise separation >= min_dist; preserves order."""
    chosen: list[GraspCandidate] = []
    for cand in ranked:
        if len(chosen) == k:
            break
        ok = True
        for kept in chosen:
            dx = cand.position[0] - kept.position[0]
            dy = cand.position[1] - kept.position[1]
            dz = cand.position[2] - kept.position[2]
            if math.sqrt(dx * dx + dy * dy + dz * dz) < min_dist:
                ok = False
                break
        if ok:
            chosen.append(cand)
    return chosen


def centroid_grasp(segment, tool: Tool = Tool.SUCTION) -> GraspCandidate:
    """Single vertical grasp at the mean of the depth-valid points."""
    pts = _as_points(segment)
    if pts.shape[0] == 0:
        raise StrategyInvalid("centroid strategy needs at least one depth-valid point")
    cx, cy, cz = (float(v) for v in pts.mean(axis=0))
    return GraspCandidate(
        position=(cx, cy, cz),
        approach=(0.0, 0.0, -1.0),
        tool=tool,
        score=0.5,
        strategy=Strategy.CENTROID,
    )


def rgb_centroid_grasp(
    percept, camera, container: Container, tool: Tool = Tool.SUCTION
) -> GraspCandidate:
    """Vertical descend-until-contact above the color-segment center.

    The execution layer stops the descent on simulated scale/pressure
    contact; the camera argument is accepted for interface parity (the
    position estimate already lives in the percept).
    """
    del camera
    cx, cy, _ = percept.centroid_rgb
    return GraspCandidate(
        position=(float(cx), float(cy), container.top_z),
        approach=(0.0, 0.0, -1.0),
        tool=tool,
        score=0.25,
        strategy=Strategy.RGB_CENTROID,
        descend_until_contact=True,
    )


def pose_pca(percept_or_points) -> PrincipalAxis:
    """Yaw of the first principal axis of the planar point spread, in [0, pi).

    Near-isotropic spreads (eigenvalue ratio < 1.05) return yaw 0 flagged
    low-confidence.
    """
    points = getattr(percept_or_points, "points", percept_or_points)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("pose estimation needs at least 2 points")
    xy = pts[:, :2]
    if np.unique(xy, axis=0).shape[0] < 2:
        raise ValueError("pose estimation needs at least 2 distinct planar points")
    mean = xy.mean(axis=0)
    q = xy - mean
    cxx = float((q[:, 0] * q[:, 0]).mean())
    cyy = float((q[:, 1] * q[:, 1]).mean())
    cxy = float((q[:, 0] * q[:, 1]).mean())
    spread = math.sqrt((cxx - cyy) ** 2 + 4.0 * cxy * cxy)
    lam_hi = 0.5 * (cxx + cyy + spread)
    lam_lo = 0.5 * (cxx + cyy - spread)
    if lam_hi <= 0.0:
        return PrincipalAxis(0.0, True)
    if lam_lo > 0.0 and lam_hi / lam_lo < 1.05:
        return PrincipalAxis(0.0, True)
    yaw = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
    if yaw < 0.0:
        yaw += math.pi
    if yaw >= math.pi:
        yaw -= math.pi
    return PrincipalAxis(yaw, False)


def dump_candidates(candidates: Sequence[GraspCandidate], path) -> None:
    """Write scored candidates as line-delimited records for visualization."""
    import json
    from pathlib import Path

    lines = []
    for rank, c in enumerate(candidates):
        lines.append(json.dumps({
            "rank": rank,
            "position": [round(v, 6) for v in c.position],
            "approach": [round(v, 6) for v in c.approach],
            "score": c.score,
            "strategy": c.strategy.value,
            "tool": c.tool.value,
        }, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_CHAIN = (Strategy.SURFACE_NORMALS, Strategy.CENTROID, Strategy.RGB_CENTROID)


def synthesize(
    percept,
    container: Container,
    item_meta: ItemSpec | None,
    params: GraspScoringParams,
) -> GraspPlan:
    """Build a grasp plan, falling through surface-normals -> centroid -> rgb.

    A forced strategy in the item metadata skips the earlier stages. The
    rgb-centroid stage always succeeds, so a plan is always returned.
    """
    tool = item_meta.preferred_tool if item_meta is not None else Tool.SUCTION
    forced = item_meta.forced_strategy if item_meta is not None else None
    start = _CHAIN.index(forced) if forced is not None else 0

    points = np.asarray(percept.points, dtype=np.float64)
    depth_valid = np.asarray(percept.depth_valid, dtype=bool)
    valid = points[depth_valid]

    axis = pose_pca(points) if points.shape[0] >= 2 else PrincipalAxis(0.0, True)
    yaw = axis.yaw

    for strategy in _CHAIN[start:]:
        try:
            if strategy is Strategy.SURFACE_NORMALS:
                ranked = score_candidates(valid, container, params, tool=tool)
                chosen = select_diverse(ranked, k=3, min_dist=params.diversity_min_dist)
                if not chosen:
                    raise StrategyInvalid("diversity selection kept no candidate")
                cands = tuple(replace(c, gripper_yaw=yaw) for c in chosen)
                return GraspPlan(strategy, tool, cands, aligned_yaw=yaw)
            if strategy is Strategy.CENTROID:
                cand = replace(centroid_grasp(valid, tool=tool), gripper_yaw=yaw)
                return GraspPlan(strategy, tool, (cand,), aligned_yaw=yaw)
            cand = replace(
                rgb_centroid_grasp(percept, None, container, tool=tool), gripper_yaw=yaw
            )
            return GraspPlan(strategy, tool, (cand,), aligned_yaw=yaw)
        except StrategyInvalid:
            continue
    raise AssertionError("rgb-centroid stage cannot fail")  # pragma: no cover
