"""Simulated camera and segmentation with clutter-dependent quality.

Instead of rendering images, each visible item yields a predicted point-set
mask derived from its true visible top surface: the mask is eroded and
shifted so that its F-beta score against the truth lands on a sampled
target drawn from a clutter-dependent quality curve. Lower quality thus
produces physically meaningful errors (offset grasp points, points bleeding
onto neighbors) rather than abstract score noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .catalog import VisualClass
from .geometry import Container, ContainerKind, cell_centers
from .world import WorldState, surface_cells, surface_z_at


class View(str, Enum):
    TOP_FULL = "top_full"
    CLOSEUP_LEFT = "closeup_left"
    CLOSEUP_RIGHT = "closeup_right"
    SIDE_RECLASSIFY = "side_reclassify"


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    view: View


@dataclass
class SegmentPercept:
    label: str
    confidence: float
    points: np.ndarray          # (n,3) float64 surface samples
    depth_valid: np.ndarray     # (n,) bool; all-False models transparent items
    pixel_area: int
    centroid_rgb: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.points.shape[0] == 0:
            raise ValueError("percept must carry at least one point")


def _knots(seq) -> tuple[tuple[float, float], ...]:
    return tuple((float(n), float(v)) for n, v in seq)


@dataclass
class PerceptionParams:
    # Piecewise-linear item-count -> mean F0.5 of an emitted segment.
    f_half_by_clutter: tuple = ((1, 0.85), (20, 0.45))
    confusion_prob: float = 0.04
    miss_prob_by_clutter: tuple = ((1, 0.02), (20, 0.20))
    mask_erosion_fraction: float = 0.0
    f_sigma: float = 0.15  # per-segment spread around the clutter curve

    def __post_init__(self) -> None:
        self.f_half_by_clutter = _knots(self.f_half_by_clutter)
        self.miss_prob_by_clutter = _knots(self.miss_prob_by_clutter)
        values = [v for _, v in sorted(self.f_half_by_clutter)]
        if any(b > a + 1e-12 for a, b in zip(values, values[1:])):
            raise ValueError("f_half_by_clutter must be non-increasing in item count")
        if not 0.0 <= self.confusion_prob <= 1.0:
            raise ValueError("confusion_prob must be in [0,1]")

    @classmethod
    def zero_noise(cls) -> "PerceptionParams":
        return cls(
            f_half_by_clutter=((1, 1.0), (20, 1.0)),
            confusion_prob=0.0,
            miss_prob_by_clutter=((1, 0.0), (20, 0.0)),
            mask_erosion_fraction=0.0,
            f_sigma=0.0,
        )


def piecewise_linear(knots: tuple[tuple[float, float], ...], x: float) -> float:
    pts = sorted(knots)
    if x <= pts[0][0]:
        return pts[0][1]
    if x >= pts[-1][0]:
        return pts[-1][1]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if x0 <= x <= x1:
            if x1 == x0:
                return y1
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return pts[-1][1]  # pragma: no cover


# ---------------------------------------------------------------------------
# camera poses

TOP_STANDOFF = 0.35
CLOSEUP_STANDOFF = 0.18


def viewpoints_for(world: WorldState, compartment: str) -> list[CameraPose]:
    """The three camera poses for a tote or storage compartment, top first."""
    cont = world.container(compartment)
    if cont.kind is ContainerKind.SHIPPING_BOX:
        raise ValueError(f"{compartment} is a shipping box and is never imaged")
    cx, cy = cont.center
    top = CameraPose((cx, cy, cont.top_z + TOP_STANDOFF), View.TOP_FULL)
    if cont.size_x >= cont.size_y:
        left = ((cont.x0 + cx) / 2.0, cy)
        right = ((cx + cont.x1) / 2.0, cy)
    else:
        left = (cx, (cont.y0 + cy) / 2.0)
        right = (cx, (cy + cont.y1) / 2.0)
    z = cont.top_z + CLOSEUP_STANDOFF
    return [
        top,
        CameraPose((left[0], left[1], z), View.CLOSEUP_LEFT),
        CameraPose((right[0], right[1], z), View.CLOSEUP_RIGHT),
    ]


def _view_region(cont: Container, view: View) -> tuple[float, float, float, float]:
    """(x_lo, x_hi, y_lo, y_hi) of the container subregion a view covers."""
    if view is View.TOP_FULL:
        return (cont.x0, cont.x1, cont.y0, cont.y1)
    if cont.size_x >= cont.size_y:
        xm = 0.5 * (cont.x0 + cont.x1)
        if view is View.CLOSEUP_LEFT:
            return (cont.x0, xm, cont.y0, cont.y1)
        return (xm, cont.x1, cont.y0, cont.y1)
    ym = 0.5 * (cont.y0 + cont.y1)
    if view is View.CLOSEUP_LEFT:
        return (cont.x0, cont.x1, cont.y0, ym)
    return (cont.x0, cont.x1, ym, cont.y1)


def _container_for_camera(world: WorldState, camera: CameraPose) -> Container:
    x, y, _ = camera.position
    cont = world.container_at_xy(x, y)
    if cont is None:
        raise ValueError("camera does not point at a container")
    return cont


# ---------------------------------------------------------------------------
# mask construction


def _erode_cells(cells: set[tuple[int, int]], count: int) -> set[tuple[int, int]]:
    """Remove `count` cells, peeling boundary rings first (deterministic)."""
    remaining = set(cells)
    removed = 0
    while removed < count and remaining:
        ring = sorted(
            c for c in remaining
            if ((c[0] - 1, c[1]) not in remaining or (c[0] + 1, c[1]) not in remaining
                or (c[0], c[1] - 1) not in remaining or (c[0], c[1] + 1) not in remaining)
        )
        if not ring:
            ring = sorted(remaining)
        for c in ring:
            if removed >= count:
                break
            remaining.discard(c)
            removed += 1
    return remaining


_KEY_STRIDE = 1 << 21  # packs (i,j) lattice indices into one int64


def _pack(ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    return ii.astype(np.int64) * _KEY_STRIDE + jj.astype(np.int64)


def _container_cell_bounds(cont: Container) -> tuple[int, int, int, int]:
    """Inclusive lattice index bounds of cell centers inside the interior."""
    from .geometry import LATTICE_PITCH as p

    i_lo = math.ceil(cont.x0 / p - 0.5 - 1e-9)
    i_hi = math.floor(cont.x1 / p - 0.5 + 1e-9)
    j_lo = math.ceil(cont.y0 / p - 0.5 - 1e-9)
    j_hi = math.floor(cont.y1 / p - 0.5 + 1e-9)
    return (i_lo, i_hi, j_lo, j_hi)


def _fbeta_half_counts(tp: int, n_pred: int, n_truth: int) -> float:
    if tp == 0 or n_pred == 0 or n_truth == 0:
        return 0.0
    p = tp / n_pred
    r = tp / n_truth
    return 1.25 * p * r / (0.25 * p + r)


def _shift_for_target(
    ii: np.ndarray,
    jj: np.ndarray,
    truth_keys: np.ndarray,
    n_truth: int,
    f_target: float,
    theta: float,
    clip: tuple[int, int, int, int],
) -> tuple[int, int]:
    """Integer lattice shift of the mask whose realized F0.5 lands closest to
    the target, searched outward along direction theta."""
    i_lo, i_hi, j_lo, j_hi = clip
    span = int(ii.max() - ii.min() + jj.max() - jj.min()) + 4
    ux, uy = math.cos(theta), math.sin(theta)
    best: tuple[float, int, int] | None = None
    seen: set[tuple[int, int]] = set()
    for t in range(span):
        di, dj = round(t * ux), round(t * uy)
        if (di, dj) in seen:
            continue
        seen.add((di, dj))
        si, sj = ii + di, jj + dj
        inside = (si >= i_lo) & (si <= i_hi) & (sj >= j_lo) & (sj <= j_hi)
        n_pred = int(inside.sum())
        if n_pred == 0:
            break
        keys = _pack(si[inside], sj[inside])
        tp = int(np.intersect1d(keys, truth_keys, assume_unique=True).size)
        f = _fbeta_half_counts(tp, n_pred, n_truth)
        err = abs(f - f_target)
        if best is None or err < best[0] - 1e-12:
            best = (err, di, dj)
        if f <= f_target:
            break
    if best is None:
        return (0, 0)
    return (best[1], best[2])


def _depth_validity(
    visual: VisualClass, n: int, rng: np.random.Generator
) -> np.ndarray:
    if visual in (VisualClass.TRANSPARENT, VisualClass.IR_ABSORBING):
        return np.zeros(n, dtype=bool)
    if visual is VisualClass.REFLECTIVE:
        return rng.random(n) >= 0.5
    return np.ones(n, dtype=bool)


def truth_mask(world: WorldState, spec_id: str) -> np.ndarray:
    """Ground-truth visible-surface points of an item (n,3), full top view."""
    it = world.items[spec_id]
    ii, jj, visible = surface_cells(world, spec_id)
    ii, jj = ii[visible], jj[visible]
    xs, ys = cell_centers(ii, jj)
    zs = np.full(xs.shape[0], it.top_height, dtype=np.float64)
    return np.column_stack([xs, ys, zs])


def _effective_clutter(n_items: int, view: View) -> float:
    if view in (View.CLOSEUP_LEFT, View.CLOSEUP_RIGHT):
        return max(1.0, math.ceil(n_items / 2.0))
    return float(max(1, n_items))


def segment_scene_detailed(
    world: WorldState, camera: CameraPose, params: PerceptionParams
) -> list[tuple[SegmentPercept, str]]:
    """Percepts paired with the true item key each one came from."""
    cont = _container_for_camera(world, camera)
    region = _view_region(cont, camera.view)
    rng = world.rng.perception
    members = world.items_in(cont.id)
    n_eff = _effective_clutter(len(members), camera.view)
    miss_p = piecewise_linear(params.miss_prob_by_clutter, n_eff)
    f_mean = piecewise_linear(params.f_half_by_clutter, n_eff)
    labels_present = sorted(it.spec_id for it in members)

    out: list[tuple[SegmentPercept, str]] = []
    for it in members:
        ii, jj, vis = surface_cells(world, it.spec_id)
        if ii.size == 0:
            continue
        frac = float(vis.sum()) / float(ii.size)
        if frac < world.params.full_occlusion_visible_frac:
            continue
        xs, ys = cell_centers(ii, jj)
        in_region = (
            (xs >= region[0]) & (xs <= region[1]) & (ys >= region[2]) & (ys <= region[3])
        )
        keep = vis & in_region
        if not keep.any():
            continue
        if float(rng.random()) < miss_p:
            continue
        f_target = float(np.clip(rng.normal(f_mean, params.f_sigma), 0.02, 1.0))
        theta = float(rng.uniform(0.0, 2.0 * math.pi))

        truth_ii, truth_jj = ii[keep], jj[keep]
        n_truth = int(truth_ii.size)
        truth_keys = np.sort(_pack(truth_ii, truth_jj))
        e_loss = params.mask_erosion_fraction * (1.0 - f_target)
        n_erode = min(int(round(e_loss * n_truth)), max(n_truth - 1, 0))
        if n_erode:
            cells = _erode_cells(set(zip(truth_ii.tolist(), truth_jj.tolist())), n_erode)
            arr = np.array(sorted(cells), dtype=np.int64)
            mi, mj = arr[:, 0], arr[:, 1]
        else:
            mi, mj = truth_ii, truth_jj
        clip = _container_cell_bounds(cont)
        di, dj = _shift_for_target(mi, mj, truth_keys, n_truth, f_target, theta, clip)
        pi, pj = mi + di, mj + dj
        inside = (pi >= clip[0]) & (pi <= clip[1]) & (pj >= clip[2]) & (pj <= clip[3])
        if not inside.any():
            continue
        px, py = cell_centers(pi[inside], pj[inside])
        pz = surface_z_at(world, cont.id, px, py)
        points = np.column_stack([px, py, pz])

        label = it.spec_id
        if params.confusion_prob > 0 and float(rng.random()) < params.confusion_prob:
            others = [l for l in labels_present if l != it.spec_id]
            if others:
                label = others[int(rng.integers(len(others)))]
        depth_valid = _depth_validity(
            world.catalog[it.spec_id].visual_class, points.shape[0], rng
        )
        percept = SegmentPercept(
            label=label,
            confidence=round(min(1.0, max(0.0, f_target)), 4),
            points=points,
            depth_valid=depth_valid,
            pixel_area=int(points.shape[0]),
            centroid_rgb=(float(px.mean()), float(py.mean()), cont.top_z),
        )
        out.append((percept, it.spec_id))
    return out


def segment_scene(
    world: WorldState, camera: CameraPose, params: PerceptionParams
) -> list[SegmentPercept]:
    """Labeled segment percepts for every visible, non-fully-occluded item."""
    return [p for p, _ in segment_scene_detailed(world, camera, params)]


# ---------------------------------------------------------------------------
# metrics and secondary classification


def _point_keys(mask) -> set[tuple]:
    arr = np.asarray(mask, dtype=np.float64)
    if arr.size == 0:
        return set()
    arr = np.round(arr.reshape(arr.shape[0], -1), 9)
    return {tuple(row) for row in arr}


def f_beta(predicted_mask, truth_mask, beta: float) -> float:
    """F-beta over point-set membership; beta < 1 weighs precision higher."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    pred = _point_keys(predicted_mask)
    truth = _point_keys(truth_mask)
    if not pred and not truth:
        return 1.0
    tp = len(pred & truth)
    if tp == 0:
        return 0.0
    precision = tp / len(pred)
    recall = tp / len(truth)
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def classify_held_item(
    world: WorldState, candidates: list[str], params: PerceptionParams
) -> str | None:
    """Second visual classification of the held item against candidate labels.

    Returns the true label unless confusion fires, in which case a wrong
    candidate or no classification (confidence too low) is returned; the
    true label is never returned when it is outside the candidate set.
    """
    if world.gripper.held is None:
        raise ValueError("no item held to classify")
    if not candidates:
        raise ValueError("candidate set must be non-empty")
    true_label = world.items[world.gripper.held].spec_id
    rng = world.rng.perception
    if true_label not in candidates:
        return None
    if float(rng.random()) >= params.confusion_prob:
        return true_label
    options: list[str | None] = [c for c in sorted(candidates) if c != true_label]
    options.append(None)
    return options[int(rng.integers(len(options)))]


def scene_quality(
    world: WorldState, compartment: str, params: PerceptionParams, beta: float = 0.5
) -> list[float]:
    """Per-emitted-percept F-beta scores for a top view of a compartment."""
    camera = viewpoints_for(world, compartment)[0]
    scores = []
    for percept, true_key in segment_scene_detailed(world, camera, params):
        scores.append(f_beta(percept.points, truth_mask(world, true_key), beta))
    return scores
