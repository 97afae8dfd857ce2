"""JIT kernels for point-cloud grasp scoring.

All loops accumulate sequentially in index order with plain IEEE arithmetic
(no fastmath), so an independent pure-Python re-implementation that follows
the same formulas produces bit-identical values.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Neighborhood radius for normals / boundary / curvature, metres.
NEIGHBOR_RADIUS = 0.010
# Squared radius with an absolute slack so exact-radius lattice neighbors stay in.
NEIGHBOR_R2 = NEIGHBOR_RADIUS * NEIGHBOR_RADIUS + 1e-9
# A point is boundary when its neighbors subtend less than this angle around it.
BOUNDARY_MIN_COVERAGE = 1.5 * np.pi
# Fewer points than this in a neighborhood (incl. the point) is degenerate.
MIN_NEIGHBORHOOD = 4


@njit(cache=True)
def plane_normals(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point upward surface normals from a local least-squares plane fit.

    Fits z = a*x + b*y + c over each radius-r neighborhood (including the
    point) using centered normal equations. Returns (normals (n,3),
    degenerate flags (n,)); degenerate points get the vertical normal.
    """
    n = pts.shape[0]
    normals = np.empty((n, 3), dtype=np.float64)
    degenerate = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        cnt = 0
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for j in range(n):
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            if dx * dx + dy * dy + dz * dz <= NEIGHBOR_R2:
                cnt += 1
                sx += pts[j, 0]
                sy += pts[j, 1]
                sz += pts[j, 2]
        if cnt < MIN_NEIGHBORHOOD:
            normals[i, 0] = 0.0
            normals[i, 1] = 0.0
            normals[i, 2] = 1.0
            degenerate[i] = True
            continue
        mx = sx / cnt
        my = sy / cnt
        mz = sz / cnt
        sxx = 0.0
        sxy = 0.0
        syy = 0.0
        sxz = 0.0
        syz = 0.0
        for j in range(n):
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            if dx * dx + dy * dy + dz * dz <= NEIGHBOR_R2:
                qx = pts[j, 0] - mx
                qy = pts[j, 1] - my
                qz = pts[j, 2] - mz
                sxx += qx * qx
                sxy += qx * qy
                syy += qy * qy
                sxz += qx * qz
                syz += qy * qz
        det = sxx * syy - sxy * sxy
        if abs(det) < 1e-18:
            normals[i, 0] = 0.0
            normals[i, 1] = 0.0
            normals[i, 2] = 1.0
            degenerate[i] = True
            continue
        a = (syy * sxz - sxy * syz) / det
        b = (sxx * syz - sxy * sxz) / det
        norm = np.sqrt(a * a + b * b + 1.0)
        normals[i, 0] = -a / norm
        normals[i, 1] = -b / norm
        normals[i, 2] = 1.0 / norm
    return normals, degenerate


@njit(cache=True)
def boundary_flags(pts: np.ndarray) -> np.ndarray:
    """True where the xy-plane angular coverage of neighbors is < 270 deg."""
    n = pts.shape[0]
    flags = np.zeros(n, dtype=np.bool_)
    angles = np.empty(n, dtype=np.float64)
    for i in range(n):
        cnt = 0
        for j in range(n):
            if j == i:
                continue
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            if dx * dx + dy * dy + dz * dz <= NEIGHBOR_R2:
                angles[cnt] = np.arctan2(dy, dx)
                cnt += 1
        if cnt < 2:
            flags[i] = True
            continue
        srt = np.sort(angles[:cnt])
        max_gap = 2.0 * np.pi - (srt[cnt - 1] - srt[0])
        for k in range(1, cnt):
            gap = srt[k] - srt[k - 1]
            if gap > max_gap:
                max_gap = gap
        coverage = 2.0 * np.pi - max_gap
        if coverage < BOUNDARY_MIN_COVERAGE:
            flags[i] = True
    return flags


@njit(cache=True)
def boundary_distances(pts: np.ndarray, flags: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the nearest boundary point."""
    n = pts.shape[0]
    dists = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        for j in range(n):
            if not flags[j]:
                continue
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
        dists[i] = np.sqrt(best) if best < np.inf else np.inf
    return dists


@njit(cache=True)
def curvature_scores(pts: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """1 - (mean angular deviation of neighbor normals / 90 deg), in [0,1]."""
    n = pts.shape[0]
    scores = np.empty(n, dtype=np.float64)
    half_pi = 0.5 * np.pi
    for i in range(n):
        cnt = 0
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            if dx * dx + dy * dy + dz * dz <= NEIGHBOR_R2:
                dot = (
                    normals[i, 0] * normals[j, 0]
                    + normals[i, 1] * normals[j, 1]
                    + normals[i, 2] * normals[j, 2]
                )
                if dot > 1.0:
                    dot = 1.0
                elif dot < -1.0:
                    dot = -1.0
                acc += np.arccos(dot)
                cnt += 1
        if cnt == 0:
            scores[i] = 1.0
            continue
        dev = (acc / cnt) / half_pi
        if dev > 1.0:
            dev = 1.0
        elif dev < 0.0:
            dev = 0.0
        scores[i] = 1.0 - dev
    return scores
