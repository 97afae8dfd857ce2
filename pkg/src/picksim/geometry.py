"""Workspace geometry: poses, containers, footprints, and the sampling lattice.

All internal geometry is in metres in the workspace frame. Container floors
sit at z = 0; interior dimensions are stored in millimetres as configured and
converted here. Surface point sampling uses one global square lattice so that
point sets produced by different subsystems compare exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Pitch of the global surface-sampling lattice (also the grasp-candidate grid).
LATTICE_PITCH = 0.005

MM = 1e-3


@dataclass(frozen=True)
class Pose:
    """A wrist/camera pose: position in metres plus yaw about +z."""

    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


class ContainerKind(str, Enum):
    TOTE = "tote"
    STORAGE_COMPARTMENT = "storage_compartment"
    SHIPPING_BOX = "shipping_box"


@dataclass(frozen=True)
class Container:
    """An open-top container resting on the workspace floor (z = 0)."""

    id: str
    kind: ContainerKind
    origin: tuple[float, float]  # workspace-frame min corner of the interior floor
    interior_dims_mm: tuple[float, float, float]
    wall_height_mm: float

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.interior_dims_mm) or self.wall_height_mm <= 0:
            raise ValueError(f"container {self.id}: dims must be positive")

    @property
    def size_x(self) -> float:
        return self.interior_dims_mm[0] * MM

    @property
    def size_y(self) -> float:
        return self.interior_dims_mm[1] * MM

    @property
    def wall_m(self) -> float:
        return self.wall_height_mm * MM

    @property
    def x0(self) -> float:
        return self.origin[0]

    @property
    def y0(self) -> float:
        return self.origin[1]

    @property
    def x1(self) -> float:
        return self.origin[0] + self.size_x

    @property
    def y1(self) -> float:
        return self.origin[1] + self.size_y

    @property
    def top_z(self) -> float:
        return self.wall_m

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains_xy(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def wall_distance(self, x: float, y: float) -> float:
        """Distance from an interior point to the nearest wall plane."""
        return min(x - self.x0, self.x1 - x, y - self.y0, self.y1 - y)


def rotated_half_extents(bbox_xy_m: tuple[float, float], yaw: float) -> tuple[float, float]:
    """Axis-aligned half extents of a yaw-rotated rectangular footprint."""
    hw, hd = 0.5 * bbox_xy_m[0], 0.5 * bbox_xy_m[1]
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    return (hw * c + hd * s, hw * s + hd * c)


def rect_overlap_area(
    ax: float, ay: float, ahx: float, ahy: float,
    bx: float, by: float, bhx: float, bhy: float,
) -> float:
    """Overlap area of two axis-aligned rectangles given centers/half-extents."""
    ox = min(ax + ahx, bx + bhx) - max(ax - ahx, bx - bhx)
    oy = min(ay + ahy, by + bhy) - max(ay - ahy, by - bhy)
    if ox <= 0.0 or oy <= 0.0:
        return 0.0
    return ox * oy


def lattice_cells_in_rect(
    x_lo: float, x_hi: float, y_lo: float, y_hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """Global lattice cell indices whose centers fall inside a rectangle.

    Returns flat (ii, jj) int arrays. Cell i has center (i + 0.5) * pitch.
    """
    p = LATTICE_PITCH
    i0 = math.ceil(x_lo / p - 0.5 - 1e-9)
    i1 = math.floor(x_hi / p - 0.5 + 1e-9)
    j0 = math.ceil(y_lo / p - 0.5 - 1e-9)
    j1 = math.floor(y_hi / p - 0.5 + 1e-9)
    if i1 < i0 or j1 < j0:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    ii = np.arange(i0, i1 + 1, dtype=np.int64)
    jj = np.arange(j0, j1 + 1, dtype=np.int64)
    gi, gj = np.meshgrid(ii, jj, indexing="ij")
    return (gi.ravel(), gj.ravel())


def cell_centers(ii: np.ndarray, jj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = LATTICE_PITCH
    return ((ii.astype(np.float64) + 0.5) * p, (jj.astype(np.float64) + 0.5) * p)
