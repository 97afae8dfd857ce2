"""Cartesian straight-line motion timing.

The gantry moves all three linear axes (and the wrist yaw) simultaneously, so
a move costs planning overhead plus the slowest axis. No acceleration profile
is modeled; per-attempt settle/approach time is absorbed by a flat overhead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .catalog import Tool
from .geometry import Pose


class WorkspaceError(ValueError):
    """A target pose lies outside the reachable workspace."""


@dataclass
class MotionParams:
    workspace: tuple[float, float, float] = (1.0, 1.0, 0.9)
    v_linear: float = 1.0        # m/s under load
    v_angular: float = 1.0       # rad/s under load
    plan_time: float = 0.02      # s per planned motion
    tool_change_angle: float = math.pi
    perception_time: float = 16.5  # s per imaging (settle + capture + inference + clouds)
    misc_overhead: float = 8.0    # s per attempt (seal checks, scale settling, ...)

    def __post_init__(self) -> None:
        if min(self.workspace) <= 0 or self.v_linear <= 0 or self.v_angular <= 0:
            raise ValueError("workspace dims and velocities must be positive")
        if self.plan_time <= 0 or self.tool_change_angle <= 0:
            raise ValueError("plan_time and tool_change_angle must be positive")
        if self.perception_time < 0 or self.misc_overhead < 0:
            raise ValueError("overheads must be non-negative")

    def check_pose(self, pose: Pose) -> None:
        wx, wy, wz = self.workspace
        if not (0.0 <= pose.x <= wx and 0.0 <= pose.y <= wy and 0.0 <= pose.z <= wz):
            raise WorkspaceError(f"pose ({pose.x:.3f},{pose.y:.3f},{pose.z:.3f}) outside workspace")


def move_time(frm: Pose, to: Pose, params: MotionParams) -> float:
    """Seconds for a straight-line move; all axes travel simultaneously."""
    params.check_pose(frm)
    params.check_pose(to)
    linear = max(abs(to.x - frm.x), abs(to.y - frm.y), abs(to.z - frm.z)) / params.v_linear
    angular = abs(to.yaw - frm.yaw) / params.v_angular
    return params.plan_time + max(linear, angular)


def tool_change_time(
    params: MotionParams, current: Tool | None = None, target: Tool | None = None
) -> float:
    """Seconds to rotate the end-effector turret; 0 when no change is needed."""
    if current is not None and target is not None and current == target:
        return 0.0
    return params.tool_change_angle / params.v_angular


# Action records accepted by attempt_cycle_time: ("move", from_pose, to_pose),
# ("perceive",), ("toolchange", current_tool, target_tool).
Action = tuple


def attempt_cycle_time(actions: list[Action], params: MotionParams) -> float:
    """Total seconds for one attempt's action sequence plus the flat overhead."""
    total = params.misc_overhead
    for action in actions:
        kind = action[0]
        if kind == "move":
            total += move_time(action[1], action[2], params)
        elif kind == "perceive":
            total += params.perception_time
        elif kind == "toolchange":
            total += tool_change_time(params, action[1], action[2])
        else:
            raise ValueError(f"unknown action kind {kind!r}")
    return total
