from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from picksim.catalog import ItemSpec, Rigidity, Tool, VisualClass
from picksim.config import load_config
from picksim.tasks import ManifestEntry, TaskPhase, TaskSpec
from picksim.world import spawn_scene

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def cfg():
    return load_config()


def make_spec(
    item_id: str,
    mass_g: float = 150.0,
    bbox_mm: tuple = (100.0, 80.0, 50.0),
    visual: VisualClass = VisualClass.OPAQUE,
    tool: Tool = Tool.SUCTION,
    p_success: float = 1.0,
    forced=None,
    drop_prob=None,
) -> ItemSpec:
    return ItemSpec(
        id=item_id,
        mass_g=mass_g,
        bbox_mm=bbox_mm,
        rigidity=Rigidity.RIGID,
        visual_class=visual,
        suckable=tool is Tool.SUCTION,
        grippable=tool is Tool.GRIPPER,
        preferred_tool=tool,
        tool_success_prob={tool: p_success},
        forced_strategy=forced,
        drop_prob=drop_prob,
    )


def tote_world(specs, seed=7, world_params=None, container="tote"):
    catalog = {s.id: s for s in specs}
    manifest = tuple(ManifestEntry(s.id, container) for s in specs)
    task = TaskSpec(TaskPhase.STOW, manifest, (), 900.0)
    return spawn_scene(task, seed, catalog, params=world_params), task


def grid_segment(nx: int = 21, ny: int = 21, pitch: float = 0.005,
                 origin=(0.6, 0.1), z: float = 0.1) -> np.ndarray:
    xs = origin[0] + pitch * np.arange(nx)
    ys = origin[1] + pitch * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(nx * ny, z)])
    return pts
