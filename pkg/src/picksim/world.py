"""Ground-truth simulated environment.

Quasi-static: items rest at stacked bounding-box heights inside open-top
containers, with no dynamics. Grasp attempts resolve against the true
geometry under the candidate points and sample success from per-item tool
probabilities degraded by occlusion and wall proximity. Every stochastic
draw comes from a named stream so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .catalog import Catalog, Tool
from .geometry import (
    Container,
    ContainerKind,
    Pose,
    cell_centers,
    lattice_cells_in_rect,
    rect_overlap_area,
    rotated_half_extents,
)
from .grasping import GraspPlan
from .motion import MotionParams
from .rng import RngStreams


class PlacementError(RuntimeError):
    """The manifest cannot be packed into its containers."""


class PreconditionError(RuntimeError):
    """An operation was invoked against its contract (orchestrator bug guard)."""


class OutcomeKind(str, Enum):
    SUCCESS = "success"
    FAILED_GRASP = "failed_grasp"
    DROPPED_ITEM = "dropped_item"
    WEIGHT_MISMATCH = "weight_mismatch"
    INCORRECT_RECLASSIFICATION = "incorrect_reclassification"


class FailureCause(str, Enum):
    PERCEPTION = "perception"
    PHYSICAL_OCCLUSION = "physical_occlusion"
    UNREACHABLE = "unreachable"
    GRASP_POSE_FAILURE = "grasp_pose_failure"


@dataclass(frozen=True)
class GraspOutcome:
    kind: OutcomeKind
    cause: FailureCause | None = None
    grasped_instance: str | None = None

    def __post_init__(self) -> None:
        if (self.cause is not None) != (self.kind is OutcomeKind.FAILED_GRASP):
            raise ValueError("cause must be present iff kind is failed_grasp")


@dataclass
class ItemInstance:
    spec_id: str           # doubles as the instance/manifest key
    x: float               # footprint center, workspace frame (m)
    y: float
    yaw: float
    hx: float              # axis-aligned half extents of the yawed footprint
    hy: float
    z_base: float          # bottom height above the container floor (m)
    top_height: float      # top surface height above the container floor (m)
    location: str          # container id or "gripper"
    occluded_by: tuple[str, ...] = ()
    protruding: bool = False

    @property
    def occluded(self) -> bool:
        return bool(self.occluded_by)

    def footprint_area(self) -> float:
        return 4.0 * self.hx * self.hy

    def contains_xy(self, px: float, py: float) -> bool:
        return abs(px - self.x) <= self.hx and abs(py - self.y) <= self.hy


@dataclass
class GripperState:
    held: str | None = None
    active_tool: Tool = Tool.SUCTION
    pose: Pose = field(default_factory=lambda: Pose(0.5, 0.5, 0.6))


@dataclass
class WorldParams:
    scale_noise_g: float = 2.0
    occlusion_penalty: float = 0.5     # grasp failure probability when occluded
    edge_penalty: float = 0.8          # success multiplier near container walls
    edge_margin_mm: float = 30.0
    drop_prob: float = 0.06            # per successful transit, unless item overrides
    drop_source_prob: float = 0.7      # landing split when the destination is allowed
    occlusion_cover_frac: float = 0.7
    full_occlusion_visible_frac: float = 0.05
    probe_depth_tol_m: float = 0.03
    probe_stroke_m: float = 0.12       # descend/ascend travel per suction probe
    spawn_overfill: float = 2.0        # spawn stacking may crest the rim by this factor
    place_samples: int = 24            # candidate spots tried per placement batch
    place_retry_batches: int = 10
    suction_probes: int = 3

    @property
    def edge_margin_m(self) -> float:
        return self.edge_margin_mm * 1e-3

    def zeroed_noise(self) -> "WorldParams":
        from dataclasses import replace

        return replace(self, scale_noise_g=0.0, drop_prob=0.0)


GRIPPER_LOCATION = "gripper"


@dataclass
class WorldState:
    containers: dict[str, Container]
    items: dict[str, ItemInstance]
    catalog: Catalog
    gripper: GripperState
    rng: RngStreams
    params: WorldParams
    motion: MotionParams
    vacuum_sealed: bool = False
    clock: float = 0.0
    last_probes: list = field(default_factory=list)

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("clock must be non-decreasing")
        self.clock += dt

    def container(self, cid: str) -> Container:
        try:
            return self.containers[cid]
        except KeyError:
            raise KeyError(f"unknown container {cid!r}") from None

    def items_in(self, cid: str) -> list[ItemInstance]:
        return [self.items[k] for k in sorted(self.items) if self.items[k].location == cid]

    def item_count(self, cid: str) -> int:
        return sum(1 for it in self.items.values() if it.location == cid)

    def container_at_xy(self, x: float, y: float) -> Container | None:
        for cid in sorted(self.containers):
            if self.containers[cid].contains_xy(x, y):
                return self.containers[cid]
        return None

    def topmost_at(self, cid: str, x: float, y: float) -> ItemInstance | None:
        best: ItemInstance | None = None
        for it in self.items_in(cid):
            if it.contains_xy(x, y) and (best is None or it.top_height > best.top_height):
                best = it
        return best

    def manifest_count(self) -> int:
        return len(self.items)


# ---------------------------------------------------------------------------
# placement, occlusion and visibility


def _stack_base(existing: list[ItemInstance], x: float, y: float, hx: float, hy: float) -> float:
    base = 0.0
    for other in existing:
        if rect_overlap_area(x, y, hx, hy, other.x, other.y, other.hx, other.hy) > 0.0:
            base = max(base, other.top_height)
    return base


def _lowest_spot(
    existing: list[ItemInstance],
    cont: Container,
    hx: float,
    hy: float,
    rng: np.random.Generator,
    samples: int,
) -> tuple[float, float, float]:
    """Sample candidate floor positions and return the lowest-resting one."""
    xs = rng.uniform(cont.x0 + hx, cont.x1 - hx, size=samples)
    ys = rng.uniform(cont.y0 + hy, cont.y1 - hy, size=samples)
    bases = np.zeros(samples, dtype=np.float64)
    for other in existing:
        overlaps = (np.abs(xs - other.x) < hx + other.hx) & (
            np.abs(ys - other.y) < hy + other.hy
        )
        bases = np.where(overlaps & (other.top_height > bases), other.top_height, bases)
    k = int(np.argmin(bases))
    return float(xs[k]), float(ys[k]), float(bases[k])


def _recompute_occlusion(world: WorldState, cid: str) -> None:
    members = world.items_in(cid)
    cover = world.params.occlusion_cover_frac
    for it in members:
        above = []
        area = it.footprint_area()
        for other in members:
            if other.spec_id == it.spec_id:
                continue
            if other.z_base < it.top_height - 1e-9:
                continue
            overlap = rect_overlap_area(
                it.x, it.y, it.hx, it.hy, other.x, other.y, other.hx, other.hy
            )
            if overlap >= cover * area:
                above.append(other.spec_id)
        it.occluded_by = tuple(sorted(above))


def _resettle(world: WorldState, cid: str) -> None:
    """Drop remaining items straight down after a removal (quasi-static)."""
    members = sorted(world.items_in(cid), key=lambda it: (it.z_base, it.spec_id))
    settled: list[ItemInstance] = []
    for it in members:
        height = it.top_height - it.z_base
        it.z_base = _stack_base(settled, it.x, it.y, it.hx, it.hy)
        it.top_height = it.z_base + height
        settled.append(it)
    _recompute_occlusion(world, cid)


def _place_instance(
    world: WorldState,
    spec_id: str,
    cid: str,
    yaw: float,
    max_top: float,
) -> ItemInstance:
    spec = world.catalog[spec_id]
    cont = world.container(cid)
    hx, hy = rotated_half_extents(spec.footprint_xy_m, yaw)
    if 2 * hx > cont.size_x or 2 * hy > cont.size_y:
        raise PlacementError(f"{spec_id} footprint does not fit container {cid}")
    rng = world.rng.placement
    existing = world.items_in(cid)
    height = spec.height_m
    for _ in range(world.params.place_retry_batches):
        x, y, base = _lowest_spot(existing, cont, hx, hy, rng, world.params.place_samples)
        if base + height <= max_top:
            inst = ItemInstance(
                spec_id=spec_id, x=x, y=y, yaw=yaw, hx=hx, hy=hy,
                z_base=base, top_height=base + height, location=cid,
            )
            world.items[spec_id] = inst
            return inst
    raise PlacementError(f"could not place {spec_id} in {cid}: capacity exceeded")


def spawn_scene(
    task_spec,
    seed: int,
    catalog: Catalog,
    containers: dict[str, Container] | None = None,
    params: WorldParams | None = None,
    motion: MotionParams | None = None,
) -> WorldState:
    """Build the ground-truth world for a task manifest, deterministically.

    Items are dropped one by one at random floor positions and stack on
    whatever they overlap (axis-aligned bounding boxes, no interpenetration).
    """
    from .layout import default_containers  # local import: layout depends on geometry only

    containers = containers if containers is not None else default_containers()
    params = params if params is not None else WorldParams()
    motion = motion if motion is not None else MotionParams()
    world = WorldState(
        containers=dict(containers),
        items={},
        catalog=catalog,
        gripper=GripperState(),
        rng=RngStreams(seed),
        params=params,
        motion=motion,
    )
    seen: set[str] = set()
    for entry in task_spec.manifest:
        if entry.item not in catalog:
            raise PreconditionError(f"manifest references unknown item {entry.item!r}")
        if entry.item in seen:
            raise PreconditionError(f"manifest item {entry.item!r} duplicated")
        seen.add(entry.item)
    rng = world.rng.placement
    for entry in task_spec.manifest:
        cont = world.container(entry.container)
        # Spawned piles rest axis-aligned (quarter-turn yaws); free-yaw AABB
        # inflation would overstate pile volume and overflow the containers.
        yaw = 0.5 * math.pi * int(rng.integers(4))
        _place_instance(world, entry.item, entry.container, yaw,
                        max_top=cont.wall_m * params.spawn_overfill)
    for cid in sorted(world.containers):
        _recompute_occlusion(world, cid)
    return world


def surface_cells(world: WorldState, spec_id: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lattice cells of an item's visible top surface: (ii, jj, visible mask).

    A cell is hidden when another item's footprint rests at or above this
    item's top over that cell.
    """
    it = world.items[spec_id]
    ii, jj = lattice_cells_in_rect(it.x - it.hx, it.x + it.hx, it.y - it.hy, it.y + it.hy)
    if ii.size == 0:
        return ii, jj, np.zeros(0, dtype=bool)
    cx, cy = cell_centers(ii, jj)
    visible = np.ones(ii.size, dtype=bool)
    for other in world.items_in(it.location):
        if other.spec_id == it.spec_id or other.z_base < it.top_height - 1e-9:
            continue
        inside = (
            (np.abs(cx - other.x) <= other.hx) & (np.abs(cy - other.y) <= other.hy)
        )
        visible &= ~inside
    return ii, jj, visible


def visible_fraction(world: WorldState, spec_id: str) -> float:
    ii, _, visible = surface_cells(world, spec_id)
    if ii.size == 0:
        return 0.0
    return float(visible.sum()) / float(ii.size)


def surface_z_at(world: WorldState, cid: str, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Top surface height at each (x,y): topmost item or the container floor."""
    z = np.zeros(xs.shape[0], dtype=np.float64)
    for it in world.items_in(cid):
        inside = (np.abs(xs - it.x) <= it.hx) & (np.abs(ys - it.y) <= it.hy)
        z = np.where(inside & (it.top_height > z), it.top_height, z)
    return z


# ---------------------------------------------------------------------------
# actions


def _probe_time(world: WorldState) -> float:
    m = world.motion
    stroke = world.params.probe_stroke_m
    return 2.0 * (m.plan_time + stroke / m.v_linear)


def apply_grasp(
    world: WorldState, plan: GraspPlan, target: str
) -> tuple[WorldState, GraspOutcome]:
    """Execute one grasp attempt: sequential probes, stochastic outcome.

    Suction tries up to 3 stored candidates within the attempt; the gripper
    commits to the best one. The item actually under a candidate is what
    gets grasped, which may differ from the intended target when perception
    was wrong. The recorded failure cause is the first probe's.
    """
    if world.gripper.held is not None:
        raise PreconditionError("gripper must be empty before a grasp")
    if target not in world.items:
        raise PreconditionError(f"unknown grasp target {target!r}")
    containers = {
        world.container_at_xy(c.position[0], c.position[1]) for c in plan.candidates
    }
    if None in containers or len(containers) != 1:
        raise PreconditionError("plan candidates must lie inside exactly one container")
    cont = containers.pop()
    assert cont is not None

    params = world.params
    rng = world.rng.grasp
    u_tool = float(rng.random())
    u_occ = float(rng.random())
    max_probes = params.suction_probes if plan.tool is Tool.SUCTION else 1

    first_cause: FailureCause | None = None
    probes: list[dict] = []
    grasped: ItemInstance | None = None
    for cand in plan.candidates[:max_probes]:
        x, y, z = cand.position
        hit = world.topmost_at(cont.id, x, y)
        world.advance(_probe_time(world))
        contact_z = hit.top_height if hit is not None else 0.0
        record = {"x": x, "y": y, "contact_z": contact_z, "result": "miss"}
        probes.append(record)
        cause: FailureCause | None = None
        if hit is None:
            cause = FailureCause.PERCEPTION
        elif not cand.descend_until_contact and abs(z - hit.top_height) > params.probe_depth_tol_m:
            cause = FailureCause.PERCEPTION
        elif hit.occluded and u_occ < params.occlusion_penalty:
            cause = FailureCause.PHYSICAL_OCCLUSION
        elif cont.wall_distance(x, y) < params.edge_margin_m and (
            float(rng.random()) >= params.edge_penalty
        ):
            cause = FailureCause.UNREACHABLE
        elif u_tool >= world.catalog[hit.spec_id].success_prob(plan.tool):
            cause = FailureCause.GRASP_POSE_FAILURE
        if cause is not None:
            record["result"] = cause.value
            if first_cause is None:
                first_cause = cause
            continue
        record["result"] = "lift"
        grasped = hit
        break

    world.last_probes = probes  # diagnostics for tests/telemetry
    if grasped is None:
        outcome = GraspOutcome(OutcomeKind.FAILED_GRASP, first_cause, None)
        return world, outcome

    grasped.location = GRIPPER_LOCATION
    grasped.protruding = False
    world.gripper.held = grasped.spec_id
    world.gripper.active_tool = plan.tool
    world.vacuum_sealed = plan.tool is Tool.SUCTION
    gp = world.gripper.pose
    world.gripper.pose = Pose(grasped.x, grasped.y, gp.z, gp.yaw)
    _resettle(world, cont.id)
    return world, GraspOutcome(OutcomeKind.SUCCESS, None, grasped.spec_id)


def place_item(world: WorldState, dest: str, aligned_yaw: float) -> WorldState:
    """Release the held item into a container at a sampled free-ish spot."""
    if world.gripper.held is None:
        raise PreconditionError("no item held")
    cont = world.container(dest)  # raises KeyError for unknown dest
    it = world.items[world.gripper.held]
    spec = world.catalog[it.spec_id]
    hx, hy = rotated_half_extents(spec.footprint_xy_m, aligned_yaw)
    hx = min(hx, 0.5 * cont.size_x - 1e-6)
    hy = min(hy, 0.5 * cont.size_y - 1e-6)
    rng = world.rng.placement
    existing = world.items_in(dest)
    x, y, base = _lowest_spot(existing, cont, hx, hy, rng, world.params.place_samples)
    it.x, it.y, it.yaw, it.hx, it.hy = x, y, aligned_yaw, hx, hy
    it.z_base = base
    it.top_height = base + spec.height_m
    it.location = dest
    it.protruding = it.top_height > cont.wall_m + 1e-9
    world.gripper.held = None
    world.vacuum_sealed = False
    _recompute_occlusion(world, dest)
    return world


def read_scale(world: WorldState, cid: str) -> float:
    """Summed mass of the container's contents plus bounded uniform noise (g)."""
    cont = world.container(cid)
    true_mass = sum(world.catalog[it.spec_id].mass_g for it in world.items_in(cont.id))
    bound = world.params.scale_noise_g
    noise = float(world.rng.perception.uniform(-bound, bound)) if bound > 0 else 0.0
    return true_mass + noise


def vacuum_state(world: WorldState) -> bool:
    """True iff an item is currently sealed to the suction cup."""
    if world.gripper.active_tool is not Tool.SUCTION:
        raise PreconditionError("vacuum line is only sensed with the suction tool active")
    return world.vacuum_sealed and world.gripper.held is not None


def sample_transit_drop(
    world: WorldState, source: str, dest: str, dest_allowed: bool
) -> str | None:
    """One drop chance while carrying an item; returns the landing container.

    When a drop fires the item falls back into the source container, or —
    when dest_allowed — into the destination with probability
    (1 - drop_source_prob). Returns None when the item is retained.
    """
    if world.gripper.held is None:
        raise PreconditionError("no item in transit")
    spec = world.catalog[world.gripper.held]
    p_drop = spec.drop_prob if spec.drop_prob is not None else world.params.drop_prob
    rng = world.rng.grasp
    if float(rng.random()) >= p_drop:
        return None
    landed = source
    if dest_allowed and float(rng.random()) >= world.params.drop_source_prob:
        landed = dest
    held = world.items[world.gripper.held]
    world.vacuum_sealed = False
    place_item(world, landed, held.yaw)
    return landed
