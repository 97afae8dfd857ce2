"""Task-level state machine: select, grasp, verify, recover, repeat.

States mirror the execution flow: Perceive, Select, Synthesize, Move, Grasp,
Verify, Place, Recover, Search, DoubleCheck, Done. Every transition appends a
timestamped event to the run log, which downstream scoring/metrics consume.
The planner acts only on its belief; ground truth appears in the log for
metric purposes but never influences decisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import ContainerKind, Pose
from .grasping import GraspScoringParams, synthesize
from .layout import SIDE_CAMERA_POSE, TRAVEL_Z
from .motion import MotionParams, move_time, tool_change_time
from .perception import (
    PerceptionParams,
    SegmentPercept,
    View,
    classify_held_item,
    segment_scene,
    viewpoints_for,
)
from .runlog import Event, RunLog
from .tasks import TaskPhase, TaskSpec
from .world import (
    GRIPPER_LOCATION,
    OutcomeKind,
    PreconditionError,
    WorldParams,
    WorldState,
    apply_grasp,
    place_item,
    read_scale,
    sample_transit_drop,
)


@dataclass
class SelectionParams:
    height_bin: float = 0.03           # m, the grouping increment for top heights
    blacklist_after: int = 3           # consecutive failed grasps before exclusion
    min_segment_area: int = 25         # lattice cells
    min_confidence: float = 0.30
    double_check_threshold: int = 5    # remaining items that arm belief double-checks

    def __post_init__(self) -> None:
        if min(self.height_bin, self.blacklist_after, self.min_segment_area) <= 0:
            raise ValueError("selection parameters must be positive")


@dataclass
class OrchestratorParams:
    weight_tolerance_g: float = 5.0    # must exceed 2x the scale noise bound
    search_budget: int = 6             # fruitless relocation moves per order line
    empty_view_limit: int = 2          # consecutive empty perceives before reconcile
    place_depth: float = 0.06          # m the wrist descends below the rim to release


@dataclass
class SimParams:
    world: WorldParams = field(default_factory=WorldParams)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    grasping: GraspScoringParams = field(default_factory=GraspScoringParams)
    motion: MotionParams = field(default_factory=MotionParams)
    selection: SelectionParams = field(default_factory=SelectionParams)
    orchestrator: OrchestratorParams = field(default_factory=OrchestratorParams)


def zero_noise_variant(params: SimParams) -> SimParams:
    """The same configuration with every stochastic source disabled.

    The weight-consensus tolerance exists to absorb scale noise, so it
    shrinks with it; exact scales then resolve even a same-weight-class
    wrong grasp by its exact mass instead of silently confirming it.
    """
    from dataclasses import replace as _replace

    return _replace(
        params,
        world=params.world.zeroed_noise(),
        perception=PerceptionParams.zero_noise(),
        orchestrator=_replace(params.orchestrator, weight_tolerance_g=0.5),
    )


@dataclass(frozen=True)
class Sighting:
    t: float
    container: str
    x: float
    y: float
    view: str = ""


@dataclass
class Belief:
    """The planner's internal task state; may drift from ground truth."""

    locations: dict[str, str]
    consecutive_failed: dict[str, int] = field(default_factory=dict)
    sightings: dict[str, Sighting] = field(default_factory=dict)
    classification_history: dict[str, list] = field(default_factory=dict)
    reclassifications: list[dict] = field(default_factory=list)

    @classmethod
    def from_task(cls, task: TaskSpec) -> "Belief":
        return cls(locations={e.item: e.container for e in task.manifest})

    def note_sighting(self, label: str, t: float, container: str, centroid,
                      view: str = "") -> None:
        self.sightings[label] = Sighting(t, container, float(centroid[0]),
                                         float(centroid[1]), view)
        self.classification_history.setdefault(label, []).append(
            (round(t, 6), container, view))

    def failed(self, label: str) -> int:
        return self.consecutive_failed.get(label, 0)

    def believed_in(self, container: str) -> list[str]:
        return sorted(k for k, v in self.locations.items() if v == container)


@dataclass(frozen=True)
class Selected:
    label: str
    percept: SegmentPercept
    height_bin: int
    # (label, confidence, pixel_area) snapshot of the wanted pool at selection
    # time, kept in the log so selection policy stays auditable.
    pool: tuple = ()


class _NegStr(str):
    """Reverses string comparison so max() prefers the lexicographically least."""

    def __lt__(self, other):  # type: ignore[override]
        return str.__gt__(self, other)

    def __gt__(self, other):  # type: ignore[override]
        return str.__lt__(self, other)


def _percept_top_height(percept: SegmentPercept) -> float:
    """Median depth-valid height: robust to mask points bleeding onto
    taller neighbors."""
    pts = percept.points[percept.depth_valid]
    if pts.shape[0] == 0:
        return 0.0
    return float(np.median(pts[:, 2]))


def _looks_covered(p: SegmentPercept, others: list[SegmentPercept]) -> bool:
    """Belief-side occlusion estimate: another segment overlaps this one's
    footprint from clearly above."""
    x0, y0 = p.points[:, 0].min(), p.points[:, 1].min()
    x1, y1 = p.points[:, 0].max(), p.points[:, 1].max()
    area = max((x1 - x0) * (y1 - y0), 1e-9)
    h = _percept_top_height(p)
    for q in others:
        if q is p or _percept_top_height(q) <= h + 0.015:
            continue
        qx0, qy0 = q.points[:, 0].min(), q.points[:, 1].min()
        qx1, qy1 = q.points[:, 0].max(), q.points[:, 1].max()
        ox = min(x1, qx1) - max(x0, qx0)
        oy = min(y1, qy1) - max(y0, qy0)
        if ox > 0 and oy > 0 and ox * oy >= 0.25 * area:
            return True
    return False


def select_next_item(
    percepts: list[SegmentPercept],
    belief: Belief,
    wanted: set[str],
    params: SelectionParams,
    avoid_covered: bool = False,
) -> Selected | None:
    """Pick the most promising visible wanted item.

    Blacklisted, undersized, and low-confidence percepts are dropped unless
    nothing else remains, in which case those filters relax in that order
    (an optional covered-item filter, used while stowing, relaxes first).
    Survivors are binned by top height and the highest bin wins, then
    confidence, then lexicographic label.
    """
    pool = [p for p in percepts if p.label in wanted]
    if not pool:
        return None

    def keep(p: SegmentPercept, covered: bool, blacklist: bool, area: bool,
             conf: bool) -> bool:
        if covered and _looks_covered(p, percepts):
            return False
        if blacklist and belief.failed(p.label) >= params.blacklist_after:
            return False
        if area and p.pixel_area < params.min_segment_area:
            return False
        if conf and p.confidence < params.min_confidence:
            return False
        return True

    stages = [(avoid_covered, True, True, True), (False, True, True, True),
              (False, False, True, True), (False, False, False, True),
              (False, False, False, False)]
    survivors: list[SegmentPercept] = []
    for stage in stages:
        survivors = [p for p in pool if keep(p, *stage)]
        if survivors:
            break
    best = None
    best_key = None
    for p in survivors:
        h_bin = math.floor(_percept_top_height(p) / params.height_bin + 1e-9)
        key = (h_bin, p.confidence, _NegStr(p.label))
        if best_key is None or key > best_key:
            best, best_key = p, key
    assert best is not None
    pool_snapshot = tuple(sorted((p.label, p.confidence, p.pixel_area) for p in pool))
    return Selected(best.label, best, best_key[0], pool_snapshot)


class VerifyKind(str, Enum):
    CONFIRMED = "confirmed"
    RECLASSIFIED = "reclassified"
    SECOND_LOOK = "second_look"
    REPLACE = "replace"


@dataclass(frozen=True)
class VerifyResult:
    kind: VerifyKind
    label: str | None = None
    candidates: tuple[str, ...] = ()


def verify_grasp(
    world: WorldState,
    expected: str,
    belief: Belief,
    pre_g: float | None,
    post_g: float | None,
    params: OrchestratorParams,
    source: str | None = None,
) -> VerifyResult:
    """Two-sensor consensus on the held item's identity.

    The lifted weight (scale delta on the source container) must match the
    expected item; otherwise a unique weight match among items believed in
    the source reclassifies immediately, multiple matches defer to the side
    camera, and no match means the item goes back.
    """
    if pre_g is None or post_g is None:
        raise ValueError("pre- and post-lift scale readings are required")
    delta = pre_g - post_g
    tol = params.weight_tolerance_g
    if abs(delta - world.catalog[expected].mass_g) <= tol:
        return VerifyResult(VerifyKind.CONFIRMED, expected)
    if source is None:
        source = belief.locations.get(expected)
    matches = tuple(
        k
        for k in belief.believed_in(source or "")
        if k != expected and abs(world.catalog[k].mass_g - delta) <= tol
    )
    if len(matches) == 1:
        return VerifyResult(VerifyKind.RECLASSIFIED, matches[0], matches)
    if len(matches) > 1:
        return VerifyResult(VerifyKind.SECOND_LOOK, None, matches)
    return VerifyResult(VerifyKind.REPLACE)


def _merge_percepts(*groups: list[SegmentPercept]) -> list[SegmentPercept]:
    merged: dict[str, SegmentPercept] = {}
    for group in groups:
        for p in group:
            cur = merged.get(p.label)
            if cur is None or p.confidence > cur.confidence:
                merged[p.label] = p
    return [merged[k] for k in sorted(merged)]


def active_perceive(
    world: WorldState,
    compartment: str,
    wanted: set[str],
    belief: Belief,
    params: PerceptionParams,
    emit=None,
) -> tuple[list[SegmentPercept], str]:
    """Image the top view first; fall back to both close-ups when no wanted
    item shows, merging percepts by label at max confidence."""
    cams = viewpoints_for(world, compartment)

    def image(cam) -> list[SegmentPercept]:
        frm = world.gripper.pose
        to = Pose(cam.position[0], cam.position[1], cam.position[2], frm.yaw)
        world.advance(move_time(frm, to, world.motion))
        world.gripper.pose = to
        world.advance(world.motion.perception_time)
        percepts = segment_scene(world, cam, params)
        for p in percepts:
            belief.note_sighting(p.label, world.clock, compartment, p.centroid_rgb,
                                 cam.view.value)
        if emit is not None:
            emit("Perceive", "perceive", container=compartment,
                 payload={"view": cam.view.value, "n_percepts": len(percepts)})
        return percepts

    top = image(cams[0])
    if any(p.label in wanted for p in top):
        return top, View.TOP_FULL.value
    left = image(cams[1])
    right = image(cams[2])
    return _merge_percepts(top, left, right), "closeups"


@dataclass(frozen=True)
class SearchMove:
    item: str
    source: str
    dest: str
    reason: str
    percept: SegmentPercept | None = None


def directed_search(
    world: WorldState,
    compartment: str,
    percepts: list[SegmentPercept],
    wanted: set[str],
    belief: Belief,
) -> SearchMove | None:
    """Choose an unwanted item to relocate so hidden wanted items surface.

    Items seen near a previous wanted-item sighting move first; otherwise the
    largest, highest item goes. The destination is the other storage
    compartment when it holds no wanted items, else a within-compartment
    shuffle.
    """
    movable = [
        p for p in percepts
        if p.label not in wanted and belief.locations.get(p.label) == compartment
    ]
    if not movable:
        return None
    # Prefer blockers that are grasp-friendly: not repeatedly failed, not
    # themselves buried. Fall back rather than returning nothing.
    for subset in (
        [p for p in movable if belief.failed(p.label) < 3 and not _looks_covered(p, percepts)],
        [p for p in movable if belief.failed(p.label) < 3],
        movable,
    ):
        if subset:
            movable = subset
            break

    target: SegmentPercept | None = None
    reason = "size_height"
    sightings = [
        belief.sightings[w]
        for w in sorted(wanted)
        if w in belief.sightings and belief.sightings[w].container == compartment
    ]
    if sightings:
        ref = max(sightings, key=lambda s: s.t)
        target = min(
            movable,
            key=lambda p: (
                math.hypot(p.centroid_rgb[0] - ref.x, p.centroid_rgb[1] - ref.y),
                p.label,
            ),
        )
        reason = "near_last_sighting"
    else:
        max_area = max(p.pixel_area for p in movable)
        heights = {p.label: _percept_top_height(p) for p in movable}
        max_h = max(heights.values())
        def score(p: SegmentPercept) -> float:
            rel_h = heights[p.label] / max_h if max_h > 0 else 1.0
            return (p.pixel_area / max_area) * rel_h
        target = max(movable, key=lambda p: (score(p), _NegStr(p.label)))

    storages = sorted(
        cid for cid, c in world.containers.items()
        if c.kind is ContainerKind.STORAGE_COMPARTMENT and cid != compartment
    )
    dest = compartment
    for other in storages:
        if not any(belief.locations.get(w) == other for w in wanted):
            dest = other
            break
    return SearchMove(target.label, compartment, dest, reason, percept=target)


# ---------------------------------------------------------------------------


class TaskRunner:
    """Executes one task (or one phase of the long-run cycle) on a world."""

    def __init__(
        self,
        world: WorldState,
        task: TaskSpec,
        params: SimParams,
        log: RunLog | None = None,
        belief: Belief | None = None,
        hard_deadline: float | None = None,
        repair_on_intervention: bool = False,
    ):
        self.world = world
        self.task = task
        self.p = params
        self.log = log if log is not None else RunLog()
        self.belief = belief if belief is not None else Belief.from_task(task)
        self.hard_deadline = hard_deadline
        self.repair_on_intervention = repair_on_intervention
        self.t_start = world.clock
        self.attempt_index = sum(1 for e in self.log if e.kind == "attempt_end")
        self.pending: dict[str, str] = {}
        self.phase = "stow"
        self.gave_up = False
        self._last_double_check = -math.inf
        self._stow_writeoffs: set[str] = set()
        self._pick_abandons: dict[str, str] = {}

    # -- plumbing ----------------------------------------------------------

    def emit(self, state: str, kind: str, item: str | None = None,
             container: str | None = None, payload: dict | None = None) -> None:
        self.log.append(Event(self.world.clock, state, kind, item, container,
                              payload if payload is not None else {}))

    @property
    def timed_out(self) -> bool:
        if self.world.clock - self.t_start >= self.task.time_limit:
            return True
        return self.hard_deadline is not None and self.world.clock >= self.hard_deadline

    def _move_wrist(self, to: Pose) -> None:
        self.world.advance(move_time(self.world.gripper.pose, to, self.p.motion))
        self.world.gripper.pose = to

    def _storage_ids(self) -> list[str]:
        return sorted(
            cid for cid, c in self.world.containers.items()
            if c.kind is ContainerKind.STORAGE_COMPARTMENT
        )

    def _imageable_ids(self) -> list[str]:
        return sorted(
            cid for cid, c in self.world.containers.items()
            if c.kind is not ContainerKind.SHIPPING_BOX
        )

    def _perceive(self, compartment: str, wanted: set[str]):
        return active_perceive(
            self.world, compartment, wanted, self.belief, self.p.perception, self.emit
        )

    def _quick_scan(self, compartment: str) -> list[SegmentPercept]:
        """Single top view of a secondary compartment (no close-up sweep)."""
        cam = viewpoints_for(self.world, compartment)[0]
        frm = self.world.gripper.pose
        self._move_wrist(Pose(cam.position[0], cam.position[1], cam.position[2],
                              frm.yaw))
        self.world.advance(self.p.motion.perception_time)
        percepts = segment_scene(self.world, cam, self.p.perception)
        for p in percepts:
            self.belief.note_sighting(p.label, self.world.clock, compartment,
                                      p.centroid_rgb, cam.view.value)
        self.emit("Perceive", "perceive", container=compartment,
                  payload={"view": cam.view.value, "n_percepts": len(percepts)})
        return percepts

    def manual_intervention(self, item: str, reason: str) -> None:
        self.emit("Recover", "manual_intervention", item=item, payload={"reason": reason})
        if self.repair_on_intervention:
            actual = self.world.items[item].location
            if actual != GRIPPER_LOCATION and self.belief.locations.get(item) != actual:
                self.belief.locations[item] = actual
                self.emit("Recover", "belief_correction", item=item,
                          payload={"to": actual, "method": "operator"})

    def _emit_unresolved_interventions(self) -> None:
        """A goal abandoned AND physically unmet at task end needed a human.

        Goals the system later met anyway (an item that had silently dropped
        into storage, a line recovered by a belief correction) cost points
        or report penalties, not operator time.
        """
        storages = set(self._storage_ids())
        for item in sorted(self._stow_writeoffs):
            actual = self.world.items[item].location
            cont = self.world.containers.get(actual)
            stowed = actual in storages or (
                cont is not None and cont.kind is ContainerKind.SHIPPING_BOX)
            if not stowed:
                self.manual_intervention(item, reason="unfound_in_stow")
        for item, box in sorted(self._pick_abandons.items()):
            if self.world.items[item].location != box:
                self.manual_intervention(item, reason="line_incomplete")

    # -- the attempt -------------------------------------------------------

    def attempt(self, sel: Selected, source: str, dest: str, purpose: str) -> str | None:
        """One grasp attempt; returns the believed label placed, if any."""
        world, p = self.world, self.p
        label = sel.label
        self.attempt_index += 1
        idx = self.attempt_index
        self.emit("Select", "select", item=label, container=source,
                  payload={"height_bin": sel.height_bin,
                           "confidence": sel.percept.confidence,
                           "pool": [list(entry) for entry in sel.pool]})
        self.emit("Grasp", "attempt_start", item=label, container=source,
                  payload={"index": idx, "purpose": purpose})

        meta = world.catalog.get(label)
        plan = synthesize(sel.percept, world.containers[source], meta, p.grasping)
        self.emit("Synthesize", "synthesize", item=label, payload={
            "strategy": plan.strategy.value, "tool": plan.tool.value,
            "n_candidates": len(plan.candidates)})
        if world.gripper.active_tool is not plan.tool:
            dt = tool_change_time(p.motion, world.gripper.active_tool, plan.tool)
            world.advance(dt)
            world.gripper.active_tool = plan.tool
            self.emit("Move", "tool_change", payload={"tool": plan.tool.value,
                                                      "seconds": round(dt, 3)})

        c0 = plan.candidates[0].position
        yaw = plan.aligned_yaw if plan.tool.value == "gripper" else world.gripper.pose.yaw
        self._move_wrist(Pose(c0[0], c0[1], TRAVEL_Z, yaw))
        pre_g = read_scale(world, source)

        _, outcome = apply_grasp(world, plan, label)
        for i, probe in enumerate(world.last_probes):
            self.emit("Grasp", "probe", item=label, payload={"i": i, **{
                k: (round(v, 4) if isinstance(v, float) else v) for k, v in probe.items()}})

        if outcome.kind is OutcomeKind.FAILED_GRASP:
            self.belief.consecutive_failed[label] = self.belief.failed(label) + 1
            self.emit("Recover", "recover", item=label,
                      payload={"after": "failed_grasp"})
            return self._finish_attempt(idx, OutcomeKind.FAILED_GRASP, label, None,
                                        cause=outcome.cause.value)

        truth = outcome.grasped_instance
        assert truth is not None
        post_g = read_scale(world, source)
        vres = verify_grasp(world, label, self.belief, pre_g, post_g, p.orchestrator,
                            source=source)
        self.emit("Verify", "verify", item=label, payload={
            "result": vres.kind.value, "delta_g": round(pre_g - post_g, 3),
            "candidates": list(vres.candidates)})

        held: str | None = None
        if vres.kind is VerifyKind.CONFIRMED:
            held = label
        elif vres.kind is VerifyKind.RECLASSIFIED:
            held = vres.label
            self._record_reclassification(label, held, "weight")
        elif vres.kind is VerifyKind.SECOND_LOOK:
            self._move_wrist(SIDE_CAMERA_POSE)
            world.advance(p.motion.perception_time)
            seen = classify_held_item(world, list(vres.candidates), p.perception)
            self.emit("Verify", "second_look", item=label, payload={
                "candidates": list(vres.candidates), "result": seen})
            if seen is not None:
                held = seen
                self._record_reclassification(label, held, "side_camera")

        if held is None:
            return self._replace(idx, label, truth, source)

        kind = OutcomeKind.SUCCESS
        if truth != label:
            kind = (OutcomeKind.WEIGHT_MISMATCH if held == truth
                    else OutcomeKind.INCORRECT_RECLASSIFICATION)
        elif held != truth:
            kind = OutcomeKind.INCORRECT_RECLASSIFICATION

        final_dest = dest
        if purpose == "pick":
            final_dest = self.pending.get(held, "")
            if not final_dest:
                return self._replace(idx, label, truth, source, held=held)

        dest_cont = world.containers[final_dest]
        cx, cy = dest_cont.center
        self._move_wrist(Pose(cx, cy, TRAVEL_Z, plan.aligned_yaw))
        dest_allowed = purpose in ("stow", "relocate")
        landed = sample_transit_drop(world, source, final_dest, dest_allowed)
        if landed is not None:
            self.belief.locations[held] = source  # the planner assumes it fell at home
            self.emit("Recover", "drop", item=truth, container=landed,
                      payload={"believed": held, "believed_container": source})
            return self._finish_attempt(idx, OutcomeKind.DROPPED_ITEM, label, truth)

        drop_z = dest_cont.top_z - p.orchestrator.place_depth
        self._move_wrist(Pose(cx, cy, max(drop_z, 0.05), plan.aligned_yaw))
        place_item(world, final_dest, plan.aligned_yaw)
        self._move_wrist(Pose(cx, cy, TRAVEL_Z, plan.aligned_yaw))
        self.belief.locations[held] = final_dest
        protruding = world.items[truth].protruding

        award = "none"
        if purpose == "stow" and dest_cont.kind is ContainerKind.STORAGE_COMPARTMENT:
            award = "stow"
        elif purpose == "pick" and truth == held and self.pending.get(truth) == final_dest:
            award = "pick"
        self.emit("Place", "place", item=truth, container=final_dest, payload={
            "believed": held, "protruding": protruding, "award": award,
            "purpose": purpose, "source": source})

        if purpose == "pick" and held in self.pending:
            self.pending.pop(held)
        if kind is OutcomeKind.SUCCESS:
            self.belief.consecutive_failed[label] = 0
        return self._finish_attempt(idx, kind, label, truth, placed=held)

    def _record_reclassification(self, from_label: str, to_label: str, method: str) -> None:
        self.belief.reclassifications.append(
            {"t": round(self.world.clock, 6), "from": from_label, "to": to_label,
             "method": method})
        self.emit("Verify", "reclassify", item=to_label, payload={
            "from": from_label, "method": method})

    def _replace(self, idx: int, label: str, truth: str, source: str,
                 held: str | None = None) -> str | None:
        src = self.world.containers[source]
        cx, cy = src.center
        self._move_wrist(Pose(cx, cy, TRAVEL_Z, self.world.gripper.pose.yaw))
        place_item(self.world, source, self.world.items[truth].yaw)
        self.emit("Recover", "replace", item=truth, container=source,
                  payload={"expected": label, "held_belief": held})
        return self._finish_attempt(idx, OutcomeKind.WEIGHT_MISMATCH, label, truth)

    def _finish_attempt(self, idx: int, kind: OutcomeKind, target: str,
                        truth: str | None, cause: str | None = None,
                        placed: str | None = None) -> str | None:
        self.world.advance(self.p.motion.misc_overhead)
        payload = {"index": idx, "outcome": kind.value, "target": target}
        if truth is not None:
            payload["grasped"] = truth
        if cause is not None:
            payload["cause"] = cause
        if placed is not None:
            payload["placed"] = placed
        self.emit("Grasp", "attempt_end", item=target, payload=payload)
        return placed

    # -- phases ------------------------------------------------------------

    def run(self) -> RunLog:
        self.emit("Perceive", "task_start", payload={
            "task": self.task.phase.value, "time_limit": self.task.time_limit,
            "manifest_size": len(self.task.manifest)})
        if self.task.time_limit <= 0:
            self.emit("Done", "timeout", payload={})
            self.emit("Done", "task_end", payload={"reason": "timeout"})
            return self.log
        try:
            if self.task.phase in (TaskPhase.STOW, TaskPhase.FINALS):
                self._run_phase("stow")
            if self.task.phase in (TaskPhase.PICK, TaskPhase.FINALS):
                self._run_phase("pick")
        except PreconditionError as exc:
            self.emit("Recover", "abort", payload={"diagnostic": str(exc)})
            self.emit("Recover", "manual_intervention", payload={"reason": "abort"})
            self.emit("Done", "task_end", payload={"reason": "aborted"})
            return self.log
        self._emit_unresolved_interventions()
        self._report_locations()
        reason = "timeout" if self.timed_out else ("gave_up" if self.gave_up else "completed")
        if self.timed_out:
            self.emit("Done", "timeout", payload={})
        self.emit("Done", "task_end", payload={"reason": reason})
        return self.log

    def _run_phase(self, phase: str) -> None:
        self.phase = phase
        self.emit("Perceive", "phase_start", payload={"phase": phase})
        if phase == "stow":
            self._stow_loop()
        else:
            self._pick_loop()
        self.emit("Done", "phase_end", payload={"phase": phase})

    def _choose_storage(self) -> str:
        counts = {cid: len(self.belief.believed_in(cid)) for cid in self._storage_ids()}
        return min(counts, key=lambda cid: (counts[cid], cid))

    def _stow_loop(self) -> None:
        tote_ids = sorted(
            cid for cid, c in self.world.containers.items() if c.kind is ContainerKind.TOTE
        )
        source = tote_ids[0]
        empty_views = 0
        reconciles = 0
        while not self.timed_out:
            wanted = set(self.belief.believed_in(source))
            if not wanted:
                return
            percepts, _view = self._perceive(source, wanted)
            sel = select_next_item(percepts, self.belief, wanted, self.p.selection,
                                   avoid_covered=True)
            if sel is None:
                empty_views += 1
                if empty_views >= self.p.orchestrator.empty_view_limit:
                    if reconciles < 2 and self._stow_reconcile(source):
                        reconciles += 1
                        empty_views = 0
                        continue
                    if reconciles >= 2:
                        self._write_off_stow(source)
                    return
                continue
            empty_views = 0
            self.attempt(sel, source, self._choose_storage(), purpose="stow")

    def _stow_reconcile(self, source: str) -> bool:
        """The tote looks empty but items are still believed there: re-check.

        Returns True when the double-check made something findable again
        (stowing should resume); otherwise the leftovers are written off.
        """
        corrections = self.double_check(force=True)
        if any(to == source for _, _, to in corrections):
            return True
        self._write_off_stow(source)
        return False

    def _write_off_stow(self, source: str) -> None:
        for item in self.belief.believed_in(source):
            self.gave_up = True
            self._stow_writeoffs.add(item)
            self.emit("Search", "abandon_line", item=item,
                      payload={"reason": "unfound_in_stow", "phase": "stow"})

    def _pick_loop(self) -> None:
        # Lines whose item is already believed at its destination are done.
        self.pending = {
            line.item: line.box for line in self.task.order
            if self.belief.locations.get(line.item) != line.box
        }
        abandoned: set[str] = set()
        search_counts: dict[str, int] = {}
        # (compartment, labels visible before the last search move there)
        pending_search: tuple[str, frozenset[str]] | None = None
        while not self.timed_out:
            active = {i for i in self.pending if i not in abandoned}
            if not active:
                break
            ranked = sorted(
                self._imageable_ids(),
                key=lambda cid: (-sum(1 for i in active
                                      if self.belief.locations.get(i) == cid), cid),
            )
            ranked = [cid for cid in ranked
                      if any(self.belief.locations.get(i) == cid for i in active)]
            if not ranked:
                for item in sorted(active):
                    self._abandon(item, abandoned, reason="believed_unavailable")
                continue
            sel = None
            percepts_by: dict[str, list[SegmentPercept]] = {}
            chosen_comp = None
            for comp in ranked:
                if comp == ranked[0]:
                    percepts, _view = self._perceive(comp, active)
                else:
                    percepts = self._quick_scan(comp)
                percepts_by[comp] = percepts
                if pending_search is not None and pending_search[0] == comp:
                    # A search move is fruitless when it exposed nothing new.
                    new = {p.label for p in percepts} - pending_search[1]
                    pending_search = None
                    if not new:
                        for item in sorted(active):
                            if self.belief.locations.get(item) == comp:
                                search_counts[item] = search_counts.get(item, 0) + 1
                                if search_counts[item] >= self.p.orchestrator.search_budget:
                                    self._abandon(item, abandoned, reason="search_exhausted")
                        active = {i for i in self.pending if i not in abandoned}
                        if not active:
                            break
                sel = select_next_item(percepts, self.belief, active, self.p.selection)
                if sel is not None:
                    chosen_comp = comp
                    break
            if not active:
                continue
            if sel is not None and chosen_comp is not None:
                blocker = None
                if self.belief.failed(sel.label) >= 1:
                    blocker = self._covering_blocker(
                        sel.percept, percepts_by[chosen_comp], active, chosen_comp)
                if blocker is not None:
                    dest = self._search_dest(chosen_comp, active)
                    self.emit("Search", "search_move", item=blocker.label,
                              container=chosen_comp,
                              payload={"dest": dest, "reason": "unbury_target"})
                    self.attempt(Selected(blocker.label, blocker, 0), chosen_comp,
                                 dest, purpose="relocate")
                    continue
                placed = self.attempt(sel, chosen_comp, "", purpose="pick")
                if placed is not None:
                    search_counts.pop(placed, None)
                continue
            # No wanted item visible anywhere it is believed to be.
            if len(active) <= self.p.selection.double_check_threshold:
                if self.double_check():
                    continue
            comp = ranked[0]
            move = directed_search(self.world, comp, percepts_by.get(comp, []),
                                   active, self.belief)
            if move is None:
                for item in sorted(active):
                    if self.belief.locations.get(item) == comp:
                        self._abandon(item, abandoned, reason="nothing_left_to_move")
                continue
            self.emit("Search", "search_move", item=move.item, container=move.source,
                      payload={"dest": move.dest, "reason": move.reason})
            labels_before = frozenset(
                p.label for p in percepts_by.get(comp, []) if p.label != move.item
            )
            moved = None
            if move.percept is not None:
                moved = self.attempt(Selected(move.item, move.percept, 0), move.source,
                                     move.dest, purpose="relocate")
            # Only a completed within-compartment shuffle can be fruitless: a
            # failed relocation changed nothing and is simply retried, and a
            # between-compartment move strictly thins the pile (progress by
            # construction), so neither draws down the give-up budget.
            if moved is not None and move.dest == move.source:
                pending_search = (comp, labels_before)
            else:
                pending_search = None
        if not self.pending and not self.timed_out:
            remaining = self.task.time_limit - (self.world.clock - self.t_start)
            self.emit("Done", "order_complete",
                      payload={"time_remaining": round(max(remaining, 0.0), 3)})

    def _covering_blocker(
        self,
        target: SegmentPercept,
        percepts: list[SegmentPercept],
        wanted: set[str],
        compartment: str,
    ) -> SegmentPercept | None:
        """An unwanted segment sitting over a repeatedly-failing target."""
        candidates = [
            q for q in percepts
            if q.label not in wanted
            and self.belief.locations.get(q.label) == compartment
            and _looks_covered(target, [target, q])
        ]
        if not candidates:
            return None
        return max(candidates, key=lambda q: (_percept_top_height(q), _NegStr(q.label)))

    def _search_dest(self, compartment: str, wanted: set[str]) -> str:
        for other in self._storage_ids():
            if other != compartment and not any(
                self.belief.locations.get(w) == other for w in wanted
            ):
                return other
        return compartment

    def _abandon(self, item: str, abandoned: set[str], reason: str) -> None:
        abandoned.add(item)
        self.gave_up = True
        self.emit("Search", "abandon_line", item=item, payload={"reason": reason})
        self._pick_abandons[item] = self.pending.get(item, "")

    # -- belief double-checking --------------------------------------------

    def double_check(self, force: bool = False) -> list[tuple[str, str, str]]:
        """Re-image containers and correct beliefs contradicted in two
        consecutive views; a no-op while more than the threshold remains."""
        remaining = [
            k for k, v in self.belief.locations.items()
            if self.world.containers.get(v) is not None
            and self.world.containers[v].kind is not ContainerKind.SHIPPING_BOX
        ]
        if not force and len(remaining) > self.p.selection.double_check_threshold:
            return []
        if not force and self.world.clock - self._last_double_check < 120.0:
            return []
        self._last_double_check = self.world.clock
        corrections: list[tuple[str, str, str]] = []
        for cid in self._imageable_ids():
            cam = viewpoints_for(self.world, cid)[0]

            def image(pass_i: int) -> set[str]:
                frm = self.world.gripper.pose
                self._move_wrist(Pose(cam.position[0], cam.position[1],
                                      cam.position[2], frm.yaw))
                self.world.advance(self.p.motion.perception_time)
                labels = {p.label for p in segment_scene(self.world, cam, self.p.perception)}
                self.emit("DoubleCheck", "perceive", container=cid, payload={
                    "view": cam.view.value, "n_percepts": len(labels), "pass": pass_i})
                return labels

            first = image(0)
            contradicted = {
                label for label in first
                if self.belief.locations.get(label) not in (None, cid)
            }
            if not contradicted:
                continue
            # A correction needs the contradiction confirmed in two
            # consecutive views.
            seen_twice = contradicted & image(1)
            for label in sorted(seen_twice):
                believed = self.belief.locations.get(label)
                if believed is not None and believed != cid:
                    was_reclassified = any(
                        r["to"] == label or r["from"] == label
                        for r in self.belief.reclassifications
                    )
                    corrections.append((label, believed, cid))
                    self.belief.locations[label] = cid
                    self.emit("DoubleCheck", "belief_correction", item=label, container=cid,
                              payload={"from": believed,
                                       "reclassification_record": was_reclassified})
        if corrections:
            self.emit("DoubleCheck", "double_check", payload={"corrections": len(corrections)})
        return corrections

    # -- end-of-run reporting ------------------------------------------------

    def _report_locations(self) -> None:
        for item in sorted(self.belief.locations):
            believed = self.belief.locations[item]
            actual = self.world.items[item].location
            self.emit("Done", "location_report", item=item, payload={
                "believed": believed, "actual": actual, "correct": believed == actual})


def run_task(
    world: WorldState,
    task: TaskSpec,
    params: SimParams,
    log: RunLog | None = None,
    belief: Belief | None = None,
    hard_deadline: float | None = None,
    repair_on_intervention: bool = False,
) -> RunLog:
    """Execute a task on a spawned world; every event lands in the log."""
    runner = TaskRunner(world, task, params, log=log, belief=belief,
                        hard_deadline=hard_deadline,
                        repair_on_intervention=repair_on_intervention)
    return runner.run()


def run_longrun(
    catalog,
    seed: int,
    params: SimParams,
    sim_hours: float = 7.2,
    task_time_limit: float = 900.0,
    containers=None,
) -> RunLog:
    """Continuous alternating stow/pick cycle over one item set.

    Stow moves everything tote -> storage; the pick half replaces every item
    into the tote. One world and one belief persist for the whole session;
    manual interventions repair the affected belief entry (as an operator
    would) so the cycle can continue. Stops when the simulated budget is
    spent.
    """
    from .tasks import TaskSpec, build_longrun_stow, longrun_pick_order
    from .world import spawn_scene

    stow_task = build_longrun_stow(catalog, task_time_limit)
    pick_task = TaskSpec(TaskPhase.PICK, stow_task.manifest,
                         longrun_pick_order(catalog), task_time_limit)
    world = spawn_scene(stow_task, seed, catalog, containers=containers,
                        params=params.world, motion=params.motion)
    log = RunLog()
    belief = Belief.from_task(stow_task)
    budget = sim_hours * 3600.0
    stow_next = True
    while world.clock < budget:
        task = stow_task if stow_next else pick_task
        runner = TaskRunner(world, task, params, log=log, belief=belief,
                            hard_deadline=budget, repair_on_intervention=True)
        runner.run()
        belief = runner.belief
        stow_next = not stow_next
    return log
