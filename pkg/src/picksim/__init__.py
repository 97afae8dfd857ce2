"""picksim: deterministic desk-scale warehouse pick-and-place simulator."""

from .catalog import ItemSpec, Rigidity, Strategy, Tool, VisualClass, load_catalog
from .geometry import Container, ContainerKind, Pose
from .grasping import (
    GraspCandidate,
    GraspPlan,
    GraspScoringParams,
    StrategyInvalid,
    boundary_distance_norm,
    centroid_grasp,
    curvature_score,
    pose_pca,
    rgb_centroid_grasp,
    score_candidates,
    select_diverse,
    synthesize,
)
from .motion import MotionParams, attempt_cycle_time, move_time, tool_change_time
from .perception import (
    CameraPose,
    PerceptionParams,
    SegmentPercept,
    View,
    classify_held_item,
    f_beta,
    segment_scene,
    viewpoints_for,
)
from .rng import RngStreams
from .tasks import ManifestEntry, OrderLine, TaskPhase, TaskSpec
from .world import (
    FailureCause,
    GraspOutcome,
    OutcomeKind,
    PlacementError,
    PreconditionError,
    WorldParams,
    WorldState,
    apply_grasp,
    place_item,
    read_scale,
    spawn_scene,
    vacuum_state,
)

__version__ = "0.1.0"
