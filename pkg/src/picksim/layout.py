"""Default workspace layout.

Two tote-sized storage compartments, the stow tote, and three shipping
boxes, all inside the 1.0 x 1.0 m gantry footprint. The rules quote a
storage bounding volume of 5000 cm^3, which is inconsistent with two
tote-sized boxes (a units slip); defaults follow the tote-sized reading.
"""

from __future__ import annotations

from .geometry import Container, ContainerKind, Pose

TOTE_DIMS_MM = (450.0, 360.0, 200.0)
BOX_DIMS_MM = (200.0, 160.0, 150.0)

# Fixed wrist pose used to present a held item to the frame-mounted camera.
SIDE_CAMERA_POSE = Pose(0.50, 0.88, 0.45)

# Neutral wrist pose between attempts.
HOME_POSE = Pose(0.50, 0.50, 0.60)

TRAVEL_Z = 0.50  # safe carry height between containers


def default_containers() -> dict[str, Container]:
    def tote_sized(cid: str, kind: ContainerKind, origin: tuple[float, float]) -> Container:
        return Container(cid, kind, origin, TOTE_DIMS_MM, TOTE_DIMS_MM[2])

    def box(cid: str, origin: tuple[float, float]) -> Container:
        return Container(cid, ContainerKind.SHIPPING_BOX, origin, BOX_DIMS_MM, BOX_DIMS_MM[2])

    containers = [
        tote_sized("storage_a", ContainerKind.STORAGE_COMPARTMENT, (0.02, 0.02)),
        tote_sized("storage_b", ContainerKind.STORAGE_COMPARTMENT, (0.02, 0.42)),
        tote_sized("tote", ContainerKind.TOTE, (0.53, 0.02)),
        box("box_1", (0.54, 0.44)),
        box("box_2", (0.76, 0.44)),
        box("box_3", (0.54, 0.64)),
    ]
    return {c.id: c for c in containers}
