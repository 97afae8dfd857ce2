"""Item catalog: physical and visual properties that drive the simulation.

Catalogs are declarative YAML files (see data/catalog_default.yaml) with a
versioned schema. Masses are grams, bounding boxes millimetres, matching the
configured units; geometry code converts to metres at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .geometry import MM

CATALOG_SCHEMA_VERSION = 1


class CatalogError(ValueError):
    pass


class Rigidity(str, Enum):
    RIGID = "rigid"
    SEMI_RIGID = "semi-rigid"
    DEFORMABLE = "deformable"
    HINGED = "hinged"


class VisualClass(str, Enum):
    OPAQUE = "opaque"
    PARTIALLY_TRANSPARENT = "partially-transparent"
    TRANSPARENT = "transparent"
    REFLECTIVE = "reflective"
    IR_ABSORBING = "ir-absorbing"


class Tool(str, Enum):
    SUCTION = "suction"
    GRIPPER = "gripper"


class Strategy(str, Enum):
    SURFACE_NORMALS = "surface-normals"
    CENTROID = "centroid"
    RGB_CENTROID = "rgb-centroid"


@dataclass(frozen=True)
class ItemSpec:
    id: str
    mass_g: float
    bbox_mm: tuple[float, float, float]
    rigidity: Rigidity
    visual_class: VisualClass
    suckable: bool
    grippable: bool
    preferred_tool: Tool
    tool_success_prob: dict[Tool, float] = field(default_factory=dict)
    forced_strategy: Strategy | None = None
    drop_prob: float | None = None  # overrides the world default when set

    def __post_init__(self) -> None:
        if self.mass_g <= 0:
            raise CatalogError(f"{self.id}: mass must be positive")
        if any(d <= 0 for d in self.bbox_mm):
            raise CatalogError(f"{self.id}: bbox dims must be positive")
        if not (self.suckable or self.grippable):
            raise CatalogError(f"{self.id}: at least one of suckable/grippable required")
        for tool, p in self.tool_success_prob.items():
            if not 0.0 <= p <= 1.0:
                raise CatalogError(f"{self.id}: {tool.value} success prob {p} outside [0,1]")
        if self.drop_prob is not None and not 0.0 <= self.drop_prob <= 1.0:
            raise CatalogError(f"{self.id}: drop_prob outside [0,1]")

    @property
    def bbox_m(self) -> tuple[float, float, float]:
        return (self.bbox_mm[0] * MM, self.bbox_mm[1] * MM, self.bbox_mm[2] * MM)

    @property
    def footprint_xy_m(self) -> tuple[float, float]:
        return (self.bbox_mm[0] * MM, self.bbox_mm[1] * MM)

    @property
    def height_m(self) -> float:
        return self.bbox_mm[2] * MM

    def success_prob(self, tool: Tool) -> float:
        return self.tool_success_prob.get(tool, 0.0)


Catalog = dict[str, ItemSpec]


def _parse_item(raw: dict) -> ItemSpec:
    try:
        probs = {Tool(k): float(v) for k, v in raw.get("tool_success_prob", {}).items()}
        forced = raw.get("forced_strategy")
        return ItemSpec(
            id=str(raw["id"]),
            mass_g=float(raw["mass_g"]),
            bbox_mm=tuple(float(v) for v in raw["bbox_mm"]),
            rigidity=Rigidity(raw["rigidity"]),
            visual_class=VisualClass(raw["visual_class"]),
            suckable=bool(raw["suckable"]),
            grippable=bool(raw["grippable"]),
            preferred_tool=Tool(raw["preferred_tool"]),
            tool_success_prob=probs,
            forced_strategy=Strategy(forced) if forced else None,
            drop_prob=float(raw["drop_prob"]) if "drop_prob" in raw else None,
        )
    except KeyError as exc:
        raise CatalogError(f"item record missing field {exc}") from exc


def load_catalog(path: str | Path) -> Catalog:
    """Load and validate a catalog file; keys are item spec ids."""
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict) or "items" not in raw:
        raise CatalogError(f"{path}: not a catalog file")
    version = raw.get("schema_version")
    if version != CATALOG_SCHEMA_VERSION:
        raise CatalogError(
            f"{path}: schema_version {version!r} unsupported (expected {CATALOG_SCHEMA_VERSION})"
        )
    catalog: Catalog = {}
    for rec in raw["items"]:
        spec = _parse_item(rec)
        if spec.id in catalog:
            raise CatalogError(f"{path}: duplicate item id {spec.id}")
        catalog[spec.id] = spec
    return catalog
