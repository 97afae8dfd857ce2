"""Task specifications: stow, pick, finals, and the long-run cycle."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .catalog import Catalog


class TaskPhase(str, Enum):
    STOW = "stow"
    PICK = "pick"
    FINALS = "finals"


@dataclass(frozen=True)
class ManifestEntry:
    item: str
    container: str


@dataclass(frozen=True)
class OrderLine:
    item: str
    box: str


@dataclass(frozen=True)
class TaskSpec:
    phase: TaskPhase
    manifest: tuple[ManifestEntry, ...]
    order: tuple[OrderLine, ...] = ()
    time_limit: float = 900.0

    def __post_init__(self) -> None:
        manifest_items = {e.item for e in self.manifest}
        if len(manifest_items) != len(self.manifest):
            raise ValueError("manifest items must be unique")
        missing = [l.item for l in self.order if l.item not in manifest_items]
        if missing:
            raise ValueError(f"order items not in manifest: {missing}")
        if self.phase is TaskPhase.STOW and self.order:
            raise ValueError("stow tasks have an empty order")

    def items_in(self, container: str) -> list[str]:
        return [e.item for e in self.manifest if e.container == container]


def _sample_items(catalog: Catalog, n: int, rng: np.random.Generator) -> list[str]:
    ids = sorted(catalog)
    if n > len(ids):
        raise ValueError(f"catalog has {len(ids)} items; {n} requested")
    picked = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in sorted(picked.tolist())]


def _split_storage(items: list[str]) -> list[ManifestEntry]:
    # Alternate between the two compartments for a balanced hand-placement.
    out = []
    for i, item in enumerate(items):
        out.append(ManifestEntry(item, "storage_a" if i % 2 == 0 else "storage_b"))
    return out


def _round_robin_order(items: list[str], boxes: tuple[str, ...]) -> tuple[OrderLine, ...]:
    return tuple(OrderLine(item, boxes[i % len(boxes)]) for i, item in enumerate(items))


BOXES = ("box_1", "box_2", "box_3")


def build_stow_task(
    catalog: Catalog, rng: np.random.Generator, tote_items: int = 20, time_limit: float = 900.0
) -> TaskSpec:
    items = _sample_items(catalog, tote_items, rng)
    manifest = tuple(ManifestEntry(i, "tote") for i in items)
    return TaskSpec(TaskPhase.STOW, manifest, (), time_limit)


def build_pick_task(
    catalog: Catalog,
    rng: np.random.Generator,
    storage_items: int = 32,
    order_items: int = 10,
    time_limit: float = 900.0,
) -> TaskSpec:
    items = _sample_items(catalog, storage_items, rng)
    manifest = tuple(_split_storage(items))
    wanted_idx = rng.choice(len(items), size=order_items, replace=False)
    wanted = [items[i] for i in sorted(wanted_idx.tolist())]
    return TaskSpec(TaskPhase.PICK, manifest, _round_robin_order(wanted, BOXES), time_limit)


def build_finals_task(
    catalog: Catalog,
    rng: np.random.Generator,
    tote_items: int = 16,
    storage_items: int = 16,
    order_items: int = 10,
    time_limit: float = 1800.0,
) -> TaskSpec:
    items = _sample_items(catalog, tote_items + storage_items, rng)
    tote = items[:tote_items]
    storage = items[tote_items:]
    manifest = tuple(ManifestEntry(i, "tote") for i in tote) + tuple(_split_storage(storage))
    wanted_idx = rng.choice(len(items), size=order_items, replace=False)
    wanted = [items[i] for i in sorted(wanted_idx.tolist())]
    return TaskSpec(TaskPhase.FINALS, manifest, _round_robin_order(wanted, BOXES), time_limit)


def build_longrun_stow(catalog: Catalog, time_limit: float = 900.0) -> TaskSpec:
    """The long-term cycle's stow half: every catalog item starts in the tote."""
    manifest = tuple(ManifestEntry(i, "tote") for i in sorted(catalog))
    return TaskSpec(TaskPhase.STOW, manifest, (), time_limit)


def longrun_pick_order(catalog: Catalog) -> tuple[OrderLine, ...]:
    """The long-term cycle's pick half replaces every item into the tote."""
    return tuple(OrderLine(i, "tote") for i in sorted(catalog))
