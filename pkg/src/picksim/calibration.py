"""Perception-quality calibration: scene corpus IO and clutter sweeps."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .catalog import Catalog
from .geometry import Container
from .perception import PerceptionParams, scene_quality
from .tasks import ManifestEntry, TaskPhase, TaskSpec
from .world import WorldParams, WorldState, spawn_scene

CORPUS_SCHEMA_VERSION = 1


def write_corpus(path: str | Path, scenes: list[dict]) -> None:
    lines = [json.dumps({"kind": "header", "schema_version": CORPUS_SCHEMA_VERSION},
                        sort_keys=True, separators=(",", ":"))]
    for rec in scenes:
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus(path: str | Path) -> list[dict]:
    scenes = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("kind") == "header":
            if rec.get("schema_version") != CORPUS_SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported corpus schema_version")
            continue
        scenes.append(rec)
    return scenes


def spawn_corpus_scene(
    rec: dict,
    catalog: Catalog,
    containers: dict[str, Container] | None = None,
    world_params: WorldParams | None = None,
) -> WorldState:
    manifest = tuple(ManifestEntry(item, "tote") for item in rec["items"])
    task = TaskSpec(TaskPhase.STOW, manifest, (), 900.0)
    return spawn_scene(task, int(rec["seed"]), catalog,
                       containers=containers, params=world_params)


def corpus_scene_score(
    rec: dict,
    catalog: Catalog,
    params: PerceptionParams,
    containers: dict[str, Container] | None = None,
    world_params: WorldParams | None = None,
    beta: float = 0.5,
) -> float | None:
    """Mean F-beta of one corpus scene's emitted segments (None if nothing
    was detected at all)."""
    world = spawn_corpus_scene(rec, catalog, containers, world_params)
    scores = scene_quality(world, "tote", params, beta)
    if not scores:
        return None
    return float(np.mean(scores))


def run_corpus(
    path: str | Path,
    catalog: Catalog,
    params: PerceptionParams,
    containers: dict[str, Container] | None = None,
    world_params: WorldParams | None = None,
) -> tuple[float, list[float | None]]:
    """Mean of per-scene mean F0.5 over a corpus file."""
    scenes = read_corpus(path)
    per_scene = [
        corpus_scene_score(rec, catalog, params, containers, world_params)
        for rec in scenes
    ]
    valid = [s for s in per_scene if s is not None]
    return float(np.mean(valid)), per_scene


def clutter_sweep(
    catalog: Catalog,
    params: PerceptionParams,
    levels: tuple[int, ...] = (1, 5, 10, 20),
    scenes_per_level: int = 60,
    seed0: int = 5000,
    containers: dict[str, Container] | None = None,
    world_params: WorldParams | None = None,
) -> dict[int, float]:
    """Mean per-scene F0.5 at each clutter level over freshly sampled scenes."""
    ids = sorted(catalog)
    out: dict[int, float] = {}
    for level in levels:
        scores = []
        for k in range(scenes_per_level):
            seed = seed0 + 1000 * level + k
            rng = np.random.Generator(np.random.Philox(key=seed))
            picked = sorted(rng.choice(len(ids), size=level, replace=False).tolist())
            rec = {"scene": k, "seed": seed, "items": [ids[i] for i in picked]}
            s = corpus_scene_score(rec, catalog, params, containers, world_params)
            if s is not None:
                scores.append(s)
        out[level] = float(np.mean(scores))
    return out
