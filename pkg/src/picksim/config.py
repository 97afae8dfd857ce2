"""Declarative configuration: loading, validation, and parameter assembly."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .catalog import Catalog, load_catalog
from .geometry import Container, ContainerKind
from .grasping import GraspScoringParams
from .motion import MotionParams
from .orchestrator import OrchestratorParams, SelectionParams, SimParams
from .perception import PerceptionParams
from .scoring import ScoreTable
from .world import WorldParams

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def data_path(name: str) -> Path:
    """Path of a shipped data file (default config, catalogs, score table)."""
    return Path(resources.files("picksim").joinpath("data", name))  # type: ignore[arg-type]


def default_config_path() -> Path:
    return data_path("default_config.yaml")


@dataclass
class SimConfig:
    """Everything a run needs: catalog, containers, parameters, score table."""

    catalog: Catalog
    containers: dict[str, Container]
    params: SimParams
    score_table: ScoreTable
    tasks: dict
    source_path: Path
    longrun_catalog: Catalog | None = None


def _build_containers(raw: list[dict]) -> dict[str, Container]:
    out: dict[str, Container] = {}
    for rec in raw:
        cont = Container(
            id=str(rec["id"]),
            kind=ContainerKind(rec["kind"]),
            origin=tuple(float(v) for v in rec["origin_m"]),
            interior_dims_mm=tuple(float(v) for v in rec["interior_dims_mm"]),
            wall_height_mm=float(rec["wall_height_mm"]),
        )
        if cont.id in out:
            raise ConfigError(f"duplicate container id {cont.id}")
        out[cont.id] = cont
    return out


def _build_params(raw: dict) -> SimParams:
    world = raw.get("world", {})
    grasp = dict(raw.get("grasping", {}))
    if "diversity_min_dist_mm" in grasp:
        grasp["diversity_min_dist"] = grasp.pop("diversity_min_dist_mm") * 1e-3
    selection = dict(raw.get("selection", {}))
    if "height_bin_m" in selection:
        selection["height_bin"] = selection.pop("height_bin_m")
    return SimParams(
        world=WorldParams(**world),
        perception=PerceptionParams(**raw.get("perception", {})),
        grasping=GraspScoringParams(**grasp),
        motion=MotionParams(**raw.get("motion", {})),
        selection=SelectionParams(**selection),
        orchestrator=OrchestratorParams(**raw.get("orchestrator", {})),
    )


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base.parent / p


def load_config(
    path: str | Path | None = None,
    score_table_path: str | Path | None = None,
    overrides: dict | None = None,
) -> SimConfig:
    """Load and assemble a full simulation configuration.

    Raises ConfigError on schema-version mismatch or invalid content; use
    validate_config for a non-raising diagnostic pass.
    """
    cfg_path = Path(path) if path is not None else default_config_path()
    raw = yaml.safe_load(cfg_path.read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"{cfg_path}: not a mapping")
    if raw.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"{cfg_path}: schema_version {raw.get('schema_version')!r} unsupported"
        )
    if overrides:
        raw = _deep_merge(raw, overrides)
    catalog = load_catalog(_resolve(cfg_path, raw["catalog"]))
    table_ref = Path(score_table_path) if score_table_path else _resolve(
        cfg_path, raw["score_table"])
    score_table = ScoreTable.load(table_ref)
    containers = _build_containers(raw["containers"])
    params = _build_params(raw)
    tasks = raw.get("tasks", {})
    longrun_catalog = None
    lr = tasks.get("longrun", {})
    if "catalog" in lr:
        longrun_catalog = load_catalog(_resolve(cfg_path, lr["catalog"]))
    return SimConfig(
        catalog=catalog,
        containers=containers,
        params=params,
        score_table=score_table,
        tasks=tasks,
        source_path=cfg_path,
        longrun_catalog=longrun_catalog,
    )


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def validate_config(path: str | Path) -> list[str]:
    """Schema plus cross-reference checks; an empty list means valid."""
    diagnostics: list[str] = []
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        return [f"{path}: YAML parse error: {exc}"]
    if not isinstance(raw, dict):
        return [f"{path}: top level must be a mapping"]
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        diagnostics.append(
            f"schema_version: expected {CONFIG_SCHEMA_VERSION}, found {version!r}"
        )
        return diagnostics
    for key in ("catalog", "score_table", "containers"):
        if key not in raw:
            diagnostics.append(f"{key}: missing required section")
    if diagnostics:
        return diagnostics

    catalog: Catalog | None = None
    try:
        catalog = load_catalog(_resolve(path, raw["catalog"]))
    except Exception as exc:
        diagnostics.append(f"catalog: {exc}")
    try:
        ScoreTable.load(_resolve(path, raw["score_table"]))
    except Exception as exc:
        diagnostics.append(f"score_table: {exc}")
    try:
        containers = _build_containers(raw["containers"])
        kinds = {c.kind for c in containers.values()}
        for needed in (ContainerKind.TOTE, ContainerKind.STORAGE_COMPARTMENT):
            if needed not in kinds:
                diagnostics.append(f"containers: no {needed.value} defined")
    except Exception as exc:
        diagnostics.append(f"containers: {exc}")
    try:
        _build_params(raw)
    except Exception as exc:
        diagnostics.append(f"params: {exc}")

    grasp = raw.get("grasping", {})
    h = grasp.get("height_penalty_max", 0.10)
    w = grasp.get("wall_angle_penalty_max", 0.10)
    cap = grasp.get("penalty_cap", 0.20)
    if h + w > cap + 1e-9:
        diagnostics.append(
            f"grasping: penalty split {h}+{w} exceeds the {cap} cap on task penalties"
        )
    world = raw.get("world", {})
    orch = raw.get("orchestrator", {})
    noise = world.get("scale_noise_g", 2.0)
    tol = orch.get("weight_tolerance_g", 5.0)
    if tol < 2 * noise:
        diagnostics.append(
            f"orchestrator: weight_tolerance_g {tol} must be at least twice "
            f"scale_noise_g {noise}"
        )
    if catalog is not None:
        for task_name, task in (raw.get("tasks") or {}).items():
            if not isinstance(task, dict):
                continue
            for item in task.get("order_item_ids", []) or []:
                if item not in catalog:
                    diagnostics.append(
                        f"tasks.{task_name}: order references unknown item {item!r}"
                    )
            for item in task.get("item_ids", []) or []:
                if item not in catalog:
                    diagnostics.append(
                        f"tasks.{task_name}: manifest references unknown item {item!r}"
                    )
    return diagnostics
