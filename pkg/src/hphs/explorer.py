"""The exploration loop: sense, sample, filter, sequence, select, move.

One run owns a truth grid, a growing known grid, and an active frontier
set. Each replanning cycle scans, detects and filters frontiers, prunes
stale ones, sequences the populated subregions, picks a target in the
head subregion, and walks the planned path one cell-crossing at a time
(re-scanning at every crossing) until a replan trigger fires. The run
ends Complete when no active frontier remains, or Budget at max_steps.

Time is derived, not measured: one step per cell-crossing and
sim_time = traveled / speed, so identical inputs give identical runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .frontier import (
    FrontierSet,
    SamplerConfig,
    detect_local_frontiers,
    detect_scan_frontiers,
    filter_frontiers,
    prune_frontiers,
    _observable_unknown_within,
)
from .grid import (
    CellState,
    InvalidPoseError,
    OccupancyGrid,
    Pose,
    distance_flood,
    integrate_scan,
    plan_path,
    reachable_free_mask,
    simulate_scan,
)
from .hierarchy import (
    SequenceWeights,
    SubregionGrid,
    compute_bounds,
    optimize_sequence,
    remap_centers,
    segment,
)
from .selection import GainBreakdown, GainWeights, select_target

PLANNERS = ("hphs", "nearest")


class InvalidStartError(InvalidPoseError):
    """Start pose is outside the map or not in a free truth cell."""


class RunStatus(Enum):
    COMPLETE = "complete"
    BUDGET = "budget"


@dataclass
class RunConfig:
    resolution: float = 0.1
    beams: int = 360
    max_range: float = 10.0
    clearance: int = 2
    speed: float = 0.6
    replan_interval: int = 25
    max_steps: int = 20000
    rng_seed: int = 0
    n_w: int = 4
    n_h: int = 4
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sequence: SequenceWeights = field(default_factory=SequenceWeights)
    gains: GainWeights = field(default_factory=GainWeights)
    log_gains: bool = False

    def __post_init__(self) -> None:
        if self.speed <= 0.0:
            raise ValueError("speed must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass
class StepRecord:
    step: int
    sim_time_s: float
    x_m: float
    y_m: float
    traveled_m: float
    explored_m2: float
    completion: float
    frontiers: int
    subregions: int
    target: Optional[tuple[float, float]]


@dataclass
class RunResult:
    planner: str
    status: RunStatus
    steps: list[StepRecord]
    trajectory: list[Pose]
    traveled: float
    sim_time: float
    known: OccupancyGrid
    final_frontiers: list[tuple[float, float]]
    final_segmentation: Optional[SubregionGrid]
    reachable_free_cells: int
    explored_reachable_free: int
    gain_log: list[tuple[int, list[GainBreakdown]]]
    map_name: str = ""
    seed: int = 0


@dataclass
class MetricsRow:
    distance_m: float
    time_s: float
    explored_m2: float
    rate_m2_per_m: float
    completion: float


def metrics(result: RunResult) -> MetricsRow:
    """Headline numbers for one finished run.

    Exploration rate is explored area over traveled distance; a
    zero-length run floors the distance at one cell so the ratio stays
    finite. Completion is the explored fraction of the free area actually
    reachable from the start.
    """
    res = result.known.resolution
    explored = (result.known.count(CellState.FREE)
                + result.known.count(CellState.OCCUPIED)) * res * res
    rate = explored / max(result.traveled, res)
    completion = (result.explored_reachable_free / result.reachable_free_cells
                  if result.reachable_free_cells else 0.0)
    return MetricsRow(result.traveled, result.sim_time, explored, rate, completion)


def run_nearest_baseline(truth: OccupancyGrid, start: Pose,
                         config: RunConfig) -> RunResult:
    """Greedy comparison planner: always drive to the closest frontier."""
    return run(truth, start, config, planner="nearest")


def run(truth: OccupancyGrid, start: Pose, config: RunConfig,
        planner: str = "hphs") -> RunResult:
    if planner not in PLANNERS:
        raise ValueError(f"unknown planner {planner!r}, expected one of {PLANNERS}")
    six, siy = truth.world_to_cell(start.x, start.y)
    if not truth.in_bounds(six, siy) or truth.cells[siy, six] != int(CellState.FREE):
        raise InvalidStartError(
            f"start pose ({start.x:.3f}, {start.y:.3f}) is not in a free cell")

    res = truth.resolution
    known = OccupancyGrid.empty(truth.width, truth.height, res, truth.origin)
    reach_mask = reachable_free_mask(truth, (six, siy))
    reach_total = int(reach_mask.sum())
    sampler = config.sampler
    occupied = int(CellState.OCCUPIED)
    free = int(CellState.FREE)

    pose = start
    trajectory = [pose]
    traveled = 0.0
    step = 0
    frontiers = FrontierSet()
    prev_centers: list[tuple[float, float]] = []
    last_seg: Optional[SubregionGrid] = None
    gain_log: list[tuple[int, list[GainBreakdown]]] = []
    rows: list[StepRecord] = []
    status = RunStatus.BUDGET

    def explored_m2() -> float:
        return float(np.count_nonzero(known.cells != int(CellState.UNKNOWN))) * res * res

    def completion() -> float:
        if reach_total == 0:
            return 0.0
        seen = int(np.count_nonzero((known.cells == free) & reach_mask))
        return seen / reach_total

    def record(target: Optional[tuple[float, float]]) -> None:
        rows.append(StepRecord(
            step=step,
            sim_time_s=traveled / config.speed,
            x_m=pose.x,
            y_m=pose.y,
            traveled_m=traveled,
            explored_m2=explored_m2(),
            completion=completion(),
            frontiers=len(frontiers),
            subregions=len(last_seg.filtered) if last_seg is not None else 0,
            target=target,
        ))

    scan = simulate_scan(truth, pose, config.beams, config.max_range)
    integrate_scan(known, scan, pose)
    record(None)

    out_of_budget = False
    while not out_of_budget:
        # Replanning cycle at the current pose.
        scan = simulate_scan(truth, pose, config.beams, config.max_range)
        integrate_scan(known, scan, pose)
        candidates = detect_scan_frontiers(scan, pose, sampler, step)
        candidates += detect_local_frontiers(known, pose, sampler.d_s, step)
        filter_frontiers(candidates, known, frontiers, sampler, robot=pose)
        pose_cell = known.world_to_cell(pose.x, pose.y)
        dist_map = distance_flood(known, pose_cell, config.clearance)
        prune_frontiers(frontiers, known, pose, sampler, config.clearance, dist_map)
        if len(frontiers) == 0:
            status = RunStatus.COMPLETE
            break

        target = None
        if planner == "hphs":
            seg = segment(compute_bounds(known), config.n_w, config.n_h, frontiers)
            last_seg = seg
            prev = remap_centers(prev_centers, seg) if prev_centers else []
            plan = optimize_sequence(seg, pose.xy, prev, config.sequence)
            prev_centers = [seg.center_of(i) for i in plan.order]
            for sr_index in plan.order:
                in_region = [frontiers.get(uid)
                             for uid in seg.subregions[sr_index].frontier_uids
                             if uid in frontiers]
                selected = select_target(in_region, pose, known, config.gains)
                if selected is not None:
                    target, breakdowns = selected
                    if config.log_gains:
                        gain_log.append((step, breakdowns))
                    break
        else:
            best_key = None
            for point in frontiers:
                fix, fiy = known.world_to_cell(*point.position)
                d = float(dist_map[fiy, fix])
                if best_key is None or (d, point.uid) < best_key:
                    best_key = (d, point.uid)
                    target = point
        if target is None:
            # Every remaining frontier just lost its subregion assignment;
            # prune again next cycle rather than aborting.
            continue

        path = plan_path(known, pose, target.position, config.clearance)
        if path is None or len(path) <= 1:
            # Unreachable after all, or already inside the robot's cell:
            # consume the frontier and keep exploring.
            frontiers.remove(target.uid)
            continue

        steps_since_replan = 0
        for waypoint in path[1:]:
            wix, wiy = known.world_to_cell(*waypoint)
            if known.cells[wiy, wix] == occupied:
                break  # newly observed wall on the path: replan
            seg_len = math.hypot(waypoint[0] - pose.x, waypoint[1] - pose.y)
            pose = Pose(waypoint[0], waypoint[1],
                        math.atan2(waypoint[1] - pose.y, waypoint[0] - pose.x))
            tix, tiy = truth.world_to_cell(pose.x, pose.y)
            if truth.cells[tiy, tix] == occupied:
                raise AssertionError("robot entered an occupied truth cell")
            traveled += seg_len
            step += 1
            trajectory.append(pose)
            steps_since_replan += 1
            scan = simulate_scan(truth, pose, config.beams, config.max_range)
            integrate_scan(known, scan, pose)
            record(target.position)
            if step >= config.max_steps:
                out_of_budget = True
                break
            if math.dist(pose.xy, target.position) <= 0.5 * sampler.dedup_radius:
                frontiers.remove(target.uid)  # reached: the point is visited
                break
            fix, fiy = known.world_to_cell(*target.position)
            if (known.cells[fiy, fix] == free
                    and not _observable_unknown_within(known, target.position,
                                                       sampler.dedup_radius)):
                frontiers.remove(target.uid)  # mapped through en route
                break
            if steps_since_replan >= config.replan_interval:
                break

    explored_reach = int(np.count_nonzero((known.cells == free) & reach_mask))
    return RunResult(
        planner=planner,
        status=status,
        steps=rows,
        trajectory=trajectory,
        traveled=traveled,
        sim_time=traveled / config.speed,
        known=known,
        final_frontiers=[p.position for p in frontiers],
        final_segmentation=last_seg,
        reachable_free_cells=reach_total,
        explored_reachable_free=explored_reach,
        gain_log=gain_log,
    )
