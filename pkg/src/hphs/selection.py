"""Frontier scoring and target selection inside the assigned subregion.

Every candidate gets three raw indicators: straight-line travel cost,
heading deviation, and the information content of a k x k window of map
cells around it. Indicators are min-max normalized across the candidate
set each cycle, then combined into a single gain whose argmax becomes the
next target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .frontier import FrontierPoint
from .grid import CellState, OccupancyGrid, Pose, normalize_angle


@dataclass
class GainWeights:
    tau1: float = 1.0
    tau2: float = 0.6
    tau3: float = 1.2
    kernel_k: int = 9
    s_occupied: float = 0.0
    s_free: float = 0.2
    s_unknown: float = 1.0

    def __post_init__(self) -> None:
        if min(self.tau1, self.tau2, self.tau3) < 0.0:
            raise ValueError("tau weights must be non-negative")
        if self.kernel_k < 3 or self.kernel_k % 2 == 0:
            raise ValueError("kernel_k must be odd and >= 3")
        if not (0.0 <= self.s_occupied <= self.s_free <= self.s_unknown):
            raise ValueError("state scores must satisfy 0 <= s_occupied <= s_free <= s_unknown")


@dataclass
class GainBreakdown:
    frontier_uid: int
    g_distance: float
    g_orientation: float
    g_information: float
    norm_distance: float
    norm_orientation: float
    norm_information: float
    total: float


def traveling_gain(robot: Pose, frontier: tuple[float, float]) -> float:
    """Euclidean distance from the robot to the frontier point."""
    return math.hypot(frontier[0] - robot.x, frontier[1] - robot.y)


def orientation_gain(robot: Pose, frontier: tuple[float, float]) -> float:
    """Penalty factor for turning away from the current heading.

    theta is the absolute angle between the heading vector and the
    robot-to-frontier vector, so the factor runs from e^-2 (dead ahead)
    through 1 (abeam) to e^2 (directly behind).
    """
    dx = frontier[0] - robot.x
    dy = frontier[1] - robot.y
    if dx == 0.0 and dy == 0.0:
        theta = 0.0
    else:
        theta = abs(normalize_angle(math.atan2(dy, dx) - robot.heading))
    return math.exp(2.0 * (2.0 * theta / math.pi - 1.0))


def information_gain(known: OccupancyGrid, frontier: tuple[float, float],
                     weights: GainWeights) -> float:
    """Mean state score of the k x k window centered on the frontier cell.

    Window cells outside the map count as Unknown: the world beyond the
    border is by definition unexplored. Returns e^(mean score).
    """
    k = weights.kernel_k
    half = k // 2
    cx, cy = known.world_to_cell(frontier[0], frontier[1])
    x0, x1 = cx - half, cx + half + 1
    y0, y1 = cy - half, cy + half + 1
    ix0, ix1 = max(0, x0), min(known.width, x1)
    iy0, iy1 = max(0, y0), min(known.height, y1)
    total = 0.0
    in_map = 0
    if ix0 < ix1 and iy0 < iy1:
        window = known.cells[iy0:iy1, ix0:ix1]
        in_map = window.size
        total += weights.s_free * int(np.count_nonzero(window == int(CellState.FREE)))
        total += weights.s_occupied * int(np.count_nonzero(window == int(CellState.OCCUPIED)))
        total += weights.s_unknown * int(np.count_nonzero(window == int(CellState.UNKNOWN)))
    total += weights.s_unknown * (k * k - in_map)
    return math.exp(total / (k * k))


def _normalize(values: list[float]) -> list[float]:
    lo = min(values)
    hi = max(values)
    if hi - lo <= 1e-12:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def select_target(
    candidates: Sequence[FrontierPoint],
    robot: Pose,
    known: OccupancyGrid,
    weights: GainWeights,
) -> Optional[tuple[FrontierPoint, list[GainBreakdown]]]:
    """Pick the highest-gain frontier among the candidates.

    Gain = tau3 * ||information|| - tau1 * ||distance|| - tau2 *
    ||orientation||, each indicator min-max normalized over this candidate
    set (an indicator that is constant across candidates normalizes to 0.5
    so it neither rewards nor penalizes). Ties fall to the smaller travel
    distance, then the smaller frontier id. Returns None when there are no
    candidates, which tells the caller to advance to the next subregion.
    """
    if not candidates:
        return None
    g_d = [traveling_gain(robot, c.position) for c in candidates]
    g_o = [orientation_gain(robot, c.position) for c in candidates]
    g_i = [information_gain(known, c.position, weights) for c in candidates]
    n_d = _normalize(g_d)
    n_o = _normalize(g_o)
    n_i = _normalize(g_i)

    breakdowns = []
    for idx, cand in enumerate(candidates):
        total = weights.tau3 * n_i[idx] - weights.tau1 * n_d[idx] - weights.tau2 * n_o[idx]
        breakdowns.append(GainBreakdown(
            cand.uid, g_d[idx], g_o[idx], g_i[idx],
            n_d[idx], n_o[idx], n_i[idx], total,
        ))

    best_idx = 0
    for idx in range(1, len(candidates)):
        b, cur = breakdowns[best_idx], breakdowns[idx]
        if (cur.total, -cur.g_distance, -cur.frontier_uid) > (b.total, -b.g_distance, -b.frontier_uid):
            best_idx = idx
    return candidates[best_idx], breakdowns
