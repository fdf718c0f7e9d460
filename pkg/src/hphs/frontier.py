"""Hybrid frontier sampling and the frontier filter.

Two detectors feed one candidate stream: a scan-based detector that reads
range discontinuities and angular gaps straight off the latest beam scan
(its cost depends only on the beam count, never on map size), and a
map-based detector that clusters free/unknown boundary cells on the local
map around the robot. The filter then rejects candidates that sit next to
walls, duplicate an existing frontier, or point at already-known space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy import ndimage

from .grid import CellState, OccupancyGrid, PolarScan, Pose, distance_flood

TWO_PI = 2.0 * math.pi


class FrontierSource(Enum):
    SCAN = "scan"
    LOCAL_MAP = "local_map"


@dataclass
class FrontierPoint:
    position: tuple[float, float]
    source: FrontierSource
    created_step: int = 0
    uid: int = -1


@dataclass
class SamplerConfig:
    """Tuning for both detectors and the filter. Distances in meters."""

    r_gap: float = 1.0
    theta_inf: float = math.radians(15.0)
    d_s: float = 6.0
    clearance_radius: float = 0.3
    dedup_radius: float = 1.0

    def __post_init__(self) -> None:
        for name in ("r_gap", "theta_inf", "d_s", "clearance_radius", "dedup_radius"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


class FrontierSet:
    """Active frontiers keyed by a monotonically increasing id."""

    def __init__(self) -> None:
        self._points: dict[int, FrontierPoint] = {}
        self._next_uid = 0

    def add(self, position: tuple[float, float], source: FrontierSource,
            created_step: int) -> FrontierPoint:
        point = FrontierPoint(position, source, created_step, uid=self._next_uid)
        self._points[point.uid] = point
        self._next_uid += 1
        return point

    def remove(self, uid: int) -> None:
        self._points.pop(uid, None)

    def get(self, uid: int) -> Optional[FrontierPoint]:
        return self._points.get(uid)

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self) -> Iterator[FrontierPoint]:
        return iter(self._points.values())

    def __contains__(self, uid: int) -> bool:
        return uid in self._points


def cyclic_pairs(scan: PolarScan) -> list[tuple[float, float, float, float]]:
    """Consecutive return pairs as (theta_i, r_i, delta_theta, r_next).

    Includes the wraparound pair (last, first); its angular gap is taken
    modulo a full turn, and a single-return scan wraps onto itself with a
    full-circle gap. The scan detector evaluates exactly these pairs, so
    its work is a function of the return count alone.
    """
    returns = scan.returns
    n = len(returns)
    pairs = []
    for i in range(n):
        theta_i, r_i = returns[i]
        if i + 1 < n:
            theta_j, r_j = returns[i + 1]
            delta = theta_j - theta_i
        else:
            theta_j, r_j = returns[0]
            delta = theta_j + TWO_PI - theta_i
        pairs.append((theta_i, r_i, delta, r_j))
    return pairs


def detect_scan_frontiers(
    scan: PolarScan,
    pose: Pose,
    config: SamplerConfig,
    step: int = 0,
) -> list[FrontierPoint]:
    """Sample frontier candidates from beam-to-beam discontinuities.

    A pair of cyclically consecutive returns yields one candidate when the
    range jump reaches r_gap (condition 1: an occlusion or corridor mouth
    between the two hits) or the angular gap reaches theta_inf (condition
    2: a sector with no hits at all). Condition-1 points sit just past the
    nearer return; condition-2 points sit at the averaged range, capped so
    they remain plannable. A scan with no returns at all fills the circle
    with candidates theta_inf apart.
    """
    out: list[FrontierPoint] = []
    if not scan.returns:
        count = int(TWO_PI / config.theta_inf)
        for j in range(count):
            angle = j * config.theta_inf
            rng = 0.8 * scan.max_range
            out.append(_polar_candidate(pose, angle, rng, step))
        return out

    for theta_i, r_i, delta, r_j in cyclic_pairs(scan):
        if abs(r_j - r_i) >= config.r_gap:
            rng = min(r_i, r_j) + 0.5 * config.r_gap
        elif delta >= config.theta_inf:
            rng = min(0.5 * (r_i + r_j), 0.8 * scan.max_range)
        else:
            continue
        out.append(_polar_candidate(pose, theta_i + 0.5 * delta, rng, step))
    return out


def _polar_candidate(pose: Pose, angle: float, rng: float, step: int) -> FrontierPoint:
    pos = (pose.x + rng * math.cos(angle), pose.y + rng * math.sin(angle))
    return FrontierPoint(pos, FrontierSource.SCAN, step)


_STRUCT_8 = np.ones((3, 3), dtype=bool)


def detect_local_frontiers(
    known: OccupancyGrid,
    pose: Pose,
    d_s: float,
    step: int = 0,
) -> list[FrontierPoint]:
    """Cluster free/unknown boundary cells on the local map around the robot.

    Every Free cell within d_s of the robot that touches an Unknown cell
    (8-adjacency) is a boundary cell; 8-connected clusters of fewer than 3
    cells are dropped as noise, and each surviving cluster is represented
    by its member nearest the cluster centroid.
    """
    res = known.resolution
    h, w = known.cells.shape
    cx, cy = known.world_to_cell(pose.x, pose.y)
    rad = int(math.ceil(d_s / res)) + 1
    x0, x1 = max(0, cx - rad), min(w, cx + rad + 1)
    y0, y1 = max(0, cy - rad), min(h, cy + rad + 1)
    if x0 >= x1 or y0 >= y1:
        return []

    window = known.cells[y0:y1, x0:x1]
    free = window == int(CellState.FREE)
    unknown_full = known.cells == int(CellState.UNKNOWN)
    near_unknown = ndimage.binary_dilation(unknown_full, structure=_STRUCT_8)[y0:y1, x0:x1]

    iy, ix = np.mgrid[y0:y1, x0:x1]
    centers_x = known.origin[0] + (ix + 0.5) * res
    centers_y = known.origin[1] + (iy + 0.5) * res
    within = (centers_x - pose.x) ** 2 + (centers_y - pose.y) ** 2 <= d_s * d_s

    boundary = free & near_unknown & within
    labels, count = ndimage.label(boundary, structure=_STRUCT_8)
    out: list[FrontierPoint] = []
    for lab in range(1, count + 1):
        ys, xs = np.nonzero(labels == lab)
        if ys.size < 3:
            continue
        mx = centers_x[ys, xs]
        my = centers_y[ys, xs]
        cxm, cym = mx.mean(), my.mean()
        best = int(np.argmin((mx - cxm) ** 2 + (my - cym) ** 2))
        out.append(FrontierPoint(
            (float(mx[best]), float(my[best])), FrontierSource.LOCAL_MAP, step,
        ))
    return out


def line_of_sight(known: OccupancyGrid, a: tuple[float, float],
                  b: tuple[float, float]) -> bool:
    """True when no Occupied cell lies on the segment between two points.

    Walks every cell the segment touches; at an exact corner crossing both
    side cells are checked, so sight cannot thread a diagonal crack.
    """
    res = known.resolution
    ox, oy = known.origin
    x0, y0 = a
    x1, y1 = b
    dx, dy = x1 - x0, y1 - y0
    tmax = math.hypot(dx, dy)
    if tmax == 0.0:
        ix, iy = known.world_to_cell(x0, y0)
        return known.in_bounds(ix, iy) and known.cells[iy, ix] != int(CellState.OCCUPIED)
    ct, st = dx / tmax, dy / tmax
    ix, iy = known.world_to_cell(x0, y0)
    gx, gy = known.world_to_cell(x1, y1)
    sx = 1 if ct > 0.0 else -1
    sy = 1 if st > 0.0 else -1
    big = float("inf")
    if ct != 0.0:
        tmx = ((ix + (1 if sx > 0 else 0)) * res + ox - x0) / ct
        tdx = res / abs(ct)
    else:
        tmx, tdx = big, big
    if st != 0.0:
        tmy = ((iy + (1 if sy > 0 else 0)) * res + oy - y0) / st
        tdy = res / abs(st)
    else:
        tmy, tdy = big, big

    occupied = int(CellState.OCCUPIED)
    t = 0.0
    while t <= tmax + 1e-9:
        if known.in_bounds(ix, iy) and known.cells[iy, ix] == occupied:
            return False
        if (ix, iy) == (gx, gy):
            return True
        if abs(tmx - tmy) <= 1e-12:
            for jx, jy in ((ix + sx, iy), (ix, iy + sy)):
                if known.in_bounds(jx, jy) and known.cells[jy, jx] == occupied:
                    return False
            t = tmx
            ix += sx
            iy += sy
            tmx += tdx
            tmy += tdy
        elif tmx < tmy:
            t = tmx
            ix += sx
            tmx += tdx
        else:
            t = tmy
            iy += sy
            tmy += tdy
    return True


def _any_state_within(known: OccupancyGrid, pos: tuple[float, float],
                      radius: float, state: CellState) -> bool:
    """Whether any cell of `state` has its center within `radius` of pos."""
    res = known.resolution
    cx, cy = known.world_to_cell(pos[0], pos[1])
    rad = int(math.ceil(radius / res)) + 1
    x0, x1 = max(0, cx - rad), min(known.width, cx + rad + 1)
    y0, y1 = max(0, cy - rad), min(known.height, cy + rad + 1)
    if x0 >= x1 or y0 >= y1:
        return False
    window = known.cells[y0:y1, x0:x1] == int(state)
    if not window.any():
        return False
    iy, ix = np.nonzero(window)
    centers_x = known.origin[0] + (ix + x0 + 0.5) * res
    centers_y = known.origin[1] + (iy + y0 + 0.5) * res
    d2 = (centers_x - pos[0]) ** 2 + (centers_y - pos[1]) ** 2
    return bool((d2 <= radius * radius).any())


def observable_unknown_mask(known: OccupancyGrid) -> np.ndarray:
    """Unknown cells some future ray could still reveal.

    A beam enters a cell through a face, so an unknown cell walled in by
    known-occupied neighbors on all four sides (wall junction cores, map
    border corners) can never be observed; treating those as information
    would leave frontiers alive forever next to fully mapped walls.
    """
    unknown = known.cells == int(CellState.UNKNOWN)
    occupied = known.cells == int(CellState.OCCUPIED)
    open_face = np.zeros_like(unknown)
    open_face[:-1, :] |= ~occupied[1:, :]
    open_face[1:, :] |= ~occupied[:-1, :]
    open_face[:, :-1] |= ~occupied[:, 1:]
    open_face[:, 1:] |= ~occupied[:, :-1]
    return unknown & open_face


def _observable_unknown_within(known: OccupancyGrid, pos: tuple[float, float],
                               radius: float) -> bool:
    """Any still-observable Unknown cell center within `radius` of pos."""
    res = known.resolution
    cx, cy = known.world_to_cell(pos[0], pos[1])
    rad = int(math.ceil(radius / res)) + 2
    x0, x1 = max(0, cx - rad), min(known.width, cx + rad + 1)
    y0, y1 = max(0, cy - rad), min(known.height, cy + rad + 1)
    if x0 >= x1 or y0 >= y1:
        return False
    cells = known.cells[y0:y1, x0:x1]
    unknown = cells == int(CellState.UNKNOWN)
    if not unknown.any():
        return False
    occupied = cells == int(CellState.OCCUPIED)
    # A window edge clips neighbor info; cells beyond the window count as
    # non-occupied only if they are inside the map.
    open_face = np.zeros_like(unknown)
    open_face[:-1, :] |= ~occupied[1:, :]
    open_face[1:, :] |= ~occupied[:-1, :]
    open_face[:, :-1] |= ~occupied[:, 1:]
    open_face[:, 1:] |= ~occupied[:, :-1]
    if y1 < known.height:
        open_face[-1, :] |= known.cells[y1, x0:x1] != int(CellState.OCCUPIED)
    if y0 > 0:
        open_face[0, :] |= known.cells[y0 - 1, x0:x1] != int(CellState.OCCUPIED)
    if x1 < known.width:
        open_face[:, -1] |= known.cells[y0:y1, x1] != int(CellState.OCCUPIED)
    if x0 > 0:
        open_face[:, 0] |= known.cells[y0:y1, x0 - 1] != int(CellState.OCCUPIED)
    observable = unknown & open_face
    if not observable.any():
        return False
    iy, ix = np.nonzero(observable)
    centers_x = known.origin[0] + (ix + x0 + 0.5) * res
    centers_y = known.origin[1] + (iy + y0 + 0.5) * res
    d2 = (centers_x - pos[0]) ** 2 + (centers_y - pos[1]) ** 2
    return bool((d2 <= radius * radius).any())


def filter_frontiers(
    candidates: Iterable[FrontierPoint],
    known: OccupancyGrid,
    active: FrontierSet,
    config: SamplerConfig,
    robot: Optional[Pose] = None,
) -> list[FrontierPoint]:
    """Screen candidates and append the survivors to the active set.

    A candidate dies when it hugs a wall (an Occupied cell within
    clearance_radius), duplicates an active frontier (within dedup_radius
    with line of sight), or belongs to fully known space (its cell is Free
    with no Unknown cell within dedup_radius). Candidates at the robot's
    own position count as already visited. Survivors are appended to the
    active set immediately, so later candidates dedup against earlier ones.
    """
    accepted: list[FrontierPoint] = []
    for cand in candidates:
        ix, iy = known.world_to_cell(*cand.position)
        if not known.in_bounds(ix, iy):
            continue
        if robot is not None and math.dist(cand.position, robot.xy) <= 0.5 * config.dedup_radius:
            continue
        if _any_state_within(known, cand.position, config.clearance_radius,
                             CellState.OCCUPIED):
            continue
        duplicate = False
        for existing in active:
            if (math.dist(existing.position, cand.position) <= config.dedup_radius
                    and line_of_sight(known, cand.position, existing.position)):
                duplicate = True
                break
        if duplicate:
            continue
        if (known.cells[iy, ix] == int(CellState.FREE)
                and not _observable_unknown_within(known, cand.position,
                                                   config.dedup_radius)):
            continue
        accepted.append(active.add(cand.position, cand.source, cand.created_step))
    return accepted


def prune_frontiers(
    active: FrontierSet,
    known: OccupancyGrid,
    pose: Pose,
    config: SamplerConfig,
    clearance: int = 2,
    distances: Optional[np.ndarray] = None,
) -> list[int]:
    """Drop frontiers that were mapped through or became unreachable.

    A frontier is mapped through when its cell is now Free and no Unknown
    cell remains within dedup_radius. Reachability follows the planner's
    own cost graph: `distances` is the planner flood from the robot (it is
    computed here when not supplied), and an infinite entry means the
    planner would report the frontier unreachable. Returns removed uids.
    """
    if distances is None:
        distances = distance_flood(known, known.world_to_cell(pose.x, pose.y),
                                   clearance)
    removed: list[int] = []
    for point in list(active):
        ix, iy = known.world_to_cell(*point.position)
        if not known.in_bounds(ix, iy):
            removed.append(point.uid)
            continue
        if (known.cells[iy, ix] == int(CellState.FREE)
                and not _observable_unknown_within(known, point.position,
                                                   config.dedup_radius)):
            removed.append(point.uid)
            continue
        if not np.isfinite(distances[iy, ix]):
            removed.append(point.uid)
    for uid in removed:
        active.remove(uid)
    return removed
