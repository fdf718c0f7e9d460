"""Grid world: occupancy maps, simulated LiDAR, and grid path planning.

The world is a 2D lattice of cells that are Free, Unknown, or Occupied.
A ground-truth grid (loaded from an ASCII map file) drives a noise-free
beam simulator; scans are integrated into the robot's known grid, which
everything downstream (frontier detection, planning) consumes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np
from numba import njit
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

SQRT2 = math.sqrt(2.0)

# Cost multiplier for stepping into an Unknown cell: optimistic but cautious,
# so the planner prefers known-free routes when they are not much longer.
UNKNOWN_COST_FACTOR = 2.0


class CellState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


class MapParseError(ValueError):
    """Raised when a map file is malformed; message carries line/column."""


class InvalidPoseError(ValueError):
    """Raised when a pose is outside the map or inside an occupied cell."""


def normalize_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        self.heading = normalize_angle(self.heading)

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class OccupancyGrid:
    """2D cell lattice with world<->cell coordinate conversion.

    `cells` is a (height, width) uint8 array of CellState values; `origin`
    is the world coordinate of the lower-left corner of cell (0, 0).
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.cells.ndim != 2 or self.cells.size == 0:
            raise ValueError("cells must be a non-empty 2D array")
        self.cells = np.ascontiguousarray(self.cells, dtype=np.uint8)

    @classmethod
    def empty(
        cls,
        width: int,
        height: int,
        resolution: float,
        origin: tuple[float, float] = (0.0, 0.0),
        fill: CellState = CellState.UNKNOWN,
    ) -> "OccupancyGrid":
        cells = np.full((height, width), int(fill), dtype=np.uint8)
        return cls(resolution=resolution, origin=origin, cells=cells)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def state_at(self, x: float, y: float) -> CellState:
        ix, iy = self.world_to_cell(x, y)
        if not self.in_bounds(ix, iy):
            raise InvalidPoseError(f"point ({x:.3f}, {y:.3f}) outside map bounds")
        return CellState(self.cells[iy, ix])

    def count(self, state: CellState) -> int:
        return int(np.count_nonzero(self.cells == int(state)))

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, self.cells.copy())


@dataclass
class PolarScan:
    """Angle-sorted beam returns from one scan.

    Beams that hit nothing within max_range are absent from `returns`;
    `beam_count` records how many beams were cast so the angular positions
    of the silent beams can be reconstructed.
    """

    returns: list[tuple[float, float]]
    max_range: float
    beam_count: int = 0


def beam_angles(beams: int) -> np.ndarray:
    """World-frame beam directions, half-bin offset.

    The offset keeps rays off exact cell diagonals and axes, so a ray never
    passes bit-exactly through a cell corner when cast from a cell center.
    """
    return (np.arange(beams) + 0.5) * (2.0 * math.pi / beams)


def load_map(text: str, resolution: float = 0.1) -> tuple[OccupancyGrid, Pose]:
    """Parse an ASCII map into a ground-truth grid plus the start pose.

    Charset: '#' occupied, '.' free, exactly one 'S' (free, start cell).
    A first line beginning with ';' is a comment and is skipped. The first
    text row is the top of the map (highest y).
    """
    lines = text.splitlines()
    line_offset = 0
    if lines and lines[0].startswith(";"):
        lines = lines[1:]
        line_offset = 1
    while lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise MapParseError("map is empty")

    width = len(lines[0])
    starts: list[tuple[int, int]] = []
    for i, line in enumerate(lines):
        if len(line) != width:
            raise MapParseError(
                f"ragged map: line {i + 1 + line_offset} has length "
                f"{len(line)}, expected {width}"
            )
        for j, ch in enumerate(line):
            if ch not in "#.S":
                raise MapParseError(
                    f"illegal character {ch!r} at line {i + 1 + line_offset}, "
                    f"column {j + 1}"
                )
            if ch == "S":
                starts.append((i, j))
    if len(starts) != 1:
        raise MapParseError(f"expected exactly one 'S', found {len(starts)}")

    height = len(lines)
    cells = np.full((height, width), int(CellState.FREE), dtype=np.uint8)
    for i, line in enumerate(lines):
        iy = height - 1 - i
        for j, ch in enumerate(line):
            if ch == "#":
                cells[iy, j] = int(CellState.OCCUPIED)

    grid = OccupancyGrid(resolution=resolution, origin=(0.0, 0.0), cells=cells)
    si, sj = starts[0]
    sx, sy = grid.cell_center(sj, height - 1 - si)
    return grid, Pose(sx, sy, 0.0)


# ---------------------------------------------------------------------------
# Ray traversal kernels.
#
# One corner-safe DDA serves both the sensor and the map update so the two
# stay cell-for-cell consistent: integrating a scan re-walks exactly the
# cells the simulated beam walked. At an exact corner crossing the x step
# is taken first, so a beam cannot slip between two occupied cells that
# share only a corner.
# ---------------------------------------------------------------------------

_T_EPS = 1e-9


@njit(cache=True)
def _ray_hit(cells, res, ox, oy, x0, y0, ct, st, tmax):
    """Distance at which the ray enters the first occupied cell, or -1."""
    h, w = cells.shape
    ix = int(np.floor((x0 - ox) / res))
    iy = int(np.floor((y0 - oy) / res))
    big = 1e30
    sx = 1 if ct > 0.0 else -1
    sy = 1 if st > 0.0 else -1
    if ct != 0.0:
        edge_x = ox + (ix + (1 if sx > 0 else 0)) * res
        tmx = (edge_x - x0) / ct
        tdx = res / abs(ct)
    else:
        tmx = big
        tdx = big
    if st != 0.0:
        edge_y = oy + (iy + (1 if sy > 0 else 0)) * res
        tmy = (edge_y - y0) / st
        tdy = res / abs(st)
    else:
        tmy = big
        tdy = big
    t = 0.0
    while t <= tmax:
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            return -1.0
        if cells[iy, ix] == 2:
            return t
        if tmx <= tmy:
            t = tmx
            ix += sx
            tmx += tdx
        else:
            t = tmy
            iy += sy
            tmy += tdy
    return -1.0


@njit(cache=True)
def _ray_mark(cells, res, ox, oy, x0, y0, ct, st, tmax, mark_end):
    """Mark cells along the ray: traversed Unknown cells become Free.

    With mark_end, the cell entered at distance tmax becomes Occupied.
    Occupied cells are never downgraded.
    """
    h, w = cells.shape
    ix = int(np.floor((x0 - ox) / res))
    iy = int(np.floor((y0 - oy) / res))
    big = 1e30
    sx = 1 if ct > 0.0 else -1
    sy = 1 if st > 0.0 else -1
    if ct != 0.0:
        edge_x = ox + (ix + (1 if sx > 0 else 0)) * res
        tmx = (edge_x - x0) / ct
        tdx = res / abs(ct)
    else:
        tmx = big
        tdx = big
    if st != 0.0:
        edge_y = oy + (iy + (1 if sy > 0 else 0)) * res
        tmy = (edge_y - y0) / st
        tdy = res / abs(st)
    else:
        tmy = big
        tdy = big
    t = 0.0
    while t <= tmax + _T_EPS:
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            return
        if mark_end and t >= tmax - _T_EPS:
            cells[iy, ix] = 2
            return
        if not mark_end and t > tmax:
            return
        if cells[iy, ix] == 0:
            cells[iy, ix] = 1
        if tmx <= tmy:
            t = tmx
            ix += sx
            tmx += tdx
        else:
            t = tmy
            iy += sy
            tmy += tdy


def _require_unoccupied_pose(grid: OccupancyGrid, pose: Pose) -> None:
    ix, iy = grid.world_to_cell(pose.x, pose.y)
    if not grid.in_bounds(ix, iy):
        raise InvalidPoseError(
            f"pose ({pose.x:.3f}, {pose.y:.3f}) outside map bounds"
        )
    if grid.cells[iy, ix] == int(CellState.OCCUPIED):
        raise InvalidPoseError(
            f"pose ({pose.x:.3f}, {pose.y:.3f}) inside an occupied cell"
        )


def simulate_scan(
    truth: OccupancyGrid,
    pose: Pose,
    beams: int = 360,
    max_range: float = 10.0,
) -> PolarScan:
    """Cast beams at uniform angular spacing and collect wall hits.

    Each beam marches cell-by-cell through the truth grid and returns at
    the distance where it enters the first occupied cell. Beams that reach
    max_range (or leave the map) without a hit produce no return.
    """
    _require_unoccupied_pose(truth, pose)
    returns: list[tuple[float, float]] = []
    ox, oy = truth.origin
    for theta in beam_angles(beams):
        t = _ray_hit(
            truth.cells, truth.resolution, ox, oy,
            pose.x, pose.y, math.cos(theta), math.sin(theta), max_range,
        )
        if t >= 0.0:
            returns.append((float(theta), float(t)))
    return PolarScan(returns=returns, max_range=max_range, beam_count=beams)


def integrate_scan(known: OccupancyGrid, scan: PolarScan, pose: Pose) -> OccupancyGrid:
    """Fold a scan into the known grid.

    Cells a beam traversed before its endpoint become Free; the endpoint
    cell becomes Occupied. Beams without a return free all traversed cells
    out to max_range. Occupied cells are never downgraded, and integrating
    the same scan twice is a no-op the second time.
    """
    ox, oy = known.origin
    res = known.resolution
    hit_angles = {theta for theta, _ in scan.returns}
    for theta, r in scan.returns:
        _ray_mark(
            known.cells, res, ox, oy, pose.x, pose.y,
            math.cos(theta), math.sin(theta), r, True,
        )
    if scan.beam_count:
        for theta in beam_angles(scan.beam_count):
            if float(theta) in hit_angles:
                continue
            _ray_mark(
                known.cells, res, ox, oy, pose.x, pose.y,
                math.cos(theta), math.sin(theta), scan.max_range, False,
            )
    return known


# ---------------------------------------------------------------------------
# Planning.
# ---------------------------------------------------------------------------


def clearance_map(grid: OccupancyGrid) -> np.ndarray:
    """Chebyshev distance from each cell to the nearest occupied cell."""
    not_occ = grid.cells != int(CellState.OCCUPIED)
    if not_occ.all():
        return np.full(grid.cells.shape, grid.width + grid.height, dtype=np.int32)
    return ndimage.distance_transform_cdt(not_occ, metric="chessboard").astype(np.int32)


def traversable_mask(grid: OccupancyGrid, clearance: int) -> np.ndarray:
    """Cells the robot may occupy: far enough from every occupied cell."""
    return clearance_map(grid) > clearance


_NEIGHBORS_8 = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


def plan_path(
    known: OccupancyGrid,
    start: Pose,
    goal: tuple[float, float],
    clearance: int = 2,
) -> Optional[list[tuple[float, float]]]:
    """A* from the start pose to the cell containing `goal`.

    8-connected moves cost 1 / sqrt(2) cell units, doubled when the move
    enters an Unknown cell (optimistic traversal of unexplored space).
    Returns cell-center waypoints starting at the start cell, or None if
    the goal is unreachable. The start cell is always expandable so the
    robot can plan its way out of a tight spot it already occupies.
    """
    sx, sy = known.world_to_cell(start.x, start.y)
    gx, gy = known.world_to_cell(goal[0], goal[1])
    if not known.in_bounds(sx, sy) or not known.in_bounds(gx, gy):
        return None
    if (sx, sy) == (gx, gy):
        return [known.cell_center(sx, sy)]

    trav = traversable_mask(known, clearance)
    if not trav[gy, gx]:
        return None
    cells = known.cells
    unknown = int(CellState.UNKNOWN)

    def heuristic(ix: int, iy: int) -> float:
        dx = abs(ix - gx)
        dy = abs(iy - gy)
        return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)

    g_cost: dict[tuple[int, int], float] = {(sx, sy): 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    open_heap: list[tuple[float, int, int, int]] = [(heuristic(sx, sy), 0, sx, sy)]
    closed: set[tuple[int, int]] = set()

    while open_heap:
        _, _, cx, cy = heapq.heappop(open_heap)
        if (cx, cy) in closed:
            continue
        closed.add((cx, cy))
        if (cx, cy) == (gx, gy):
            path = [(cx, cy)]
            while path[-1] in came:
                path.append(came[path[-1]])
            path.reverse()
            return [known.cell_center(ix, iy) for ix, iy in path]
        base_g = g_cost[(cx, cy)]
        for dx, dy, base in _NEIGHBORS_8:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < known.width and 0 <= ny < known.height):
                continue
            if not trav[ny, nx]:
                continue
            step = base * (UNKNOWN_COST_FACTOR if cells[ny, nx] == unknown else 1.0)
            ng = base_g + step
            if ng < g_cost.get((nx, ny), math.inf):
                g_cost[(nx, ny)] = ng
                came[(nx, ny)] = (cx, cy)
                counter += 1
                heapq.heappush(open_heap, (ng + heuristic(nx, ny), counter, nx, ny))
    return None


def path_length(waypoints: list[tuple[float, float]]) -> float:
    """Euclidean length of a waypoint polyline in meters."""
    total = 0.0
    for (x0, y0), (x1, y1) in zip(waypoints, waypoints[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def distance_flood(
    known: OccupancyGrid,
    start_cell: tuple[int, int],
    clearance: int = 2,
) -> np.ndarray:
    """Least path cost (meters) from start_cell to every cell.

    Uses the same traversability and move costs as plan_path, so a cell is
    reachable here exactly when plan_path would find a route to it.
    Unreachable cells hold +inf.
    """
    h, w = known.cells.shape
    trav = traversable_mask(known, clearance)
    sx, sy = start_cell
    trav[sy, sx] = True
    unknown_mask = known.cells == int(CellState.UNKNOWN)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    for dx, dy, base in _NEIGHBORS_8:
        src_y = slice(max(0, -dy), h - max(0, dy))
        src_x = slice(max(0, -dx), w - max(0, dx))
        dst_y = slice(max(0, dy), h + min(0, dy))
        dst_x = slice(max(0, dx), w + min(0, dx))
        ok = trav[src_y, src_x] & trav[dst_y, dst_x]
        cost = np.where(unknown_mask[dst_y, dst_x], base * UNKNOWN_COST_FACTOR, base)
        rows.append(idx[src_y, src_x][ok])
        cols.append(idx[dst_y, dst_x][ok])
        data.append(cost[ok] * known.resolution)
    graph = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(h * w, h * w),
    )
    dist = _csgraph_dijkstra(graph, directed=True, indices=sy * w + sx)
    return dist.reshape(h, w)


def reachable_free_mask(truth: OccupancyGrid, start_cell: tuple[int, int]) -> np.ndarray:
    """4-connected flood fill over Free truth cells from the start cell."""
    free = truth.cells == int(CellState.FREE)
    labels, _ = ndimage.label(free, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    sx, sy = start_cell
    if not free[sy, sx]:
        raise InvalidPoseError("start cell is not free in the truth grid")
    return labels == labels[sy, sx]
