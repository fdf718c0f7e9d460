"""Subregion segmentation and visit-order optimization.

The known map's bounding box is split into a uniform grid of subregions;
those containing frontiers are sequenced by maximizing a revenue function
that rewards short cumulative centre-to-centre paths and similarity with
the previously adopted order (via dynamic time warping), which damps plan
churn as the box grows.

Euclidean distances in this module are computed as sqrt(dx*dx + dy*dy)
everywhere (Python and jitted code alike) so revenues agree bit-for-bit
across both paths.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .grid import CellState, OccupancyGrid
from .frontier import FrontierPoint

Point = tuple[float, float]


class NoBoundsError(ValueError):
    """Raised when the known map has no observed cells yet."""


def _dist(a: Point, b: Point) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy)


@dataclass
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> Point:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, p: Point) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1


@dataclass
class Subregion:
    index: int
    rect: Rect
    center: Point
    frontier_uids: list[int] = field(default_factory=list)


@dataclass
class SubregionGrid:
    bounds: Rect
    n_w: int
    n_h: int
    subregions: list[Subregion]
    filtered: list[int]

    def center_of(self, index: int) -> Point:
        return self.subregions[index].center


@dataclass
class SequenceWeights:
    lambda1: float = 0.15
    lambda2: float = 0.05
    lambda3: float = 2.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class SequencePlan:
    order: list[int]
    revenue: float
    previous_centers: list[Point]


def compute_bounds(known: OccupancyGrid) -> Rect:
    """Minimal axis-aligned world rectangle covering all observed cells."""
    observed = known.cells != int(CellState.UNKNOWN)
    ys, xs = np.nonzero(observed)
    if ys.size == 0:
        raise NoBoundsError("map has no observed cells")
    res = known.resolution
    ox, oy = known.origin
    return Rect(
        ox + int(xs.min()) * res,
        oy + int(ys.min()) * res,
        ox + (int(xs.max()) + 1) * res,
        oy + (int(ys.max()) + 1) * res,
    )


def segment(
    bounds: Rect,
    n_w: int,
    n_h: int,
    frontiers: Iterable[FrontierPoint],
) -> SubregionGrid:
    """Split bounds into n_w x n_h equal subregions and bin the frontiers.

    Subregion index runs x-fastest from the lower-left corner. A frontier
    exactly on a shared edge goes to the higher-index side; positions
    outside the box clamp into the nearest edge subregion. Subregions that
    receive no frontier are excluded from the filtered list.
    """
    if n_w < 1 or n_h < 1:
        raise ValueError("n_w and n_h must be at least 1")
    xs = [bounds.x0 + j * bounds.width / n_w for j in range(n_w + 1)]
    ys = [bounds.y0 + i * bounds.height / n_h for i in range(n_h + 1)]
    xs[n_w] = bounds.x1
    ys[n_h] = bounds.y1

    subregions = []
    for i in range(n_h):
        for j in range(n_w):
            rect = Rect(xs[j], ys[i], xs[j + 1], ys[i + 1])
            subregions.append(Subregion(i * n_w + j, rect, rect.center))

    for point in frontiers:
        j = min(max(bisect_right(xs, point.position[0]) - 1, 0), n_w - 1)
        i = min(max(bisect_right(ys, point.position[1]) - 1, 0), n_h - 1)
        subregions[i * n_w + j].frontier_uids.append(point.uid)

    filtered = [sr.index for sr in subregions if sr.frontier_uids]
    return SubregionGrid(bounds, n_w, n_h, subregions, filtered)


def dtw_distance(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Dynamic time warping alignment cost between two point sequences.

    Full warping window, Euclidean point cost. An empty sequence aligns
    with anything at zero cost (the first planning cycle has no history).
    """
    if not a or not b:
        return 0.0
    n, m = len(a), len(b)
    inf = math.inf
    dp = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            c = _dist(a[i], b[j])
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = inf
                if i > 0 and dp[i - 1][j] < best:
                    best = dp[i - 1][j]
                if j > 0 and dp[i][j - 1] < best:
                    best = dp[i][j - 1]
                if i > 0 and j > 0 and dp[i - 1][j - 1] < best:
                    best = dp[i - 1][j - 1]
            dp[i][j] = c + best
    return dp[n - 1][m - 1]


def sequence_revenue(
    order_centers: Sequence[Point],
    robot: Point,
    previous_centers: Sequence[Point],
    weights: SequenceWeights,
) -> float:
    """Revenue of visiting subregion centers in the given order.

    Each prefix contributes exp(-lambda1 * cumulative distance), where the
    first leg from the robot is weighted by lambda3 so the tour prefers to
    start nearby. The whole sum is scaled by exp(-lambda2 * DTW) against
    the previously adopted order (factor 1 when there is none).
    """
    if not order_centers:
        raise ValueError("order must be non-empty")
    cum = weights.lambda3 * _dist(robot, order_centers[0])
    total = math.exp(-weights.lambda1 * cum)
    for prev, cur in zip(order_centers, order_centers[1:]):
        cum += _dist(prev, cur)
        total += math.exp(-weights.lambda1 * cum)
    if previous_centers:
        total *= math.exp(-weights.lambda2 * dtw_distance(order_centers, previous_centers))
    return total


@njit(cache=True)
def _dtw_rows(prev_cost, perm):
    m = perm.shape[0]
    p = prev_cost.shape[1]
    dp = np.empty((m, p))
    for i in range(m):
        for j in range(p):
            c = prev_cost[perm[i], j]
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = 1e300
                if i > 0 and dp[i - 1, j] < best:
                    best = dp[i - 1, j]
                if j > 0 and dp[i, j - 1] < best:
                    best = dp[i, j - 1]
                if i > 0 and j > 0 and dp[i - 1, j - 1] < best:
                    best = dp[i - 1, j - 1]
            dp[i, j] = c + best
    return dp[m - 1, p - 1]


@njit(cache=True)
def _search_exhaustive(robot_d, pair_d, prev_cost, has_prev, lam1, lam2, lam3):
    """Lexicographic scan of all permutations; first maximum wins ties."""
    m = robot_d.shape[0]
    perm = np.arange(m)
    best = perm.copy()
    best_rev = -1.0
    first = True
    while True:
        cum = lam3 * robot_d[perm[0]]
        total = math.exp(-lam1 * cum)
        for i in range(1, m):
            cum += pair_d[perm[i - 1], perm[i]]
            total += math.exp(-lam1 * cum)
        if has_prev:
            total *= math.exp(-lam2 * _dtw_rows(prev_cost, perm))
        if first or total > best_rev:
            best_rev = total
            best[:] = perm
            first = False
        k = m - 2
        while k >= 0 and perm[k] >= perm[k + 1]:
            k -= 1
        if k < 0:
            break
        l = m - 1
        while perm[l] <= perm[k]:
            l -= 1
        perm[k], perm[l] = perm[l], perm[k]
        lo = k + 1
        hi = m - 1
        while lo < hi:
            perm[lo], perm[hi] = perm[hi], perm[lo]
            lo += 1
            hi -= 1
    return best, best_rev


EXHAUSTIVE_LIMIT = 8


def optimize_sequence(
    subgrid: SubregionGrid,
    robot: Point,
    previous_centers: Sequence[Point],
    weights: SequenceWeights,
    force_heuristic: bool = False,
) -> SequencePlan:
    """Choose the subregion visit order maximizing sequence_revenue.

    Up to EXHAUSTIVE_LIMIT populated subregions the search enumerates all
    permutations exactly, breaking revenue ties toward the
    lexicographically smallest index sequence. Beyond that (or when
    forced) it seeds with nearest insertion and hill-climbs with 2-opt
    segment reversals until no swap improves the revenue.
    """
    indices = list(subgrid.filtered)
    m = len(indices)
    if m == 0:
        raise ValueError("no populated subregions to sequence")
    centers = [subgrid.center_of(i) for i in indices]
    prev = list(previous_centers)

    if m == 1:
        rev = sequence_revenue(centers, robot, prev, weights)
        return SequencePlan(indices.copy(), rev, prev)

    if m <= EXHAUSTIVE_LIMIT and not force_heuristic:
        robot_d = np.array([_dist(robot, c) for c in centers])
        pair_d = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                pair_d[i, j] = _dist(centers[i], centers[j])
        if prev:
            prev_cost = np.empty((m, len(prev)))
            for i in range(m):
                for j, q in enumerate(prev):
                    prev_cost[i, j] = _dist(centers[i], q)
        else:
            prev_cost = np.zeros((m, 1))
        best, best_rev = _search_exhaustive(
            robot_d, pair_d, prev_cost, bool(prev),
            weights.lambda1, weights.lambda2, weights.lambda3,
        )
        order = [indices[k] for k in best]
        return SequencePlan(order, float(best_rev), prev)

    order_pos = _nearest_insertion(centers, robot, weights.lambda3)
    rev = sequence_revenue([centers[k] for k in order_pos], robot, prev, weights)
    improved = True
    while improved:
        improved = False
        for i in range(m - 1):
            for j in range(i + 1, m):
                candidate = order_pos[:i] + order_pos[i:j + 1][::-1] + order_pos[j + 1:]
                cand_rev = sequence_revenue(
                    [centers[k] for k in candidate], robot, prev, weights)
                if cand_rev > rev + 1e-15:
                    order_pos = candidate
                    rev = cand_rev
                    improved = True
                    break
            if improved:
                break
    order = [indices[k] for k in order_pos]
    return SequencePlan(order, rev, prev)


def _nearest_insertion(centers: list[Point], robot: Point, lam3: float) -> list[int]:
    """Open-path nearest insertion over center positions (index list)."""
    m = len(centers)
    start = min(range(m), key=lambda k: (_dist(robot, centers[k]), k))
    tour = [start]
    remaining = [k for k in range(m) if k != start]
    while remaining:
        nxt = min(
            remaining,
            key=lambda k: (min(_dist(centers[k], centers[t]) for t in tour), k),
        )
        remaining.remove(nxt)
        best_pos = 0
        best_cost = math.inf
        for pos in range(len(tour) + 1):
            cand = tour[:pos] + [nxt] + tour[pos:]
            cost = lam3 * _dist(robot, centers[cand[0]])
            for a, b in zip(cand, cand[1:]):
                cost += _dist(centers[a], centers[b])
            if cost < best_cost - 1e-15:
                best_cost = cost
                best_pos = pos
        tour.insert(best_pos, nxt)
    return tour


def current_subregion(plan: SequencePlan) -> int:
    """Head of the adopted visit order: the subregion to work on now."""
    if not plan.order:
        raise ValueError("plan is empty")
    return plan.order[0]


def remap_centers(previous_centers: Sequence[Point],
                  subgrid: SubregionGrid) -> list[Point]:
    """Re-express an old center sequence in the current segmentation.

    Subregion identity is positional, so after the bounding box grows each
    old center is matched to the nearest center of the new grid.
    """
    out: list[Point] = []
    for p in previous_centers:
        best = min(subgrid.subregions,
                   key=lambda sr: (_dist(sr.center, p), sr.index))
        out.append(best.center)
    return out
