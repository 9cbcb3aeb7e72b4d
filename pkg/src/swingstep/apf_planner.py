"""Potential-field planning over the local map, with force-based terrain
prediction.

U = U_att + U_rep on every free cell, with

    U_att = zeta * |p - goal|^2
    U_rep = eta * (1/rho - 1/d0)   for rho <= d0, else 0

rho being the distance to the nearest obstacle cell center.  Paths are
extracted by greedy 8-neighbor steepest descent.  When the descent stalls
in a basin, a best-first flood over U finds the nearest cell lower than
the stall value and descent resumes from there.  Cells closer than
`clearance` to an obstacle are not entered, which keeps sampled chords
off the real ground and leaves slack for terrain input that sits too low.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .cycloid import TrajectorySegment, polyline, second_half
from .geometry_map import (Box, Column, EndpointInterval, Heightfield,
                           LocalMap, Point, Region, Source, Wedge,
                           make_local_map)
from .leg_fsm import (AdjustmentCase, FsmConfig, PlanningError, StepCommand,
                      StopEvent, adjust_case1, adjust_case2, adjust_case3,
                      classify_stop)

# E, NE, N, NW, W, SW, S, SE: fixed order doubles as the tie-break
NEIGHBORS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

REACHED = "reached"
LOCAL_MINIMUM = "local_minimum"


@dataclass(frozen=True)
class ApfConfig:
    zeta: float = 10.0
    eta: float = 1000.0
    d0: float = 0.05
    h_limit: float = 0.5
    w_pre: float = 0.5
    theta_pre: float = 45.0          # degrees
    max_descent_steps: int = 20000
    clearance: float = 0.4
    max_escapes: int = 200
    repulsive_form: str = "linear"   # or "squared"

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")
        if self.h_limit < 0:
            raise ValueError("h_limit must be >= 0")
        if not self.w_pre > 0:
            raise ValueError("w_pre must be positive")
        if not 0 < self.theta_pre < 90:
            raise ValueError("theta_pre must be in (0, 90) degrees")
        if self.clearance < 0:
            raise ValueError("clearance must be >= 0")
        if self.repulsive_form not in ("linear", "squared"):
            raise ValueError(f"unknown repulsive form {self.repulsive_form!r}")


# --- potentials --------------------------------------------------------------

def attractive(p: Point, e: Point, zeta: float) -> float:
    return zeta * ((p.x - e.x) ** 2 + (p.z - e.z) ** 2)


def repulsive_from_distance(rho, eta: float, d0: float, form: str = "linear"):
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        inv = np.where(rho > 0, 1.0 / rho, np.inf)
    diff = inv - 1.0 / d0
    val = diff if form == "linear" else 0.5 * diff ** 2
    out = np.where(rho <= d0, eta * val, 0.0)
    return out if out.ndim else float(out)


def repulsive(p: Point, m: LocalMap, eta: float, d0: float,
              form: str = "linear") -> float:
    """Repulsive potential at p; inf when p sits on an obstacle."""
    rho = m.nearest_obstacle_distance(p)
    if rho == 0:
        return math.inf
    return float(repulsive_from_distance(rho, eta, d0, form))


def preset_obstacle(cmd: StepCommand, h_limit: float) -> Box:
    """Block that lifts the initial path off flat ground."""
    s, e = cmd.start, cmd.target
    lo, hi = s.x + h_limit, e.x - h_limit
    if lo > hi or h_limit <= 0:
        return Box(1.0, 0.0, 1.0, 0.0)
    return Box(lo, hi, s.z, s.z + h_limit)


def predict_flat(p_c: Point, w_pre: float):
    return [Box(p_c.x - w_pre, p_c.x + w_pre, -math.inf, p_c.z),
            Column(p_c.x, p_c.z)]


def predict_incline(p_c: Point, w_pre: float, theta_pre: float,
                    f_x_sign: float):
    """Wedge rising toward the obstacle: toward +x when f_x < 0."""
    if not 0 < theta_pre < 90:
        raise ValueError("theta_pre must be in (0, 90) degrees")
    slope = math.tan(math.radians(theta_pre))
    if f_x_sign > 0:
        slope = -slope
    return [Wedge(p_c.x - w_pre, p_c.x + w_pre, p_c.x, p_c.z, slope),
            Column(p_c.x, p_c.z)]


def shifted(shape, dx: float, dz: float):
    """Copy of a prediction shape translated by (dx, dz)."""
    if isinstance(shape, Box):
        return replace(shape, x_lo=shape.x_lo + dx, x_hi=shape.x_hi + dx,
                       z_lo=shape.z_lo + dz, z_hi=shape.z_hi + dz)
    if isinstance(shape, Wedge):
        return replace(shape, x_lo=shape.x_lo + dx, x_hi=shape.x_hi + dx,
                       x_ref=shape.x_ref + dx, z_ref=shape.z_ref + dz)
    if isinstance(shape, Column):
        return replace(shape, x=shape.x + dx, z_hi=shape.z_hi + dz)
    raise TypeError(f"cannot shift {type(shape).__name__}")


def x_extent(shape) -> Tuple[float, float]:
    if isinstance(shape, Column):
        return shape.x, shape.x
    return shape.x_lo, shape.x_hi


# --- potential grid ----------------------------------------------------------

@dataclass
class PotentialGrid:
    map: LocalMap
    goal: Tuple[int, int]
    u: np.ndarray          # inf on obstacle cells
    rho: np.ndarray
    passable: np.ndarray
    cfg: ApfConfig

    @property
    def goal_point(self) -> Point:
        return self.map.center(*self.goal)

    def effective(self) -> np.ndarray:
        return np.where(self.passable, self.u, np.inf)

    def _compute(self, sl):
        m, cfg = self.map, self.cfg
        g = self.goal_point
        xs, zs = m.xs[sl[0]], m.zs[sl[1]]
        att = cfg.zeta * ((xs[:, None] - g.x) ** 2 + (zs[None, :] - g.z) ** 2)
        rho = self.rho[sl]
        rep = repulsive_from_distance(rho, cfg.eta, cfg.d0, cfg.repulsive_form)
        obst = m.obstacles[sl]
        self.u[sl] = np.where(obst, np.inf, att + rep)
        self.passable[sl] = ~obst & (rho >= cfg.clearance - 1e-9)

    def update(self, changed: np.ndarray) -> None:
        """Refresh after obstacles were added in `changed`.

        Only cells within the repulsion/clearance reach of the new
        obstacles can change, so the work is confined to that window.
        """
        if not changed.any():
            return
        m = self.map
        reach = math.ceil(max(self.cfg.d0, self.cfg.clearance) / m.resolution) + 1
        ii, jj = np.nonzero(changed)
        i0, i1 = max(ii.min() - reach, 0), min(ii.max() + reach + 1, m.shape[0])
        j0, j1 = max(jj.min() - reach, 0), min(jj.max() + reach + 1, m.shape[1])
        sl = (slice(i0, i1), slice(j0, j1))
        d_new = ndimage.distance_transform_edt(~changed[sl], sampling=m.resolution)
        self.rho[sl] = np.minimum(self.rho[sl], d_new)
        self._compute(sl)


def _ground_tops(m: LocalMap) -> np.ndarray:
    """Per-column height of the top of the highest obstacle (z_min if none)."""
    obst = m.obstacles
    nz = obst.shape[1]
    has = obst.any(axis=1)
    top_row = nz - 1 - np.argmax(obst[:, ::-1], axis=1)
    tops = m.region.z_min + (top_row + 1) * m.resolution
    return np.where(has, np.minimum(tops, m.region.z_max), m.region.z_min)


def snap_goal(m: LocalMap, passable: np.ndarray, e: Point,
              en: Optional[EndpointInterval] = None,
              support_threshold: Optional[float] = None,
              ground: Optional[LocalMap] = None) -> Optional[Tuple[int, int]]:
    """Cell used as the descent goal.

    E's own cell when passable; otherwise the landing cell (lowest passable
    cell of a column) inside En nearest to E, preferring columns whose
    ground slope would pass the support test.
    """
    ie, je = m.column(m.region.clamp_x(e.x)), m.row(e.z)
    if passable[ie, je]:
        return ie, je
    if en is None:
        en = EndpointInterval(e.x, 0.0, m.region)
    cols = np.flatnonzero((m.xs >= en.x_lo - 1e-9) & (m.xs <= en.x_hi + 1e-9))
    if not cols.size:
        cols = np.array([ie])
    cand = []
    for i in cols:
        rows = np.flatnonzero(passable[i])
        if rows.size:
            cand.append((int(i), int(rows[0])))
    if not cand:
        return None
    ci = np.array([c[0] for c in cand])
    cj = np.array([c[1] for c in cand])
    cost = (m.xs[ci] - e.x) ** 2 + (m.zs[cj] - e.z) ** 2
    if support_threshold is not None:
        tops = _ground_tops(ground if ground is not None else m)
        k = max(1, round(0.2 / m.resolution))
        lo = np.clip(ci - k, 0, len(tops) - 1)
        hi = np.clip(ci + k, 0, len(tops) - 1)
        slope = (tops[hi] - tops[lo]) / np.maximum((hi - lo) * m.resolution, 1e-12)
        ok = 1.0 / np.sqrt(1.0 + slope ** 2) >= support_threshold
        if ok.any():
            cost = np.where(ok, cost, np.inf)
    best = int(np.argmin(cost))
    return cand[best]


def build_potential(m: LocalMap, e: Point, cfg: ApfConfig,
                    en: Optional[EndpointInterval] = None,
                    support_threshold: Optional[float] = None,
                    ground: Optional[LocalMap] = None) -> PotentialGrid:
    rho = m.distance_field().copy()
    passable = ~m.obstacles & (rho >= cfg.clearance - 1e-9)
    goal = snap_goal(m, passable, e, en, support_threshold, ground)
    if goal is None:
        raise PlanningError("no free cell in the endpoint interval")
    grid = PotentialGrid(m, goal, np.empty(m.shape), rho,
                         np.empty(m.shape, dtype=bool), cfg)
    grid._compute((slice(None), slice(None)))
    return grid


# --- path extraction ---------------------------------------------------------

@dataclass
class Descent:
    cells: List[Tuple[int, int]]
    outcome: str

    def points(self, m: LocalMap) -> List[Point]:
        return [m.center(i, j) for i, j in self.cells]


def _padded(u):
    return np.pad(u, 1, constant_values=np.inf)


def descend_cells(ueff: np.ndarray, start: Tuple[int, int],
                  goal: Tuple[int, int], max_steps: int) -> Descent:
    up = _padded(ueff)
    i, j = start
    cells = [start]
    for _ in range(max_steps):
        if (i, j) == goal:
            return Descent(cells, REACHED)
        best = up[i + 1, j + 1]
        nxt = None
        for di, dj in NEIGHBORS:
            v = up[i + 1 + di, j + 1 + dj]
            if v < best:
                best, nxt = v, (i + di, j + dj)
        if nxt is None:
            return Descent(cells, LOCAL_MINIMUM)
        i, j = nxt
        cells.append(nxt)
    return Descent(cells, LOCAL_MINIMUM)


def descend(grid: PotentialGrid, start: Point, cfg: Optional[ApfConfig] = None):
    """Greedy steepest descent from the cell holding `start`.

    Returns (segment through cell centers, outcome).
    """
    cfg = cfg or grid.cfg
    m = grid.map
    s = m.cell_of(start)
    if not grid.passable[s]:
        raise ValueError(f"start {start} is not on a passable cell")
    d = descend_cells(grid.effective(), s, grid.goal, cfg.max_descent_steps)
    seg = polyline(d.points(m), m.resolution / 2, "apf", phase="apf")
    return seg, d.outcome


def escape_cells(ueff: np.ndarray, start: Tuple[int, int]) -> Optional[List[Tuple[int, int]]]:
    """Best-first flood from a stall cell to the first cell with lower U.

    Returns the connecting cell chain (start excluded) or None when the
    whole reachable region sits at or above the stall value.
    """
    nx, nz = ueff.shape
    u0 = ueff[start]
    seen = np.zeros(ueff.shape, dtype=bool)
    seen[start] = True
    parent = {start: None}
    heap = [(u0, 0, start)]
    counter = 1
    while heap:
        u, _, c = heapq.heappop(heap)
        if u < u0:
            chain = []
            while c != start:
                chain.append(c)
                c = parent[c]
            return chain[::-1]
        ci, cj = c
        for di, dj in NEIGHBORS:
            ni, nj = ci + di, cj + dj
            if 0 <= ni < nx and 0 <= nj < nz and not seen[ni, nj]:
                seen[ni, nj] = True
                v = ueff[ni, nj]
                if v < np.inf:
                    parent[(ni, nj)] = c
                    heapq.heappush(heap, (v, counter, (ni, nj)))
                    counter += 1
    return None


def find_path(grid: PotentialGrid, start: Tuple[int, int], max_escapes: int,
              max_steps: int):
    """Descent runs joined by escapes.

    Returns (cells, outcome, runs) where runs are the individual descent
    chains, each strictly decreasing in U.
    """
    ueff = grid.effective()
    cells = [start]
    runs = []
    cur = start
    for _ in range(max_escapes + 1):
        d = descend_cells(ueff, cur, grid.goal, max_steps)
        runs.append(d.cells)
        cells.extend(d.cells[1:])
        if d.outcome == REACHED:
            return cells, REACHED, runs
        chain = escape_cells(ueff, d.cells[-1])
        if chain is None:
            break
        cells.extend(chain)
        cur = chain[-1]
    return cells, LOCAL_MINIMUM, runs


def snap_start(grid: PotentialGrid, p: Point,
               side: float = 0.0) -> Optional[Tuple[int, int]]:
    """Passable cell to start from: straight up the column when possible.

    With side < 0 (> 0) the column is picked so its center does not lie
    to the right (left) of p, so the first move never heads back into the
    surface that was just touched.
    """
    m = grid.map
    i, j = m.cell_of(p)
    if side < 0 and m.xs[i] > p.x and i > 0:
        i -= 1
    elif side > 0 and m.xs[i] < p.x and i < m.shape[0] - 1:
        i += 1
    col = grid.passable[i]
    if col[j]:
        return i, j
    above = np.flatnonzero(col[j:])
    if above.size:
        return i, j + int(above[0])
    ii, jj = np.nonzero(grid.passable)
    if not ii.size:
        return None
    d2 = (m.xs[ii] - p.x) ** 2 + (m.zs[jj] - p.z) ** 2
    k = int(np.argmin(d2))
    return int(ii[k]), int(jj[k])


# --- whole-strategy planner --------------------------------------------------

def _sign(v: float) -> float:
    return -1.0 if v < 0 else 1.0


class ApfPlanner:
    """Per-episode planner for the strategy with terrain information.

    Owns the episode's local map (terrain input, preset block, and the
    predictions accumulated from force feedback) and its potential grid.
    """

    def __init__(self, cmd: StepCommand, input_height, fsm_cfg: FsmConfig,
                 apf_cfg: ApfConfig, region: Region, resolution: float):
        self.cmd = cmd
        self.fsm_cfg = fsm_cfg
        self.cfg = apf_cfg
        self.map = make_local_map(region, Heightfield(input_height), resolution)
        self.map.add_obstacle(preset_obstacle(cmd, apf_cfg.h_limit), Source.PRESET)
        self.en = cmd.interval(region)
        self.grid: Optional[PotentialGrid] = None
        self.fallbacks = 0
        self.escapes = 0
        self.predictions: list = []

    @classmethod
    def from_map(cls, m: LocalMap, cmd: StepCommand, fsm_cfg: FsmConfig,
                 apf_cfg: ApfConfig) -> "ApfPlanner":
        self = cls.__new__(cls)
        self.cmd, self.fsm_cfg, self.cfg = cmd, fsm_cfg, apf_cfg
        self.map = m
        self.en = cmd.interval(m.region)
        self.grid = None
        self.fallbacks = 0
        self.escapes = 0
        self.predictions = []
        return self

    def remember(self, shapes) -> None:
        """Seed the map with obstacles predicted during an earlier attempt."""
        shapes = list(shapes)
        self.map.add_obstacle(shapes, Source.PREDICTED)
        self.predictions.extend(shapes)
        self.grid = None

    @property
    def spacing(self) -> float:
        return self.map.resolution / 2

    def terrain_map(self) -> LocalMap:
        """The map minus the preset block, for formulas that probe real ground."""
        return self.map.without(Source.PRESET)

    def _grid(self, changed: Optional[np.ndarray]) -> PotentialGrid:
        if self.grid is not None and changed is not None:
            self.grid.update(changed)
            if self.grid.passable[self.grid.goal]:
                return self.grid
        self.grid = build_potential(self.map, self.cmd.target, self.cfg, self.en,
                                    self.fsm_cfg.support_threshold,
                                    self.terrain_map())
        return self.grid

    def initial(self) -> List[TrajectorySegment]:
        return self._plan_from(self.cmd.start, "initial")

    def adjust(self, case: AdjustmentCase, stop: StopEvent) -> List[TrajectorySegment]:
        p = stop.point
        if case is AdjustmentCase.CASE1:
            return [adjust_case1(self.terrain_map(), p)]
        if case is AdjustmentCase.CASE2:
            return [adjust_case2(self.terrain_map(), p, self.cmd, _sign(stop.force.f_x))]
        if case is AdjustmentCase.CASE3:
            shapes = predict_flat(p, self.cfg.w_pre)
        else:
            shapes = predict_incline(p, self.cfg.w_pre, self.cfg.theta_pre,
                                     _sign(stop.force.f_x))
        before = self.map.cells.copy()
        self.map.add_obstacle(shapes, Source.PREDICTED)
        self.predictions.extend(shapes)
        changed = self.map.cells != before
        return self._plan_from(p, f"case{case.value}", changed,
                               _sign(stop.force.f_x))

    def _plan_from(self, p: Point, source: str,
                   changed: Optional[np.ndarray] = None,
                   side: float = 0.0) -> List[TrajectorySegment]:
        try:
            grid = self._grid(changed)
        except PlanningError:
            return self._fallback(p, [])
        start = snap_start(grid, p, side)
        if start is None:
            return self._fallback(p, [])
        m = self.map
        cells, outcome, runs = find_path(grid, start, self.cfg.max_escapes,
                                         self.cfg.max_descent_steps)
        self.escapes += len(runs) - 1
        c0 = m.center(*start)
        pts = [p]
        if c0.z > p.z:
            pts.append(Point(p.x, c0.z))
        pts.extend(m.center(i, j) for i, j in cells)
        pts = _dedupe(pts)
        path = polyline(pts, self.spacing, f"apf_{source}", phase="apf")
        if outcome != REACHED:
            return self._fallback(path.end, [path])
        end = path.end
        ground = self.terrain_map().lower_boundary(end.x, end.z)
        touch = second_half(end, 0.0, max(end.z - ground, 0.0), self.spacing,
                            f"apf_{source}_touchdown")
        return [path, touch]

    def _fallback(self, p: Point, partial: List[TrajectorySegment]):
        """Blind continuation from wherever the field gave up."""
        self.fallbacks += 1
        seg = adjust_case3(self.terrain_map(), p, self.cmd, self.fsm_cfg)
        return partial + [TrajectorySegment(seg.samples, seg.phase,
                                            "apf_fallback", seg.t)]


def _dedupe(pts: Sequence[Point]) -> List[Point]:
    out = [pts[0]]
    for q in pts[1:]:
        if q != out[-1]:
            out.append(q)
    return out


def plan_with_terrain(m: LocalMap, cmd: StepCommand, apf_cfg: ApfConfig,
                      fsm_cfg: FsmConfig,
                      stop: Optional[StopEvent] = None) -> List[TrajectorySegment]:
    """One planning call of the strategy with terrain information.

    `m` must already hold the terrain and the preset block; it is updated
    in place with any prediction the stop triggers.
    """
    planner = ApfPlanner.from_map(m, cmd, fsm_cfg, apf_cfg)
    if stop is None:
        return planner.initial()
    case = classify_stop(stop, planner.en, fsm_cfg)
    return planner.adjust(case, stop)
