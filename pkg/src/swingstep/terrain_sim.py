"""Single-leg stepping experiments on random spline terrain.

Ground truth is a natural cubic spline through 15 knots at x = 0..14.  The
foot follows planned segments until the first sample that reaches the
ground; the contact normal is fed back as the sensed force.  Batches of
seeded episodes give the aggregate tables.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .apf_planner import ApfConfig, ApfPlanner
from .cycloid import TrajectorySegment, arc_length, polyline
from .geometry_map import (DEFAULT_REGION, DEFAULT_RESOLUTION, ForceSample,
                           Point, Region, make_local_map)
from .leg_fsm import (ABORT, GRANT, RETURN_COMPLETE, Action, AdjustmentCase,
                      FsmConfig, LegFsm, PlannerDefect, PlanningError, State,
                      StepCommand, StopEvent, adjust_case1, adjust_case2,
                      adjust_case3, adjust_case4, detect_support,
                      initial_trajectory, return_trajectory)

BASELINE = 3.0
KNOT_X = np.arange(15, dtype=float)
PINNED = (0, 1)
CONTACT_TOL = 1e-3
BISECT_TOL = 1e-6

DEFAULT_COMMAND = StepCommand(Point(0.0, 3.0), Point(8.0, 3.0), 1.0)


# --- terrain -----------------------------------------------------------------

@dataclass(frozen=True)
class TerrainParams:
    h_up: float = 0.0
    h_down: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.h_up < 0 or self.h_down < 0:
            raise ValueError("h_up and h_down must be >= 0")


class TerrainProfile:
    """z = g(x): natural cubic spline through the knots."""

    def __init__(self, knots_x, knots_z):
        kx = np.asarray(knots_x, dtype=float)
        kz = np.asarray(knots_z, dtype=float)
        if kx.ndim != 1 or kx.shape != kz.shape or len(kx) < 2:
            raise ValueError("need matching 1-D knot arrays with >= 2 knots")
        if np.any(np.diff(kx) <= 0):
            raise ValueError("knot x must be strictly increasing")
        self.knots_x, self.knots_z = kx, kz
        self._spline = CubicSpline(kx, kz, bc_type="natural")
        self._deriv = self._spline.derivative()

    def __call__(self, x):
        out = self._spline(x)
        return float(out) if np.ndim(out) == 0 else out

    height = __call__

    def slope(self, x):
        out = self._deriv(x)
        return float(out) if np.ndim(out) == 0 else out

    def __eq__(self, other):
        return (isinstance(other, TerrainProfile)
                and np.array_equal(self.knots_x, other.knots_x)
                and np.array_equal(self.knots_z, other.knots_z))

    def __repr__(self):
        return f"TerrainProfile(knots_z={self.knots_z.tolist()})"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# baseline={BASELINE:g}\n")
            w = csv.writer(fh)
            w.writerow(["x", "z"])
            for x, z in zip(self.knots_x, self.knots_z):
                w.writerow([repr(float(x)), repr(float(z))])

    @classmethod
    def read_csv(cls, path) -> "TerrainProfile":
        with open(path, newline="") as fh:
            rows = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
        reader = csv.reader(rows)
        header = next(reader)
        if [h.strip() for h in header] != ["x", "z"]:
            raise ValueError(f"bad terrain header {header}")
        xs, zs = zip(*((float(a), float(b)) for a, b in reader))
        return cls(xs, zs)


def flat_terrain(z: float = BASELINE) -> TerrainProfile:
    return TerrainProfile(KNOT_X, np.full(len(KNOT_X), z))


def random_terrain(params: TerrainParams, stream: Sequence[int] = ()) -> TerrainProfile:
    """Knots drawn uniformly from [3 - h_down, 3 + h_up]; the first two
    knots are pinned to the baseline so the start foothold lies on the
    ground."""
    rng = np.random.default_rng([params.seed, *stream])
    z = rng.uniform(BASELINE - params.h_down, BASELINE + params.h_up, len(KNOT_X))
    z[list(PINNED)] = BASELINE
    return TerrainProfile(KNOT_X, z)


def perturb_terrain(profile: TerrainProfile, delta_h: float,
                    seed) -> TerrainProfile:
    """Lower three randomly chosen unpinned interior knots by delta_h."""
    if delta_h < 0:
        raise ValueError("delta_h must be >= 0")
    n = len(profile.knots_z)
    candidates = np.array([k for k in range(1, n - 1) if k not in PINNED])
    seq = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    rng = np.random.default_rng(seq)
    pick = rng.choice(candidates, size=3, replace=False)
    z = profile.knots_z.copy()
    z[pick] -= delta_h
    return TerrainProfile(profile.knots_x, z)


# --- contact -----------------------------------------------------------------

@dataclass(frozen=True)
class CollisionReport:
    contact: Point
    p_c: Point          # free end of the final bisection bracket
    normal: Tuple[float, float]
    index: int          # first sample at or below the ground


def unit_normal(profile: TerrainProfile, x: float) -> Tuple[float, float]:
    d = profile.slope(x)
    n = math.hypot(d, 1.0)
    return -d / n, 1.0 / n


def sweep_collision(profile: TerrainProfile, segment: TrajectorySegment,
                    contact_tol: float = CONTACT_TOL,
                    ignore_last: bool = False) -> Optional[CollisionReport]:
    """First contact of the sampled path with the ground, or None.

    A sample touching the surface counts as contact.  The chord into the
    ground is bisected to BISECT_TOL.  With ignore_last the final sample is
    allowed to rest on the surface (a planned landing on a known foothold).
    """
    s = segment.samples
    g = profile(s[:, 0])
    gap = s[:, 1] - g
    if gap[0] < -contact_tol:
        raise ValueError(f"segment starts {-gap[0]:.3g} below the ground at {segment.origin}")
    hit = np.flatnonzero(gap[1:] <= 0.0)
    if ignore_last:
        hit = hit[hit + 1 < len(s) - 1]
    if not hit.size:
        return None
    i = int(hit[0]) + 1
    a, b = s[i - 1], s[i]
    chord = math.hypot(*(b - a))
    lo, hi = 0.0, 1.0

    def h(f):
        p = a + f * (b - a)
        return p[1] - profile(p[0])

    while (hi - lo) * chord > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    pc = a + lo * (b - a)
    hit_pt = a + hi * (b - a)
    contact = Point(float(hit_pt[0]), float(profile(hit_pt[0])))
    return CollisionReport(contact, Point(float(pc[0]), float(pc[1])),
                           unit_normal(profile, contact.x), i)


def force_from_normal(report: CollisionReport) -> ForceSample:
    return ForceSample(*report.normal)


# --- planners ----------------------------------------------------------------

def _sign(v: float) -> float:
    return -1.0 if v < 0 else 1.0


class BlindPlanner:
    """The strategy without terrain information: the map is the bare window."""

    def __init__(self, cmd: StepCommand, fsm_cfg: FsmConfig,
                 region: Region = DEFAULT_REGION,
                 resolution: float = DEFAULT_RESOLUTION):
        self.cmd, self.cfg = cmd, fsm_cfg
        self.map = make_local_map(region, None, resolution)
        self.fallbacks = 0
        self.escapes = 0

    def initial(self) -> List[TrajectorySegment]:
        return [initial_trajectory(self.map, self.cmd, self.cfg)]

    def adjust(self, case: AdjustmentCase, stop: StopEvent) -> List[TrajectorySegment]:
        m, p = self.map, stop.point
        if case is AdjustmentCase.CASE1:
            return [adjust_case1(m, p)]
        if case is AdjustmentCase.CASE2:
            return [adjust_case2(m, p, self.cmd, _sign(stop.force.f_x))]
        if case is AdjustmentCase.CASE3:
            return [adjust_case3(m, p, self.cmd, self.cfg)]
        return adjust_case4(m, p, self.cmd, self.cfg, _sign(stop.force.f_x))

    def go_back(self, p: Point) -> List[TrajectorySegment]:
        return return_trajectory(self.map, p, self.cmd)


class _ApfEpisodePlanner(ApfPlanner):
    def go_back(self, p: Point) -> List[TrajectorySegment]:
        return return_trajectory(self.terrain_map(), p, self.cmd)


def make_planner(strategy: str, cmd: StepCommand, fsm_cfg: FsmConfig,
                 apf_cfg: ApfConfig, input_terrain: Optional[TerrainProfile],
                 region: Region, resolution: float):
    if strategy == "blind":
        return BlindPlanner(cmd, fsm_cfg, region, resolution)
    if strategy == "apf":
        if input_terrain is None:
            raise ValueError("apf strategy needs input terrain")
        return _ApfEpisodePlanner(cmd, input_terrain, fsm_cfg, apf_cfg,
                                  region, resolution)
    raise ValueError(f"unknown strategy {strategy!r}")


# --- episode -----------------------------------------------------------------

@dataclass
class EpisodeResult:
    success: bool
    step_length: float
    collisions: int            # contacts that did not end in support
    contacts: int
    trajectory_length: float
    adjustments: int
    final_state: State
    final_point: Point
    returned: bool = False
    fallbacks: int = 0
    predictions: list = field(default_factory=list, repr=False, compare=False)
    trace: List[Tuple[TrajectorySegment, str]] = field(default_factory=list,
                                                       repr=False, compare=False)

    def row(self) -> List[str]:
        return [str(int(self.success)), repr(self.step_length), str(self.collisions),
                str(self.contacts), repr(self.trajectory_length), str(self.adjustments),
                self.final_state.value, repr(self.final_point.x), repr(self.final_point.z)]


def _run_segments(truth, segments, tag, trace, ignore_last=False):
    """Execute segments in order until the first contact.

    Returns (stop point, report or None, executed arc length).
    """
    length = 0.0
    end = segments[0].origin
    for k, seg in enumerate(segments):
        rep = sweep_collision(truth, seg, ignore_last=ignore_last and k == len(segments) - 1)
        if rep is None:
            trace.append((seg, tag))
            length += arc_length(seg)
            end = seg.end
            continue
        cut = seg.truncated(rep.index, rep.p_c)
        trace.append((cut, tag))
        length += arc_length(cut)
        return rep.p_c, rep, length
    return end, None, length


def _safe_return(truth, p: Point, start: Point, ceiling: float, spacing: float):
    """Straight up to the ceiling, across, and straight down onto the start."""
    pts = [p, Point(p.x, ceiling), Point(start.x, ceiling), start]
    pts = [q for k, q in enumerate(pts) if k == 0 or q != pts[k - 1]]
    if len(pts) == 1:
        return []
    seg = polyline(pts, spacing, "return_safe", phase="return_safe")
    if sweep_collision(truth, seg, ignore_last=True) is not None:
        raise RuntimeError(f"no collision-free way back from {p}")
    return [seg]


def execute_step(truth: TerrainProfile, strategy: str, cmd: StepCommand = DEFAULT_COMMAND,
                 input_terrain: Optional[TerrainProfile] = None,
                 fsm_cfg: FsmConfig = FsmConfig(), apf_cfg: ApfConfig = ApfConfig(),
                 region: Region = DEFAULT_REGION,
                 resolution: float = DEFAULT_RESOLUTION,
                 prior_predictions: Sequence = ()) -> EpisodeResult:
    """Run one swing against the ground truth until Support or a completed Return.

    prior_predictions are obstacle shapes (local frame) learned by touch in
    an earlier attempt from the same foothold; only the apf strategy uses them.
    """
    gap = cmd.start.z - truth(cmd.start.x)
    if abs(gap) > CONTACT_TOL:
        raise ValueError(f"start {cmd.start} is {gap:.3g} off the ground")
    if strategy == "apf" and input_terrain is None:
        input_terrain = truth
    planner = make_planner(strategy, cmd, fsm_cfg, apf_cfg, input_terrain,
                           region, resolution)
    if prior_predictions and strategy == "apf":
        planner.remember(prior_predictions)
    fsm = LegFsm(cmd, fsm_cfg, region)
    trace: List[Tuple[TrajectorySegment, str]] = []
    contacts = collisions = 0
    total = 0.0
    en = cmd.interval(region)
    p = cmd.start

    action = fsm.handle(GRANT)
    try:
        segments = planner.initial()
    except PlanningError:
        segments = None
    # N_limit adjustments + initial + return
    for _ in range(fsm_cfg.n_limit + 3):
        if segments is None:
            action = fsm.handle(ABORT)
        if action is Action.EXECUTE_RETURN:
            break
        tag = fsm.state.name.value
        p, rep, length = _run_segments(truth, segments, tag, trace)
        total += length
        force = force_from_normal(rep) if rep else None
        stop = StopEvent(p, force, rep is None)
        if rep is not None:
            contacts += 1
        try:
            action = fsm.handle(stop)
        except PlannerDefect:
            collisions += rep is not None
            segments = None
            continue
        if fsm.state.name is State.SUPPORT:
            break
        collisions += rep is not None
        if action is Action.EXECUTE_RETURN:
            break
        try:
            segments = planner.adjust(fsm.state.case, stop)
        except PlanningError:
            segments = None
    else:
        raise RuntimeError("episode did not terminate")

    returned = fsm.state.name is State.RETURN
    if returned:
        segs = planner.go_back(p)
        q, rep, length = _run_segments(truth, segs, "return", trace, ignore_last=True)
        total += length
        if rep is not None:
            contacts += 1
            collisions += 1
            safe = _safe_return(truth, q, cmd.start, region.z_max, resolution / 2)
            for seg in safe:
                trace.append((seg, "return"))
                total += arc_length(seg)
        fsm.enter_return_stage(2)
        fsm.handle(RETURN_COMPLETE)
        p = cmd.start

    success = (not returned and fsm.state.name is State.SUPPORT and en.contains(p))
    return EpisodeResult(
        success=success,
        step_length=(p.x - cmd.start.x) if success else 0.0,
        collisions=int(collisions),
        contacts=contacts,
        trajectory_length=total,
        adjustments=fsm.state.adjustments,
        final_state=fsm.state.name,
        final_point=p,
        returned=returned,
        fallbacks=planner.fallbacks,
        predictions=list(getattr(planner, "predictions", [])),
        trace=trace,
    )


def baseline_success(truth: TerrainProfile, cmd: StepCommand = DEFAULT_COMMAND,
                     fsm_cfg: FsmConfig = FsmConfig(),
                     region: Region = DEFAULT_REGION,
                     resolution: float = DEFAULT_RESOLUTION) -> bool:
    """Initial blind trajectory only: does its first contact give support?"""
    m = make_local_map(region, None, resolution)
    seg = initial_trajectory(m, cmd, fsm_cfg)
    rep = sweep_collision(truth, seg)
    if rep is None:
        return False
    return detect_support(rep.p_c, cmd.interval(region), force_from_normal(rep), fsm_cfg)


# --- batches -----------------------------------------------------------------

@dataclass(frozen=True)
class BatchRow:
    param: str
    h_up: float
    h_down: float
    delta_h: Optional[float]
    step_length: float
    collisions: float
    trajectory_length: float
    success_rate: float
    baseline_success_rate: Optional[float]


RESULT_COLUMNS = ["param", "h_up", "h_down", "delta_h", "step_length", "collisions",
                  "trajectory_length", "success_rate", "baseline_success_rate"]


@dataclass(frozen=True)
class _Task:
    strategy: str
    params: TerrainParams
    index: int
    delta_h: Optional[float]
    fsm_cfg: FsmConfig
    apf_cfg: ApfConfig
    region: Region
    resolution: float
    baseline: bool


def terrain_pair(params: TerrainParams, index: int, delta_h: Optional[float]):
    """(truth, input) for terrain number `index` of a seeded batch."""
    truth = random_terrain(params, (index,))
    if not delta_h:
        return truth, truth
    return truth, perturb_terrain(truth, delta_h, [params.seed, index, 1])


def _run_task(task: _Task):
    truth, given = terrain_pair(task.params, task.index, task.delta_h)
    res = execute_step(truth, task.strategy, DEFAULT_COMMAND, given,
                       task.fsm_cfg, task.apf_cfg, task.region, task.resolution)
    base = None
    if task.baseline:
        base = baseline_success(truth, DEFAULT_COMMAND, task.fsm_cfg,
                                task.region, task.resolution)
    res.trace = []
    res.predictions = []
    return res, base


def run_episodes(tasks, workers: int = 1):
    if workers <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=4))


def aggregate(param: str, params: TerrainParams, delta_h, results) -> BatchRow:
    eps = [r for r, _ in results]
    wins = [r for r in eps if r.success]
    bases = [b for _, b in results if b is not None]
    n = len(eps)
    return BatchRow(
        param=param, h_up=params.h_up, h_down=params.h_down, delta_h=delta_h,
        step_length=float(np.mean([r.step_length for r in wins])) if wins else 0.0,
        collisions=float(np.mean([r.collisions for r in eps])),
        trajectory_length=float(np.mean([r.trajectory_length for r in eps])),
        success_rate=len(wins) / n,
        baseline_success_rate=(sum(bases) / len(bases)) if bases else None,
    )


def run_batch(strategy: str, grid: Sequence[Tuple[float, float, Optional[float]]],
              n_terrains: int, base_seed: int = 0,
              fsm_cfg: FsmConfig = FsmConfig(), apf_cfg: ApfConfig = ApfConfig(),
              region: Region = DEFAULT_REGION, resolution: float = DEFAULT_RESOLUTION,
              workers: int = 1, baseline: Optional[bool] = None) -> List[BatchRow]:
    """One row per (h_up, h_down, delta_h) entry of `grid`.

    Terrain k of every row is drawn from the stream (base_seed, k), so rows
    that share (h_up, h_down) see the same ground truth.
    """
    if n_terrains < 1:
        raise ValueError("n_terrains must be >= 1")
    if baseline is None:
        baseline = strategy == "blind"
    tasks, keys = [], []
    for h_up, h_down, dh in grid:
        params = TerrainParams(h_up, h_down, base_seed)
        for k in range(n_terrains):
            tasks.append(_Task(strategy, params, k, dh, fsm_cfg, apf_cfg,
                               region, resolution, baseline))
        keys.append((params, dh))
    results = run_episodes(tasks, workers)
    rows = []
    for r, (params, dh) in enumerate(keys):
        chunk = results[r * n_terrains:(r + 1) * n_terrains]
        label = f"{params.h_up:g},{params.h_down:g}" if dh is None else f"{dh:g}"
        rows.append(aggregate(label, params, dh, chunk))
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def format_results(rows: Sequence[BatchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([r.param, _cell(float(r.h_up)), _cell(float(r.h_down)),
                    _cell(None if r.delta_h is None else float(r.delta_h)),
                    _cell(r.step_length), _cell(r.collisions),
                    _cell(r.trajectory_length), _cell(r.success_rate),
                    _cell(r.baseline_success_rate)])
    return buf.getvalue()


def write_results(rows: Sequence[BatchRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_results(rows))


def write_trace(result: EpisodeResult, path) -> None:
    """Executed samples tagged with the FSM state that produced them."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment", "state", "source", "x", "z"])
        for k, (seg, tag) in enumerate(result.trace):
            for x, z in seg.samples:
                w.writerow([k, tag, seg.source, repr(float(x)), repr(float(z))])
