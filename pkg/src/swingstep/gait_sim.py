"""Planar static-walk quadruped crossing a flat / slope / step course.

The robot is reduced to the sagittal plane: four feet at fixed x-offsets
from the body center, one swinging at a time in the order 1, 3, 2, 4.
Every swing is a single-leg episode solved in the leg's local window,
whose origin sits 3 below the current foot so that the foot starts at the
usual local point (0, 3).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .apf_planner import ApfConfig, shifted, x_extent
from .geometry_map import (DEFAULT_RESOLUTION, Heightfield, LocalMap, Point,
                           Region, make_local_map)
from .leg_fsm import FsmConfig, StepCommand
from .terrain_sim import CONTACT_TOL, EpisodeResult, execute_step

GAIT_ORDER = (1, 3, 2, 4)
LEG_NAMES = {1: "FL", 2: "FR", 3: "RR", 4: "RL"}
LOCAL_START_Z = 3.0


@dataclass(frozen=True)
class RobotModel:
    length: float = 60.0
    width: float = 60.0
    height: float = 50.0
    stride: float = 8.0
    allowance: float = 1.0
    leg_scale: float = 1.0
    window: Region = Region(0.0, 14.0, 0.0, 14.0)

    @property
    def offsets(self) -> Dict[int, float]:
        half = self.length / 2
        return {1: half, 2: half, 3: -half, 4: -half}

    @property
    def leg_window(self) -> Region:
        w, s = self.window, self.leg_scale
        return Region(w.x_min * s, w.x_max * s, w.z_min * s, w.z_max * s)


class PiecewiseProfile:
    """Piecewise-linear ground z = g(x), flat beyond the end points."""

    def __init__(self, xs, zs):
        self.xs = np.asarray(xs, dtype=float)
        self.zs = np.asarray(zs, dtype=float)
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("profile x must be strictly increasing")

    def __call__(self, x):
        out = np.interp(x, self.xs, self.zs)
        return float(out) if np.ndim(out) == 0 else out

    def slope(self, x):
        d = np.diff(self.zs) / np.diff(self.xs)
        k = np.clip(np.searchsorted(self.xs, x, side="right") - 1, -1, len(d))
        out = np.where((k >= 0) & (k < len(d)), d[np.clip(k, 0, len(d) - 1)], 0.0)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CourseSpec:
    length: float = 300.0
    slope_start: float = 100.0
    slope_end: float = 200.0
    slope_deg: float = 10.0
    step_x: float = 230.0
    step_height: float = 5.0
    step_ramp: float = 0.01     # the step is a very steep ramp, not a jump
    margin: float = 120.0       # flat run-out on both sides for the feet


@dataclass
class WorldTerrain:
    truth: PiecewiseProfile
    erroneous: Optional[PiecewiseProfile]
    length: float


def _profile(course: CourseSpec, slope_deg: float, step_height: float) -> PiecewiseProfile:
    rise = (course.slope_end - course.slope_start) * math.tan(math.radians(slope_deg))
    xs = [-course.margin, course.slope_start, course.slope_end, course.step_x,
          course.step_x + course.step_ramp, course.length + course.margin]
    zs = [0.0, 0.0, rise, rise, rise + step_height, rise + step_height]
    return PiecewiseProfile(xs, zs)


def composite_terrain(course: CourseSpec = CourseSpec(), error_slope_deg: Optional[float] = 5.0,
                      error_step: Optional[float] = 3.0) -> WorldTerrain:
    """Flat, slope, and step course; the erroneous copy feeds the planner."""
    if not (0 <= course.slope_start <= course.slope_end <= course.step_x < course.length):
        raise ValueError("course segments overlap or leave the course")
    truth = _profile(course, course.slope_deg, course.step_height)
    wrong = None
    if error_slope_deg is not None:
        wrong = _profile(course, error_slope_deg,
                         course.step_height if error_step is None else error_step)
    return WorldTerrain(truth, wrong, course.length)


class LocalTerrain:
    """A world profile seen from a leg's local frame."""

    def __init__(self, profile, ox: float, oz: float, dz: float = 0.0):
        self.profile, self.ox, self.oz, self.dz = profile, ox, oz, dz

    def __call__(self, x):
        return self.profile(np.asarray(x) + self.ox) - self.oz + self.dz

    def slope(self, x):
        return self.profile.slope(np.asarray(x) + self.ox)


def local_frame(foot: Point) -> Tuple[float, float]:
    return foot.x, foot.z - LOCAL_START_Z


def local_map_for_leg(world: WorldTerrain, foot: Point, target_x: float,
                      strategy: str, robot: RobotModel = RobotModel(),
                      resolution: float = DEFAULT_RESOLUTION):
    """(LocalMap, StepCommand, input terrain) for one swing in local coordinates.

    The erroneous input is anchored at the foot: it agrees with the truth
    there and drifts away with distance.
    """
    ox, oz = local_frame(foot)
    region = robot.leg_window
    x_e = min(max(target_x - ox, region.x_min), region.x_max)
    start = Point(0.0, LOCAL_START_Z)
    if strategy == "blind":
        cmd = StepCommand(start, Point(x_e, LOCAL_START_Z), robot.allowance)
        return make_local_map(region, None, resolution), cmd, None
    src = world.erroneous if world.erroneous is not None else world.truth
    given = LocalTerrain(src, ox, oz, dz=world.truth(foot.x) - src(foot.x))
    z_e = min(max(float(given(x_e)), region.z_min), region.z_max)
    cmd = StepCommand(start, Point(x_e, z_e), robot.allowance)
    return make_local_map(region, Heightfield(given), resolution), cmd, given


@dataclass
class StepRecord:
    cycle: int
    leg: int
    attempt: int
    start: Point
    target_x: float
    result: EpisodeResult
    end: Point
    body_x: float
    stability_margin: float


@dataclass
class WalkResult:
    strategy: str
    success: bool
    total_length: float
    steps: List[StepRecord]
    body_path: List[Tuple[float, float]]
    feet: Dict[int, Point]
    foot_paths: List[Tuple[int, np.ndarray, str]] = field(default_factory=list, repr=False)

    @property
    def gait_sequence(self) -> List[int]:
        seq = []
        for s in self.steps:
            if s.attempt == 0:
                seq.append(s.leg)
        return seq


def _stability_margin(body_x: float, feet: Dict[int, Point], swing: int) -> float:
    xs = [p.x for k, p in feet.items() if k != swing]
    return min(body_x - min(xs), max(xs) - body_x)


def walk(robot: RobotModel = RobotModel(), world: Optional[WorldTerrain] = None,
         strategy: str = "blind", fsm_cfg: FsmConfig = FsmConfig(),
         apf_cfg: ApfConfig = ApfConfig(), resolution: float = DEFAULT_RESOLUTION,
         max_cycles: int = 200, keep_paths: bool = True,
         share_predictions: bool = True) -> WalkResult:
    """Static walk over the course.

    Obstacles predicted from contacts are kept in world coordinates.  A
    retry always starts from what the failed attempt felt; with
    share_predictions every later swing whose window covers them does too.
    """
    world = world or composite_terrain()
    g = world.truth
    body_x = 0.0
    feet = {k: Point(body_x + off, g(body_x + off)) for k, off in robot.offsets.items()}
    body_z = robot.height + float(np.mean([p.z for p in feet.values()]))
    body_path = [(body_x, body_z)]
    steps: List[StepRecord] = []
    paths: List[Tuple[int, np.ndarray, str]] = []
    total = 0.0
    success = False
    memory: list = []      # world-frame prediction shapes

    for cycle in range(max_cycles):
        gains = []
        for leg in GAIT_ORDER:
            foot = feet[leg]
            target = body_x + robot.offsets[leg] + robot.stride
            target = min(max(target, foot.x + robot.allowance),
                         foot.x + robot.leg_window.x_max - robot.allowance)
            margin = _stability_margin(body_x, feet, leg)
            learned: list = []
            for attempt in range(2):
                m, cmd, given = local_map_for_leg(world, foot, target, strategy,
                                                  robot, resolution)
                ox, oz = local_frame(foot)
                truth = LocalTerrain(g, ox, oz)
                known = memory if share_predictions else learned
                prior = [shifted(sh, -ox, -oz) for sh in known
                         if x_extent(sh)[1] >= ox and x_extent(sh)[0] <= ox + m.region.x_max]
                res = execute_step(truth, strategy, cmd, given, fsm_cfg, apf_cfg,
                                   m.region, resolution, prior)
                felt = [shifted(sh, ox, oz) for sh in res.predictions[len(prior):]]
                learned = learned + felt
                memory.extend(felt)
                total += res.trajectory_length
                end = Point(ox + res.final_point.x, oz + res.final_point.z)
                if keep_paths:
                    for seg, tag in res.trace:
                        paths.append((leg, seg.samples + [ox, oz], tag))
                steps.append(StepRecord(cycle, leg, attempt, foot, target, res, end,
                                        body_x, margin))
                if not res.returned:
                    break
                target -= robot.allowance
            else:
                return WalkResult(strategy, False, total, steps, body_path, feet, paths)
            gains.append(end.x - foot.x)
            feet[leg] = end
            if abs(end.z - g(end.x)) > CONTACT_TOL:
                raise RuntimeError(f"stance foot {leg} off the ground at {end}")
        body_x += float(np.mean(gains))
        body_z = robot.height + float(np.mean([p.z for p in feet.values()]))
        body_path.append((body_x, body_z))
        if body_x >= world.length:
            success = True
            break
    return WalkResult(strategy, success, total, steps, body_path, feet, paths)


EVENT_COLUMNS = ["cycle", "leg", "name", "attempt", "start_x", "start_z", "target_x",
                 "end_x", "end_z", "success", "collisions", "adjustments",
                 "trajectory_length", "body_x", "stability_margin"]


def write_events(result: WalkResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for s in result.steps:
            r = s.result
            w.writerow([s.cycle, s.leg, LEG_NAMES[s.leg], s.attempt,
                        f"{s.start.x:.9g}", f"{s.start.z:.9g}", f"{s.target_x:.9g}",
                        f"{s.end.x:.9g}", f"{s.end.z:.9g}", int(r.success),
                        r.collisions, r.adjustments, f"{r.trajectory_length:.9g}",
                        f"{s.body_x:.9g}", f"{s.stability_margin:.9g}"])
