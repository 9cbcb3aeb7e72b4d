"""Swing-leg state machine and the trajectory formulas of the blind strategy.

States: Support -> InitialMovement -> (TentativeAdjustment)* -> Support,
or -> Return -> Support at the start foothold once the adjustment budget
is spent.  The machine only decides; an episode runner executes the
requested trajectories and feeds back where and why the foot stopped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

from .cycloid import TrajectorySegment, first_half, full_cycloid, second_half
from .geometry_map import (DEFAULT_REGION, EndpointInterval, ForceSample,
                           LocalMap, Point, Region)


class PlanningError(RuntimeError):
    """A formula produced an infeasible trajectory; the caller should Return."""


class PlannerDefect(RuntimeError):
    """A stop that no well-formed plan can produce."""


class FsmError(RuntimeError):
    """Event not legal in the current state."""


@dataclass(frozen=True)
class FsmConfig:
    gamma_h: float = 0.3
    n_limit: int = 3
    l_back: float = 0.5
    # minimum vertical component of the unit contact normal accepted as support
    support_threshold: float = 0.4

    def __post_init__(self):
        if not 0 < self.gamma_h <= 1:
            raise ValueError(f"gamma_h must be in (0, 1], got {self.gamma_h}")
        if self.n_limit < 0:
            raise ValueError("n_limit must be >= 0")
        if not self.l_back > 0:
            raise ValueError("l_back must be positive")
        if not 0 < self.support_threshold <= 1:
            raise ValueError("support_threshold must be in (0, 1]")


@dataclass(frozen=True)
class StepCommand:
    start: Point
    target: Point
    allowance: float = 1.0

    def __post_init__(self):
        if self.allowance < 0:
            raise ValueError("allowance must be >= 0")

    def interval(self, region: Region = DEFAULT_REGION) -> EndpointInterval:
        return EndpointInterval(self.target.x, self.allowance, region)


@dataclass(frozen=True)
class StopEvent:
    point: Point
    force: Optional[ForceSample] = None
    trajectory_completed: bool = False

    @property
    def contact(self) -> bool:
        return self.force is not None


class AdjustmentCase(Enum):
    CASE1 = 1   # inside En, no support found
    CASE2 = 2   # inside En, obstacle component dominates
    CASE3 = 3   # short of En, support component dominates
    CASE4 = 4   # short of En, obstacle component dominates


class State(Enum):
    SUPPORT = "support"
    INITIAL_MOVEMENT = "initial_movement"
    TENTATIVE_ADJUSTMENT = "tentative_adjustment"
    RETURN = "return"


@dataclass(frozen=True)
class LegState:
    name: State = State.SUPPORT
    case: Optional[AdjustmentCase] = None
    adjustments: int = 0
    stage: int = 0


class Action(Enum):
    NONE = "none"
    EXECUTE_INITIAL = "initial"
    EXECUTE_ADJUSTMENT = "adjust"
    EXECUTE_RETURN = "return"


GRANT = "grant"
RETURN_COMPLETE = "return_complete"
# a planner could not produce a feasible trajectory
ABORT = "abort"


def support_dominant(force: ForceSample) -> bool:
    # ties count as support
    return abs(force.f_z) >= abs(force.f_x)


def detect_support(p: Point, en: EndpointInterval, force: ForceSample,
                   cfg: FsmConfig) -> bool:
    return en.contains(p) and force.f_z >= cfg.support_threshold


def classify_stop(event: StopEvent, en: EndpointInterval,
                  cfg: FsmConfig) -> AdjustmentCase:
    inside = en.contains(event.point)
    if event.force is None:
        if inside:
            return AdjustmentCase.CASE1
        raise PlannerDefect(f"free-space stop outside En at {event.point}")
    if inside:
        # a support-dominant contact that still failed the threshold is
        # treated like "no support": keep probing downward
        if support_dominant(event.force):
            return AdjustmentCase.CASE1
        return AdjustmentCase.CASE2
    if support_dominant(event.force):
        return AdjustmentCase.CASE3
    return AdjustmentCase.CASE4


# --- trajectory formulas ---------------------------------------------------

def _spacing(m: LocalMap) -> float:
    return m.resolution / 2


def initial_trajectory(m: LocalMap, cmd: StepCommand,
                       cfg: FsmConfig) -> TrajectorySegment:
    s, e = cmd.start, cmd.target
    S = e.x - s.x
    H = cfg.gamma_h * (m.min_upper_over(min(s.x, e.x), max(s.x, e.x), s.z) - s.z)
    if H < 0:
        raise PlanningError(f"start {s} above the free-space ceiling")
    return full_cycloid(s, S, H, _spacing(m), "initial")


def adjust_case1(m: LocalMap, p_c: Point) -> TrajectorySegment:
    """Straight descent to the map floor below the stop point."""
    H = p_c.z - m.lower_boundary(p_c.x, p_c.z)
    return second_half(p_c, 0.0, max(H, 0.0), _spacing(m), "case1")


def adjust_case2(m: LocalMap, p_c: Point, cmd: StepCommand,
                 f_x_sign: float) -> TrajectorySegment:
    """Slide to the lower corner of En on the side away from the obstacle."""
    w = cmd.allowance
    x_t = cmd.target.x - w if f_x_sign < 0 else cmd.target.x + w
    x_t = m.region.clamp_x(x_t)
    z_t = m.lower_boundary(x_t, p_c.z)
    S = 2.0 * (x_t - p_c.x)
    H = max(p_c.z - z_t, 0.0)
    return second_half(p_c, S, H, _spacing(m), "case2")


def adjust_case3(m: LocalMap, p_c: Point, cmd: StepCommand,
                 cfg: FsmConfig) -> TrajectorySegment:
    """Fresh cycloid from the stop point toward the target column."""
    x_e = cmd.target.x
    S = x_e - p_c.x
    if S == 0:
        return adjust_case1(m, p_c)
    ceiling = m.min_upper_over(min(p_c.x, x_e), max(p_c.x, x_e), p_c.z)
    H = cfg.gamma_h * (ceiling - p_c.z)
    if H < 0:
        raise PlanningError(f"stop point {p_c} above the ceiling")
    return full_cycloid(p_c, S, H, _spacing(m), "case3")


def adjust_case4(m: LocalMap, p_c: Point, cmd: StepCommand, cfg: FsmConfig,
                 f_x_sign: float = -1.0) -> List[TrajectorySegment]:
    """Retreat, lift, and cross: three C0-continuous segments ending at E.

    The retreat goes away from the obstacle, i.e. toward -x when f_x < 0
    and toward +x when f_x > 0.
    """
    sp = _spacing(m)
    e = cmd.target
    direction = 1.0 if f_x_sign > 0 else -1.0
    x_back = m.region.clamp_x(p_c.x + direction * cfg.l_back)
    back = x_back - p_c.x
    lo = min(x_back, p_c.x, e.x)
    hi = max(x_back, p_c.x, e.x)
    h_up = cfg.gamma_h * (m.min_upper_over(lo, hi, p_c.z) - p_c.z)
    if h_up < 0:
        raise PlanningError(f"stop point {p_c} above the ceiling")
    # never finish the rise below the target height
    h_up = max(h_up, e.z - p_c.z)
    seg_back = full_cycloid(p_c, back, 0.0, sp, "case4_back")
    seg_up = first_half(seg_back.end, -2.0 * back, h_up, sp, "case4_up")
    apex = Point(p_c.x, p_c.z + h_up)
    seg_fwd = second_half(apex, 2.0 * (e.x - p_c.x), p_c.z + h_up - e.z,
                          sp, "case4_forward")
    return [seg_back, seg_up, seg_fwd]


def return_trajectory(m: LocalMap, p_c: Point,
                      cmd: StepCommand) -> List[TrajectorySegment]:
    """Lift to the ceiling, then glide back down to the start foothold."""
    sp = _spacing(m)
    s = cmd.start
    top = m.upper_boundary(p_c.x, p_c.z)
    lift = first_half(p_c, 0.0, max(top - p_c.z, 0.0), sp, "return_lift")
    top_pt = lift.end
    back = second_half(top_pt, 2.0 * (s.x - p_c.x), max(top_pt.z - s.z, 0.0),
                       sp, "return_back")
    return [lift, back]


# --- transitions -----------------------------------------------------------

def step_fsm(state: LegState, event, cmd: StepCommand, cfg: FsmConfig,
             region: Region = DEFAULT_REGION) -> Tuple[LegState, Action]:
    """Pure transition function.

    `event` is GRANT, RETURN_COMPLETE, or a StopEvent.
    """
    name = state.name
    if event == GRANT:
        if name is not State.SUPPORT:
            raise FsmError(f"trajectory grant in state {name.value}")
        return LegState(State.INITIAL_MOVEMENT), Action.EXECUTE_INITIAL

    if event == RETURN_COMPLETE:
        if name is not State.RETURN:
            raise FsmError(f"return completion in state {name.value}")
        return LegState(State.SUPPORT, adjustments=state.adjustments), Action.NONE

    if event == ABORT:
        if name not in (State.INITIAL_MOVEMENT, State.TENTATIVE_ADJUSTMENT):
            raise FsmError(f"abort in state {name.value}")
        return (LegState(State.RETURN, adjustments=state.adjustments, stage=1),
                Action.EXECUTE_RETURN)

    if not isinstance(event, StopEvent):
        raise FsmError(f"unknown event {event!r}")
    if name not in (State.INITIAL_MOVEMENT, State.TENTATIVE_ADJUSTMENT):
        raise FsmError(f"stop event in state {name.value}")

    en = cmd.interval(region)
    if event.force is not None and detect_support(event.point, en, event.force, cfg):
        return LegState(State.SUPPORT, adjustments=state.adjustments), Action.NONE
    if state.adjustments + 1 > cfg.n_limit:
        return (LegState(State.RETURN, adjustments=state.adjustments, stage=1),
                Action.EXECUTE_RETURN)
    case = classify_stop(event, en, cfg)
    return (LegState(State.TENTATIVE_ADJUSTMENT, case, state.adjustments + 1),
            Action.EXECUTE_ADJUSTMENT)


@dataclass
class Transition:
    index: int
    state: LegState
    point: Optional[Point]
    force: Optional[ForceSample]


@dataclass
class LegFsm:
    """Stateful wrapper around step_fsm that keeps a transition log."""

    cmd: StepCommand
    cfg: FsmConfig = field(default_factory=FsmConfig)
    region: Region = DEFAULT_REGION
    state: LegState = field(default_factory=LegState)
    log: List[Transition] = field(default_factory=list)

    def __post_init__(self):
        self._record(None)

    def _record(self, event):
        point = event.point if isinstance(event, StopEvent) else None
        force = event.force if isinstance(event, StopEvent) else None
        self.log.append(Transition(len(self.log), self.state, point, force))

    def handle(self, event) -> Action:
        self.state, action = step_fsm(self.state, event, self.cmd, self.cfg,
                                      self.region)
        self._record(event)
        return action

    def enter_return_stage(self, stage: int):
        if self.state.name is not State.RETURN:
            raise FsmError("not returning")
        self.state = replace(self.state, stage=stage)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_transitions(self.log, fh)


def write_transitions(log, fh) -> None:
    w = csv.writer(fh)
    w.writerow(["step", "state", "case", "adjustments", "x_c", "z_c", "f_x", "f_z"])
    for tr in log:
        st = tr.state
        w.writerow([
            tr.index, st.name.value,
            st.case.value if st.case else "",
            st.adjustments,
            _fmt(tr.point.x) if tr.point else "",
            _fmt(tr.point.z) if tr.point else "",
            _fmt(tr.force.f_x) if tr.force else "",
            _fmt(tr.force.f_z) if tr.force else "",
        ])


def _fmt(v: float) -> str:
    return f"{v:.9g}" if math.isfinite(v) else str(v)
