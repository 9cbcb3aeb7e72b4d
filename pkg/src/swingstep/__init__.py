"""Swing-leg trajectory planning with force feedback for slow legged robots."""

from .apf_planner import ApfConfig, ApfPlanner, build_potential, descend
from .cycloid import (TrajectorySegment, arc_length, first_half, full_cycloid,
                      second_half)
from .geometry_map import (EndpointInterval, ForceSample, LocalMap, Point,
                           Region, Source, make_local_map)
from .leg_fsm import (AdjustmentCase, FsmConfig, LegFsm, State, StepCommand,
                      StopEvent)
from .terrain_sim import (EpisodeResult, TerrainParams, TerrainProfile,
                          execute_step, random_terrain, run_batch)

__version__ = "0.1.0"
