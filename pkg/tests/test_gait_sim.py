import math

import numpy as np
import pytest

from swingstep.gait_sim import (EVENT_COLUMNS, GAIT_ORDER, CourseSpec,
                                LocalTerrain, Point, RobotModel,
                                composite_terrain, local_frame,
                                local_map_for_leg, walk, write_events)
from swingstep.terrain_sim import CONTACT_TOL


@pytest.fixture(scope="module")
def world():
    return composite_terrain()


@pytest.fixture(scope="module")
def walks(world):
    return {s: walk(world=world, strategy=s) for s in ("blind", "apf")}


def test_course_geometry(world):
    g, wrong = world.truth, world.erroneous
    assert g(50) == 0
    assert g(150) == pytest.approx(50 * math.tan(math.radians(10)), abs=1e-12)
    top = 100 * math.tan(math.radians(10))
    assert g(229.99) == pytest.approx(top) and g(230.02) == pytest.approx(top + 5)
    assert wrong(150) == pytest.approx(50 * math.tan(math.radians(5)), abs=1e-12)
    assert wrong(260) - wrong(220) == pytest.approx(3.0)
    assert world.length == 300


def test_course_validation():
    with pytest.raises(ValueError):
        composite_terrain(CourseSpec(slope_start=150, slope_end=120))


def test_local_frame_shift(world):
    foot = Point(20.0, 0.0)
    m, cmd, given = local_map_for_leg(world, foot, 28.0, "blind")
    assert local_frame(foot) == (20.0, -3.0)
    assert m.region.x_max == 14 and not m.obstacles.any()
    assert cmd.start == Point(0, 3) and cmd.target == Point(8.0, 3.0)
    assert given is None
    truth = LocalTerrain(world.truth, *local_frame(foot))
    assert truth(0.0) == 3.0 and truth(14.0) == 3.0


def test_apf_map_near_step_uses_wrong_height(world):
    foot = Point(225.0, float(world.truth(225.0)))
    m, cmd, given = local_map_for_leg(world, foot, 233.0, "apf")
    assert float(given(0.0)) == pytest.approx(3.0)
    assert float(given(10.0)) - float(given(2.0)) == pytest.approx(3.0)
    truth = LocalTerrain(world.truth, *local_frame(foot))
    assert float(truth(10.0)) - float(truth(2.0)) == pytest.approx(5.0)
    assert cmd.target.z == pytest.approx(float(given(8.0)))


def test_both_strategies_pass(walks):
    for res in walks.values():
        assert res.success
        assert res.body_path[-1][0] >= 300


def test_apf_shorter_than_blind(walks):
    assert walks["apf"].total_length < walks["blind"].total_length


def test_gait_order(walks):
    for res in walks.values():
        seq = res.gait_sequence
        assert seq == [GAIT_ORDER[k % 4] for k in range(len(seq))]


def test_stance_feet_on_ground(walks, world):
    for res in walks.values():
        for p in res.feet.values():
            assert abs(p.z - world.truth(p.x)) <= CONTACT_TOL
        for s in res.steps:
            assert abs(s.start.z - world.truth(s.start.x)) <= CONTACT_TOL
            if not s.result.returned:
                assert abs(s.end.z - world.truth(s.end.x)) <= CONTACT_TOL


def test_metric_identity(walks):
    for res in walks.values():
        assert res.total_length == pytest.approx(
            sum(s.result.trajectory_length for s in res.steps), abs=1e-9)


def test_body_progress(walks):
    for res in walks.values():
        xs = [b[0] for b in res.body_path]
        assert all(b > a for a, b in zip(xs, xs[1:]))


def test_flat_world_is_uniform():
    flat = composite_terrain(CourseSpec(slope_deg=0.0, step_height=0.0), error_slope_deg=None)
    res = walk(world=flat, strategy="blind", keep_paths=False)
    assert res.success
    assert all(abs(z - 50.0) <= CONTACT_TOL for _, z in res.body_path)
    lengths = [s.result.trajectory_length for s in res.steps]
    # landings differ only by the bisection tolerance
    assert max(lengths) - min(lengths) < 1e-5
    assert all(s.result.collisions == 0 for s in res.steps)


def test_known_terrain_apf_has_no_midswing_collisions():
    world = composite_terrain(error_slope_deg=None)
    res = walk(world=world, strategy="apf", keep_paths=False)
    assert res.success
    assert sum(s.result.collisions for s in res.steps) == 0


def test_event_csv(walks, tmp_path):
    path = tmp_path / "walk.csv"
    write_events(walks["blind"], path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(EVENT_COLUMNS)
    assert len(lines) == 1 + len(walks["blind"].steps)


def test_robot_model_offsets():
    r = RobotModel()
    assert r.offsets == {1: 30, 2: 30, 3: -30, 4: -30}
    assert RobotModel(leg_scale=2).leg_window.x_max == 28
