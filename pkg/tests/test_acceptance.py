"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from swingstep.apf_planner import ApfConfig, ApfPlanner, find_path, snap_start
from swingstep.cli import main
from swingstep.cycloid import first_half, full_cycloid, second_half
from swingstep.gait_sim import composite_terrain, walk
from swingstep.geometry_map import Box, Point, Region, make_local_map
from swingstep.leg_fsm import (FsmConfig, StepCommand, adjust_case1,
                               adjust_case2, adjust_case3, adjust_case4,
                               initial_trajectory, return_trajectory)
from swingstep.terrain_sim import (DEFAULT_COMMAND, TerrainParams,
                                   execute_step, flat_terrain, run_batch,
                                   terrain_pair)

N_TERRAINS = 50


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def blind_rows():
    t = time.perf_counter()
    rows = run_batch("blind", [(2, 0, None), (4, 0, None), (4, 2, None)], N_TERRAINS, 0)
    return rows, time.perf_counter() - t


@pytest.fixture(scope="module")
def apf_rows():
    t = time.perf_counter()
    rows = run_batch("apf", [(4, 0, d) for d in (0.0, 1.0, 2.0, 3.0)], N_TERRAINS, 0)
    return rows, time.perf_counter() - t


def test_criterion_1_cycloid_exactness(report):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    ok = True
    for _ in range(100):
        x0, z0 = rng.uniform(0, 14), rng.uniform(0, 8)
        S, H = rng.uniform(-14, 14), rng.uniform(0, 8)
        o = Point(x0, z0)
        full, up, down = full_cycloid(o, S, H), first_half(o, S, H), second_half(o, S, H)
        errs = [full.end.x - (x0 + S), full.end.z - z0,
                up.end.x - (x0 + S / 2), up.end.z - (z0 + H),
                down.end.x - (x0 + S / 2), down.end.z - (z0 - H)]
        worst = max(worst, max(abs(e) for e in errs))
        dx = np.diff(full.samples[:, 0]) * (1 if S >= 0 else -1)
        z = full.samples[:, 1]
        ok &= bool(np.all(dx >= -1e-12) and z.min() >= z0 - 1e-12 and z.max() <= z0 + H + 1e-12)
    elapsed = time.perf_counter() - t
    ok &= worst <= 1e-12 and elapsed < 1.0
    report(1, ok, f"max endpoint error {worst:.2e}, invariants hold={ok}, {elapsed:.3f} s")


def test_criterion_2_case_formula_oracles(report):
    region = Region(0, 14, 0, 8)
    cfg = FsmConfig()
    cmd = StepCommand(Point(0, 3), Point(8, 3), 1.0)

    def empty():
        return make_local_map(region)

    def floor(z):
        return make_local_map(region, Box(0, 14, -math.inf, z))

    def apex(seg):
        # H recovered from the sample nearest the peak of the phase weight
        w = 0.5 - 0.5 * np.cos(2 * np.pi * seg.t)
        k = int(np.argmax(w))
        return (seg.samples[k, 1] - seg.samples[0, 1]) / w[k]

    checks = []
    init = initial_trajectory(empty(), cmd, cfg)
    checks += [init.end.x - 8, init.end.z - 3, apex(init) - 1.5]
    low = empty()
    low.add_obstacle(Box(0, 8, 5, math.inf))
    checks.append(apex(initial_trajectory(low, cmd, cfg)) - 0.6)
    c1 = adjust_case1(floor(3.1), Point(8.2, 4.0))
    checks += [c1.end.x - 8.2, c1.end.z - 3.1]
    c1b = adjust_case1(empty(), Point(7.0, 8.0))
    checks.append(c1b.end.z - 0.0)
    m2 = floor(2.8)
    m2.add_obstacle(Box(8.5, 14, -math.inf, 2.9))
    c2l = adjust_case2(m2, Point(7.5, 3.4), cmd, -1.0)
    c2r = adjust_case2(m2, Point(7.5, 3.4), cmd, 1.0)
    checks += [c2l.end.x - 7.0, c2l.end.z - 2.8, c2r.end.x - 9.0, c2r.end.z - 2.9]
    c3 = adjust_case3(empty(), Point(4, 4.1), cmd, cfg)
    checks += [c3.end.x - 8, c3.end.z - 4.1, apex(c3) - 1.17]
    ceil6 = empty()
    ceil6.add_obstacle(Box(4, 8, 6, math.inf))
    checks.append(apex(adjust_case3(ceil6, Point(4, 4.1), cmd, cfg)) - 0.57)
    back, up, fwd = adjust_case4(empty(), Point(4, 3.2), cmd, cfg)
    checks += [back.end.x - 3.5, back.end.z - 3.2, up.end.x - 4.0, up.end.z - 4.64,
               fwd.end.x - 8.0, fwd.end.z - 3.0,
               (fwd.samples[0, 1] - fwd.samples[-1, 1]) - 1.64]
    c0 = max(abs(a.end.x - b.origin.x) + abs(a.end.z - b.origin.z)
             for a, b in ((back, up), (up, fwd)))
    lift, home = return_trajectory(empty(), Point(5, 4), cmd)
    checks += [lift.end.x - 5, lift.end.z - 8, home.end.x - 0, home.end.z - 3,
               (home.samples[0, 1] - home.samples[-1, 1]) - 5]
    worst = max(abs(c) for c in checks)
    ok = worst <= 1e-9 and c0 <= 1e-9
    report(2, ok, f"{len(checks)} oracle values, max error {worst:.2e}, case-4 C0 gap {c0:.2e}")


def test_criterion_3_fsm_safety(report):
    rng = np.random.default_rng(5)
    worst_pen, max_adj, returns, worst_home = 0.0, 0, 0, 0.0
    for k in range(1000):
        strategy = "blind" if k % 2 else "apf"
        hu, hd = rng.uniform(0, 5), rng.uniform(0, 3)
        dh = float(rng.choice([0, 1, 2, 3]))
        truth, given = terrain_pair(TerrainParams(hu, hd, 11), k, dh)
        res = execute_step(truth, strategy, DEFAULT_COMMAND, given)
        max_adj = max(max_adj, res.adjustments)
        for seg, _ in res.trace:
            s = seg.samples
            worst_pen = max(worst_pen, float(np.max(truth(s[:, 0]) - s[:, 1])))
        if res.returned:
            returns += 1
            end = res.trace[-1][0].samples[-1]
            worst_home = max(worst_home, abs(end[0] - 0.0), abs(end[1] - 3.0))
    ok = max_adj <= 3 and worst_home <= 1e-9 and worst_pen <= 1e-3
    report(3, ok, f"max adjustments {max_adj}, {returns} returns (worst home error "
                  f"{worst_home:.1e}), worst penetration {max(worst_pen, 0):.1e}")


def test_criterion_4_blind_table(report, blind_rows):
    rows, elapsed = blind_rows
    r20, r40, r42 = rows
    lengths = [r.trajectory_length for r in rows]
    ok = (r20.success_rate >= 0.95 and r20.baseline_success_rate >= 0.95
          and r20.collisions <= 0.3
          and r40.success_rate >= 0.70 and r40.baseline_success_rate <= 0.40
          and r42.success_rate >= 0.60 and r42.baseline_success_rate <= 0.10
          and lengths[0] < lengths[1] < lengths[2]
          and elapsed < 60)
    detail = "; ".join(f"({r.param}) ours {r.success_rate:.2f} without {r.baseline_success_rate:.2f}"
                       f" coll {r.collisions:.2f} len {r.trajectory_length:.2f}" for r in rows)
    report(4, ok, f"{detail}; {elapsed:.1f} s")


def test_criterion_5_apf_table(report, apf_rows):
    rows, elapsed = apf_rows
    coll = [r.collisions for r in rows]
    ok = (coll[0] == 0 and all(b >= a for a, b in zip(coll, coll[1:])) and coll[3] <= 2
          and rows[3].trajectory_length > rows[0].trajectory_length and elapsed < 60)
    detail = ", ".join(f"dh={r.param}: coll {r.collisions:.2f} len {r.trajectory_length:.2f}"
                       for r in rows)
    report(5, ok, f"{detail}; {elapsed:.1f} s")


def test_criterion_6_strategy_comparison(report, blind_rows, apf_rows):
    blind = blind_rows[0][1].trajectory_length
    apf = apf_rows[0][0].trajectory_length
    report(6, apf < blind, f"apf {apf:.3f} vs blind {blind:.3f} over {N_TERRAINS} terrains")


def test_criterion_7_apf_properties(report):
    cmd = DEFAULT_COMMAND
    bad_runs = bad_cells = 0
    n_runs = 0
    for k in range(N_TERRAINS):
        truth, given = terrain_pair(TerrainParams(4, 0, 0), k, float(k % 4))
        pl = ApfPlanner(cmd, given, FsmConfig(), ApfConfig(), Region(), 0.05)
        grid = pl._grid(None)
        start = snap_start(grid, cmd.start)
        cells, _, runs = find_path(grid, start, 200, 20000)
        u = grid.effective()
        for run in runs:
            n_runs += 1
            vals = [u[c] for c in run]
            bad_runs += not all(b < a for a, b in zip(vals, vals[1:]))
        bad_cells += sum(bool(grid.map.obstacles[c]) for c in cells)
    pl = ApfPlanner(cmd, flat_terrain(), FsmConfig(), ApfConfig(), Region(), 0.05)
    path = pl.initial()[0].samples
    h = pl.cfg.h_limit
    band = (path[:, 0] > cmd.start.x + h) & (path[:, 0] < cmd.target.x - h)
    clearance = float(np.min(path[band, 1] - cmd.start.z))
    ok = bad_runs == 0 and bad_cells == 0 and clearance > 0
    report(7, ok, f"{n_runs} descent runs, {bad_runs} non-decreasing, {bad_cells} obstacle cells, "
                  f"flat-terrain clearance {clearance:.3f}")


def test_criterion_8_walk(report):
    t = time.perf_counter()
    world = composite_terrain()
    blind = walk(world=world, strategy="blind", keep_paths=False)
    apf = walk(world=world, strategy="apf", keep_paths=False)
    elapsed = time.perf_counter() - t
    ok = blind.success and apf.success and apf.total_length < blind.total_length and elapsed < 30
    report(8, ok, f"blind ok={blind.success} total {blind.total_length:.1f}, apf ok={apf.success} "
                  f"total {apf.total_length:.1f}, {elapsed:.1f} s")


def test_criterion_9_determinism(report, tmp_path):
    def outputs(tag, workers):
        out = tmp_path / tag
        assert main(["gen-terrain", "--seed", "9", "--h-up", "4", "-o", str(out / "t.csv")]) == 0
        main(["step", "--seed", "9", "--out", str(out / "blind")])
        main(["step", "--seed", "9", "--strategy", "apf", "--delta-h", "2",
              "--out", str(out / "apf")])
        main(["bench", "--seed", "9", "-n", "6", "--workers", str(workers),
              "--out", str(out / "bench_blind")])
        main(["bench", "--seed", "9", "-n", "3", "--strategy", "apf",
              "--workers", str(workers), "--out", str(out / "bench_apf")])
        main(["walk", "--compare", "--seed", "9", "--out", str(out / "walk")])
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))}

    a, b = outputs("a", 1), outputs("b", 2)
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    report(9, same and len(a) >= 7, f"{len(a)} CSV files compared across two runs "
                                    f"(workers 1 vs 2), identical={same}")
