"""Command line: swingstep {gen-terrain,step,bench,walk}.

Exit codes: 0 ok, 1 bad configuration, 2 the leg returned / the walk aborted.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .apf_planner import ApfConfig
from .geometry_map import DEFAULT_REGION
from .leg_fsm import FsmConfig

SEED_ENV = "SWINGSTEP_SEED"

FSM_KEYS = {"gamma_h": "gamma_h", "n_limit": "n_limit", "l_back": "l_back",
            "support_threshold": "support_threshold"}
APF_KEYS = {"zeta": "zeta", "eta": "eta", "d0": "d0", "w_pre": "w_pre",
            "theta_pre": "theta_pre", "h_limit": "h_limit", "clearance": "clearance"}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Flat key=value file; '#' starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR", default=".")
    p.add_argument("--strategy", choices=["blind", "apf"], default="blind")
    p.add_argument("--h-up", type=float, default=4.0)
    p.add_argument("--h-down", type=float, default=0.0)
    p.add_argument("--resolution", type=float, default=0.05)
    g = p.add_argument_group("leg state machine")
    g.add_argument("--gamma-h", type=float, default=0.3)
    g.add_argument("--n-limit", type=int, default=3)
    g.add_argument("--l-back", type=float, default=0.5)
    g.add_argument("--support-threshold", type=float, default=0.4)
    g = p.add_argument_group("potential field")
    g.add_argument("--zeta", type=float, default=10.0)
    g.add_argument("--eta", type=float, default=1000.0)
    g.add_argument("--d0", type=float, default=0.05)
    g.add_argument("--w-pre", type=float, default=0.5)
    g.add_argument("--theta-pre", type=float, default=45.0)
    g.add_argument("--h-limit", type=float, default=0.5)
    g.add_argument("--clearance", type=float, default=0.4)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swingstep",
                                 description="Swing-leg stepping with force feedback.")
    sub = ap.add_subparsers(dest="command", required=True)
    ap.subcommands = {}

    p = ap.subcommands["gen-terrain"] = sub.add_parser(
        "gen-terrain", help="write a random spline terrain")
    _common(p)
    p.add_argument("-o", "--output", metavar="FILE", default="terrain.csv")

    p = ap.subcommands["step"] = sub.add_parser("step", help="run one stepping episode")
    _common(p)
    p.add_argument("--terrain", metavar="FILE")
    p.add_argument("--delta-h", type=float, default=0.0)

    p = ap.subcommands["bench"] = sub.add_parser("bench", help="batch of seeded episodes")
    _common(p)
    p.add_argument("-n", "--n-terrains", type=int, default=50)
    p.add_argument("--rows", default="2,0;4,0;4,2",
                   help="h_up,h_down pairs separated by ';' (blind)")
    p.add_argument("--delta-h", default="0,1,2,3",
                   help="comma separated terrain-error levels (apf)")
    p.add_argument("--workers", type=int, default=1)

    p = ap.subcommands["walk"] = sub.add_parser(
        "walk", help="quadruped walk over the composite course")
    _common(p)
    p.add_argument("--compare", action="store_true", help="run both strategies")
    p.add_argument("--terrain-error", choices=["default", "none"], default="default")
    return ap


def parse(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        known = vars(args)
        bad = sorted(k for k in cfg if k not in known or k in ("command", "config"))
        if bad:
            raise ConfigError(f"unknown config keys: {', '.join(bad)}")
        # flags given on the command line win over the file
        sub = ap.subcommands[args.command]
        types = {a.dest: a.type for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            conv = types.get(k) or str
            try:
                defaults[k] = conv(v)
            except ValueError:
                raise ConfigError(f"bad value for {k}: {v!r}") from None
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args


def configs(args):
    try:
        fsm = FsmConfig(**{v: getattr(args, k) for k, v in FSM_KEYS.items()})
        apf = ApfConfig(**{v: getattr(args, k) for k, v in APF_KEYS.items()})
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if not args.resolution > 0:
        raise ConfigError("resolution must be positive")
    return fsm, apf


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_terrain(args) -> int:
    from .terrain_sim import TerrainParams, random_terrain
    try:
        params = TerrainParams(args.h_up, args.h_down, args.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    prof = random_terrain(params)
    path = Path(args.output)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    prof.write_csv(path)
    print(f"seed={args.seed} wrote {path}")
    return 0


def cmd_step(args) -> int:
    from .plotting import plot_episode
    from .terrain_sim import (DEFAULT_COMMAND, TerrainParams, TerrainProfile,
                              execute_step, perturb_terrain, random_terrain,
                              write_trace)
    fsm, apf = configs(args)
    if args.terrain:
        try:
            truth = TerrainProfile.read_csv(args.terrain)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot load terrain {args.terrain}: {e}") from None
    try:
        if not args.terrain:
            truth = random_terrain(TerrainParams(args.h_up, args.h_down, args.seed))
        given = truth
        if args.delta_h:
            given = perturb_terrain(truth, args.delta_h, [args.seed, 1])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    res = execute_step(truth, args.strategy, DEFAULT_COMMAND, given, fsm, apf,
                       DEFAULT_REGION, args.resolution)
    out = _outdir(args)
    write_trace(res, out / "trace.csv")
    plot_episode(truth, res, DEFAULT_COMMAND, out / "step.svg",
                 given if args.strategy == "apf" else None, DEFAULT_REGION)
    print(f"seed={args.seed} strategy={args.strategy} success={int(res.success)} "
          f"step_length={res.step_length:.6f} collisions={res.collisions} "
          f"trajectory_length={res.trajectory_length:.6f} adjustments={res.adjustments}")
    return 0 if res.success else 2


def _parse_rows(text):
    rows = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = (float(v) for v in part.split(","))
        except ValueError:
            raise ConfigError(f"bad row {part!r}; expected h_up,h_down") from None
        rows.append((a, b))
    if not rows:
        raise ConfigError("no rows given")
    return rows


def cmd_bench(args) -> int:
    from .plotting import plot_bench
    from .terrain_sim import format_results, run_batch
    fsm, apf = configs(args)
    if args.n_terrains < 1:
        raise ConfigError("n_terrains must be >= 1")
    if args.strategy == "blind":
        grid = [(a, b, None) for a, b in _parse_rows(args.rows)]
    else:
        try:
            levels = [float(v) for v in args.delta_h.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad --delta-h {args.delta_h!r}") from None
        grid = [(args.h_up, args.h_down, d) for d in levels]
    rows = run_batch(args.strategy, grid, args.n_terrains, args.seed, fsm, apf,
                     DEFAULT_REGION, args.resolution, workers=args.workers)
    out = _outdir(args)
    text = format_results(rows)
    (out / "results.csv").write_text(text)
    plot_bench(rows, out / "bench.svg", args.strategy)
    print(f"seed={args.seed} n={args.n_terrains}")
    sys.stdout.write(text)
    return 0


def cmd_walk(args) -> int:
    from .gait_sim import composite_terrain, walk, write_events
    from .plotting import plot_walk
    fsm, apf = configs(args)
    if args.terrain_error == "none":
        world = composite_terrain(error_slope_deg=None)
    else:
        world = composite_terrain()
    strategies = ["blind", "apf"] if args.compare else [args.strategy]
    out = _outdir(args)
    totals, ok = {}, True
    for s in strategies:
        res = walk(world=world, strategy=s, fsm_cfg=fsm, apf_cfg=apf,
                   resolution=args.resolution)
        write_events(res, out / f"walk_{s}.csv")
        plot_walk(world, res, out / f"walk_{s}.svg")
        totals[s] = res.total_length
        ok &= res.success
        print(f"{s}: success={int(res.success)} total_length={res.total_length:.6f} "
              f"swings={len(res.steps)}")
    print(f"seed={args.seed}")
    if args.compare:
        rel = "<" if totals["apf"] < totals["blind"] else ">="
        print(f"apf_total {rel} blind_total ({totals['apf']:.3f} vs {totals['blind']:.3f})")
    return 0 if ok else 2


COMMANDS = {"gen-terrain": cmd_gen_terrain, "step": cmd_step,
            "bench": cmd_bench, "walk": cmd_walk}


def main(argv=None) -> int:
    try:
        args = parse(argv)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
