"""SVG figures for episodes, walks, and benchmark tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "swingstep"

STATE_COLORS = {
    "initial_movement": "tab:blue",
    "tentative_adjustment": "tab:orange",
    "return": "tab:red",
}
LEG_COLORS = {1: "tab:blue", 2: "tab:cyan", 3: "tab:green", 4: "tab:olive"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_episode(truth, result, cmd, path, input_terrain=None, region=None,
                 title=None):
    """Ground truth, optional terrain input, and the executed foot path."""
    x0 = region.x_min if region else 0.0
    x1 = region.x_max if region else 14.0
    xs = np.linspace(x0, x1, 561)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.fill_between(xs, truth(xs), min(np.min(truth(xs)), 0.0) - 0.5,
                    color="0.85", label="ground truth")
    ax.plot(xs, truth(xs), color="0.3", lw=1)
    if input_terrain is not None and input_terrain is not truth:
        ax.plot(xs, input_terrain(xs), "--", color="tab:purple", lw=1,
                label="terrain input")
    seen = set()
    for seg, tag in result.trace:
        s = seg.samples
        lab = tag.replace("_", " ") if tag not in seen else None
        seen.add(tag)
        ax.plot(s[:, 0], s[:, 1], color=STATE_COLORS.get(tag, "k"), lw=1.4, label=lab)
    en = cmd.interval(region) if region else cmd.interval()
    ax.axvspan(en.x_lo, en.x_hi, color="tab:green", alpha=0.12, label="endpoint interval")
    ax.plot([cmd.start.x], [cmd.start.z], "ko", ms=4)
    ax.plot([cmd.target.x], [cmd.target.z], "k*", ms=8)
    ax.set_xlim(x0, x1)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    status = "support" if result.success else "return"
    ax.set_title(title or f"{status}: {result.collisions} collisions, "
                          f"length {result.trajectory_length:.2f}")
    ax.legend(loc="upper right", fontsize=7)
    _save(fig, path)


def plot_walk(world, result, path):
    """Course profile with the four foot paths and the body path."""
    g = world.truth
    x_hi = max(world.length + 40, max(p[:, 0].max() for _, p, _ in result.foot_paths)
               if result.foot_paths else world.length)
    xs = np.linspace(-40, x_hi, 2000)
    fig, ax = plt.subplots(figsize=(12, 4))
    ax.fill_between(xs, g(xs), -5, color="0.85")
    ax.plot(xs, g(xs), color="0.3", lw=1, label="ground truth")
    if world.erroneous is not None:
        ax.plot(xs, world.erroneous(xs), "--", color="tab:purple", lw=0.8,
                label="terrain input")
    seen = set()
    for leg, samples, tag in result.foot_paths:
        lab = f"leg {leg}" if leg not in seen else None
        seen.add(leg)
        color = "tab:red" if tag == "return" else LEG_COLORS[leg]
        ax.plot(samples[:, 0], samples[:, 1], color=color, lw=0.6, label=lab)
    body = np.array(result.body_path)
    ax.plot(body[:, 0], body[:, 1], "k.-", lw=0.8, ms=2, label="body")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    ax.set_title(f"{result.strategy}: total foot path {result.total_length:.1f}"
                 f" ({'passed' if result.success else 'aborted'})")
    ax.legend(loc="upper left", fontsize=7, ncol=3)
    _save(fig, path)


def plot_bench(rows, path, strategy):
    labels = [r.param for r in rows]
    x = np.arange(len(rows))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.bar(x - 0.2, [r.success_rate for r in rows], 0.4, label="with adjustment")
    if any(r.baseline_success_rate is not None for r in rows):
        a1.bar(x + 0.2, [r.baseline_success_rate or 0.0 for r in rows], 0.4,
               label="without adjustment")
    a1.set_xticks(x, labels)
    a1.set_ylim(0, 1.05)
    a1.set_ylabel("success rate")
    a1.legend(fontsize=7)
    a2.plot(x, [r.trajectory_length for r in rows], "o-", label="trajectory length")
    a2.plot(x, [r.collisions for r in rows], "s--", label="collisions")
    a2.set_xticks(x, labels)
    a2.legend(fontsize=7)
    fig.suptitle(f"{strategy} batch")
    fig.tight_layout()
    _save(fig, path)
