"""CSV tracks and static SVG plots of tracking runs and profiles.

SVG output is byte-deterministic: matplotlib's id salt is fixed and the date
metadata is dropped.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .manipulability import classical_indices  # noqa: E402

_AXES = {"x": 0, "y": 1, "z": 2}


def _save(fig, path, provenance=None):
    meta = {"Date": None}
    if provenance is not None:
        meta["Description"] = json.dumps(provenance, sort_keys=True)
    with matplotlib.rc_context({"svg.hashsalt": "manipulant", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def _csv_header(fh, provenance):
    if provenance is not None:
        fh.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")


def ellipse_points(M2, n=100):
    """Boundary of ``{M^{1/2} u : |u| = 1}`` for a 2x2 SPD matrix."""
    w, v = np.linalg.eigh(M2)
    a = np.linspace(0.0, 2 * np.pi, n)
    circle = np.vstack([np.cos(a), np.sin(a)])
    return (v * np.sqrt(np.maximum(w, 0.0))) @ circle


def project(M, plane):
    """Shadow of a 3-D ellipsoid on a coordinate plane: the 2x2 sub-block."""
    idx = [_AXES[c] for c in plane]
    return M[np.ix_(idx, idx)]


def write_run_csv(path, run, provenance=None):
    with open(path, "w", newline="") as fh:
        _csv_header(fh, provenance)
        w = csv.writer(fh)
        w.writerow(["t", "spd_distance", "pos_error", "mode", "det", "cond"])
        for k in range(run.t.size):
            ind = classical_indices(run.M[k])
            w.writerow([f"{run.t[k]:.6f}", f"{run.spd_distance[k]:.12g}", f"{run.pos_error[k]:.12g}",
                        run.mode[k], f"{ind.determinant:.12g}", f"{ind.condition_number:.12g}"])


def plot_errors(path, run, provenance=None):
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    a1.plot(run.t, run.spd_distance, color="C0")
    a1.set_ylabel("ellipsoid distance")
    a2.plot(run.t, run.pos_error, color="C1")
    a2.set_ylabel("position error (m)")
    a2.set_xlabel("time (s)")
    for ax in (a1, a2):
        switches = [run.t[k] for k in range(1, run.t.size) if run.mode[k] != run.mode[k - 1]]
        for ts in switches:
            ax.axvline(ts, color="0.6", linestyle="--", linewidth=0.8)
    fig.tight_layout()
    _save(fig, path, provenance)


def plot_ellipses(path, run, plane, count=7, provenance=None):
    """Current (solid) and desired (dashed) ellipses at ``count`` instants."""
    if run.M.shape[1] == 2:
        sub = lambda M: M  # noqa: E731
        labels = ("x", "y")
    else:
        sub = lambda M: project(M, plane)  # noqa: E731
        labels = tuple(plane)
    picks = np.unique(np.linspace(0, run.t.size - 1, count).round().astype(int))
    fig, ax = plt.subplots(figsize=(2.0 * len(picks), 2.4))
    span = max(np.sqrt(np.linalg.eigvalsh(sub(M))[-1]) for M in np.concatenate([run.M[picks],
                                                                                run.M_target[picks]]))
    for j, k in enumerate(picks):
        cx = 2.4 * span * j
        for M, style in ((run.M_target[k], "--"), (run.M[k], "-")):
            pts = ellipse_points(sub(M))
            ax.plot(cx + pts[0], pts[1], style, color="C0" if style == "-" else "C3", linewidth=1)
        ax.text(cx, -1.3 * span, f"{run.t[k]:.2f} s", ha="center", fontsize=7)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title(f"{labels[0]}{labels[1]} projection", fontsize=8)
    fig.tight_layout()
    _save(fig, path, provenance)


def run_report(run, out_dir, planes=("xy", "xz", "yz"), count=7, provenance=None):
    """Write ``tracks.csv``, ``errors.svg`` and one ellipse SVG per plane."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "tracks.csv", out / "errors.svg"]
    write_run_csv(written[0], run, provenance)
    plot_errors(written[1], run, provenance)
    use = ("xy",) if run.M.shape[1] == 2 else planes
    for plane in use:
        p = out / f"ellipses_{plane}.svg"
        plot_ellipses(p, run, plane, count, provenance)
        written.append(p)
    return written


def write_index_csv(path, profile, provenance=None):
    """Per-timestep index tracks of a statistics profile."""
    actions = profile.actions
    k = profile.frames_per_action
    with open(path, "w", newline="") as fh:
        _csv_header(fh, provenance)
        w = csv.writer(fh)
        w.writerow(["step", "u", "action", "det", "cond", "det_mean", "det_std", "cond_mean",
                    "cond_std"] + [f"std_{i}" for i in range(profile.steps[0].std.size)])
        for i, s in enumerate(profile.steps):
            act = actions[i // k] if actions and k else ""
            w.writerow([i, f"{s.u:.6f}", act] + [f"{v:.12g}" for v in (
                s.det, s.cond, s.det_mean, s.det_std, s.cond_mean, s.cond_std)]
                + [f"{v:.12g}" for v in s.std])


def plot_profile(path, profile, provenance=None):
    fig, axes = plt.subplots(3, 1, figsize=(6, 6), sharex=True)
    u = profile.u
    for ax, name in zip(axes[:2], ("det", "cond")):
        m, s = profile.track(f"{name}_mean"), profile.track(f"{name}_std")
        ax.plot(u, m, color="C0")
        ax.fill_between(u, m - s, m + s, color="C0", alpha=0.25, linewidth=0)
        ax.set_ylabel(name)
    std = profile.track("std")
    for i in range(std.shape[1]):
        axes[2].plot(u, std[:, i], label="xyz"[i] if std.shape[1] <= 3 else str(i))
    axes[2].set_ylabel("axis std")
    axes[2].set_xlabel("normalized time")
    axes[2].legend(fontsize=7)
    if profile.actions:
        for ax in axes:
            for a in range(1, len(profile.actions)):
                ax.axvline(a / len(profile.actions), color="0.7", linewidth=0.6)
    fig.tight_layout()
    _save(fig, path, provenance)
