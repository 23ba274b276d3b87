"""``manipulant`` command-line interface.

Exit codes: 0 success, 1 user error (bad input, config or arguments),
2 numerical failure (divergence, non-convergence, singular posture).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, config, control, mocap, profile, report, robots
from .errors import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    EmptyComponentError,
    ManipulantError,
    SingularConfigurationError,
)
from .manipulability import DualArmSystem
from .spd import spd_from_json, spd_to_json

log = logging.getLogger("manipulant")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (ConvergenceError, DivergenceError, EmptyComponentError, SingularConfigurationError,
                  np.linalg.LinAlgError)


class UserError(Exception):
    pass


def _dump(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _trial_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise UserError(f"{d} is not a directory")
    files = sorted(d.glob("*.jsonl"))
    if not files:
        raise UserError(f"no trials in {d}")
    return files


# --- synth -----------------------------------------------------------------------

def cmd_synth(args, cfg):
    seed = cfg["ingest"]["seed"] if args.seed is None else args.seed
    if "MANIPULANT_SEED" in os.environ:
        seed = cfg["ingest"]["seed"]
    noise = cfg["ingest"]["noise_level"] if args.noise is None else args.noise
    rate = cfg["ingest"]["sample_rate"]
    if args.count > 1 or args.out_dir:
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        targets = [(seed + i, out_dir / f"{args.task}_P{seed + i:03d}.jsonl") for i in range(args.count)]
    else:
        if not args.out:
            raise UserError("synth needs --out (one trial) or --out-dir (several)")
        targets = [(seed, Path(args.out))]
    for s, path in targets:
        trial = mocap.synth_trial(args.task, s, noise, rate)
        votes = mocap.synth_votes(trial, s) if args.votes else None
        prov = config.provenance(cfg, (), command=f"synth --task {args.task} --seed {s}")
        mocap.write_trial(path, trial, prov, votes)
        print(f"wrote {path} ({len(trial.frames)} frames)")
    return EXIT_OK


# --- ingest ----------------------------------------------------------------------

def cmd_ingest(args, cfg):
    files = _trial_files(args.dir)
    summary, failures = [], {}
    for f in files:
        try:
            trial = mocap.read_trial(f)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            failures[f.name] = str(exc)
            continue
        segs, missing = mocap.segment_actions(trial)
        summary.append({
            "file": f.name, "participant_id": trial.participant_id, "task": trial.task,
            "frames": len(trial.frames), "excluded_frames": trial.excluded_frames,
            "segments": [[s.action, s.start, s.stop] for s in segs], "missing": missing,
        })
        print(f"{f.name}: {trial.participant_id} {trial.task} {len(trial.frames)} frames, "
              f"{len(segs)} segments, {trial.excluded_frames} excluded"
              + (f", missing {','.join(missing)}" if missing else ""))
    for name, err in failures.items():
        print(f"{name}: FAILED {err}", file=sys.stderr)
    if args.out:
        _dump(args.out, {"trials": summary, "failures": failures,
                         "provenance": config.provenance(cfg, files, "ingest")})
    if not summary:
        raise UserError("no trial could be ingested")
    return EXIT_OK


# --- analyze ----------------------------------------------------------------------

def _analyze_one(job):
    path, a = job
    try:
        trial = mocap.read_trial(path)
        if trial.task != a["task"]:
            raise ValueError(f"task {trial.task}, expected {a['task']}")
        res = analysis.trial_ellipsoids(trial, a["arm"], a["kind"], a["frames_per_action"],
                                        a["actions"] or None, a["frame"])
        return path.name, res, None
    except (ManipulantError, ValueError, KeyError) as exc:
        return path.name, None, f"{type(exc).__name__}: {exc}"


def cmd_analyze(args, cfg):
    files = _trial_files(args.dir)
    a = dict(cfg["analysis"])
    a["frames_per_action"] = cfg["ingest"]["frames_per_action"]
    jobs = [(f, a) for f in files]
    workers = max(1, int(cfg["ingest"]["workers"]))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_analyze_one, jobs))
    else:
        outcomes = [_analyze_one(j) for j in jobs]
    results = [(n, r) for n, r, e in outcomes if r is not None]
    failures = {n: e for n, r, e in outcomes if e is not None}
    for name, err in failures.items():
        print(f"{name}: skipped ({err})", file=sys.stderr)
    if not results:
        raise UserError("analysis failed for every trial")
    if len(results) < 2:
        raise UserError("need at least 2 analyzable trials for inter-trial statistics")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    actions = list(a["actions"] or mocap.ANALYSIS_SUBSETS[a["task"]])
    k = a["frames_per_action"]
    u = mocap.action_time(len(actions), k)
    prov = config.provenance(cfg, files, "analyze")
    header = {"type": "ellipsoids", "task": a["task"], "arm": a["arm"], "kind": a["kind"],
              "frame_tag": a["frame"], "actions": actions, "frames_per_action": k,
              "trials": [n for n, _ in results], "failures": failures, "provenance": prov}
    with open(out / "ellipsoids.jsonl", "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for name, r in results:
            for j in range(len(r.times)):
                rec = {"trial": name, "participant_id": r.participant_id, "t": float(r.times[j]),
                       "u": float(u[j]), "action": r.actions[j], "frame_tag": a["frame"],
                       "kind": a["kind"], "singular": bool(r.singular[j]),
                       "spd": spd_to_json(r.matrices[j])}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    aligned = analysis.align([r for _, r in results])
    prof = profile.build_profile(aligned, u, actions, k, a["kind"], a["frame"])
    _dump(out / "profile.json", profile.profile_to_json(prof, prov))
    report.write_index_csv(out / "indices.csv", prof, prov)
    print(f"analyzed {len(results)} trials ({len(failures)} skipped): "
          f"{len(actions)} actions x {k} timesteps -> {out}")
    return EXIT_OK


# --- learn-profile ------------------------------------------------------------------

def _read_ellipsoids(path):
    with open(path) as fh:
        lines = [json.loads(ln) for ln in fh if ln.strip()]
    if not lines:
        raise UserError(f"{path} is empty")
    header = lines[0] if "spd" not in lines[0] else {}
    recs = [r for r in lines if "spd" in r]
    if not recs:
        raise UserError(f"{path} has no ellipsoid records")
    if any("u" not in r for r in recs):
        raise UserError(f"{path}: records need a normalized time 'u'")
    u = np.array([r["u"] for r in recs])
    X = np.stack([spd_from_json(r["spd"]) for r in recs])
    return header, u, X


def cmd_learn(args, cfg):
    header, u, X = _read_ellipsoids(args.inp)
    g = cfg["gmm"]
    K = args.K or g["K"] or config.DEFAULT_K.get(header.get("task", "custom"), 5)
    model = profile.fit_gmm(u, X, K=K, seed=g["seed"], max_em_iter=g["max_em_iter"], tol=g["tol"],
                            init=g["init"])
    doc = profile.gmm_to_json(model, config.provenance(cfg, [args.inp], "learn-profile"))
    for key in ("task", "arm", "kind", "frame_tag"):
        if key in header:
            doc[key] = header[key]
    _dump(args.out, doc)
    print(f"fitted K={K} on {len(u)} ellipsoids, {len(model.log_likelihood) - 1} EM iterations, "
          f"log-likelihood {model.log_likelihood[-1]:.6g} -> {args.out}")
    return EXIT_OK


# --- track ---------------------------------------------------------------------------

def cmd_track(args, cfg):
    robot = robots.load_robot(args.robot or cfg["robot"]["model"])
    target = profile.load_target_source(args.profile)
    ccfg = config.controller_config(cfg)
    c = cfg["controller"]
    duration = c["duration"] if args.duration is None else args.duration
    inputs = [args.profile] + ([args.cfg] if args.cfg else [])
    if Path(str(args.robot)).exists():
        inputs.append(args.robot)
    prov = config.provenance(cfg, inputs, "track")
    out = Path(args.out)
    try:
        if isinstance(robot, DualArmSystem):
            run = control.run_dual_arm_tracking(robot, target, ccfg, duration)
        else:
            tx = np.asarray(c["target_position"], float) if c["target_position"] else None
            run = control.run_tracking(robot, target, ccfg, duration, target_x=tx)
    except DivergenceError as exc:
        trace = out.with_name(out.stem + ".trace.jsonl")
        if exc.trace is not None:
            control.write_run(trace, exc.trace, {"provenance": prov, "error": str(exc)})
        print(f"tracking diverged: {exc}; diagnostic trace: {trace}", file=sys.stderr)
        return EXIT_NUMERIC
    control.write_run(out, run, {"provenance": prov})
    print(f"tracked {run.t.size - 1} steps: final ellipsoid distance {run.spd_distance[-1]:.4g}, "
          f"position error {run.pos_error[-1]:.3g} m -> {out}")
    return EXIT_OK


# --- report --------------------------------------------------------------------------

def cmd_report(args, cfg):
    path = Path(args.inp)
    if not path.exists():
        raise UserError(f"{path} not found")
    r = cfg["report"]
    prov = config.provenance(cfg, [path], "report")
    first = path.read_text().lstrip()[:1]
    out = Path(args.out)
    if path.suffix == ".json" and first == "{":
        doc = json.loads(path.read_text())
        if doc.get("type") != "manipulability_profile":
            raise UserError(f"{path}: report needs a run log or a statistics profile")
        prof = profile.profile_from_json(doc)
        out.mkdir(parents=True, exist_ok=True)
        report.write_index_csv(out / "indices.csv", prof, prov)
        report.plot_profile(out / "profile.svg", prof, prov)
        written = [out / "indices.csv", out / "profile.svg"]
    else:
        try:
            _, run = control.read_run(path)
        except ValueError as exc:
            raise UserError(str(exc)) from exc
        written = report.run_report(run, out, tuple(r["planes"]), int(r["ellipse_count"]), prov)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="manipulant", description=__doc__.splitlines()[0])
    p.add_argument("--cfg", help="pipeline configuration (TOML)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic motion-capture trials")
    s.add_argument("--task", required=True, choices=mocap.SCREW_TASKS + mocap.CARRY_TASKS)
    s.add_argument("--seed", type=int, help="participant seed (first of --count)")
    s.add_argument("--noise", type=float, help="smooth noise amplitude in metres")
    s.add_argument("--count", type=int, default=1, help="number of trials (consecutive seeds)")
    s.add_argument("--out", help="output trial file (single trial)")
    s.add_argument("--out-dir", help="output directory (several trials)")
    s.add_argument("--votes", action="store_true", help="write simulated 3-annotator label votes")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="validate and summarize a directory of trials")
    s.add_argument("--dir", required=True, help="directory of *.jsonl trials")
    s.add_argument("--out", help="write the summary as JSON")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("analyze", help="ellipsoids, statistics profile and index tracks")
    s.add_argument("--dir", required=True, help="directory of *.jsonl trials")
    s.add_argument("--task", choices=mocap.TASKS)
    s.add_argument("--arm", choices=analysis.ARMS)
    s.add_argument("--kind", choices=analysis.KINDS)
    s.add_argument("--frame", choices=analysis.FRAMES, help="frame tag of the ellipsoids")
    s.add_argument("--frames-per-action", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("learn-profile", help="fit a time-driven SPD mixture")
    s.add_argument("--in", dest="inp", required=True, help="ellipsoids.jsonl from analyze")
    s.add_argument("--K", type=int, help="number of components")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("track", help="simulate manipulability tracking")
    s.add_argument("--robot", help="bundled model name or robot JSON")
    s.add_argument("--profile", required=True, help="mixture, profile or single-matrix JSON")
    s.add_argument("--duration", type=float, help="simulated seconds")
    s.add_argument("--out", required=True, help="run log (JSON lines)")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("report", help="CSV tracks and SVG plots")
    s.add_argument("--in", dest="inp", required=True, help="run log or statistics profile")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_report)
    return p


def _overrides(args):
    o = {"analysis": {}, "ingest": {}}
    for key in ("task", "arm", "kind", "frame"):
        if getattr(args, key, None) is not None and args.command == "analyze":
            o["analysis"][key] = getattr(args, key)
    if getattr(args, "frames_per_action", None) is not None:
        o["ingest"]["frames_per_action"] = args.frames_per_action
    return o


def main(argv=None):
    parser = build_parser()
    # Accept --cfg after the subcommand too (``manipulant track --cfg c.toml``).
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--cfg" in argv[1:]:
        i = argv.index("--cfg")
        if i + 1 < len(argv):
            argv = ["--cfg", argv[i + 1]] + argv[:i] + argv[i + 2:]
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config.load_config(args.cfg, _overrides(args))
        return args.func(args, cfg)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UserError, ConfigError, ManipulantError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
