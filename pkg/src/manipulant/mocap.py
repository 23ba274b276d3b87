"""Motion-capture trials: data model, JSON-lines format, action segmentation,
per-action subsampling and a seeded synthetic trial generator.

Positions are expressed in a trunk ("neck") frame: origin midway between the
shoulders, x forward, y to the participant's left, z up. ``neck_height`` is
the height of that origin above the floor, so a wrist's height above the
floor is ``neck_height + pos[2]``.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .kinematics import pose_from_quat, quat_from_pose, transform

log = logging.getLogger(__name__)

ACTIONS = ("Re", "Pi", "Ca", "Pl", "Fm", "Sc", "Rl")
TASKS = ("SL", "SM", "SH", "C5", "C10", "custom")
SCREW_TASKS = ("SL", "SM", "SH")
CARRY_TASKS = ("C5", "C10")

TASK_SEQUENCES = {
    **{t: ACTIONS for t in SCREW_TASKS},
    **{t: ("Re", "Pi", "Ca", "Pl", "Rl") for t in CARRY_TASKS},
    "custom": ACTIONS,
}
ANALYSIS_SUBSETS = {
    **{t: ACTIONS for t in SCREW_TASKS},
    **{t: ("Pi", "Ca", "Pl") for t in CARRY_TASKS},
    "custom": ACTIONS,
}


@dataclass(frozen=True)
class TaskMetadata:
    """Heights (m above the floor) and loads (kg) of the recorded tasks."""

    screw_heights: dict = field(default_factory=lambda: {"SL": 0.60, "SM": 1.15, "SH": 1.75})
    pick_table_heights: dict = field(default_factory=lambda: {"screw": 0.75, "carry": 0.55})
    loads: dict = field(default_factory=lambda: {"C5": 5.0, "C10": 10.0})
    shelf_heights: dict = field(default_factory=lambda: {"C5": 0.20, "C10": 1.10})

    def __post_init__(self):
        for group in (self.screw_heights, self.pick_table_heights, self.loads, self.shelf_heights):
            if any(v <= 0 for v in group.values()):
                raise ValueError("task metadata values must be positive")


TASK_METADATA = TaskMetadata()

DEFAULT_ANTHROPOMETRY = {
    "upper_arm_length": 0.30,
    "forearm_length": 0.25,
    "hand_length": 0.10,
    "shoulder_half_width": 0.18,
}
STANDING_NECK_HEIGHT = 1.45


@dataclass
class Frame:
    t: float
    left: np.ndarray            # 4x4 wrist pose, trunk frame
    right: np.ndarray
    label: str | None
    neck_height: float = STANDING_NECK_HEIGHT
    q_left: np.ndarray | None = None
    q_right: np.ndarray | None = None


@dataclass
class TrialRecording:
    participant_id: str
    task: str
    frames: list
    sample_rate: float
    anthropometry: dict = field(default_factory=lambda: dict(DEFAULT_ANTHROPOMETRY))
    excluded_frames: int = 0
    source: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if not self.frames:
            raise ValueError("a trial needs at least one frame")
        t = np.array([f.t for f in self.frames])
        if np.any(np.diff(t) <= 0):
            raise ValueError("frame timestamps must be strictly increasing")
        anth = dict(DEFAULT_ANTHROPOMETRY)
        anth.update(self.anthropometry or {})
        self.anthropometry = anth

    @property
    def labels(self):
        return [f.label for f in self.frames]

    @property
    def times(self):
        return np.array([f.t for f in self.frames])


@dataclass(frozen=True)
class ActionSegment:
    action: str
    start: int
    stop: int       # exclusive

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")
        if self.stop <= self.start or self.start < 0:
            raise ValueError("segments must be nonempty")

    def __len__(self):
        return self.stop - self.start


def resolve_label(votes):
    """Majority label among annotators, or None on a tie."""
    if votes is None or isinstance(votes, str):
        return votes
    counts = Counter(votes).most_common()
    if not counts:
        return None
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return None
    return counts[0][0]


# --- I/O -------------------------------------------------------------------

def _check_rotation(T):
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-8:
        raise ValueError("wrist rotation is not orthonormal")


def frame_from_record(rec):
    left = pose_from_quat(rec["lw_pos"], rec["lw_quat"])
    right = pose_from_quat(rec["rw_pos"], rec["rw_quat"])
    _check_rotation(left)
    _check_rotation(right)
    votes = rec.get("label")
    return Frame(
        t=float(rec["t"]),
        left=left,
        right=right,
        label=resolve_label(votes),
        neck_height=float(rec.get("neck_height", STANDING_NECK_HEIGHT)),
        q_left=None if rec.get("q_left") is None else np.asarray(rec["q_left"], float),
        q_right=None if rec.get("q_right") is None else np.asarray(rec["q_right"], float),
    )


def _round(x):
    return [float(v) for v in np.asarray(x, float).ravel()]


def frame_to_record(frame, votes=None):
    rec = {
        "t": float(frame.t),
        "lw_pos": _round(frame.left[:3, 3]),
        "lw_quat": _round(quat_from_pose(frame.left)),
        "rw_pos": _round(frame.right[:3, 3]),
        "rw_quat": _round(quat_from_pose(frame.right)),
        "label": votes if votes is not None else frame.label,
        "neck_height": float(frame.neck_height),
    }
    if frame.q_left is not None:
        rec["q_left"] = _round(frame.q_left)
    if frame.q_right is not None:
        rec["q_right"] = _round(frame.q_right)
    return rec


def read_trial(path):
    """Load a JSON-lines trial (header line, then one frame per line).

    Frames whose annotator votes tie are dropped and counted in
    ``excluded_frames``.
    """
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trial file")
    header = json.loads(lines[0])
    frames, excluded = [], 0
    for i, line in enumerate(lines[1:], start=2):
        try:
            frame = frame_from_record(json.loads(line))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{i}: {exc}") from exc
        if frame.label is None:
            excluded += 1
            continue
        frames.append(frame)
    return TrialRecording(
        participant_id=str(header["participant_id"]),
        task=header["task"],
        frames=frames,
        sample_rate=float(header["sample_rate"]),
        anthropometry=header.get("anthropometry", {}),
        excluded_frames=excluded,
        source=str(path),
    )


def trial_header(trial, provenance=None):
    head = {
        "participant_id": trial.participant_id,
        "task": trial.task,
        "sample_rate": trial.sample_rate,
        "anthropometry": trial.anthropometry,
    }
    if provenance is not None:
        head["provenance"] = provenance
    return head


def write_trial(path, trial, provenance=None, votes=None):
    with open(path, "w") as fh:
        fh.write(json.dumps(trial_header(trial, provenance), sort_keys=True) + "\n")
        for i, frame in enumerate(trial.frames):
            rec = frame_to_record(frame, None if votes is None else votes[i])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --- segmentation ------------------------------------------------------------

def segment_actions(trial, action_subset=None):
    """Maximal contiguous runs of the requested labels, in temporal order.

    Returns ``(segments, missing)`` where ``missing`` lists requested actions
    that never occur in the trial.
    """
    subset = tuple(ANALYSIS_SUBSETS[trial.task] if action_subset is None else action_subset)
    for a in subset:
        if a not in ACTIONS:
            raise ValueError(f"unknown action {a!r}")
    segments = []
    labels = trial.labels
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            if labels[start] in subset:
                segments.append(ActionSegment(labels[start], start, i))
            start = i
    present = {s.action for s in segments}
    missing = [a for a in subset if a not in present]
    if missing:
        log.info("trial %s: actions missing: %s", trial.participant_id, ",".join(missing))
    return segments, missing


def task_segments(trial, action_subset=None):
    """One segment per requested action, following the task's action order.

    Repeated runs of an action keep the longest. Returns ``(segments, missing)``;
    segments come in declared task order.
    """
    segs, missing = segment_actions(trial, action_subset)
    best = {}
    for s in segs:
        if s.action not in best or len(s) > len(best[s.action]):
            best[s.action] = s
    subset = ANALYSIS_SUBSETS[trial.task] if action_subset is None else action_subset
    order = [a for a in TASK_SEQUENCES[trial.task] if a in subset]
    order += [a for a in subset if a not in order]
    return [best[a] for a in order if a in best], missing


def subsample_indices(segment, k):
    """``k`` equally spaced frame indices spanning the segment endpoints.

    Returns ``(indices, short)``; ``short`` is True when the segment has fewer
    than ``k`` frames, in which case some indices repeat.
    """
    if k < 2:
        raise ValueError("frames_per_action must be at least 2")
    pos = np.linspace(segment.start, segment.stop - 1, k)
    idx = np.floor(pos + 0.5).astype(int)
    return idx, len(segment) < k


@dataclass
class Subsample:
    frames: list
    indices: np.ndarray
    actions: list
    short_segments: list


def subsample_segments(trial, segments, frames_per_action=20):
    """Equal-count subsampling of every segment (``frames_per_action`` each)."""
    frames, indices, actions, short = [], [], [], []
    for seg in segments:
        idx, is_short = subsample_indices(seg, frames_per_action)
        if is_short:
            log.warning("segment %s of %s shorter than %d frames; repeating frames",
                        seg.action, trial.participant_id, frames_per_action)
            short.append(seg)
        indices.extend(idx.tolist())
        frames.extend(trial.frames[i] for i in idx)
        actions.extend([seg.action] * frames_per_action)
    return Subsample(frames, np.array(indices, dtype=int), actions, short)


def action_time(n_actions, frames_per_action):
    """Normalized time of each subsampled frame: action ``a`` spans
    ``[a / A, (a + 1) / A]``."""
    j = np.arange(frames_per_action) / (frames_per_action - 1)
    return np.concatenate([(a + j) / n_actions for a in range(n_actions)])


# --- synthetic trials ----------------------------------------------------------

_SCREW_DURATIONS = {"Re": 1.0, "Pi": 0.8, "Ca": 2.0, "Pl": 1.0, "Fm": 1.2, "Sc": 2.5, "Rl": 1.0}
_CARRY_DURATIONS = {"Re": 1.0, "Pi": 1.0, "Ca": 2.5, "Pl": 1.2, "Rl": 1.0}
_REACH_MARGIN = 0.40


def _hand_rotation(p, f):
    p = np.asarray(p, float) / np.linalg.norm(p)
    f = np.asarray(f, float)
    f = f - (f @ p) * p
    f /= np.linalg.norm(f)
    return np.column_stack([p, np.cross(f, p), f])


def _neck_for(height):
    return min(STANDING_NECK_HEIGHT, height + _REACH_MARGIN)


def _screw_waypoints(task):
    """Right-wrist waypoints as (action, pos rel. right shoulder, rotation, neck height)."""
    H = TASK_METADATA.screw_heights[task]
    table = TASK_METADATA.pick_table_heights["screw"]
    rest = (np.array([0.03, -0.03, -0.53]), _hand_rotation([0, 1, 0], [0, 0, -1]), STANDING_NECK_HEIGHT)
    neck_t = table + 0.40
    neck_s = _neck_for(H - 0.05)
    fwd_s = np.sqrt(0.50 ** 2 - (H - neck_s) ** 2)
    screw_pos = np.array([fwd_s, 0.06, H - neck_s])
    screw_rot = _hand_rotation([0, 1, 0], [1, 0, 0])
    return rest, [
        ("Re", np.array([0.30, 0.04, table - neck_t]), _hand_rotation([0, 0, -1], [1, 0, -0.3]), neck_t),
        ("Pi", np.array([0.28, 0.06, table + 0.04 - neck_t]), _hand_rotation([0, 0, -1], [1, 0, 0]), neck_t),
        ("Ca", np.array([0.30, 0.10, -0.28]), _hand_rotation([0, 1, 0], [1, 0, 0.2]), STANDING_NECK_HEIGHT),
        ("Pl", screw_pos - np.array([0.02, 0.0, 0.0]), screw_rot, neck_s),
        ("Fm", screw_pos, screw_rot, neck_s),
        ("Sc", screw_pos, screw_rot, neck_s),
        ("Rl", rest[0], rest[1], STANDING_NECK_HEIGHT),
    ]


def _carry_waypoints(task):
    table = TASK_METADATA.pick_table_heights["carry"]
    shelf = TASK_METADATA.shelf_heights[task]
    rest = (np.array([0.03, -0.03, -0.53]), _hand_rotation([0, 1, 0], [0, 0, -1]), STANDING_NECK_HEIGHT)
    neck_t = table + 0.40
    neck_p = _neck_for(shelf)
    grip = _hand_rotation([0, 1, 0], [1, 0, -0.5])
    return rest, [
        ("Re", np.array([0.30, 0.04, table - neck_t]), grip, neck_t),
        ("Pi", np.array([0.28, 0.04, table + 0.10 - neck_t]), grip, neck_t),
        ("Ca", np.array([0.25, 0.04, -0.44]), _hand_rotation([0, 1, 0], [1, 0, 0]), STANDING_NECK_HEIGHT),
        ("Pl", np.array([0.32, 0.04, shelf - neck_p]), grip, neck_p),
        ("Rl", rest[0], rest[1], STANDING_NECK_HEIGHT),
    ]


def _min_jerk(s):
    return 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5


def _smooth_noise(rng, t, dims, amplitude):
    if amplitude == 0.0:
        return np.zeros((t.size, dims))
    out = np.zeros((t.size, dims))
    for _ in range(3):
        freq = rng.uniform(0.2, 1.5, size=dims)
        phase = rng.uniform(0, 2 * np.pi, size=dims)
        out += np.sin(2 * np.pi * freq * t[:, None] + phase) / 3.0
    return amplitude * out


def synth_trial(task, participant_seed, noise_level=0.005, sample_rate=60.0):
    """Deterministic synthetic trial for ``task``.

    Wrists follow minimum-jerk paths through task waypoints placed at the
    recorded heights; the left arm mirrors the right. ``noise_level`` (m) adds
    seeded smooth perturbations; 0 gives the exact waypoint trajectory.
    """
    if task not in SCREW_TASKS + CARRY_TASKS:
        raise ValueError(f"synthetic trials exist for {SCREW_TASKS + CARRY_TASKS}, not {task!r}")
    rng = np.random.default_rng(participant_seed)
    screw = task in SCREW_TASKS
    rest, waypoints = _screw_waypoints(task) if screw else _carry_waypoints(task)
    base_dur = _SCREW_DURATIONS if screw else _CARRY_DURATIONS
    durations = {a: d * rng.uniform(0.85, 1.15) for a, d in base_dur.items()}

    dt = 1.0 / sample_rate
    half = DEFAULT_ANTHROPOMETRY["shoulder_half_width"]
    shoulder_r = np.array([0.0, -half, 0.0])
    times, pos, rots, neck, labels = [], [], [], [], []
    prev_pos, prev_rot, prev_neck = rest
    t0 = 0.0
    for action, wp_pos, wp_rot, wp_neck in waypoints:
        n = max(2, int(round(durations[action] * sample_rate)))
        s = _min_jerk(np.arange(n) / (n - 1))
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([prev_rot, wp_rot])))
        seg_rot = slerp(s).as_matrix()
        seg_pos = prev_pos + s[:, None] * (wp_pos - prev_pos)
        if action == "Sc":
            # Screwing: hand rolls about the finger axis.
            roll = 0.6 * np.sin(2 * np.pi * 1.2 * np.arange(n) * dt)
            seg_rot = np.einsum("nij,njk->nik", seg_rot,
                                Rotation.from_rotvec(np.outer(roll, [0, 0, 1])).as_matrix())
        seg_neck = prev_neck + s * (wp_neck - prev_neck)
        times.append(t0 + np.arange(n) * dt)
        pos.append(seg_pos)
        rots.append(seg_rot)
        neck.append(seg_neck)
        labels.extend([action] * n)
        t0 += n * dt
        prev_pos, prev_rot, prev_neck = wp_pos, wp_rot, wp_neck

    t = np.concatenate(times)
    pos = np.concatenate(pos) + _smooth_noise(rng, t, 3, noise_level)
    rots = np.concatenate(rots)
    if noise_level > 0:
        rots = np.einsum("nij,njk->nik", rots,
                         Rotation.from_rotvec(_smooth_noise(rng, t, 3, 2.0 * noise_level)).as_matrix())
    neck = np.concatenate(neck)
    pos = _clip_reach(pos)

    S = np.diag([1.0, -1.0, 1.0])
    frames = []
    for i in range(t.size):
        right = transform(rots[i], shoulder_r + pos[i])
        lp, lf = S @ rots[i][:, 0], S @ rots[i][:, 2]
        left = transform(_hand_rotation(lp, lf), S @ (shoulder_r + pos[i]))
        frames.append(Frame(float(t[i]), left, right, labels[i], float(neck[i])))
    return TrialRecording(f"P{int(participant_seed):03d}", task, frames, float(sample_rate))


def synth_votes(trial, seed, annotators=3):
    """Simulated annotator votes: each annotator shifts action boundaries by
    at most one frame. The per-frame majority equals the true label."""
    rng = np.random.default_rng(seed)
    labels = trial.labels
    n = len(labels)
    votes = [[lab] for lab in labels]
    for _ in range(annotators - 1):
        shift = int(rng.integers(-1, 2))
        for i in range(n):
            j = min(max(i + shift, 0), n - 1)
            votes[i].append(labels[j])
    for i in range(n):
        if Counter(votes[i]).most_common(1)[0][0] != labels[i]:
            votes[i] = [labels[i]] * annotators
    return votes


def _clip_reach(pos):
    arm = DEFAULT_ANTHROPOMETRY
    hi = arm["upper_arm_length"] + arm["forearm_length"] - 0.005
    lo = abs(arm["upper_arm_length"] - arm["forearm_length"]) + 0.02
    r = np.linalg.norm(pos, axis=1, keepdims=True)
    return pos * np.clip(r, lo, hi) / r


def wrist_heights(trial, side="right"):
    """Wrist height above the floor for each frame."""
    return np.array([f.neck_height + (f.right if side == "right" else f.left)[2, 3]
                     for f in trial.frames])
