"""From wrist poses to aligned manipulability ellipsoids.

Per trial: segment actions, subsample each action to a fixed frame count,
recover joint angles through the arm triangle, and evaluate the hand
ellipsoid. Stacking trials gives the timestep-major array consumed by
:func:`profile.build_profile`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from . import manipulability as mm
from .mocap import ANALYSIS_SUBSETS, action_time, subsample_segments, task_segments

ARMS = ("right", "left", "both")
KINDS = ("velocity", "force")
FRAMES = ("shoulder", "neck")


class MissingActionsError(ValueError):
    """A trial lacks actions the analysis needs."""


def human_arms(trial):
    """Right and left arm models from the trial anthropometry.

    Both shoulders share the trunk frame's orientation, so ellipsoids in the
    shoulder and neck frames differ only by a translation (which does not
    affect them).
    """
    a = trial.anthropometry
    half = a["shoulder_half_width"]
    lengths = dict(upper_arm_length=a["upper_arm_length"], forearm_length=a["forearm_length"],
                   hand_length=a["hand_length"])
    right = kin.AnthropomorphicArm(**lengths, shoulder_frame=kin.translation(0, -half, 0), side="right")
    left = kin.AnthropomorphicArm(**lengths, shoulder_frame=kin.translation(0, half, 0), side="left")
    return right, left


_S = np.diag([1.0, -1.0, 1.0, 1.0])


def _left_chain(left):
    # Left arm = mirror image of a right arm about the sagittal plane.
    ref = kin.AnthropomorphicArm(left.upper_arm_length, left.forearm_length, left.hand_length,
                                 _S @ left.shoulder_frame @ _S, "right")
    return ref, kin.mirror_chain(ref.chain("hand"), name="left_arm_hand")


def arm_joints(arm, pose, q_hint=None):
    """Joint angles for a wrist pose (precomputed ``q_hint`` wins)."""
    if q_hint is not None:
        return np.asarray(q_hint, float)
    return kin.arm_triangle_to_joints(arm, kin.wrist_pose_to_arm_triangle(arm, pose))


@dataclass
class TrialEllipsoids:
    participant_id: str
    times: np.ndarray          # original timestamps of the sampled frames
    actions: list
    matrices: np.ndarray       # (T, D, D)
    singular: np.ndarray       # (T,) bool
    short_segments: list


def trial_ellipsoids(trial, arm="right", kind="velocity", frames_per_action=20, subset=None,
                     frame="shoulder"):
    """Ellipsoids at the subsampled frames of one trial.

    Raises
    ------
    MissingActionsError
        When an action of the subset never occurs in the trial.
    """
    if arm not in ARMS or kind not in KINDS or frame not in FRAMES:
        raise ValueError(f"arm in {ARMS}, kind in {KINDS}, frame in {FRAMES}")
    segments, missing = task_segments(trial, subset)
    if missing:
        raise MissingActionsError(f"trial {trial.participant_id} lacks actions {', '.join(missing)}")
    sub = subsample_segments(trial, segments, frames_per_action)
    right, left = human_arms(trial)
    left_ref, left_chain = _left_chain(left)
    right_chain = right.chain("hand")
    system = None
    if arm == "both":
        system = mm.DualArmSystem(left_chain, right_chain)
    mats, sing = [], []
    for f in sub.frames:
        if arm in ("right", "both"):
            qr = arm_joints(right, f.right, f.q_right)
        if arm in ("left", "both"):
            ql = arm_joints(left_ref, _S @ f.left @ _S, f.q_left)
        if arm == "right":
            ell = mm.velocity_manipulability(right_chain, qr, "position", frame)
        elif arm == "left":
            ell = mm.velocity_manipulability(left_chain, ql, "position", frame)
        else:
            q = system.join(ql, qr)
            sys = system.with_grasp(system.grasp_at(q))
            ell = mm.dual_arm_velocity_manipulability(sys, q, "position", frame, check=False)
        if kind == "force":
            ell = mm.invert_ellipsoid(ell)
        mats.append(ell.matrix)
        sing.append(ell.singular)
    return TrialEllipsoids(trial.participant_id, np.array([f.t for f in sub.frames]), sub.actions,
                           np.array(mats), np.array(sing), sub.short_segments)


def align(results):
    """Stack per-trial ellipsoids into a (T, N, D, D) array; shapes must agree."""
    if not results:
        raise ValueError("no trials to align")
    shapes = {r.matrices.shape for r in results}
    if len(shapes) != 1:
        raise ValueError(f"trials disagree on ellipsoid counts: {sorted(shapes)}")
    return np.stack([r.matrices for r in results], axis=1)


def analysis_time(task, subset, frames_per_action):
    subset = ANALYSIS_SUBSETS[task] if subset is None else subset
    return action_time(len(subset), frames_per_action)
