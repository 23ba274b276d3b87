import numpy as np
import pytest

from manipulant import analysis, kinematics as kin, mocap


@pytest.fixture(scope="module")
def trial():
    return mocap.synth_trial("SM", 4)


@pytest.fixture(scope="module")
def right(trial):
    return analysis.trial_ellipsoids(trial, "right")


def test_one_ellipsoid_per_subsampled_frame(right):
    assert right.matrices.shape == (140, 3, 3)
    assert right.actions[::20] == list(mocap.ACTIONS)
    assert not right.singular.any()
    assert np.all(np.diff(right.times) >= 0)


def test_recovered_joints_reproduce_wrist_poses(trial):
    arm, _ = analysis.human_arms(trial)
    wrist = arm.chain("wrist")
    for f in trial.frames[::25]:
        q = analysis.arm_joints(arm, f.right)
        T = kin.forward_kinematics(wrist, q)
        assert np.max(np.abs(T[:3, 3] - f.right[:3, 3])) <= 1e-6
        assert kin.rotation_error(T[:3, :3], f.right[:3, :3]) <= 1e-6


def test_left_arm_ellipsoids_mirror_the_right(trial, right):
    left = analysis.trial_ellipsoids(trial, "left")
    S = np.diag([1.0, -1.0, 1.0])
    np.testing.assert_allclose(left.matrices, S @ right.matrices @ S, atol=1e-10)


def test_force_ellipsoids_invert_velocity_ones(trial, right):
    force = analysis.trial_ellipsoids(trial, "right", kind="force")
    np.testing.assert_allclose(force.matrices @ right.matrices, np.broadcast_to(np.eye(3), (140, 3, 3)),
                               atol=1e-8)


def test_frame_tags_share_orientation(trial, right):
    neck = analysis.trial_ellipsoids(trial, "right", frame="neck")
    np.testing.assert_array_equal(neck.matrices, right.matrices)


def test_both_arms_give_object_ellipsoid(trial):
    both = analysis.trial_ellipsoids(trial, "both", subset=["Ca"], frames_per_action=5)
    assert both.matrices.shape == (5, 3, 3)
    assert np.all(np.linalg.eigvalsh(both.matrices)[:, 0] > 0)
    S = np.diag([1.0, -1.0, 1.0])
    # Mirrored arms: the object ellipsoid is symmetric under the sagittal reflection.
    np.testing.assert_allclose(S @ both.matrices @ S, both.matrices, atol=1e-10)


def test_missing_actions_are_reported():
    carry = mocap.synth_trial("C5", 0)
    with pytest.raises(analysis.MissingActionsError, match="Sc"):
        analysis.trial_ellipsoids(carry, subset=["Ca", "Sc"])


def test_align_checks_shapes(trial, right):
    short = analysis.trial_ellipsoids(trial, "right", frames_per_action=5)
    with pytest.raises(ValueError):
        analysis.align([right, short])
    with pytest.raises(ValueError):
        analysis.align([])
    assert analysis.align([right, right]).shape == (140, 2, 3, 3)


def test_bad_selection_is_rejected(trial):
    with pytest.raises(ValueError):
        analysis.trial_ellipsoids(trial, arm="middle")
