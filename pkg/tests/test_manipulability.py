import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_chain, random_spd
from manipulant import kinematics as kin
from manipulant import manipulability as mm
from manipulant.errors import GraspError, SingularConfigurationError
from manipulant.robots import load_robot
from manipulant.spd import sym_vec

GOLDEN_RATIO_COND = (3 + np.sqrt(5)) / (3 - np.sqrt(5))


def one_link():
    return kin.KinematicChain.from_offsets([[0, 0, 1]], [[0, 0, 0]], end=kin.translation(1, 0, 0))


def fd_manipulability(chain, q, k, h=1e-6, rows="position"):
    e = np.zeros(chain.n)
    e[k] = h
    Mp = mm.velocity_manipulability(chain, q + e, rows).matrix
    Mm = mm.velocity_manipulability(chain, q - e, rows).matrix
    return (Mp - Mm) / (2 * h)


# --- single chain ---------------------------------------------------------------

def test_planar_ellipsoid_matches_hand_computed_jacobian(planar2):
    J = np.array([[-1.0, -1.0], [1.0, 0.0]])
    ell = mm.velocity_manipulability(planar2, [0.0, np.pi / 2])
    np.testing.assert_allclose(ell.matrix, J @ J.T, atol=1e-15)
    np.testing.assert_allclose(ell.matrix, [[2, -1], [-1, 1]], atol=1e-15)
    assert ell.kind == "velocity" and not ell.singular
    ind = mm.classical_indices(ell)
    assert ind.determinant == pytest.approx(1.0, abs=1e-12)
    assert ind.condition_number == pytest.approx(GOLDEN_RATIO_COND, abs=1e-9)


def test_indices_of_reference_matrix():
    ind = mm.classical_indices(np.array([[2.0, 1.0], [1.0, 1.0]]))
    assert ind.determinant == pytest.approx(1.0, abs=1e-12)
    assert ind.condition_number == pytest.approx(6.8541, abs=1e-4)
    assert ind.condition_number == pytest.approx(GOLDEN_RATIO_COND, abs=1e-9)


@pytest.mark.parametrize("M, det, cond", [(np.eye(3), 1.0, 1.0), (np.diag([4.0, 1.0]), 4.0, 4.0)])
def test_indices_trivial_cases(M, det, cond):
    ind = mm.classical_indices(M)
    assert ind.determinant == pytest.approx(det) and ind.condition_number == pytest.approx(cond)


def test_stretched_planar_arm_is_singular(planar2):
    ell = mm.velocity_manipulability(planar2, [0.0, 0.0])
    assert ell.singular
    assert np.linalg.det(ell.matrix) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(SingularConfigurationError) as info:
        mm.force_manipulability(planar2, [0.0, 0.0])
    assert info.value.min_eigenvalue < 1e-12


def test_one_link_arm_has_rank_one_ellipsoid(rng):
    ell = mm.velocity_manipulability(one_link(), [rng.uniform(-np.pi, np.pi)], "position")
    np.testing.assert_allclose(np.linalg.eigvalsh(ell.matrix), [0, 0, 1], atol=1e-15)
    assert ell.singular


def test_force_ellipsoid_of_reference_matrix():
    ell = mm.ManipulabilityEllipsoid(np.array([[2.0, 1.0], [1.0, 1.0]]))
    force = mm.invert_ellipsoid(ell)
    assert force.kind == "force"
    np.testing.assert_allclose(force.matrix, [[1, -1], [-1, 2]], atol=1e-15)
    np.testing.assert_array_equal(mm.invert_ellipsoid(mm.ManipulabilityEllipsoid(np.eye(3))).matrix,
                                  np.eye(3))


def test_force_and_velocity_share_axes_with_reciprocal_lengths(arm7):
    q = arm7.home
    v = mm.velocity_manipulability(arm7, q).matrix
    f = mm.force_manipulability(arm7, q).matrix
    wv, Vv = np.linalg.eigh(v)
    wf, Vf = np.linalg.eigh(f)
    np.testing.assert_allclose(wf, 1 / wv[::-1], rtol=1e-10)
    np.testing.assert_allclose(np.abs(Vf[:, ::-1].T @ Vv), np.eye(3), atol=1e-8)


def test_duality_on_random_chains(rng):
    for _ in range(30):
        chain = random_chain(rng, int(rng.integers(3, 8)))
        q = rng.uniform(-np.pi, np.pi, chain.n)
        v = mm.velocity_manipulability(chain, q, "position")
        if np.linalg.cond(v.matrix) > 1e6:
            continue
        f = mm.force_manipulability(chain, q, "position")
        assert np.max(np.abs(f.matrix @ v.matrix - np.eye(3))) <= 1e-8


# --- manipulability Jacobian -------------------------------------------------------

def test_manipulability_jacobian_matches_finite_differences(rng):
    for _ in range(30):
        chain = random_chain(rng)
        q = rng.uniform(-np.pi, np.pi, chain.n)
        T = mm.manipulability_jacobian(chain, q, "position")
        for k in range(chain.n):
            fd = fd_manipulability(chain, q, k)
            assert np.linalg.norm(T[:, :, k] - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_slices_are_symmetric(rng):
    chain = random_chain(rng, 6)
    T = mm.manipulability_jacobian(chain, rng.normal(size=6), "full")
    np.testing.assert_allclose(T, T.transpose(1, 0, 2), atol=1e-15)


def test_one_dof_slice_is_derivative():
    q = np.array([0.4])
    T = mm.manipulability_jacobian(one_link(), q, "position")
    # M = (-sin, cos, 0)(-sin, cos, 0)^T, so dM/dq has entries -sin2q, cos2q.
    s, c = np.sin(2 * q[0]), np.cos(2 * q[0])
    np.testing.assert_allclose(T[:, :, 0], [[s, -c, 0], [-c, -s, 0], [0, 0, 0]], atol=1e-15)


def test_matricized_form_maps_joint_rates_to_vec_rates(rng, arm7):
    q = arm7.home + 0.1 * rng.normal(size=7)
    dq = rng.normal(size=7)
    Jm = mm.matricize(mm.manipulability_jacobian(arm7, q))
    h = 1e-6
    dM = (mm.velocity_manipulability(arm7, q + h * dq).matrix
          - mm.velocity_manipulability(arm7, q - h * dq).matrix) / (2 * h)
    np.testing.assert_allclose(Jm @ dq, sym_vec(dM), atol=1e-8)


def test_task_terms_agree_with_separate_calls(arm7, rng):
    q = arm7.home + 0.1 * rng.normal(size=7)
    t = mm.task_terms(arm7, q)
    np.testing.assert_allclose(t.x, kin.forward_kinematics(arm7, q)[:3, 3], atol=1e-15)
    np.testing.assert_allclose(t.J, kin.jacobian(arm7, q), atol=1e-15)
    np.testing.assert_allclose(t.M, mm.velocity_manipulability(arm7, q).matrix, atol=1e-15)
    np.testing.assert_allclose(t.Jm, mm.matricize(mm.manipulability_jacobian(arm7, q)), atol=1e-15)


# --- reframing ------------------------------------------------------------------------

def test_reframe_identity(rng):
    ell = mm.ManipulabilityEllipsoid(random_spd(rng, 3))
    out = mm.reframe(ell, np.eye(3), "neck")
    np.testing.assert_array_equal(out.matrix, ell.matrix)
    assert out.frame == "neck"


def test_reframe_quarter_turn_swaps_axes():
    ell = mm.ManipulabilityEllipsoid(np.diag([1.0, 2.0, 3.0]))
    out = mm.reframe(ell, kin.axis_rotation([0, 0, 1], np.pi / 2), "world")
    np.testing.assert_allclose(out.matrix, np.diag([2.0, 1.0, 3.0]), atol=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_indices_invariant_under_reframe(seed):
    rng = np.random.default_rng(seed)
    ell = mm.ManipulabilityEllipsoid(random_spd(rng, 3))
    R = sla.expm(kin.skew(rng.normal(size=3)))
    a, b = mm.classical_indices(ell), mm.classical_indices(mm.reframe(ell, R, "x"))
    assert b.determinant == pytest.approx(a.determinant, rel=1e-10)
    assert b.condition_number == pytest.approx(a.condition_number, rel=1e-10)


def test_reframe_rejects_non_rotation():
    with pytest.raises(ValueError):
        mm.reframe(mm.ManipulabilityEllipsoid(np.eye(3)), np.diag([1.0, 1.0, 2.0]), "x")


# --- dual arm -------------------------------------------------------------------------

def independent_arms(offset=0.2):
    right = kin.AnthropomorphicArm(shoulder_frame=kin.translation(0, -offset, 0)).chain("hand")
    left = kin.mirror_chain(right)
    return mm.DualArmSystem(left, right)


ARM_Q = np.array([-0.5, -0.1, 0.2, 1.3, 0.0, 0.3, 0.0])


def test_independent_arms_give_block_diagonal_jacobian():
    sys = independent_arms()
    q = sys.join(ARM_Q, ARM_Q)
    Jd = mm.dual_jacobian(sys, q)
    Jl = kin.jacobian(sys.left, ARM_Q)
    Jr = kin.jacobian(sys.right, ARM_Q)
    np.testing.assert_array_equal(Jd, sla.block_diag(Jl, Jr))


def test_mirror_symmetric_dual_ellipsoid():
    sys = independent_arms()
    q = sys.join(ARM_Q, ARM_Q)
    sys = sys.with_grasp(sys.grasp_at(q))
    M = mm.dual_arm_velocity_manipulability(sys, q).matrix
    R = np.diag([1.0, -1.0, 1.0])
    np.testing.assert_allclose(R @ M @ R.T, M, atol=1e-14)


def test_positional_grasp_averages_the_arm_ellipsoids():
    base = kin.AnthropomorphicArm().chain("hand")
    sys = mm.DualArmSystem(base.with_base(kin.translation(0, 0.2, 0)), base.with_base(kin.translation(0, -0.2, 0)))
    q = sys.join(ARM_Q, ARM_Q + 0.1)
    sys = sys.with_grasp(sys.grasp_at(q))
    Ml = mm.velocity_manipulability(sys.left, ARM_Q).matrix
    Mr = mm.velocity_manipulability(sys.right, ARM_Q + 0.1).matrix
    Md = mm.dual_arm_velocity_manipulability(sys, q).matrix
    np.testing.assert_allclose(Md, (Ml + Mr) / 4, atol=1e-14)


def test_locked_arm_contributes_nothing():
    # A joint whose axis passes through the hand moves nothing positionally.
    locked = kin.KinematicChain.from_offsets([[0, 0, 1]], [[0, 0.2, 0]], end=kin.translation(0, 0, 0.1))
    right = kin.AnthropomorphicArm(shoulder_frame=kin.translation(0, -0.2, 0)).chain("hand")
    sys = mm.DualArmSystem(locked, right)
    q = sys.join([0.3], ARM_Q)
    sys = sys.with_grasp(sys.grasp_at(q))
    Mr = mm.velocity_manipulability(right, ARM_Q).matrix
    np.testing.assert_allclose(mm.dual_arm_velocity_manipulability(sys, q).matrix, Mr / 4, atol=1e-15)


def test_dual_ellipsoid_psd_and_definite_at_generic_posture(rng):
    sys = load_robot("dual_arm")
    for _ in range(10):
        q = sys.home + 0.3 * rng.normal(size=sys.n)
        s = sys.with_grasp(sys.grasp_at(q))
        ell = mm.dual_arm_velocity_manipulability(s, q)
        assert np.linalg.eigvalsh(ell.matrix)[0] > 0
        force = mm.dual_arm_force_manipulability(s, q)
        np.testing.assert_allclose(force.matrix @ ell.matrix, np.eye(3), atol=1e-8)


def test_grasp_consistency_is_checked():
    sys = independent_arms()
    q = sys.join(ARM_Q, ARM_Q)
    sys = sys.with_grasp(sys.grasp_at(q))
    moved = sys.join(ARM_Q + 0.2, ARM_Q)
    with pytest.raises(GraspError):
        mm.dual_arm_velocity_manipulability(sys, moved)
    with pytest.raises(GraspError):
        mm.dual_arm_velocity_manipulability(independent_arms(), q)


def test_shared_torso_stacks_jacobians(rng):
    sys = load_robot("dual_arm")
    assert sys.shared and sys.n == 16
    q = sys.home + 0.1 * rng.normal(size=sys.n)
    Jd = mm.dual_jacobian(sys, q)
    ql, qr = sys.split(q)
    np.testing.assert_array_equal(Jd[:3, sys.left_joints], kin.jacobian(sys.left, ql))
    np.testing.assert_array_equal(Jd[3:, sys.right_joints], kin.jacobian(sys.right, qr))
    # Torso columns appear in both hands' rows.
    assert np.all(np.abs(Jd[:, :2]).sum(axis=0) > 0)


def test_dual_task_terms_match_finite_differences(rng):
    sys = load_robot("dual_arm")
    q = sys.home + 0.1 * rng.normal(size=sys.n)
    sys = sys.with_grasp(sys.grasp_at(q))
    t = mm.dual_task_terms(sys, q)
    np.testing.assert_allclose(t.M, mm.dual_arm_velocity_manipulability(sys, q).matrix, atol=1e-15)
    h = 1e-6
    for k in range(sys.n):
        e = np.zeros(sys.n)
        e[k] = h
        fd = (mm.dual_arm_velocity_manipulability(sys, q + e, check=False).matrix
              - mm.dual_arm_velocity_manipulability(sys, q - e, check=False).matrix) / (2 * h)
        np.testing.assert_allclose(t.Jm[:, k], sym_vec(fd), atol=1e-8)
    pl, pr = sys.end_positions(q)
    np.testing.assert_allclose(t.x, np.concatenate([pl, pr]), atol=1e-15)


# --- serialization ---------------------------------------------------------------------

def test_ellipsoid_jsonl_round_trip(tmp_path, arm7, rng):
    records = []
    for i in range(5):
        ell = mm.velocity_manipulability(arm7, arm7.home + 0.1 * rng.normal(size=7), frame="shoulder")
        records.append(mm.ellipsoid_record(0.1 * i, ell))
    path = tmp_path / "ell.jsonl"
    mm.write_ellipsoids(path, records, header={"type": "ellipsoids"})
    header, back = mm.read_ellipsoids(path)
    assert header == {"type": "ellipsoids"}
    assert [r["t"] for r in back] == [0.1 * i for i in range(5)]
    for rec, orig in zip(back, records):
        assert rec["frame_tag"] == "shoulder" and rec["kind"] == "velocity"
        np.testing.assert_array_equal(mm.ellipsoid_from_record(rec).matrix,
                                      mm.ellipsoid_from_record(orig).matrix)
