"""Shared generators and benchmark fixtures for the test suite."""
import numpy as np
import scipy.linalg as sla

from manipulant import control as ctl
from manipulant import kinematics as kin
from manipulant import manipulability as mm
from manipulant.robots import load_robot
from manipulant.spd import sym_vec


def random_spd(rng, dim=3, spread=1.0):
    """SPD matrix with log-eigenvalues uniform in [-spread, spread] and a random basis."""
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    w = np.exp(rng.uniform(-spread, spread, dim))
    A = (Q * w) @ Q.T
    return 0.5 * (A + A.T)


def random_sym(rng, dim=3, scale=1.0):
    A = rng.normal(scale=scale, size=(dim, dim))
    return 0.5 * (A + A.T)


def random_chain(rng, n=None):
    """Random spatial chain: random unit axes, offsets and joint-frame rotations."""
    n = int(rng.integers(1, 8)) if n is None else n
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    origins = np.stack([
        kin.transform(sla.expm(kin.skew(rng.normal(scale=0.5, size=3))), rng.uniform(-0.5, 0.5, 3))
        for _ in range(n)
    ])
    base = kin.transform(sla.expm(kin.skew(rng.normal(size=3))), rng.normal(size=3))
    end = kin.translation(*rng.uniform(-0.3, 0.3, 3))
    return kin.KinematicChain(origins, axes, base, end)


def oracle_distance(a, b):
    """Affine-invariant distance through scipy's general matrix functions."""
    s = np.real(sla.sqrtm(a))
    si = np.linalg.inv(s)
    return float(np.linalg.norm(np.real(sla.logm(si @ b @ si)), "fro"))


def planar_positions(lengths, q):
    c = np.cumsum(q)
    return np.array([np.sum(np.asarray(lengths) * np.cos(c)), np.sum(np.asarray(lengths) * np.sin(c))])


# --- benchmark fixtures -----------------------------------------------------

PLANAR_TARGET_Q = np.array([0.1, 1.2, 0.9])


def planar_benchmark(dt=1e-3, duration=5.0):
    """Planar 3-link arm tracking a reachable constant ellipsoid.

    The target is the ellipsoid at ``PLANAR_TARGET_Q``; manipulability
    tracking has priority for the whole run and the position task (hold the
    start point) lives in its nullspace.
    """
    chain = load_robot("planar3")
    target = mm.velocity_manipulability(chain, PLANAR_TARGET_Q).matrix
    cfg = ctl.ControllerConfig(dt=dt, priority_schedule=((0.0, "manipulability_first"),))
    return ctl.run_tracking(chain, target, cfg, duration=duration)


ARM7_PERTURBATION = np.array([0.2, -0.2, 0.3, 0.3, 0.0, 0.0, 0.0])


def two_phase_run(duration=3.0):
    """7-DoF arm: reach the ellipsoid and hand position of a nearby posture,
    ellipsoid first until 1 s, position first afterwards."""
    chain = load_robot("arm7")
    q_star = chain.home + ARM7_PERTURBATION
    terms = mm.task_terms(chain, q_star)
    run = ctl.run_tracking(chain, terms.M, ctl.ControllerConfig(), duration=duration,
                           target_x=terms.x)
    return run


def dual_arm_fixture(iterations=400):
    """Shared-torso dual-arm system, a vertical-elongation target and a start pose.

    The target is the object-level ellipsoid at the home posture (major axis
    vertical). The start pose keeps both hands at their home positions and is
    reached by nullspace descent of the ellipsoid's vertical share
    ``M[2, 2] / tr(M)``, so the ellipsoid starts flattened.
    """
    sys = load_robot("dual_arm")
    home = sys.home.copy()
    sys = sys.with_grasp(sys.grasp_at(home))
    terms0 = mm.dual_task_terms(sys, home)
    x0, target = terms0.x, terms0.M
    q = home.copy()
    for _ in range(iterations):
        t = mm.dual_task_terms(sys, q)
        tr = np.trace(t.M)
        grad = -t.M[2, 2] / tr ** 2 * np.eye(3)
        grad[2, 2] += 1.0 / tr
        g = sym_vec(grad) @ t.Jm
        step = kin.damped_pseudoinverse(t.J) @ (10.0 * (x0 - t.x)) - 40.0 * kin.nullspace_projector(t.J) @ g
        q = q + 1e-2 * step
    return sys, target, q
