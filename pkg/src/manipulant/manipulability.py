"""Velocity/force manipulability ellipsoids and their configuration derivatives."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import kinematics as kin
from .errors import DimensionError, GraspError, SingularConfigurationError
from .spd import _sym_vec, check_symmetric, spd_from_json, spd_to_json

SINGULAR_EIG = 1e-12


@dataclass(frozen=True)
class ManipulabilityEllipsoid:
    matrix: np.ndarray
    kind: str = "velocity"
    frame: str = "base"
    singular: bool = False

    @property
    def dim(self):
        return self.matrix.shape[0]


def _ellipsoid(M, kind, frame):
    M = 0.5 * (M + M.T)
    return ManipulabilityEllipsoid(M, kind, frame, bool(np.linalg.eigvalsh(M)[0] < SINGULAR_EIG))


def velocity_manipulability(chain, q, rows=None, frame="base"):
    """``M = J J^T`` for the selected Jacobian rows.

    Singular postures still return the (PSD) matrix with ``singular=True``.
    """
    J = kin.jacobian(chain, q, rows)
    return _ellipsoid(J @ J.T, "velocity", frame)


def invert_ellipsoid(ell):
    """Dual ellipsoid: same principal axes, reciprocal eigenvalues."""
    w = np.linalg.eigvalsh(ell.matrix)
    if w[0] < SINGULAR_EIG:
        raise SingularConfigurationError(
            f"cannot invert singular {ell.kind} ellipsoid (min eigenvalue {w[0]:.3e})",
            min_eigenvalue=float(w[0]))
    kind = "force" if ell.kind == "velocity" else "velocity"
    inv = np.linalg.inv(ell.matrix)
    return ManipulabilityEllipsoid(0.5 * (inv + inv.T), kind, ell.frame, False)


def force_manipulability(chain, q, rows=None, frame="base"):
    """``M_F = (J J^T)^{-1}``; raises on singular postures."""
    return invert_ellipsoid(velocity_manipulability(chain, q, rows, frame))


class Indices(NamedTuple):
    determinant: float
    condition_number: float


def classical_indices(ell):
    """Determinant and condition number (max/min eigenvalue)."""
    M = ell.matrix if isinstance(ell, ManipulabilityEllipsoid) else np.asarray(ell, float)
    w = np.linalg.eigvalsh(check_symmetric(M))
    cond = np.inf if w[0] <= 0 else w[-1] / w[0]
    return Indices(float(np.prod(w)), float(cond))


def reframe(ell, rotation, frame):
    """Express an ellipsoid in another frame: ``R M R^T``."""
    R = np.asarray(rotation, float)
    if R.shape != (ell.dim, ell.dim) or np.max(np.abs(R @ R.T - np.eye(ell.dim))) > 1e-10:
        raise ValueError("rotation must be orthonormal and match the ellipsoid dimension")
    M = R @ ell.matrix @ R.T
    return replace(ell, matrix=0.5 * (M + M.T), frame=frame)


def principal_axis(ell):
    """Unit eigenvector of the largest eigenvalue."""
    w, v = np.linalg.eigh(ell.matrix if isinstance(ell, ManipulabilityEllipsoid) else ell)
    return v[:, -1]


# --- derivatives --------------------------------------------------------------

def _slices(J, dJ):
    # dM/dq_k = dJ_k J^T + J dJ_k^T
    prod = np.einsum("kij,lj->ilk", dJ, J)
    return prod + np.swapaxes(prod, 0, 1)


def manipulability_jacobian(chain, q, rows=None):
    """Third-order tensor ``T[:, :, k] = dM/dq_k`` of shape (m, m, n)."""
    J, dJ = kin.jacobian_derivative(chain, q, rows)
    return _slices(J, dJ)


def matricize(tensor):
    """Mode-3 unfolding in :func:`sym_vec` coordinates: ``vec(dM) = Jm @ dq``."""
    tensor = np.asarray(tensor, float)
    return _sym_vec(np.moveaxis(0.5 * (tensor + np.swapaxes(tensor, 0, 1)), 2, 0)).T


@dataclass(frozen=True)
class TaskTerms:
    """Everything a tracking step needs at one configuration."""

    x: np.ndarray          # task position (selected rows of the end frame origin)
    J: np.ndarray          # position Jacobian
    M: np.ndarray          # manipulability ellipsoid
    Jm: np.ndarray         # matricized manipulability Jacobian (d x n)


def task_terms(chain, q, rows=None):
    rows = kin.select_rows(chain, rows)
    T, J6, dJ6 = kin._kernels.chain_jacobian_derivative(*chain._args(q))
    idx = list(rows)
    J, dJ = J6[idx], dJ6[:, idx, :]
    pos_rows = [r for r in idx if r < 3]
    x = T[pos_rows, 3]
    M = J @ J.T
    return TaskTerms(x=x, J=J[: len(pos_rows)], M=0.5 * (M + M.T), Jm=matricize(_slices(J, dJ)))


# --- dual-arm ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualArmSystem:
    """Two chains acting on one object through a tight grasp.

    ``left_joints``/``right_joints`` map each chain's joints into a global
    configuration vector of length ``n``. Disjoint maps give the independent
    (block-diagonal) arms; overlapping maps describe a shared torso.
    """

    left: kin.KinematicChain
    right: kin.KinematicChain
    grasp: kin.GraspModel | None = None
    left_joints: np.ndarray | None = None
    right_joints: np.ndarray | None = None
    n: int | None = None
    home: np.ndarray | None = None
    name: str = "dual_arm"

    def __post_init__(self):
        lj = np.arange(self.left.n) if self.left_joints is None else np.asarray(self.left_joints, int)
        rj = (self.left.n + np.arange(self.right.n)) if self.right_joints is None \
            else np.asarray(self.right_joints, int)
        if lj.size != self.left.n or rj.size != self.right.n:
            raise DimensionError("joint maps must match chain lengths")
        n = int(max(lj.max(), rj.max()) + 1) if self.n is None else int(self.n)
        object.__setattr__(self, "left_joints", lj)
        object.__setattr__(self, "right_joints", rj)
        object.__setattr__(self, "n", n)
        if self.home is None:
            home = np.zeros(n)
            home[lj] = self.left.home
            home[rj] = self.right.home
            object.__setattr__(self, "home", home)
        else:
            object.__setattr__(self, "home", np.asarray(self.home, float))

    @property
    def shared(self):
        return bool(np.intersect1d(self.left_joints, self.right_joints).size)

    def join(self, q_left, q_right):
        """Global configuration from per-arm vectors (shared joints from ``q_left``)."""
        q = np.zeros(self.n)
        q[self.right_joints] = q_right
        q[self.left_joints] = q_left
        return q

    def split(self, q):
        q = np.asarray(q, float)
        return q[self.left_joints], q[self.right_joints]

    def with_grasp(self, grasp):
        return replace(self, grasp=grasp)

    def end_positions(self, q):
        ql, qr = self.split(q)
        return (kin.forward_kinematics(self.left, ql)[:3, 3],
                kin.forward_kinematics(self.right, qr)[:3, 3])

    def grasp_at(self, q):
        """Grasp with the object frame midway between the current end positions."""
        return kin.GraspModel.between(*self.end_positions(q))


def shared_base_dual_arm(torso, left_arm, right_arm, left_mount, right_mount, name="dual_arm"):
    """Dual-arm system whose two arms hang off a common torso chain.

    ``left_mount``/``right_mount`` place each arm base relative to the torso end.
    """
    left = kin.concatenate_chains(torso, left_arm, torso.end @ left_mount)
    right = kin.concatenate_chains(torso, right_arm, torso.end @ right_mount)
    nt = torso.n
    lj = np.concatenate([np.arange(nt), nt + np.arange(left_arm.n)])
    rj = np.concatenate([np.arange(nt), nt + left_arm.n + np.arange(right_arm.n)])
    return DualArmSystem(left, right, None, lj, rj, nt + left_arm.n + right_arm.n, name=name)


def _scatter(sys, J, joints):
    out = np.zeros(J.shape[:-1] + (sys.n,))
    out[..., joints] = J
    return out


def dual_jacobian(sys, q, rows="position"):
    """Stacked ``J_d = (J_l; J_r)`` over the global joint vector.

    For disjoint joint maps this is ``diag(J_l, J_r)``.
    """
    ql, qr = sys.split(q)
    Jl = _scatter(sys, kin.jacobian(sys.left, ql, rows), sys.left_joints)
    Jr = _scatter(sys, kin.jacobian(sys.right, qr, rows), sys.right_joints)
    return np.vstack([Jl, Jr])


def _grasp_pinv(sys, rows):
    positional = len(rows) == 3
    if not positional and len(rows) != 6:
        raise DimensionError("dual-arm manipulability needs positional (3) or full (6) rows")
    G = kin.grasp_matrix(sys.grasp, positional=positional)
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] < 1e-9 * s[0]:
        raise GraspError("grasp matrix is rank deficient")
    return np.linalg.pinv(G)


def check_grasp(sys, q, tol=1e-3):
    """Raise unless each hand sits within ``tol`` of its grasp contact."""
    if sys.grasp is None:
        raise GraspError("dual-arm system has no grasp model")
    cl, cr = sys.grasp.contact_positions()
    pl, pr = sys.end_positions(q)
    err = max(np.linalg.norm(pl - cl), np.linalg.norm(pr - cr))
    if err > tol:
        raise GraspError(f"grasp inconsistent with end-effector positions by {err:.4f} m")


def dual_arm_velocity_manipulability(sys, q, rows="position", frame="base", check=True):
    """``M_d = G_d^{+T} J_d J_d^T G_d^+`` for a grasped object.

    ``q`` is the global configuration (see :meth:`DualArmSystem.join`).
    """
    rows = kin.select_rows(sys.left, rows)
    if check:
        check_grasp(sys, q)
    Gp = _grasp_pinv(sys, rows)
    Jd = dual_jacobian(sys, q, rows)
    A = Gp.T @ Jd
    return _ellipsoid(A @ A.T, "velocity", frame)


def dual_arm_force_manipulability(sys, q, rows="position", frame="base", check=True):
    return invert_ellipsoid(dual_arm_velocity_manipulability(sys, q, rows, frame, check))


def dual_task_terms(sys, q, rows="position"):
    """Tracking terms for a dual-arm system: stacked hand positions/Jacobian,
    the object-level ellipsoid and its matricized manipulability Jacobian."""
    rows = kin.select_rows(sys.left, rows)
    Gp = _grasp_pinv(sys, rows)
    ql, qr = sys.split(q)
    parts = []
    for chain, qi, joints in ((sys.left, ql, sys.left_joints), (sys.right, qr, sys.right_joints)):
        T, J6, dJ6 = kin._kernels.chain_jacobian_derivative(*chain._args(qi))
        J = _scatter(sys, J6[list(rows)], joints)
        dJ = np.zeros((sys.n,) + J.shape)
        dJ[joints] = _scatter(sys, dJ6[:, list(rows), :], joints)
        parts.append((T[:3, 3], J, dJ))
    Jd = np.vstack([parts[0][1], parts[1][1]])
    dJd = np.concatenate([parts[0][2], parts[1][2]], axis=1)
    A = Gp.T @ Jd
    dA = np.einsum("ij,kjl->kil", Gp.T, dJd)
    M = A @ A.T
    x = np.concatenate([parts[0][0], parts[1][0]])
    npos = sum(1 for r in rows if r < 3)
    Jpos = np.vstack([parts[0][1][:npos], parts[1][1][:npos]])
    return TaskTerms(x=x, J=Jpos, M=0.5 * (M + M.T), Jm=matricize(_slices(A, dA)))


# --- serialization ---------------------------------------------------------

def ellipsoid_record(t, ell, **extra):
    rec = {"t": float(t), "frame_tag": ell.frame, "kind": ell.kind, "spd": spd_to_json(ell.matrix)}
    rec.update(extra)
    return rec


def ellipsoid_from_record(rec):
    M = spd_from_json(rec["spd"], validate=False)
    return _ellipsoid(M, rec.get("kind", "velocity"), rec.get("frame_tag", "base"))


def write_ellipsoids(path, records, header=None):
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_ellipsoids(path):
    """Return ``(header, records)``; the header is the first line when it has no ``spd``."""
    header, records = None, []
    with open(path) as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            if i == 0 and "spd" not in rec:
                header = rec
                continue
            records.append(rec)
    return header, records
