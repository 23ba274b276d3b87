"""Serial-chain kinematics, a 7-DoF anthropomorphic arm and dual-arm grasps.

Joint convention (see ``_kernels``): each joint carries an origin transform
relative to its parent frame and a unit rotation axis in its own frame. The
Jacobian rows are ordered (vx, vy, vz, wx, wy, wz) and are expressed in the
chain's reference (base parent) frame.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import _kernels
from .errors import DimensionError, UnreachableError

AXIS_TOL = 1e-12


# --- rigid transforms -------------------------------------------------------

def transform(rotation=None, position=None):
    """Homogeneous 4x4 transform from a rotation matrix and a translation."""
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if position is not None:
        T[:3, 3] = position
    return T


def translation(x, y, z):
    return transform(position=(x, y, z))


def axis_rotation(axis, angle):
    return Rotation.from_rotvec(np.asarray(axis, float) * angle).as_matrix()


def invert_transform(T):
    R = T[:3, :3]
    return transform(R.T, -R.T @ T[:3, 3])


def pose_from_quat(position, quat):
    """Transform from a position and a scalar-first unit quaternion (w, x, y, z)."""
    quat = np.asarray(quat, float)
    norm = np.linalg.norm(quat)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"quaternion norm {norm:.9f} is not 1")
    R = Rotation.from_quat(quat / norm, scalar_first=True).as_matrix()
    return transform(R, position)


def quat_from_pose(T):
    return Rotation.from_matrix(T[:3, :3]).as_quat(scalar_first=True)


def rotation_error(Ra, Rb):
    """Angle (radians) of the relative rotation between two rotation matrices."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# --- chains -----------------------------------------------------------------

_ROWS = {"position": (0, 1, 2), "full": (0, 1, 2, 3, 4, 5), "rotation": (3, 4, 5)}


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Serial chain of revolute joints.

    ``origins`` has shape (n, 4, 4) and ``axes`` (n, 3). ``task_rows`` picks the
    Jacobian rows used for manipulability by default (positional by default).
    """

    origins: np.ndarray
    axes: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.eye(4))
    end: np.ndarray = field(default_factory=lambda: np.eye(4))
    task_rows: tuple = (0, 1, 2)
    names: tuple = ()
    home: np.ndarray | None = None
    name: str = "chain"

    def __post_init__(self):
        origins = np.ascontiguousarray(self.origins, dtype=float)
        axes = np.ascontiguousarray(self.axes, dtype=float)
        if axes.ndim != 2 or axes.shape[1] != 3 or axes.shape[0] < 1:
            raise DimensionError("a chain needs at least one joint axis of length 3")
        if origins.shape != (axes.shape[0], 4, 4):
            raise DimensionError("origins must have shape (n, 4, 4)")
        if np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > AXIS_TOL):
            raise ValueError("joint axes must be unit vectors")
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "base", np.ascontiguousarray(self.base, dtype=float))
        object.__setattr__(self, "end", np.ascontiguousarray(self.end, dtype=float))
        object.__setattr__(self, "task_rows", tuple(int(r) for r in self.task_rows))
        names = tuple(self.names) or tuple(f"q{i + 1}" for i in range(axes.shape[0]))
        object.__setattr__(self, "names", names)
        home = np.zeros(axes.shape[0]) if self.home is None else np.asarray(self.home, float)
        object.__setattr__(self, "home", home)

    @property
    def n(self):
        return self.axes.shape[0]

    @classmethod
    def from_offsets(cls, axes, offsets, base=None, end=None, **kwargs):
        """Chain whose joint origins are pure translations."""
        offsets = np.asarray(offsets, float)
        origins = np.stack([translation(*o) for o in offsets])
        return cls(origins, axes,
                   np.eye(4) if base is None else base,
                   np.eye(4) if end is None else end, **kwargs)

    def with_end(self, end):
        return KinematicChain(self.origins, self.axes, self.base, end, self.task_rows,
                              self.names, self.home, self.name)

    def with_base(self, base):
        return KinematicChain(self.origins, self.axes, base, self.end, self.task_rows,
                              self.names, self.home, self.name)

    def _args(self, q):
        q = np.ascontiguousarray(q, dtype=float)
        if q.shape != (self.n,):
            raise DimensionError(f"expected {self.n} joint values, got shape {q.shape}")
        return self.origins, self.axes, self.base, self.end, q


def select_rows(chain, rows):
    if rows is None:
        return chain.task_rows
    if isinstance(rows, str):
        try:
            return _ROWS[rows]
        except KeyError:
            raise ValueError(f"unknown row selection {rows!r}") from None
    return tuple(int(r) for r in rows)


def forward_kinematics(chain, q):
    """End-effector pose (4x4) at configuration ``q``."""
    T, _, _ = _kernels.chain_frames(*chain._args(q))
    return T


def joint_frames(chain, q):
    """``(T_end, joint_positions, joint_axes)`` in the reference frame."""
    return _kernels.chain_frames(*chain._args(q))


def jacobian(chain, q, rows=None):
    """Geometric Jacobian restricted to ``rows``.

    ``rows`` may be None (chain default), ``"position"``, ``"full"`` or an
    explicit index sequence.
    """
    _, J = _kernels.chain_jacobian(*chain._args(q))
    return J[list(select_rows(chain, rows))]


def jacobian_derivative(chain, q, rows=None):
    """Return ``(J, dJ)`` where ``dJ[k] = dJ/dq_k`` (shape (n, m, n))."""
    _, J, dJ = _kernels.chain_jacobian_derivative(*chain._args(q))
    idx = list(select_rows(chain, rows))
    return J[idx], dJ[:, idx, :]


def link_points_jacobian(chain, q):
    """Positional Jacobians of the link tips.

    Link ``i`` ends at joint ``i + 1`` (the last link at the end frame), so the
    result has shape (n, 3, n) and entry ``[i]`` is the Jacobian of link i's tip.
    """
    T, pos, zax = joint_frames(chain, q)
    tips = np.vstack([pos[1:], T[:3, 3]])
    out = np.zeros((chain.n, 3, chain.n))
    for i, p in enumerate(tips):
        out[i, :, : i + 1] = np.cross(zax[: i + 1], p - pos[: i + 1]).T
    return tips, out


def mirror_chain(chain, name=None):
    """Reflect a chain across its reference xz-plane (y -> -y).

    The mirrored chain driven with the same joint values produces the mirrored
    poses: positions and frames are reflected and rotation axes flip sign.
    """
    S = np.diag([1.0, -1.0, 1.0, 1.0])
    S3 = S[:3, :3]
    origins = np.stack([S @ o @ S for o in chain.origins])
    axes = -(chain.axes @ S3)
    return KinematicChain(origins, axes, S @ chain.base @ S, S @ chain.end @ S, chain.task_rows,
                          chain.names, chain.home, name or f"{chain.name}_mirrored")


def concatenate_chains(prefix, suffix, mount=None):
    """Chain made of ``prefix`` joints followed by ``suffix`` joints.

    ``mount`` places the suffix base relative to the prefix end frame (defaults
    to ``prefix.end``); ``suffix.base`` is composed after it.
    """
    mount = prefix.end if mount is None else mount
    origins = suffix.origins.copy()
    origins[0] = mount @ suffix.base @ origins[0]
    return KinematicChain(
        np.concatenate([prefix.origins, origins]),
        np.concatenate([prefix.axes, suffix.axes]),
        prefix.base, suffix.end, suffix.task_rows,
        prefix.names + suffix.names,
        np.concatenate([prefix.home, suffix.home]),
        f"{prefix.name}+{suffix.name}",
    )


# --- pseudoinverses -----------------------------------------------------------

def damped_pseudoinverse(m, damping=0.0, rcond=1e-12):
    """``M^T (M M^T + damping^2 I)^{-1}`` computed through the SVD.

    With ``damping == 0`` this is the Moore-Penrose pseudoinverse; singular
    values below ``rcond * max(sigma)`` are then treated as zero.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    U, s, Vt = np.linalg.svd(m, full_matrices=False)
    if damping > 0.0:
        inv = s / (s * s + damping * damping)
    else:
        cutoff = rcond * (s[0] if s.size else 0.0)
        inv = np.divide(1.0, s, out=np.zeros_like(s), where=s > cutoff)
    return (Vt.T * inv) @ U.T


def nullspace_projector(m, rcond=1e-10):
    """Orthogonal projector ``I - M^+ M`` onto the nullspace of ``m``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    _, s, Vt = np.linalg.svd(m, full_matrices=True)
    rank = int(np.sum(s > rcond * (s[0] if s.size else 0.0)))
    Vr = Vt[:rank]
    return np.eye(m.shape[1]) - Vr.T @ Vr


# --- anthropomorphic arm -----------------------------------------------------

@dataclass(frozen=True)
class ArmTriangle:
    """Shoulder-elbow-wrist triangle plus hand orientation.

    ``r`` upper-arm direction, ``l`` triangle-plane normal (the elbow axis),
    ``alpha`` elbow angle (pi when fully stretched), ``p`` palm normal and
    ``f`` finger direction. Vectors are expressed in the shoulder frame.
    """

    r: np.ndarray
    l: np.ndarray
    alpha: float
    p: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        for name in ("r", "l", "p", "f"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-10:
                raise ValueError(f"{name} must be a unit 3-vector")
            object.__setattr__(self, name, v)
        if abs(self.l @ self.r) > 1e-8:
            raise ValueError("l must be orthogonal to r")
        if abs(self.p @ self.f) > 1e-8:
            raise ValueError("p must be orthogonal to f")
        if not 0.0 < self.alpha <= np.pi:
            raise ValueError(f"elbow angle must lie in (0, pi], got {self.alpha}")


@dataclass(frozen=True)
class AnthropomorphicArm:
    """7-DoF arm: spherical shoulder (q1..q3), elbow (q4), spherical wrist (q5..q7).

    At ``q = 0`` the arm hangs straight down the shoulder frame's -z axis, the
    fingers point down and the palm normal points along +x. Positive ``q4``
    flexes the elbow forward; ``q4 = pi - alpha``.
    """

    upper_arm_length: float = 0.30
    forearm_length: float = 0.25
    hand_length: float = 0.10
    shoulder_frame: np.ndarray = field(default_factory=lambda: np.eye(4))
    side: str = "right"

    def __post_init__(self):
        if min(self.upper_arm_length, self.forearm_length, self.hand_length) <= 0:
            raise ValueError("segment lengths must be positive")
        if self.side not in ("right", "left"):
            raise ValueError("side must be 'right' or 'left'")
        object.__setattr__(self, "shoulder_frame", np.asarray(self.shoulder_frame, float))

    @property
    def elbow_reference(self):
        # Elbow rest direction: down, slightly back and outward.
        out = -1.0 if self.side == "right" else 1.0
        g = np.array([-0.2, 0.3 * out, -1.0])
        return g / np.linalg.norm(g)

    def chain(self, tool="hand"):
        """Kinematic chain ending at the wrist centre or at the hand tip."""
        l1, l2 = self.upper_arm_length, self.forearm_length
        axes = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1], [0, -1, 0],
                         [0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=float)
        offsets = [(0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, -l1), (0, 0, -l2), (0, 0, 0), (0, 0, 0)]
        end = transform(axis_rotation([1, 0, 0], np.pi))
        end[np.abs(end) < 1e-15] = 0.0
        if tool == "hand":
            end = end @ translation(0, 0, self.hand_length)
        elif tool != "wrist":
            raise ValueError("tool must be 'hand' or 'wrist'")
        names = ("sh_flex", "sh_abd", "sh_rot", "elbow", "wr_pron", "wr_flex", "wr_dev")
        return KinematicChain.from_offsets(axes, offsets, base=self.shoulder_frame, end=end,
                                           names=names, name=f"{self.side}_arm_{tool}")


def _euler(R, seq):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return Rotation.from_matrix(R).as_euler(seq)


def arm_triangle_to_joints(arm, tri):
    """Analytic inverse kinematics from triangle parameters to 7 joint angles."""
    r, l = tri.r, tri.l
    R_upper = np.column_stack([np.cross(l, r), -l, -r])
    q1, q2, q3 = _euler(R_upper, "YXZ")
    q4 = np.pi - tri.alpha
    R_elbow = axis_rotation([0, -1, 0], q4)
    R_hand = np.column_stack([tri.p, np.cross(tri.f, tri.p), tri.f])
    R_tool = axis_rotation([1, 0, 0], np.pi)
    R_wrist = (R_upper @ R_elbow).T @ R_hand @ R_tool.T
    q5, q6, q7 = _euler(R_wrist, "ZYX")
    return np.array([q1, q2, q3, q4, q5, q6, q7])


def wrist_pose_to_arm_triangle(arm, wrist_pose, swivel_hint=0.0):
    """Triangle parameters reproducing ``wrist_pose`` (in the arm's parent frame).

    The elbow lies on a circle around the shoulder-wrist line; ``swivel_hint``
    is its angle measured from the arm's elbow reference direction. At full
    extension the plane normal is taken from the same swivel convention.
    """
    W = invert_transform(arm.shoulder_frame) @ np.asarray(wrist_pose, float)
    w = W[:3, 3]
    l1, l2 = arm.upper_arm_length, arm.forearm_length
    dist = float(np.linalg.norm(w))
    lo, hi = abs(l1 - l2), l1 + l2
    if not lo - 1e-9 <= dist <= hi + 1e-9 or dist < 1e-9:
        raise UnreachableError(f"wrist distance {dist:.4f} m outside reachable annulus [{lo:.4f}, {hi:.4f}]")
    cos_alpha = np.clip((l1 * l1 + l2 * l2 - dist * dist) / (2 * l1 * l2), -1.0, 1.0)
    alpha = float(np.arccos(cos_alpha))
    if alpha < 1e-6:
        raise UnreachableError("arm fully folded; elbow angle must be positive")
    cos_beta = np.clip((l1 * l1 + dist * dist - l2 * l2) / (2 * l1 * dist), -1.0, 1.0)
    sin_beta = np.sqrt(1.0 - cos_beta * cos_beta)
    n = w / dist
    a = _perp(arm.elbow_reference, n)
    b = np.cross(n, a)
    e_dir = np.cos(swivel_hint) * a + np.sin(swivel_hint) * b
    r = cos_beta * n + sin_beta * e_dir
    r /= np.linalg.norm(r)
    l = np.cross(e_dir, n)
    l /= np.linalg.norm(l)
    l -= (l @ r) * r
    l /= np.linalg.norm(l)
    R = W[:3, :3]
    p, f = R[:, 0].copy(), R[:, 2].copy()
    f -= (f @ p) * p
    f /= np.linalg.norm(f)
    return ArmTriangle(r=r, l=l, alpha=alpha, p=p, f=f)


def _perp(g, n):
    a = g - (g @ n) * n
    if np.linalg.norm(a) < 1e-6:
        for alt in (np.array([-1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            a = alt - (alt @ n) * n
            if np.linalg.norm(a) > 1e-6:
                break
    return a / np.linalg.norm(a)


def joints_to_arm_triangle(arm, q):
    """Read the triangle parameters off a joint configuration."""
    q = np.asarray(q, float)
    R_upper = Rotation.from_euler("YXZ", q[:3]).as_matrix()
    r = -R_upper[:, 2]
    l = -R_upper[:, 1]
    alpha = np.pi - q[3]
    T = invert_transform(arm.shoulder_frame) @ forward_kinematics(arm.chain("wrist"), q)
    return ArmTriangle(r=r, l=l, alpha=float(alpha), p=T[:3, 0], f=T[:3, 2])


def elbow_position(arm, tri):
    """Elbow centre in the arm's parent frame."""
    return (arm.shoulder_frame @ np.append(arm.upper_arm_length * tri.r, 1.0))[:3]


# --- grasps -----------------------------------------------------------------

@dataclass(frozen=True)
class GraspModel:
    """Tight two-handed grasp of a rigid object.

    Contacts are expressed in the object frame; ``object_frame`` places the
    object in the reference frame of the arms.
    """

    left_contact: np.ndarray
    right_contact: np.ndarray
    object_frame: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        lc = np.asarray(self.left_contact, float)
        rc = np.asarray(self.right_contact, float)
        if lc.shape != (3,) or rc.shape != (3,):
            raise DimensionError("contacts must be 3-vectors")
        if np.linalg.norm(lc - rc) < 1e-9:
            raise ValueError("grasp contacts must be distinct")
        object.__setattr__(self, "left_contact", lc)
        object.__setattr__(self, "right_contact", rc)
        object.__setattr__(self, "object_frame", np.asarray(self.object_frame, float))

    def contact_positions(self):
        """World positions of the left and right contacts."""
        T = self.object_frame
        return T[:3, :3] @ self.left_contact + T[:3, 3], T[:3, :3] @ self.right_contact + T[:3, 3]

    @classmethod
    def between(cls, left_point, right_point, rotation=None):
        """Grasp with the object frame at the midpoint of two hand positions."""
        left_point = np.asarray(left_point, float)
        right_point = np.asarray(right_point, float)
        R = np.eye(3) if rotation is None else np.asarray(rotation, float)
        mid = 0.5 * (left_point + right_point)
        return cls(R.T @ (left_point - mid), R.T @ (right_point - mid), transform(R, mid))


def grasp_matrix(g, positional=False):
    """Grasp matrix ``G_d = (G_l, G_r)``.

    Full form is 6x12 with per-hand blocks ``[[I, 0], [skew(c), I]]`` (``c``
    the contact offset from the object origin in the reference frame), so that
    ``G_d^T`` maps an object twist (v, w) to the hand twists. The positional
    variant keeps the translational blocks only and is 3x6 ``[I, I]``.
    """
    if positional:
        return np.hstack([np.eye(3), np.eye(3)])
    R = g.object_frame[:3, :3]
    blocks = []
    for c in (R @ g.left_contact, R @ g.right_contact):
        G = np.eye(6)
        G[3:, :3] = skew(c)
        blocks.append(G)
    return np.hstack(blocks)
