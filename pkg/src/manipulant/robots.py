"""Robot descriptions in JSON and the bundled models.

Three document types are understood (``"type"`` key):

``chain``
    ``joints``: list of ``{name, axis, offset, rpy?}`` where ``offset``/``rpy``
    place the joint frame relative to the previous one; optional ``base`` and
    ``end`` poses ``{position, rpy}``; ``task_rows``; ``home``.
``anthropomorphic_arm``
    ``upper_arm_length``, ``forearm_length``, ``hand_length``, ``side``,
    optional ``shoulder`` pose, ``tool`` ("hand" or "wrist"), ``home``.
``dual_arm``
    ``torso`` (a chain document), ``left``/``right`` (arm documents),
    ``left_mount``/``right_mount`` poses relative to the torso end, ``home``
    over the global joint vector (torso, left, right).

Angles are radians; ``rpy`` is extrinsic x-y-z (roll, pitch, yaw).
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import kinematics as kin
from .errors import ConfigError
from .manipulability import DualArmSystem, shared_base_dual_arm

BUNDLED = ("planar2", "planar3", "arm7", "dual_arm")


def pose_from_spec(spec):
    if spec is None:
        return np.eye(4)
    R = Rotation.from_euler("xyz", spec.get("rpy", [0.0, 0.0, 0.0])).as_matrix()
    return kin.transform(R, spec.get("position", [0.0, 0.0, 0.0]))


def _chain(doc):
    joints = doc["joints"]
    if not joints:
        raise ConfigError("a chain needs at least one joint")
    origins = np.stack([
        pose_from_spec({"position": j.get("offset", [0, 0, 0]), "rpy": j.get("rpy", [0, 0, 0])})
        for j in joints
    ])
    axes = np.array([j["axis"] for j in joints], float)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    kwargs = {
        "names": tuple(j.get("name", f"j{i}") for i, j in enumerate(joints)),
        "name": doc.get("name", "chain"),
    }
    if "task_rows" in doc:
        kwargs["task_rows"] = tuple(doc["task_rows"])
    if "home" in doc:
        kwargs["home"] = np.asarray(doc["home"], float)
    return kin.KinematicChain(origins, axes, pose_from_spec(doc.get("base")),
                              pose_from_spec(doc.get("end")), **kwargs)


def _arm(doc):
    arm = kin.AnthropomorphicArm(
        upper_arm_length=doc.get("upper_arm_length", 0.30),
        forearm_length=doc.get("forearm_length", 0.25),
        hand_length=doc.get("hand_length", 0.10),
        shoulder_frame=pose_from_spec(doc.get("shoulder")),
        side=doc.get("side", "right"),
    )
    chain = arm.chain(doc.get("tool", "hand"))
    if arm.side == "left":
        chain = kin.mirror_chain(chain, name=f"left_arm_{doc.get('tool', 'hand')}")
        chain = chain.with_base(arm.shoulder_frame)
    if "home" in doc:
        chain = kin.KinematicChain(chain.origins, chain.axes, chain.base, chain.end, chain.task_rows,
                                   chain.names, np.asarray(doc["home"], float), doc.get("name", chain.name))
    return arm, chain


def _dual(doc):
    torso = _chain(doc["torso"])
    _, left = _arm({**doc["left"], "side": "left"})
    _, right = _arm({**doc["right"], "side": "right"})
    sys = shared_base_dual_arm(torso, left, right, pose_from_spec(doc.get("left_mount")),
                               pose_from_spec(doc.get("right_mount")), name=doc.get("name", "dual_arm"))
    if "home" in doc:
        home = np.asarray(doc["home"], float)
        if home.size != sys.n:
            raise ConfigError(f"dual-arm home has {home.size} entries, system has {sys.n} joints")
        sys = DualArmSystem(sys.left, sys.right, None, sys.left_joints, sys.right_joints, sys.n,
                            home, sys.name)
    return sys


def load_robot_doc(doc):
    """Build a :class:`KinematicChain` or :class:`DualArmSystem` from a document."""
    kind = doc.get("type")
    try:
        if kind == "chain":
            return _chain(doc)
        if kind == "anthropomorphic_arm":
            return _arm(doc)[1]
        if kind == "dual_arm":
            return _dual(doc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed robot description: {exc}") from exc
    raise ConfigError(f"unknown robot type {kind!r}")


def load_robot(name_or_path):
    """Load a bundled model by name (see ``BUNDLED``) or a JSON file."""
    if str(name_or_path) in BUNDLED:
        text = resources.files("manipulant.data").joinpath(f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ConfigError(f"robot description {path} not found")
        text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name_or_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return load_robot_doc(doc)
