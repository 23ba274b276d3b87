"""Pure-Python serial-chain kernels (fallback for the compiled module).

Chain convention: ``T = base``; for each joint ``T = T @ origin_i``, record
the joint position ``T[:3, 3]`` and world axis ``T[:3, :3] @ axis_i``, then
``T = T @ Rot(axis_i, q_i)``; finally ``T = T @ end``.
"""
import numpy as np


def _rot(axis, angle):
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array([
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ])


def chain_frames(origins, axes, base, end, q):
    """Forward pass returning ``(T_end, joint_positions, joint_axes)``."""
    n = axes.shape[0]
    pos = np.empty((n, 3))
    zax = np.empty((n, 3))
    T = np.array(base, dtype=float)
    for i in range(n):
        T = T @ origins[i]
        pos[i] = T[:3, 3]
        zax[i] = T[:3, :3] @ axes[i]
        R = _rot(axes[i], q[i])
        T[:3, :3] = T[:3, :3] @ R
    T = T @ end
    return T, pos, zax


def chain_jacobian(origins, axes, base, end, q):
    """Geometric Jacobian (linear rows first) at the end frame origin."""
    T, pos, zax = chain_frames(origins, axes, base, end, q)
    pe = T[:3, 3]
    J = np.empty((6, axes.shape[0]))
    J[:3] = np.cross(zax, pe - pos).T
    J[3:] = zax.T
    return T, J


def chain_jacobian_derivative(origins, axes, base, end, q):
    """Jacobian and its partials ``dJ[k] = dJ/dq_k``, shape ``(n, 6, n)``."""
    T, pos, zax = chain_frames(origins, axes, base, end, q)
    pe = T[:3, 3]
    n = axes.shape[0]
    J = np.empty((6, n))
    J[:3] = np.cross(zax, pe - pos).T
    J[3:] = zax.T
    dJ = np.zeros((n, 6, n))
    for k in range(n):
        zk = zax[k]
        vk = np.cross(zk, pe - pos[k])
        for i in range(n):
            if k < i:
                dJ[k, :3, i] = np.cross(zk, J[:3, i])
                dJ[k, 3:, i] = np.cross(zk, zax[i])
            else:
                dJ[k, :3, i] = np.cross(zax[i], vk)
    return T, J, dJ
