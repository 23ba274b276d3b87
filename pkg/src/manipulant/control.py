"""Prioritized joint-velocity control for manipulability and position tracking.

Two priority orders are available:

``manipulability_first``
    ``qd = Jm^+ K_M e_M + (I - Jm^+ Jm) J^+ K_x e_x``
``position_first``
    ``qd = J^+ K_x e_x + (I - J^+ J) Jm^+ K_M e_M``

where ``e_M = sym_vec(Log_M(M_hat))`` and ``e_x = x_hat - x``. Task inverses
are damped; nullspace projectors come from an exact rank-revealing SVD so that
the hierarchy holds to round-off.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .errors import ConfigError, DimensionError, DivergenceError
from .manipulability import dual_task_terms, task_terms
from .spd import _sym_vec

log = logging.getLogger(__name__)

MODES = ("manipulability_first", "position_first")


@dataclass
class ControllerConfig:
    """Gains (1/s), Euler step and priority schedule.

    ``K_M`` and ``K_x`` accept a scalar (times identity) or a full SPD matrix.
    When ``priority_schedule`` is empty it defaults to manipulability-first
    until ``switch_time`` and position-first afterwards.
    """

    K_M: object = 5.0
    K_x: object = 10.0
    dt: float = 1e-3
    switch_time: float = 1.0
    damping: float = 1e-4
    priority_schedule: tuple = ()
    divergence_floor: float = 0.1
    rank_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.damping < 0:
            raise ConfigError("damping must be nonnegative")
        for name in ("K_M", "K_x"):
            g = np.asarray(getattr(self, name), float)
            if g.ndim == 0:
                if not g > 0:
                    raise ConfigError(f"{name} must be positive")
            else:
                if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.allclose(g, g.T, atol=1e-12):
                    raise ConfigError(f"{name} must be a symmetric square matrix")
                if np.linalg.eigvalsh(g)[0] <= 0:
                    raise ConfigError(f"{name} must be positive definite")
        sched = tuple((float(t), str(m)) for t, m in self.priority_schedule)
        for _, m in sched:
            if m not in MODES:
                raise ConfigError(f"unknown priority mode {m!r}")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise ConfigError("priority schedule must have increasing start times")
        self.priority_schedule = sched

    def gain(self, name, dim):
        g = np.asarray(getattr(self, name), float)
        if g.ndim == 0:
            return float(g) * np.eye(dim)
        if g.shape != (dim, dim):
            raise DimensionError(f"{name} is {g.shape[0]}x{g.shape[1]}, task needs {dim}x{dim}")
        return g

    def mode_at(self, t):
        sched = self.priority_schedule or ((0.0, MODES[0]), (self.switch_time, MODES[1]))
        mode = sched[0][1]
        for start, m in sched:
            if t + 1e-12 >= start:
                mode = m
        return mode


@dataclass(frozen=True)
class SimState:
    t: float
    q: np.ndarray
    x: np.ndarray
    M: np.ndarray


@dataclass(frozen=True)
class BalanceTask:
    """Primary task over generalized velocities ``[qd_actuated; v_base]``.

    ``blocks`` names consecutive row ranges of ``J_b`` (e.g. feet, CoM-xy).
    """

    J_b: np.ndarray
    xdot_b: np.ndarray
    n_virtual: int = 6
    blocks: tuple = ()

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J_b, float))
        xd = np.asarray(self.xdot_b, float).ravel()
        if J.shape[0] != xd.size:
            raise DimensionError("J_b rows must match xdot_b")
        object.__setattr__(self, "J_b", J)
        object.__setattr__(self, "xdot_b", xd)

    @property
    def n_actuated(self):
        return self.J_b.shape[1] - self.n_virtual

    def actuated(self, nu):
        """Joint velocities of the actuated joints (selector ``[I 0]``)."""
        return np.asarray(nu)[: self.n_actuated]


# --- single steps ------------------------------------------------------------

def manipulability_error(M, M_target):
    """``(sym_vec(Log_M(M_target)), distance)`` in one eigen-decomposition pass."""
    w, v = np.linalg.eigh(M)
    sq = (v * np.sqrt(w)) @ v.T
    isq = (v / np.sqrt(w)) @ v.T
    W = isq @ M_target @ isq
    ww, wv = np.linalg.eigh(0.5 * (W + W.T))
    lw = np.log(ww)
    L = sq @ ((wv * lw) @ wv.T) @ sq
    return _sym_vec(0.5 * (L + L.T)), float(np.sqrt(np.sum(lw * lw)))


def _svd_parts(A, rank_tol, damping):
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > rank_tol * (s[0] if s.size else 0.0)))
    k = min(A.shape)
    if damping > 0:
        inv = s[:k] / (s[:k] ** 2 + damping ** 2)
    else:
        inv = np.divide(1.0, s[:k], out=np.zeros(k), where=np.arange(k) < rank)
    pinv = (Vt[:k].T * inv) @ U[:, :k].T
    Vr = Vt[:rank]
    proj = np.eye(A.shape[1]) - Vr.T @ Vr
    return pinv, proj, rank < A.shape[0]


def _errors(terms, M_target, x_target, cfg):
    e_M, dist = manipulability_error(terms.M, M_target)
    e_x = np.asarray(x_target, float) - terms.x
    K_M = cfg.gain("K_M", e_M.size)
    K_x = cfg.gain("K_x", e_x.size)
    return K_M @ e_M, K_x @ e_x, dist


def controller_step(terms, M_target, x_target, cfg, mode):
    """Joint velocity plus diagnostics for one control step.

    Returns
    -------
    qdot : ndarray
    info : dict
        ``spd_distance``, ``pos_error``, ``primary``/``secondary`` components
        and ``deficient`` (True when a task Jacobian lost row rank and only
        the damped inverse kept the step finite).
    """
    if terms.M.shape != np.shape(M_target):
        raise DimensionError("target ellipsoid dimension does not match the task")
    if terms.x.shape != np.shape(x_target):
        raise DimensionError("target position dimension does not match the task")
    uM, ux, dist = _errors(terms, M_target, x_target, cfg)
    Jm_pinv, Pm, def_m = _svd_parts(terms.Jm, cfg.rank_tol, cfg.damping)
    J_pinv, Px, def_x = _svd_parts(terms.J, cfg.rank_tol, cfg.damping)
    if mode == "manipulability_first":
        primary = Jm_pinv @ uM
        secondary = Pm @ (J_pinv @ ux)
    elif mode == "position_first":
        primary = J_pinv @ ux
        secondary = Px @ (Jm_pinv @ uM)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    info = {
        "spd_distance": dist,
        "pos_error": float(np.linalg.norm(np.asarray(x_target) - terms.x)),
        "primary": primary,
        "secondary": secondary,
        "deficient": bool(def_m if mode == "manipulability_first" else def_x),
    }
    return primary + secondary, info


def manipulability_first_step(terms, target_M, target_x, cfg):
    """Manipulability tracking with the position task in its nullspace.

    ``terms`` comes from :func:`manipulability.task_terms` (or
    :func:`manipulability.dual_task_terms`) at the current configuration.
    """
    return controller_step(terms, target_M, target_x, cfg, "manipulability_first")[0]


def position_first_step(terms, target_M, target_x, cfg):
    """Position tracking with manipulability tracking in its nullspace."""
    return controller_step(terms, target_M, target_x, cfg, "position_first")[0]


def balanced_step(balance, secondary_qdot, rank_tol=1e-10, damping=1e-4):
    """Generalized velocity ``J_b^+ xdot_b + N_b qd_secondary``.

    Returns ``(nu, deficient)``; use :meth:`BalanceTask.actuated` for the
    commanded joint velocities. With full row rank the exact pseudoinverse is
    used; otherwise a damped one and ``deficient`` is True.
    """
    sec = np.asarray(secondary_qdot, float)
    if sec.shape != (balance.J_b.shape[1],):
        raise DimensionError("secondary velocity must span actuated and virtual joints")
    _, s, _ = np.linalg.svd(balance.J_b)
    deficient = bool(np.sum(s > rank_tol * s[0]) < balance.J_b.shape[0])
    J_pinv = kin.damped_pseudoinverse(balance.J_b, damping if deficient else 0.0, rcond=rank_tol)
    N_b = kin.nullspace_projector(balance.J_b, rank_tol)
    return J_pinv @ balance.xdot_b + N_b @ sec, deficient


def synthetic_balance_task(n_actuated, n_legs_joints, seed=0, com_velocity=(0.0, 0.0)):
    """Feet + CoM-xy primary task on a simplified floating-base model.

    Generalized velocities are ``[qd_legs, qd_rest, v_base (6)]``. Two feet
    (6 rows each) depend on the leg joints and the base only and are held
    fixed; the CoM-xy rows (2) couple every joint. Entries are seeded random
    numbers: the controller algebra, not a physical robot, is what matters.
    """
    rng = np.random.default_rng(seed)
    n = n_actuated + 6
    half = n_legs_joints // 2
    feet = np.zeros((12, n))
    feet[:6, :half] = rng.normal(size=(6, half))
    feet[6:, half:n_legs_joints] = rng.normal(size=(6, n_legs_joints - half))
    feet[:, n_actuated:] = np.vstack([np.eye(6), np.eye(6)]) + 0.1 * rng.normal(size=(12, 6))
    com = rng.normal(scale=0.2, size=(2, n))
    com[:, n_actuated:n_actuated + 2] += np.eye(2)
    xdot = np.concatenate([np.zeros(12), np.asarray(com_velocity, float)])
    return BalanceTask(np.vstack([feet, com]), xdot, 6, (("feet", 0, 12), ("com_xy", 12, 14)))


# --- simulation ------------------------------------------------------------------

@dataclass
class TrackingRun:
    t: np.ndarray
    q: np.ndarray
    x: np.ndarray
    spd_distance: np.ndarray
    pos_error: np.ndarray
    mode: list
    M: np.ndarray
    M_target: np.ndarray
    deficient_steps: int = 0
    meta: dict = field(default_factory=dict)

    def records(self):
        for k in range(self.t.size):
            yield {
                "t": float(self.t[k]),
                "q": [float(v) for v in self.q[k]],
                "x": [float(v) for v in self.x[k]],
                "spd_distance": float(self.spd_distance[k]),
                "pos_error": float(self.pos_error[k]),
                "mode": self.mode[k],
                "M": [float(v) for v in self.M[k].ravel()],
                "M_target": [float(v) for v in self.M_target[k].ravel()],
            }


def _as_target(target):
    if callable(target):
        return target
    M = np.asarray(target, float)
    return lambda u: M


def _simulate(terms_fn, q0, target, x_target, cfg, duration, modes=None):
    target_fn = _as_target(target)
    steps = int(round(duration / cfg.dt))
    if steps < 1:
        raise ConfigError("duration must cover at least one step")
    q = np.asarray(q0, float).copy()
    ts, qs, xs, ds, es, ms, Ms, Mt = [], [], [], [], [], [], [], []
    deficient = 0
    limit = None
    for k in range(steps + 1):
        t = k * cfg.dt
        u = min(t / duration, 1.0)
        terms = terms_fn(q)
        M_hat = target_fn(u)
        x_hat = terms.x if x_target is None else x_target
        mode = modes or cfg.mode_at(t)
        qdot, info = controller_step(terms, M_hat, x_hat, cfg, mode)
        ts.append(t); qs.append(q.copy()); xs.append(terms.x.copy())
        ds.append(info["spd_distance"]); es.append(float(np.linalg.norm(x_hat - terms.x)))
        ms.append(mode); Ms.append(terms.M); Mt.append(np.asarray(M_hat, float))
        deficient += info["deficient"]
        if limit is None:
            limit = 2.0 * max(ds[0], cfg.divergence_floor)
        if not np.all(np.isfinite(qdot)) or ds[-1] > limit:
            run = TrackingRun(np.array(ts), np.array(qs), np.array(xs), np.array(ds), np.array(es),
                              ms, np.array(Ms), np.array(Mt), deficient)
            raise DivergenceError(
                f"spd_distance {ds[-1]:.4g} exceeded {limit:.4g} at t={t:.4f}s", trace=run)
        if k < steps:
            q = q + cfg.dt * qdot
    return TrackingRun(np.array(ts), np.array(qs), np.array(xs), np.array(ds), np.array(es),
                       ms, np.array(Ms), np.array(Mt), deficient)


def run_tracking(chain, target, cfg=None, duration=3.0, q0=None, target_x=None, rows=None):
    """Euler-integrated tracking of a manipulability target on one chain.

    Parameters
    ----------
    target : ndarray or callable
        Constant SPD target, or ``u -> M`` with ``u = t / duration`` in [0, 1]
        (e.g. ``lambda u: retrieve_profile(model, u)``).
    target_x : array_like, optional
        Desired position; defaults to holding the initial position.

    Raises
    ------
    DivergenceError
        If ``spd_distance`` exceeds twice ``max(initial distance,
        cfg.divergence_floor)``; ``exc.trace`` holds the run up to that step.
    """
    cfg = ControllerConfig() if cfg is None else cfg
    q0 = chain.home if q0 is None else np.asarray(q0, float)
    terms0 = task_terms(chain, q0, rows)
    x_hat = terms0.x.copy() if target_x is None else np.asarray(target_x, float)
    run = _simulate(lambda q: task_terms(chain, q, rows), q0, target, x_hat, cfg, duration)
    run.meta = {"robot": chain.name, "n": chain.n, "dim": terms0.M.shape[0]}
    return run


def run_dual_arm_tracking(sys, target, cfg=None, duration=3.0, q0=None, rows="position"):
    """Position-first tracking of the object-level ellipsoid with both hands fixed.

    Raises
    ------
    ValueError
        If the stacked hand task leaves no nullspace for the ellipsoid task;
        the message reports the residual of a trial step.
    """
    cfg = ControllerConfig() if cfg is None else cfg
    q0 = sys.home if q0 is None else np.asarray(q0, float)
    if sys.grasp is None:
        sys = sys.with_grasp(sys.grasp_at(q0))
    terms0 = dual_task_terms(sys, q0, rows)
    rank = np.linalg.matrix_rank(terms0.J, tol=cfg.rank_tol * np.linalg.norm(terms0.J, 2))
    if rank >= sys.n:
        M_hat = _as_target(target)(0.0)
        qdot, _ = controller_step(terms0, M_hat, terms0.x, cfg, "position_first")
        uM, _, _ = _errors(terms0, M_hat, terms0.x, cfg)
        resid = float(np.linalg.norm(terms0.Jm @ qdot - uM))
        raise ValueError(f"dual-arm fixture has no redundancy left for the ellipsoid task "
                         f"(residual {resid:.3e})")
    x_hat = terms0.x.copy()
    run = _simulate(lambda q: dual_task_terms(sys, q, rows), q0, target, x_hat, cfg, duration,
                    modes="position_first")
    run.meta = {"robot": sys.name, "n": sys.n, "dim": terms0.M.shape[0]}
    return run


def write_run(path, run, header=None):
    with open(path, "w") as fh:
        head = {"type": "tracking_run", **run.meta, "deficient_steps": run.deficient_steps}
        if header:
            head.update(header)
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for rec in run.records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_run(path):
    """Return ``(header, TrackingRun)`` from a JSON-lines run log."""
    with open(path) as fh:
        lines = [json.loads(ln) for ln in fh if ln.strip()]
    if not lines or lines[0].get("type") != "tracking_run":
        raise ValueError(f"{path}: not a tracking run log")
    head, recs = lines[0], lines[1:]
    if not recs:
        raise ValueError(f"{path}: run log has no steps")
    D = int(round(np.sqrt(len(recs[0]["M"]))))
    run = TrackingRun(
        t=np.array([r["t"] for r in recs]),
        q=np.array([r["q"] for r in recs]),
        x=np.array([r["x"] for r in recs]),
        spd_distance=np.array([r["spd_distance"] for r in recs]),
        pos_error=np.array([r["pos_error"] for r in recs]),
        mode=[r["mode"] for r in recs],
        M=np.array([r["M"] for r in recs]).reshape(-1, D, D),
        M_target=np.array([r["M_target"] for r in recs]).reshape(-1, D, D),
        deficient_steps=int(head.get("deficient_steps", 0)),
        meta={k: head[k] for k in ("robot", "n", "dim") if k in head},
    )
    return head, run
