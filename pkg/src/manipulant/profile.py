"""Manipulability profiles: per-timestep statistics over aligned ellipsoids and
a time-driven Gaussian mixture model on the SPD manifold.

The mixture models the joint density of a normalized time ``u`` and an SPD
matrix ``X``. Component ``k`` has a Gaussian in time and a zero-mean Gaussian
over the whitened tangent coordinates
``v = sym_vec(log(C_k^{-1/2} X C_k^{-1/2}))`` at its center ``C_k``, so that
``|v|`` is the affine-invariant distance from ``X`` to the center.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DimensionError, EmptyComponentError
from .spd import (
    SpdCovariance,
    check_spd,
    covariance_from_json,
    covariance_to_json,
    frechet_mean,
    spd_covariance,
    spd_from_json,
    spd_to_json,
    sym_vec,
    vec_dim,
    whitened_log,
)

log = logging.getLogger(__name__)

REGULARIZATION = 1e-6
EMPTY_WEIGHT = 1e-6


# --- statistics profile -------------------------------------------------------

@dataclass(frozen=True)
class ProfileStep:
    u: float
    mean: np.ndarray
    covariance: SpdCovariance
    std: np.ndarray
    det: float
    cond: float
    det_mean: float
    det_std: float
    cond_mean: float
    cond_std: float
    n_samples: int


@dataclass
class ManipulabilityProfile:
    steps: list
    actions: list = field(default_factory=list)
    frames_per_action: int = 0
    kind: str = "velocity"
    frame: str = "base"

    def __post_init__(self):
        if len({s.n_samples for s in self.steps}) > 1:
            raise ValueError("profile timesteps must share one sample count")

    def __len__(self):
        return len(self.steps)

    @property
    def u(self):
        return np.array([s.u for s in self.steps])

    @property
    def means(self):
        return np.stack([s.mean for s in self.steps])

    def track(self, name):
        """Array of one scalar/vector attribute across timesteps."""
        return np.array([getattr(s, name) for s in self.steps])


def _indices(mats):
    w = np.linalg.eigvalsh(mats)
    return np.prod(w, axis=-1), w[..., -1] / w[..., 0]


def build_profile(aligned, u=None, actions=(), frames_per_action=0, kind="velocity", frame="base"):
    """Per-timestep Frechet mean, covariance, axis std and index statistics.

    Parameters
    ----------
    aligned : array_like, shape (T, N, D, D)
        ``N`` ellipsoids per timestep (one per trial).
    u : array_like, shape (T,), optional
        Normalized time of each step; evenly spaced on [0, 1] by default.

    Raises
    ------
    ConvergenceError
        When a timestep's mean fails to converge; the message names the step.
    """
    data = check_spd(aligned, "aligned ellipsoids")
    if data.ndim != 4:
        raise DimensionError("aligned ellipsoids must have shape (T, N, D, D)")
    T, N = data.shape[:2]
    if N < 2:
        raise ValueError("each timestep needs at least 2 samples")
    u = np.linspace(0.0, 1.0, T) if u is None else np.asarray(u, float)
    if u.shape != (T,):
        raise DimensionError("u must have one value per timestep")
    steps = []
    for t in range(T):
        try:
            mean = frechet_mean(data[t])
        except ConvergenceError as exc:
            raise ConvergenceError(f"timestep {t}: {exc}", last=exc.last, residual=exc.residual) from exc
        cov = spd_covariance(data[t], mean)
        det, cond = _indices(data[t])
        mdet, mcond = _indices(mean)
        steps.append(ProfileStep(
            u=float(u[t]), mean=mean, covariance=cov, std=cov.axis_std,
            det=float(mdet), cond=float(mcond),
            det_mean=float(det.mean()), det_std=float(det.std(ddof=1)),
            cond_mean=float(cond.mean()), cond_std=float(cond.std(ddof=1)),
            n_samples=N,
        ))
    return ManipulabilityProfile(steps, list(actions), frames_per_action, kind, frame)


def profile_to_json(profile, provenance=None):
    doc = {
        "type": "manipulability_profile",
        "kind": profile.kind,
        "frame": profile.frame,
        "actions": list(profile.actions),
        "frames_per_action": profile.frames_per_action,
        "steps": [{
            "u": s.u,
            "mean": spd_to_json(s.mean),
            "covariance": covariance_to_json(s.covariance),
            "std": [float(v) for v in s.std],
            "det": s.det, "cond": s.cond,
            "det_mean": s.det_mean, "det_std": s.det_std,
            "cond_mean": s.cond_mean, "cond_std": s.cond_std,
            "n_samples": s.n_samples,
        } for s in profile.steps],
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def profile_from_json(doc):
    steps = []
    for s in doc["steps"]:
        cov = covariance_from_json(s["covariance"])
        steps.append(ProfileStep(
            u=float(s["u"]), mean=spd_from_json(s["mean"]), covariance=cov,
            std=np.asarray(s["std"], float), det=s["det"], cond=s["cond"],
            det_mean=s["det_mean"], det_std=s["det_std"],
            cond_mean=s["cond_mean"], cond_std=s["cond_std"], n_samples=int(s["n_samples"]),
        ))
    return ManipulabilityProfile(steps, doc.get("actions", []), doc.get("frames_per_action", 0),
                                 doc.get("kind", "velocity"), doc.get("frame", "base"))


def interpolate_profile(profile, u):
    """Mean ellipsoid at normalized time ``u`` (geodesic between neighbouring steps)."""
    from .spd import geodesic

    grid = profile.u
    u = float(np.clip(u, grid[0], grid[-1]))
    j = int(np.searchsorted(grid, u, side="right"))
    if j == 0:
        return profile.steps[0].mean
    if j >= len(grid):
        return profile.steps[-1].mean
    span = grid[j] - grid[j - 1]
    if span <= 0:
        return profile.steps[j].mean
    return geodesic(profile.steps[j - 1].mean, profile.steps[j].mean, (u - grid[j - 1]) / span)


# --- mixture model -------------------------------------------------------------

@dataclass
class SpdGmm:
    weights: np.ndarray          # (K,)
    time_means: np.ndarray       # (K,)
    time_vars: np.ndarray        # (K,)
    centers: np.ndarray          # (K, D, D)
    covariances: np.ndarray      # (K, d, d) whitened tangent coordinates
    log_likelihood: list = field(default_factory=list)
    converged: bool = False
    reseeded: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-10 or np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive and sum to 1")

    @property
    def K(self):
        return self.weights.size

    @property
    def dim(self):
        return self.centers.shape[1]


def _tangent(centers, X):
    """Whitened tangent coordinates of every point at every center: (K, N, d)."""
    return np.stack([sym_vec(whitened_log(C, X)) for C in centers])


def _log_gauss(v, cov):
    """Log density of zero-mean Gaussians; ``v`` (N, d), ``cov`` (d, d)."""
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, v.T)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (np.sum(z * z, axis=0) + logdet + v.shape[1] * np.log(2 * np.pi))


def _log_time(u, mu, var):
    return -0.5 * ((u - mu) ** 2 / var + np.log(2 * np.pi * var))


def _component_logpdf(u, V, mu, var, cov):
    return _log_time(u, mu, var) + _log_gauss(V, cov)


def _joint_log(model, u, X, V=None):
    V = _tangent(model.centers, X) if V is None else V
    return np.stack([
        np.log(model.weights[k]) + _component_logpdf(u, V[k], model.time_means[k],
                                                     model.time_vars[k], model.covariances[k])
        for k in range(model.K)
    ])


def _weighted_cov(V, r, nk, d):
    return (V.T * r) @ V / nk + REGULARIZATION * np.eye(d)


def _canonical_order(u, X):
    keys = [X.reshape(len(u), -1)[:, c] for c in reversed(range(X[0].size))]
    return np.lexsort(keys + [u])


def _init_time(u, X, K):
    # Contiguous time-quantile blocks of the canonically ordered data.
    n = len(u)
    bounds = np.linspace(0, n, K + 1).round().astype(int)
    return [np.arange(bounds[k], bounds[k + 1]) for k in range(K)]


def _init_kmeanspp(u, X, K, rng):
    # Seeded k-means++ seeding on (time, log-Euclidean) features, then assignment.
    feats = np.column_stack([u, sym_vec(_logm_batch(X))])
    centers = [int(rng.integers(len(u)))]
    for _ in range(1, K):
        d2 = np.min(((feats[:, None, :] - feats[centers][None]) ** 2).sum(-1), axis=1)
        centers.append(int(rng.choice(len(u), p=d2 / d2.sum())))
    lab = np.argmin(((feats[:, None, :] - feats[centers][None]) ** 2).sum(-1), axis=1)
    return [np.flatnonzero(lab == k) for k in range(K)]


def _logm_batch(X):
    w, v = np.linalg.eigh(X)
    return (v * np.log(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def _component_from(u, X, idx, d):
    C = frechet_mean(X[idx])
    V = sym_vec(whitened_log(C, X[idx]))
    r = np.ones(len(idx))
    var = float(np.var(u[idx])) + REGULARIZATION
    return float(u[idx].mean()), var, C, _weighted_cov(V, r, len(idx), d)


def fit_gmm(u, X, K=5, seed=0, max_em_iter=100, tol=1e-8, init="time"):
    """Fit a time x SPD mixture by (generalized) expectation-maximization.

    Parameters
    ----------
    u : array_like, shape (N,)
        Normalized time of each datapoint.
    X : array_like, shape (N, D, D)
        SPD datapoints.
    K : int
        Number of components.
    seed : int
        Seed for ``init="kmeans++"`` and for nothing else; the default
        time-quantile initialization is deterministic.
    max_em_iter, tol
        Stop when the log-likelihood gain falls below ``tol * |LL|`` or after
        ``max_em_iter`` iterations.

    Notes
    -----
    Datapoints are put in a canonical order (by time, then by value) before
    fitting, so the result does not depend on input order. Each component's
    M-step update is accepted only if it does not lower the expected
    complete-data log-likelihood, which keeps the log-likelihood
    non-decreasing despite regularization and the Frechet-mean center step.
    """
    u = np.asarray(u, float)
    X = check_spd(X, "data")
    if X.ndim != 3 or u.shape != (X.shape[0],):
        raise DimensionError("need u of shape (N,) and X of shape (N, D, D)")
    D = X.shape[1]
    d = vec_dim(D)
    N = len(u)
    if N < K * (1 + d):
        raise ValueError(f"need at least {K * (1 + d)} datapoints for K={K}, got {N}")
    order = _canonical_order(u, X)
    u, X = u[order], X[order]

    if init == "time":
        groups = _init_time(u, X, K)
    elif init == "kmeans++":
        groups = _init_kmeanspp(u, X, K, np.random.default_rng(seed))
    else:
        raise ValueError("init must be 'time' or 'kmeans++'")
    comps = []
    for g in groups:
        if len(g) < 2:
            g = np.arange(N)
        comps.append(_component_from(u, X, g, d))
    model = SpdGmm(
        weights=np.array([len(g) for g in groups], float) / N,
        time_means=np.array([c[0] for c in comps]),
        time_vars=np.array([c[1] for c in comps]),
        centers=np.stack([c[2] for c in comps]),
        covariances=np.stack([c[3] for c in comps]),
    )
    if np.any(model.weights <= 0):
        model.weights = np.full(K, 1.0 / K)

    V = _tangent(model.centers, X)
    joint = _joint_log(model, u, X, V)
    ll = float(logsumexp(joint, axis=0).sum())
    model.log_likelihood.append(ll)
    for _ in range(max_em_iter):
        resp = np.exp(joint - logsumexp(joint, axis=0))
        nk = resp.sum(axis=1)
        weights = nk / N
        empty = np.flatnonzero(weights < EMPTY_WEIGHT)
        if empty.size:
            model, V = _reseed(model, u, X, V, joint, empty, d)
            joint = _joint_log(model, u, X, V)
            model.log_likelihood.append(float(logsumexp(joint, axis=0).sum()))
            continue
        model.weights = weights
        for k in range(K):
            _update_component(model, k, u, X, V, resp[k], nk[k], d)
        joint = _joint_log(model, u, X, V)
        new_ll = float(logsumexp(joint, axis=0).sum())
        model.log_likelihood.append(new_ll)
        if new_ll - ll < tol * max(1.0, abs(ll)):
            model.converged = True
            break
        ll = new_ll
    return model


def _update_component(model, k, u, X, V, r, nk, d):
    """Generalized M-step for one component; updates ``V[k]`` in place.

    The regularized updates are not exact maximizers, so each part (time,
    SPD) keeps whichever candidate scores the highest expected complete-data
    log-likelihood, the current parameters included.
    """
    mu = float(r @ u / nk)
    var = float(r @ (u - mu) ** 2 / nk) + REGULARIZATION
    if r @ _log_time(u, mu, var) >= r @ _log_time(u, model.time_means[k], model.time_vars[k]):
        model.time_means[k], model.time_vars[k] = mu, var

    C = frechet_mean(X, weights=r, init=model.centers[k])
    Vk = sym_vec(whitened_log(C, X))
    candidates = [
        (model.centers[k], model.covariances[k], V[k]),
        (model.centers[k], _weighted_cov(V[k], r, nk, d), V[k]),
        (C, _weighted_cov(Vk, r, nk, d), Vk),
    ]
    scores = [r @ _log_gauss(v, cov) for _, cov, v in candidates]
    best = int(np.argmax(scores))
    model.centers[k], model.covariances[k], V[k] = candidates[best]


def _reseed(model, u, X, V, joint, empty, d):
    fit = logsumexp(joint, axis=0)
    for k in empty:
        if k in model.reseeded:
            raise EmptyComponentError(f"mixture component {k} emptied again after re-seeding")
        worst = int(np.argmin(fit))
        model.reseeded.append(int(k))
        log.warning("re-seeding empty component %d at datapoint %d", k, worst)
        model.centers[k] = X[worst]
        model.time_means[k] = u[worst]
        model.time_vars[k] = float(np.var(u)) + REGULARIZATION
        V[k] = sym_vec(whitened_log(X[worst], X))
        model.covariances[k] = _weighted_cov(V[k], np.ones(len(u)), len(u), d)
        fit[worst] = np.inf
    w = np.maximum(model.weights, 1.0 / len(u))
    model.weights = w / w.sum()
    return model, V


def responsibilities(model, u):
    """Time-marginal responsibilities ``h_k(u)``."""
    lp = np.log(model.weights) + _log_time(float(u), model.time_means, model.time_vars)
    return np.exp(lp - logsumexp(lp))


def retrieve_profile(model, u):
    """Desired ellipsoid at time ``u``: responsibility-weighted Frechet mean
    of the component centers."""
    h = responsibilities(model, u)
    if model.K == 1:
        return model.centers[0].copy()
    return frechet_mean(model.centers, weights=h, init=model.centers[int(np.argmax(h))])


def gmm_to_json(model, provenance=None):
    doc = {
        "type": "spd_gmm",
        "K": model.K,
        "dim": model.dim,
        "weights": [float(w) for w in model.weights],
        "time_means": [float(m) for m in model.time_means],
        "time_vars": [float(v) for v in model.time_vars],
        "centers": [spd_to_json(C) for C in model.centers],
        "covariances": [[float(v) for v in S.ravel()] for S in model.covariances],
        "log_likelihood": [float(v) for v in model.log_likelihood],
        "converged": model.converged,
        "reseeded": list(model.reseeded),
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def gmm_from_json(doc):
    K, D = int(doc["K"]), int(doc["dim"])
    d = vec_dim(D)
    return SpdGmm(
        weights=np.asarray(doc["weights"], float),
        time_means=np.asarray(doc["time_means"], float),
        time_vars=np.asarray(doc["time_vars"], float),
        centers=np.stack([spd_from_json(c) for c in doc["centers"]]),
        covariances=np.asarray(doc["covariances"], float).reshape(K, d, d),
        log_likelihood=list(doc.get("log_likelihood", [])),
        converged=bool(doc.get("converged", False)),
        reseeded=list(doc.get("reseeded", [])),
    )


def load_target_source(path):
    """Read a profile or mixture document and return a callable ``u -> M``."""
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("type")
    if kind == "spd_gmm":
        model = gmm_from_json(doc)
        return lambda u: retrieve_profile(model, u)
    if kind == "manipulability_profile":
        prof = profile_from_json(doc)
        return lambda u: interpolate_profile(prof, u)
    if kind == "spd_matrix":
        M = spd_from_json(doc["spd"])
        return lambda u: M
    raise ValueError(f"{path}: unrecognized target document type {kind!r}")
