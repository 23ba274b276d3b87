"""Affine-invariant Riemannian geometry on symmetric positive-definite matrices.

Every function accepts single matrices of shape ``(D, D)`` and, where it makes
sense, stacks of shape ``(..., D, D)``. Matrix square roots, logarithms and
exponentials go through the symmetric eigendecomposition.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DimensionError, NotSpdError

SYM_TOL = 1e-10
EIG_FLOOR = 1e-12
SQRT2 = np.sqrt(2.0)


def symmetrize(a):
    """Return ``(A + A^T) / 2`` over the last two axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_symmetric(a, name="matrix"):
    """Validate symmetry to ``1e-10 * max(1, max|A|)`` and return the symmetric part."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSpdError(f"{name} has non-finite entries")
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2))) if a.size else 0.0
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if asym > SYM_TOL * scale:
        raise NotSpdError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return symmetrize(a)


def _eigh_spd(a, name="matrix"):
    w, v = np.linalg.eigh(a)
    if np.any(w <= 0.0):
        raise NotSpdError(f"{name} is not positive definite (min eigenvalue {np.min(w):.3e})")
    return np.maximum(w, EIG_FLOOR), v


def check_spd(a, name="matrix"):
    """Validate a (stack of) SPD matrices and return the symmetric part.

    Raises
    ------
    NotSpdError
        If any matrix is asymmetric beyond tolerance or has an eigenvalue <= 0.
    """
    a = check_symmetric(a, name)
    _eigh_spd(a, name)
    return a


def _recompose(w, v):
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


def _spd_fn(a, fn, name="matrix"):
    w, v = _eigh_spd(a, name)
    return _recompose(fn(w), v)


def sym_expm(s):
    """Matrix exponential of a symmetric matrix."""
    w, v = np.linalg.eigh(symmetrize(s))
    return _recompose(np.exp(w), v)


def spd_logm(a):
    """Principal matrix logarithm of an SPD matrix."""
    return _spd_fn(check_spd(a), np.log)


def spd_sqrtm(a):
    return _spd_fn(check_spd(a), np.sqrt)


def spd_invsqrtm(a):
    return _spd_fn(check_spd(a), lambda w: 1.0 / np.sqrt(w))


def _halves(base):
    w, v = _eigh_spd(base, "base")
    sw = np.sqrt(w)
    return _recompose(sw, v), _recompose(1.0 / sw, v)


def _match(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def spd_distance(a, b):
    """Affine-invariant distance ``||log(A^{-1/2} B A^{-1/2})||_F``.

    Broadcasts over leading axes.
    """
    a = check_spd(a, "a")
    b = check_spd(b, "b")
    _match(a, b)
    _, isq = _halves(a)
    c = symmetrize(isq @ b @ isq)
    w = np.linalg.eigvalsh(c)
    if np.any(w <= 0.0):
        raise NotSpdError("whitened matrix lost positive definiteness")
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


def whitened_log(base, target):
    """``log(base^{-1/2} target base^{-1/2})`` -- tangent vector at ``base``
    transported to the identity, whose Frobenius norm is the geodesic distance."""
    base = check_spd(base, "base")
    target = check_spd(target, "target")
    _match(base, target)
    _, isq = _halves(base)
    return _spd_fn(symmetrize(isq @ target @ isq), np.log, "whitened target")


def whitened_exp(base, white):
    """Inverse of :func:`whitened_log`."""
    base = check_spd(base, "base")
    white = check_symmetric(white, "tangent")
    _match(base, white)
    sq, _ = _halves(base)
    return symmetrize(sq @ sym_expm(white) @ sq)


def spd_log(base, target):
    """Logarithmic map ``Log_base(target)``, a symmetric matrix at ``base``."""
    base = check_spd(base, "base")
    target = check_spd(target, "target")
    _match(base, target)
    sq, isq = _halves(base)
    inner = _spd_fn(symmetrize(isq @ target @ isq), np.log, "whitened target")
    return symmetrize(sq @ inner @ sq)


def spd_exp(base, tangent):
    """Exponential map ``Exp_base(tangent)``; the result is SPD."""
    base = check_spd(base, "base")
    tangent = check_symmetric(tangent, "tangent")
    _match(base, tangent)
    sq, isq = _halves(base)
    return symmetrize(sq @ sym_expm(isq @ tangent @ isq) @ sq)


def tangent_norm(base, tangent):
    """Norm of ``tangent`` under the affine-invariant metric at ``base``."""
    base = check_spd(base, "base")
    _, isq = _halves(base)
    return np.linalg.norm(isq @ check_symmetric(tangent, "tangent") @ isq, axis=(-2, -1))


def geodesic(a, b, t):
    """Point at fraction ``t`` in [0, 1] along the geodesic from ``a`` to ``b``."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"geodesic parameter must lie in [0, 1], got {t}")
    a = check_spd(a, "a")
    return spd_exp(a, t * spd_log(a, b))


def frechet_mean(points, weights=None, tol=1e-10, max_iter=100, init=None):
    """Weighted Frechet (Karcher) mean by fixed-point iteration.

    Parameters
    ----------
    points : array_like, shape (N, D, D)
        SPD data.
    weights : array_like, shape (N,), optional
        Nonnegative weights, normalized internally. Uniform by default.
    tol : float
        Stop once the Frobenius norm of the (ambient) tangent mean drops below it.
    max_iter : int
        Iteration cap.
    init : array_like, shape (D, D), optional
        Starting estimate. Defaults to the first point.

    Returns
    -------
    ndarray, shape (D, D)

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations without meeting ``tol``; carries the
        last iterate and its residual.
    """
    pts = check_spd(points, "points")
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise DimensionError("points must be a nonempty stack of square matrices")
    n = pts.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative, one per point, not all zero")
        w = w / w.sum()
    mean = pts[0].copy() if init is None else check_spd(init, "init")

    residual = np.inf
    for _ in range(max_iter):
        sq, isq = _halves(mean)
        logs = _spd_fn(symmetrize(isq @ pts @ isq), np.log, "whitened point")
        step = np.tensordot(w, logs, axes=1)
        residual = float(np.linalg.norm(sq @ step @ sq))
        if residual < tol:
            return mean
        mean = symmetrize(sq @ sym_expm(step) @ sq)
    raise ConvergenceError(
        f"Frechet mean did not converge in {max_iter} iterations (residual {residual:.3e})",
        last=mean,
        residual=residual,
    )


@lru_cache(maxsize=None)
def _vec_index(dim):
    diag = np.arange(dim)
    iu, ju = np.triu_indices(dim, k=1)
    rows = np.concatenate([diag, iu])
    cols = np.concatenate([diag, ju])
    scale = np.concatenate([np.ones(dim), np.full(iu.size, SQRT2)])
    return rows, cols, scale


def vec_dim(dim):
    return dim * (dim + 1) // 2


def mat_dim(d):
    dim = int(round((np.sqrt(8 * d + 1) - 1) / 2))
    if vec_dim(dim) != d:
        raise DimensionError(f"{d} is not a triangular number")
    return dim


def sym_vec(m):
    """Inner-product preserving vectorization of symmetric matrices.

    Diagonal entries come first in index order, followed by the strict upper
    triangle in row-major order scaled by sqrt(2), so that
    ``vec(A) @ vec(B) == trace(A @ B)``.
    """
    return _sym_vec(check_symmetric(m, "matrix"))


def _sym_vec(m):
    # No symmetry check: for callers that symmetrize themselves.
    rows, cols, scale = _vec_index(m.shape[-1])
    return m[..., rows, cols] * scale


def sym_unvec(v):
    """Inverse of :func:`sym_vec`."""
    v = np.asarray(v, dtype=float)
    dim = mat_dim(v.shape[-1])
    rows, cols, scale = _vec_index(dim)
    out = np.zeros(v.shape[:-1] + (dim, dim))
    vals = v / scale
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


@dataclass(frozen=True)
class SpdCovariance:
    """Fourth-order covariance of SPD data in the tangent space of ``base``.

    ``tensor[i, j, k, l]`` is the (N-1)-normalized sum of
    ``L[i, j] * L[k, l]`` over tangent vectors ``L``.
    """

    tensor: np.ndarray
    base: np.ndarray
    n_samples: int

    @property
    def dim(self):
        return self.base.shape[0]

    @property
    def matricized(self):
        """The tensor as a ``d x d`` matrix in :func:`sym_vec` coordinates."""
        rows, cols, scale = _vec_index(self.dim)
        sub = self.tensor[rows, cols][:, rows, cols]
        return sub * np.outer(scale, scale)

    @property
    def axis_std(self):
        """Standard deviation along each coordinate axis, ``sqrt(S[i,i,i,i])``."""
        i = np.arange(self.dim)
        return np.sqrt(self.tensor[i, i, i, i])

    @classmethod
    def from_matricized(cls, mat, base, n_samples=0):
        mat = np.asarray(mat, dtype=float)
        dim = mat_dim(mat.shape[0])
        rows, cols, scale = _vec_index(dim)
        unscaled = mat / np.outer(scale, scale)
        tensor = np.zeros((dim,) * 4)
        for a, (i, j) in enumerate(zip(rows, cols)):
            for b, (k, l) in enumerate(zip(rows, cols)):
                val = unscaled[a, b]
                for p, q in ((i, j), (j, i)):
                    for r, s in ((k, l), (l, k)):
                        tensor[p, q, r, s] = val
        return cls(tensor=tensor, base=np.asarray(base, dtype=float), n_samples=n_samples)


def spd_covariance(points, mean):
    """Tangent-space covariance tensor of ``points`` about ``mean``."""
    pts = check_spd(points, "points")
    mean = check_spd(mean, "mean")
    if pts.ndim != 3 or pts.shape[0] < 2:
        raise ValueError("covariance needs at least two points")
    _match(pts, mean)
    logs = spd_log(mean, pts)
    tensor = np.einsum("nij,nkl->ijkl", logs, logs) / (pts.shape[0] - 1)
    return SpdCovariance(tensor=tensor, base=mean, n_samples=pts.shape[0])


def spd_to_json(m):
    m = np.asarray(m, dtype=float)
    iu, ju = np.triu_indices(m.shape[0])
    return {"dim": int(m.shape[0]), "upper_triangular_row_major": [float(x) for x in m[iu, ju]]}


def spd_from_json(obj, validate=True):
    dim = int(obj["dim"])
    vals = np.asarray(obj["upper_triangular_row_major"], dtype=float)
    if vals.size != vec_dim(dim):
        raise DimensionError(f"expected {vec_dim(dim)} entries for dim {dim}, got {vals.size}")
    iu, ju = np.triu_indices(dim)
    m = np.zeros((dim, dim))
    m[iu, ju] = vals
    m[ju, iu] = vals
    return check_spd(m) if validate else m


def covariance_to_json(cov):
    return {
        "dim": int(cov.dim),
        "matricized": [float(x) for x in cov.matricized.ravel()],
        "base": spd_to_json(cov.base),
        "n_samples": int(cov.n_samples),
    }


def covariance_from_json(obj):
    dim = int(obj["dim"])
    d = vec_dim(dim)
    mat = np.asarray(obj["matricized"], dtype=float).reshape(d, d)
    base = spd_from_json(obj["base"]) if "base" in obj else np.eye(dim)
    return SpdCovariance.from_matricized(mat, base, int(obj.get("n_samples", 0)))
