"""Dense linear-algebra kernels shared by the completion solvers.

Norms, column orthonormalization, truncated SVD by block power iteration,
index-set projection, and orthogonal Procrustes alignment.  Everything
operates on plain 2-d ``numpy`` arrays and is a pure function of its inputs.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "ConvergenceError",
    "SvdTriplet",
    "AlignmentResult",
    "frobenius_norm",
    "spectral_norm",
    "two_inf_norm",
    "orthonormalize",
    "truncated_svd",
    "project_pattern",
    "procrustes_align",
]

# Fixed Philox key for the start blocks of the iterative kernels; makes
# spectral_norm and truncated_svd deterministic functions of their inputs.
_START_KEY = 0x5EED

# A pivot smaller than this fraction of the leading pivot is treated as rank
# deficiency in orthonormalize().
_RANK_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative kernel failed to reach its tolerance within max_iter."""


class SvdTriplet(NamedTuple):
    u: np.ndarray       # rows x k, orthonormal columns
    sigma: np.ndarray   # k nonnegative values, nonincreasing
    v: np.ndarray       # cols x k, orthonormal columns


class AlignmentResult(NamedTuple):
    rotation: np.ndarray  # r x r orthogonal
    distance: float       # attained ||z - z_star @ rotation||_F


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def frobenius_norm(a):
    """Square root of the sum of squared entries."""
    a = _as_matrix(a)
    return float(np.sqrt(np.sum(a * a)))


def spectral_norm(a, tol=1e-10, max_iter=10000):
    """Largest singular value, by power iteration on the Gram matrix.

    Iterates on the smaller of a^T a and a a^T.  Convergence is declared when
    the singular-value estimate changes by at most ``tol`` relative to its
    current value.  Raises ConvergenceError after ``max_iter`` iterations,
    which signals a (near-)degenerate leading pair; callers may raise
    ``max_iter`` in that case.
    """
    a = _as_matrix(a)
    if tol <= 0:
        raise ValueError("tol must be positive")
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    if not gram.any():
        return 0.0
    rng = np.random.Generator(np.random.Philox(_START_KEY))
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = gram @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            # start vector fell in the null space; redraw
            v = rng.standard_normal(gram.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = w / lam
        new_estimate = float(np.sqrt(lam))
        if abs(new_estimate - estimate) <= tol * new_estimate:
            return new_estimate
        estimate = new_estimate
    raise ConvergenceError(
        f"spectral norm power iteration did not converge in {max_iter} iterations"
    )


def two_inf_norm(a):
    """Maximum Euclidean norm over the rows of ``a``."""
    a = _as_matrix(a)
    return float(np.sqrt(np.max(np.sum(a * a, axis=1))))


def orthonormalize(a):
    """Orthonormal basis for the column span of ``a``, same shape.

    QR based; the returned Q satisfies ||Q^T Q - I||_F <= 1e-10 and spans
    the columns of ``a``.  Raises ValueError when a pivot falls below
    1e-12 times the leading pivot (numerical rank deficiency).
    """
    a = _as_matrix(a)
    if a.shape[0] < a.shape[1]:
        raise ValueError(f"need rows >= cols, got shape {a.shape}")
    q, r = np.linalg.qr(a)
    pivots = np.abs(np.diag(r))
    if pivots.max() == 0.0 or pivots.min() < _RANK_TOL * pivots.max():
        raise ValueError("input is numerically rank deficient")
    # fix column signs so the factorization is unique (positive R diagonal)
    signs = np.sign(np.diag(r))
    return q * signs


def truncated_svd(a, k, tol=1e-10, max_iter=10000):
    """Top-k singular triplet of ``a`` by block power iteration.

    Alternates QR factorizations of a @ Q and a^T @ Q until the singular
    value estimates (diagonal of the inner R factor) are stable to ``tol``
    relative to the leading value, then extracts the triplet from the k x k
    projected core.  Column signs are fixed so the largest-magnitude entry
    of each left singular vector is nonnegative.

    :param a: matrix to factor
    :param k: number of leading singular triplets, 1 <= k <= min(shape)
    :param tol: relative stability tolerance on the singular values
    :param max_iter: iteration budget; ConvergenceError beyond it
    :return: SvdTriplet(u, sigma, v) with a ~= u @ diag(sigma) @ v.T
    """
    a = _as_matrix(a)
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} outside [1, {min(m, n)}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.Generator(np.random.Philox(_START_KEY))
    qv = orthonormalize(rng.standard_normal((n, k)))
    sigma = np.zeros(k)
    tiny = np.finfo(float).tiny
    for _ in range(max_iter):
        qu, _ = np.linalg.qr(a @ qv)
        qv, rv = np.linalg.qr(a.T @ qu)
        new_sigma = np.sort(np.abs(np.diag(rv)))[::-1]
        if np.max(np.abs(new_sigma - sigma)) <= tol * new_sigma[0] + tiny:
            sigma = new_sigma
            break
        sigma = new_sigma
    else:
        raise ConvergenceError(
            f"truncated SVD block iteration did not converge in {max_iter} iterations"
        )
    # Rayleigh-Ritz finish on the k x k core pins vectors to values.
    core = qu.T @ a @ qv
    w, s, yt = np.linalg.svd(core)
    u = qu @ w
    v = qv @ yt.T
    lead = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[lead, np.arange(k)])
    signs[signs == 0] = 1.0
    return SvdTriplet(u * signs, s, v * signs)


def project_pattern(a, omega):
    """Copy of ``a`` with entries on the index set kept and all others zero.

    ``omega`` is a sequence of (i, j) pairs; an empty set yields the zero
    matrix.  Out-of-bounds indices raise ValueError.
    """
    a = _as_matrix(a)
    out = np.zeros_like(a)
    idx = np.asarray(omega, dtype=int)
    if idx.size == 0:
        return out
    if idx.ndim != 2 or idx.shape[1] != 2:
        raise ValueError("omega must be a sequence of (i, j) pairs")
    rows, cols = idx[:, 0], idx[:, 1]
    if rows.min() < 0 or rows.max() >= a.shape[0] or cols.min() < 0 or cols.max() >= a.shape[1]:
        raise ValueError("index set contains out-of-bounds entries")
    out[rows, cols] = a[rows, cols]
    return out


def procrustes_align(z, z_star):
    """Best orthogonal alignment of ``z_star`` onto ``z``.

    Solves min over orthogonal R of ||z - z_star @ R||_F via the closed-form
    SVD of z_star^T z (rotations and reflections both allowed), and returns
    the minimizer together with the attained distance.
    """
    z = _as_matrix(z, "z")
    z_star = _as_matrix(z_star, "z_star")
    if z.shape != z_star.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {z_star.shape}")
    if z.shape[1] < 1:
        raise ValueError("need at least one column")
    w, _, yt = np.linalg.svd(z_star.T @ z)
    rotation = w @ yt
    distance = float(np.linalg.norm(z - z_star @ rotation))
    return AlignmentResult(rotation, distance)
