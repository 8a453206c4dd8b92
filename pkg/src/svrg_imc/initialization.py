"""Spectral initializer for the factored completion solvers.

A random half of the partition's subsets is pooled into omega_0, the
observed entries are rescaled by the inverse of omega_0's sample rate, and
the rank-r SVD of that rescaled projection is pulled back through the
features with a square-root spectrum split.  With enough samples the output
lands close enough to the optimum that the solvers' constraint projection
never activates.
"""

import math

import numpy as np

from .linalg import truncated_svd
from .objective import Factorization
from .problem import rng_from

__all__ = ["RankDeficiencyError", "initialize", "initialize_with_spectrum"]

# Top-r singular values of the rescaled projection below this fraction of
# the leading one are treated as numerically zero.
_RANK_TOL = 1e-12


class RankDeficiencyError(RuntimeError):
    """The rescaled projection has fewer than r numerically nonzero values."""


def initialize_with_spectrum(omega, partition, features, r, seed=0,
                             use_full_omega=False, svd_tol=1e-6):
    """Balanced rank-r spectral start from a random half of the subsets.

    :param omega: the full observation set
    :param partition: its subset split; ceil(B/2) subsets are pooled into
        omega_0 (all of them when B = 1 or ``use_full_omega`` is set)
    :param features: the (x_left, x_right) pair
    :param r: target rank, at most min(n1, n2)
    :param seed: drives the subset choice only
    :param use_full_omega: skip the sample split and use every observation
    :param svd_tol: stability tolerance of the rank-r factorization; the
        start point only needs a coarse spectrum, and at sparse sampling the
        rescaled projection can have a near-tied gap at the cut that a tight
        tolerance would stall on
    :return: (Factorization(u0, v0), sigma0) with u0 = x_left^T u_bar
        sqrt(sigma0) and v0 = x_right^T v_bar sqrt(sigma0); sigma0 are the
        top-r singular values of the rescaled projection, the rough spectrum
        estimate the solvers size their steps and radii from
    """
    n1 = features.x_left.shape[1]
    n2 = features.x_right.shape[1]
    if not 1 <= r <= min(n1, n2):
        raise ValueError(f"rank {r} outside [1, {min(n1, n2)}]")
    b = len(partition)
    if use_full_omega or b == 1:
        positions = np.arange(omega.size)
    else:
        rng = rng_from(seed)
        chosen = rng.choice(b, size=math.ceil(b / 2), replace=False)
        positions = np.concatenate([partition.groups[t] for t in np.sort(chosen)])
    if positions.size == 0:
        raise ValueError("initializer subset pool is empty")
    d1, d2 = omega.shape
    p0 = positions.size / (d1 * d2)

    rescaled = np.zeros((d1, d2))
    rescaled[omega.rows[positions], omega.cols[positions]] = omega.values[positions] / p0
    u_bar, sigma0, v_bar = truncated_svd(rescaled, r, tol=svd_tol)
    if sigma0[-1] <= _RANK_TOL * sigma0[0]:
        raise RankDeficiencyError(
            f"rescaled projection has numerical rank below {r} "
            f"(sigma_r = {sigma0[-1]:.3e} vs sigma_1 = {sigma0[0]:.3e})"
        )
    root = np.sqrt(sigma0)
    u0 = features.x_left.T @ u_bar * root
    v0 = features.x_right.T @ v_bar * root
    return Factorization(u0, v0), sigma0


def initialize(omega, partition, features, r, seed=0, use_full_omega=False, svd_tol=1e-6):
    """The spectral start alone; see :func:`initialize_with_spectrum`."""
    f, _ = initialize_with_spectrum(
        omega, partition, features, r, seed,
        use_full_omega=use_full_omega, svd_tol=svd_tol,
    )
    return f
