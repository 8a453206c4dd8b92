"""Built-in oracle suite behind the ``check`` subcommand.

Each check pits a fast analytic path against an independent reference
route: central finite differences for the gradients, exhaustive sign search
for the rank-one alignment, an exact finite average for the variance-reduced
gradient, and a hand-rolled Jacobi eigensolve of the Gram matrix for the
truncated SVD.
"""

import math
from typing import NamedTuple

import numpy as np

from .linalg import procrustes_align, truncated_svd
from .objective import (
    Factorization,
    grad_full,
    grad_subset,
    make_epoch_reference,
    objective_full,
    objective_subset,
    semi_stochastic_grad,
)
from .problem import (
    bernoulli_sample,
    fixed_sample,
    generate_instance,
    partition_observations,
    rng_from,
)

__all__ = [
    "CheckResult",
    "finite_difference_grads",
    "jacobi_gram_singular_values",
    "sign_search_align",
    "run_checks",
]


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def finite_difference_grads(fun, f, h=None):
    """Central-difference gradient pair of a scalar function of (u, v).

    The step is 1e-6 * (1 + ||[u; v]||_F) unless given, balancing truncation
    against rounding at double precision.
    """
    if h is None:
        h = 1e-6 * (1.0 + math.sqrt(float(np.sum(f.u**2) + np.sum(f.v**2))))
    out = []
    for which in (0, 1):
        block = f[which]
        grad = np.zeros_like(block)
        for idx in np.ndindex(*block.shape):
            bumped = block.copy()
            bumped[idx] = block[idx] + h
            plus = fun(Factorization(bumped, f.v) if which == 0 else Factorization(f.u, bumped))
            bumped[idx] = block[idx] - h
            minus = fun(Factorization(bumped, f.v) if which == 0 else Factorization(f.u, bumped))
            grad[idx] = (plus - minus) / (2.0 * h)
        out.append(grad)
    return out[0], out[1]


def jacobi_gram_singular_values(a, tol=1e-14, max_sweeps=100):
    """Singular values of ``a`` via a cyclic Jacobi eigensolve of a^T a.

    Deliberately naive: plane rotations applied until the off-diagonal mass
    is negligible.  Serves as the full-accuracy reference for the block
    power iteration.
    """
    g = np.asarray(a, dtype=float)
    s = g.T @ g
    n = s.shape[0]
    scale = np.linalg.norm(s)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(s**2) - np.sum(np.diag(s) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(s[p, q]) <= 1e-300 * scale:
                    continue
                theta = (s[q, q] - s[p, p]) / (2.0 * s[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                rot_p = c * s[:, p] - sn * s[:, q]
                rot_q = sn * s[:, p] + c * s[:, q]
                s[:, p], s[:, q] = rot_p, rot_q
                rot_p = c * s[p, :] - sn * s[q, :]
                rot_q = sn * s[p, :] + c * s[q, :]
                s[p, :], s[q, :] = rot_p, rot_q
    eig = np.sort(np.diag(s))[::-1]
    return np.sqrt(np.clip(eig, 0.0, None))


def sign_search_align(z, z_star):
    """Best alignment distance over R in {+1, -1} for single-column factors."""
    return min(
        float(np.linalg.norm(z - z_star)),
        float(np.linalg.norm(z + z_star)),
    )


def _relative_gap(a, b):
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def _check_gradients(seed):
    worst = 0.0
    for trial in range(3):
        truth = generate_instance(8, 8, 4, 4, 2, 3.0, seed + trial)
        omega = bernoulli_sample(truth, 0.6, seed + 10 + trial)
        part = partition_observations(omega, 4, seed + 20 + trial)
        rng = rng_from(seed, 1, trial)
        f = Factorization(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)))
        gu, gv = grad_full(f, omega, truth.features)
        fu, fv = finite_difference_grads(
            lambda g: objective_full(g, omega, truth.features), f
        )
        worst = max(worst, _relative_gap(gu, fu), _relative_gap(gv, fv))
        gu, gv = grad_subset(f, part, 1, truth.features)
        fu, fv = finite_difference_grads(
            lambda g: objective_subset(g, part, 1, truth.features), f
        )
        worst = max(worst, _relative_gap(gu, fu), _relative_gap(gv, fv))
    return CheckResult("gradient-oracle", worst <= 1e-5, f"max relative gap {worst:.2e}")


def _check_procrustes(seed):
    rng = rng_from(seed, 2)
    worst = 0.0
    for _ in range(100):
        z = rng.standard_normal((6, 1))
        z_star = rng.standard_normal((6, 1))
        closed = procrustes_align(z, z_star).distance
        brute = sign_search_align(z, z_star)
        worst = max(worst, abs(closed - brute))
    return CheckResult("procrustes-oracle", worst <= 1e-10, f"max distance gap {worst:.2e}")


def _check_unbiasedness(seed):
    truth = generate_instance(12, 12, 6, 6, 2, 2.0, seed)
    omega = fixed_sample(truth, 96, seed + 1)  # divisible by the subset count
    part = partition_observations(omega, 8, seed + 2)
    rng = rng_from(seed, 3)
    worst = 0.0
    for _ in range(5):
        anchor = Factorization(rng.standard_normal((6, 2)), rng.standard_normal((6, 2)))
        f = Factorization(rng.standard_normal((6, 2)), rng.standard_normal((6, 2)))
        ref = make_epoch_reference(anchor, omega, truth.features)
        mean_u = np.zeros_like(f.u)
        mean_v = np.zeros_like(f.v)
        for t in range(len(part)):
            gu, gv = semi_stochastic_grad(f, ref, part, t, truth.features)
            mean_u += gu
            mean_v += gv
        mean_u /= len(part)
        mean_v /= len(part)
        gu, gv = grad_full(f, omega, truth.features)
        scale = max(1.0, float(np.max(np.abs(gu))), float(np.max(np.abs(gv))))
        worst = max(
            worst,
            float(np.max(np.abs(mean_u - gu))) / scale,
            float(np.max(np.abs(mean_v - gv))) / scale,
        )
    return CheckResult("unbiasedness-oracle", worst <= 1e-10, f"max deviation {worst:.2e}")


def _check_svd(seed):
    rng = rng_from(seed, 4)
    worst = 0.0
    for _ in range(3):
        a = rng.standard_normal((6, 5))
        got = truncated_svd(a, 2, tol=1e-12).sigma
        want = jacobi_gram_singular_values(a)[:2]
        worst = max(worst, float(np.max(np.abs(got - want))))
    return CheckResult("svd-oracle", worst <= 1e-8, f"max singular value gap {worst:.2e}")


def run_checks(seed=0):
    """Run every oracle check; returns one CheckResult per oracle."""
    return [
        _check_gradients(seed),
        _check_procrustes(seed),
        _check_unbiasedness(seed),
        _check_svd(seed),
    ]
