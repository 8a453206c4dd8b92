"""Synthetic ground truth, entry sampling, and index-set partitioning.

The recovery target is a matrix l_star = x_left @ m_star @ x_right.T whose
low-dimensional core m_star has known rank and a prescribed condition
number.  Observations are single entries of l_star, drawn either by the
Bernoulli model (each entry kept independently with probability p) or with
an exact count for sweep experiments.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .linalg import orthonormalize, two_inf_norm

__all__ = [
    "Features",
    "GroundTruth",
    "ObservationSet",
    "Partition",
    "ProblemInstance",
    "rng_from",
    "derived_seeds",
    "generate_instance",
    "bernoulli_sample",
    "fixed_sample",
    "partition_observations",
    "incoherence_mu",
]


def rng_from(seed, *spawn_key):
    """Philox generator for ``seed``, descended through ``spawn_key``.

    All randomness in the package flows through this constructor, so a run
    is reproduced exactly by replaying the same seed and key path.
    """
    ss = np.random.SeedSequence(seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def derived_seeds(base_seed, *spawn_key, count=1):
    """Independent integer seeds derived from (base_seed, spawn_key).

    The splitting rule used by the experiment runners: each (dataset, cell,
    trial) tuple names a SeedSequence child whose first ``count`` words
    seed the per-stage generators.
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=spawn_key)
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)]


class Features(NamedTuple):
    """The known orthonormal side-information pair (x_left, x_right)."""

    x_left: np.ndarray   # d1 x n1
    x_right: np.ndarray  # d2 x n2


@dataclass(frozen=True)
class GroundTruth:
    """A synthetic instance: features, low-rank core, and assembled target.

    u_star / v_star are the balanced factors of m_star (singular factors
    scaled by the square-root spectrum); stacked they form the reference
    point that the solver iterates are measured against.
    """

    x_left: np.ndarray   # d1 x n1, orthonormal columns
    x_right: np.ndarray  # d2 x n2, orthonormal columns
    m_star: np.ndarray   # n1 x n2, rank `rank`
    l_star: np.ndarray   # d1 x d2
    rank: int
    sigma: np.ndarray    # rank positive singular values, nonincreasing
    u_star: np.ndarray   # n1 x rank, balanced factor
    v_star: np.ndarray   # n2 x rank, balanced factor

    @property
    def kappa(self):
        return float(self.sigma[0] / self.sigma[-1])

    @property
    def shape(self):
        return self.l_star.shape

    @property
    def features(self):
        return Features(self.x_left, self.x_right)

    @cached_property
    def l_star_norm(self):
        return float(np.linalg.norm(self.l_star))

    def balanced_stack(self):
        """The reference point [u_star; v_star], shape (n1 + n2) x rank."""
        return np.vstack((self.u_star, self.v_star))


@dataclass(frozen=True)
class ObservationSet:
    """The sampled index set with its observed values.

    Indices are stored row-major sorted and are unique; ``values[k]`` is
    the target entry at (rows[k], cols[k]).
    """

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d1, d2 = self.shape
        if self.rows.size == 0:
            raise ValueError("observation set is empty")
        if not (self.rows.size == self.cols.size == self.values.size):
            raise ValueError("rows, cols and values must have equal length")
        if self.rows.min() < 0 or self.rows.max() >= d1:
            raise ValueError("row index out of bounds")
        if self.cols.min() < 0 or self.cols.max() >= d2:
            raise ValueError("column index out of bounds")
        flat = self.rows.astype(np.int64) * d2 + self.cols
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate indices in observation set")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observed values contain non-finite entries")

    @property
    def size(self):
        return int(self.rows.size)

    @property
    def p(self):
        """Realized sample rate |omega| / (d1 d2)."""
        return self.size / (self.shape[0] * self.shape[1])

    @property
    def indices(self):
        return np.column_stack((self.rows, self.cols))


@dataclass(frozen=True)
class Partition:
    """A disjoint split of an observation set into B near-equal subsets.

    ``groups[t]`` holds positions into the parent observation arrays; sizes
    differ by at most one.
    """

    observations: ObservationSet
    groups: list

    def __post_init__(self):
        sizes = [len(g) for g in self.groups]
        if min(sizes) < 1:
            raise ValueError("partition contains an empty subset")
        if max(sizes) - min(sizes) > 1:
            raise ValueError("subset sizes differ by more than one")
        merged = np.concatenate(self.groups)
        if merged.size != self.observations.size or np.unique(merged).size != merged.size:
            raise ValueError("groups must partition the observation set exactly")

    def __len__(self):
        return len(self.groups)

    def rate(self, t):
        """Per-subset sample rate |omega_t| / (d1 d2)."""
        d1, d2 = self.observations.shape
        return len(self.groups[t]) / (d1 * d2)

    def subset(self, t):
        """(rows, cols, values) arrays of subset ``t``."""
        g = self.groups[t]
        o = self.observations
        return o.rows[g], o.cols[g], o.values[g]


@dataclass(frozen=True)
class ProblemInstance:
    """Everything one solver run consumes: truth, observations, partition."""

    truth: GroundTruth
    observations: ObservationSet
    partition: Partition


def generate_instance(d1, d2, n1, n2, r, condition_target=1.0, seed=0):
    """Draw a synthetic ground truth with a prescribed condition number.

    Features are orthonormalized standard-Gaussian matrices; the core is
    m_star = A @ diag(s) @ B.T with orthonormalized Gaussian factors and a
    log-uniformly spaced spectrum s in [1/condition_target, 1] (so the top
    singular value is 1 and kappa equals condition_target).  Deterministic
    for a fixed seed.
    """
    if not (d1 >= n1 >= r >= 1 and d2 >= n2 >= r):
        raise ValueError(
            f"need d1 >= n1 >= r and d2 >= n2 >= r, got "
            f"d1={d1}, d2={d2}, n1={n1}, n2={n2}, r={r}"
        )
    if condition_target < 1:
        raise ValueError("condition_target must be >= 1")
    rng = rng_from(seed)
    x_left = orthonormalize(rng.standard_normal((d1, n1)))
    x_right = orthonormalize(rng.standard_normal((d2, n2)))
    a = orthonormalize(rng.standard_normal((n1, r)))
    b = orthonormalize(rng.standard_normal((n2, r)))
    sigma = np.geomspace(1.0, 1.0 / condition_target, r)
    m_star = (a * sigma) @ b.T
    l_star = x_left @ m_star @ x_right.T
    root = np.sqrt(sigma)
    return GroundTruth(
        x_left=x_left,
        x_right=x_right,
        m_star=m_star,
        l_star=l_star,
        rank=r,
        sigma=sigma,
        u_star=a * root,
        v_star=b * root,
    )


def _target_matrix(truth):
    """Accept a GroundTruth or the bare target matrix."""
    if isinstance(truth, GroundTruth):
        return truth.l_star
    target = np.asarray(truth, dtype=float)
    if target.ndim != 2:
        raise ValueError("target must be a 2-d matrix")
    return target


def _observations_from_flat(target, flat):
    d1, d2 = target.shape
    flat = np.sort(flat)
    rows, cols = np.divmod(flat, d2)
    values = target[rows, cols]
    return ObservationSet(shape=(d1, d2), rows=rows, cols=cols, values=values)


def bernoulli_sample(truth, p, seed=0):
    """Observe each entry of the target independently with probability ``p``.

    ``truth`` may be a GroundTruth or the target matrix itself.  The
    realized sample rate is |omega| / (d1 d2), not ``p``.  An empty draw
    raises; resampling with a fresh seed is the caller's choice.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    target = _target_matrix(truth)
    mask = rng_from(seed).random(target.shape) < p
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        raise ValueError("Bernoulli draw produced an empty observation set")
    return _observations_from_flat(target, flat)


def fixed_sample(truth, count, seed=0):
    """Observe exactly ``count`` entries, uniformly without replacement.

    Used by the sample-complexity sweeps, where a fixed sample count keeps
    binomial noise out of the success curve.
    """
    target = _target_matrix(truth)
    d1, d2 = target.shape
    if not 1 <= count <= d1 * d2:
        raise ValueError(f"count must be in [1, {d1 * d2}], got {count}")
    flat = rng_from(seed).choice(d1 * d2, size=count, replace=False)
    return _observations_from_flat(target, flat)


def partition_observations(omega, b, seed=0):
    """Split the observation set into ``b`` random near-equal subsets.

    A seeded uniform shuffle dealt round-robin, so subset sizes are
    floor(|omega|/b) or ceil(|omega|/b).
    """
    if not 1 <= b <= omega.size:
        raise ValueError(f"subset count must be in [1, {omega.size}], got {b}")
    perm = rng_from(seed).permutation(omega.size)
    groups = [np.sort(perm[t::b]) for t in range(b)]
    return Partition(observations=omega, groups=groups)


def incoherence_mu(x):
    """Smallest mu with ||x||_{2,inf} <= sqrt(mu * cols / rows).

    For an orthonormal-column matrix this measures row spikiness: mu = 1 is
    perfectly spread, mu = rows/cols maximally concentrated.
    """
    rows, cols = x.shape
    return (rows / cols) * two_inf_norm(x) ** 2


def sample_count_for(n, r, multiple):
    """ceil(multiple * n * r * ln n): the sweep grid's sample count."""
    return math.ceil(multiple * n * r * math.log(n))
