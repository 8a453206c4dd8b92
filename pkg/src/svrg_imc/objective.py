"""The factored completion objective, its finite-sum split, and gradients.

The model fits l_star with x_left @ (u @ v.T) @ x_right.T over the observed
entries, balanced by the penalty ||u.T u - v.T v||_F^2 / 8:

    F(u, v) = (1/2p) ||P_omega(x_left u v^T x_right^T - l_star)||_F^2
              + (1/8) ||u^T u - v^T v||_F^2

Splitting the index set into B subsets turns F into the finite sum
(1/B) sum_t F_t with the per-subset rate p_t in place of p, which is what
the variance-reduced solver samples from.  Every evaluation here touches
only observed entries; the dense residual is never materialized.
"""

from typing import NamedTuple

import numpy as np
import scipy.sparse as sparse

__all__ = [
    "Factorization",
    "EpochReference",
    "loss_full",
    "penalty",
    "objective_full",
    "objective_subset",
    "grad_full",
    "grad_subset",
    "make_epoch_reference",
    "semi_stochastic_grad",
    "GradientWorkspace",
]


class Factorization(NamedTuple):
    """The iterate pair; stacked as z = [u; v] for distance measurements."""

    u: np.ndarray  # n1 x r
    v: np.ndarray  # n2 x r

    @property
    def rank(self):
        return self.u.shape[1]

    def stacked(self):
        return np.vstack((self.u, self.v))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


class EpochReference(NamedTuple):
    """Per-epoch anchor of the variance-reduced update.

    anchor_residual holds (1/p) * (x_left u~ v~^T x_right^T - l_star) on the
    observed entries, aligned with the observation arrays; anchor_term is its
    feature contraction x_left^T (.) x_right, computed once per epoch and
    reapplied to each inner iterate.
    """

    u_tilde: np.ndarray
    v_tilde: np.ndarray
    anchor_residual: np.ndarray  # |omega| values
    anchor_term: np.ndarray      # n1 x n2


def _observed_residual(f, rows, cols, values, features):
    """x_left u v^T x_right^T - l_star at the given entries only."""
    wu = features.x_left @ f.u
    wv = features.x_right @ f.v
    return np.einsum("ij,ij->i", wu[rows], wv[cols]) - values


def loss_full(f, omega, features):
    """(1/2p) ||P_omega(x_left u v^T x_right^T - l_star)||_F^2."""
    res = _observed_residual(f, omega.rows, omega.cols, omega.values, features)
    return float(0.5 / omega.p * (res @ res))


def penalty(f):
    """(1/8) ||u^T u - v^T v||_F^2, the factor-balancing term."""
    gap = f.u.T @ f.u - f.v.T @ f.v
    return float(np.sum(gap * gap) / 8.0)


def objective_full(f, omega, features):
    """Loss over the full observation set plus the balancing penalty."""
    return loss_full(f, omega, features) + penalty(f)


def _subset(partition, t):
    if not 0 <= t < len(partition):
        raise IndexError(f"subset index {t} outside [0, {len(partition)})")
    return partition.subset(t)


def objective_subset(f, partition, t, features):
    """The t-th finite-sum component: subset loss at rate p_t plus penalty."""
    rows, cols, values = _subset(partition, t)
    res = _observed_residual(f, rows, cols, values, features)
    return float(0.5 / partition.rate(t) * (res @ res)) + penalty(f)


def _loss_grad(f, rows, cols, values, scale, features, shape):
    """Gradient pair of the scaled observed-entry loss.

    Contracts the sparse residual through the features:
    gu = x_left^T S (x_right v), gv = x_right^T S^T (x_left u), with S the
    residual supported on the given entries times ``scale``.
    """
    wu = features.x_left @ f.u
    wv = features.x_right @ f.v
    res = (np.einsum("ij,ij->i", wu[rows], wv[cols]) - values) * scale
    s = sparse.csr_matrix((res, (rows, cols)), shape=shape)
    gu = features.x_left.T @ (s @ wv)
    gv = features.x_right.T @ (s.T @ wu)
    return gu, gv


def _penalty_grad(f):
    gap = f.u.T @ f.u - f.v.T @ f.v
    return 0.5 * (f.u @ gap), -0.5 * (f.v @ gap)


def grad_full(f, omega, features):
    """Analytic gradient pair (d/du, d/dv) of the full objective."""
    gu, gv = _loss_grad(
        f, omega.rows, omega.cols, omega.values, 1.0 / omega.p, features, omega.shape
    )
    pu, pv = _penalty_grad(f)
    return gu + pu, gv + pv


def grad_subset(f, partition, t, features):
    """Analytic gradient pair of the t-th finite-sum component."""
    rows, cols, values = _subset(partition, t)
    gu, gv = _loss_grad(
        f, rows, cols, values, 1.0 / partition.rate(t), features,
        partition.observations.shape,
    )
    pu, pv = _penalty_grad(f)
    return gu + pu, gv + pv


def make_epoch_reference(f_tilde, omega, features):
    """Anchor the variance reduction at ``f_tilde``.

    One pass over the observed entries for the residual plus one feature
    contraction for the n1 x n2 anchor term.
    """
    res = _observed_residual(f_tilde, omega.rows, omega.cols, omega.values, features)
    scaled = res / omega.p
    s = sparse.csr_matrix((scaled, (omega.rows, omega.cols)), shape=omega.shape)
    anchor_term = features.x_left.T @ (s @ features.x_right)
    return EpochReference(
        u_tilde=f_tilde.u,
        v_tilde=f_tilde.v,
        anchor_residual=scaled,
        anchor_term=anchor_term,
    )


def semi_stochastic_grad(f, ref, partition, t, features):
    """The variance-reduced gradient pair at ``f`` for subset ``t``.

    Subset gradient of F_t at the current iterate, minus the anchor's subset
    loss gradient, plus the anchor's full loss gradient -- with the current
    iterate's factors (not the anchor's) multiplying both correction terms,
    so randomness keeps accumulating through the inner loop.  Averaged over
    all subsets this equals the full gradient exactly.
    """
    rows, cols, values = _subset(partition, t)
    omega = partition.observations
    p_t = partition.rate(t)
    shape = omega.shape

    gu, gv = _loss_grad(f, rows, cols, values, 1.0 / p_t, features, shape)
    pu, pv = _penalty_grad(f)
    gu, gv = gu + pu, gv + pv

    wu = features.x_left @ f.u
    wv = features.x_right @ f.v
    # anchor residual on this subset, rescaled from 1/p to 1/p_t
    corr = ref.anchor_residual[partition.groups[t]] * (omega.size / len(partition.groups[t]))
    s = sparse.csr_matrix((corr, (rows, cols)), shape=shape)
    gu -= features.x_left.T @ (s @ wv)
    gv -= features.x_right.T @ (s.T @ wu)
    gu += ref.anchor_term @ f.v
    gv += ref.anchor_term.T @ f.u
    return gu, gv


class GradientWorkspace:
    """Precomputed per-subset gathers for the solver's inner loop.

    Caches each subset's feature rows and observed values so one
    semi-stochastic evaluation costs O(|omega_t| (n + r)) with a handful of
    dense matmuls and no index rebuilding.  Produces the same values as
    :func:`semi_stochastic_grad` up to accumulation order.
    """

    def __init__(self, partition, features):
        self.partition = partition
        self.features = features
        omega = partition.observations
        self._xl = []
        self._xr = []
        self._vals = []
        self._ratio = []
        for g in partition.groups:
            self._xl.append(np.ascontiguousarray(features.x_left[omega.rows[g]]))
            self._xr.append(np.ascontiguousarray(features.x_right[omega.cols[g]]))
            self._vals.append(omega.values[g])
            self._ratio.append(omega.size / len(g))

    def semi_stochastic(self, u, v, ref, t):
        """Variance-reduced gradient pair at (u, v) for subset ``t``."""
        xl, xr = self._xl[t], self._xr[t]
        wu = xl @ u   # (x_left u) on the subset's rows
        wv = xr @ v
        p_t = self.partition.rate(t)
        res = (np.einsum("ij,ij->i", wu, wv) - self._vals[t]) / p_t
        # current-iterate subset residual minus the rescaled anchor residual
        corr = ref.anchor_residual[self.partition.groups[t]] * self._ratio[t]
        delta = (res - corr)[:, None]
        gap = u.T @ u - v.T @ v
        gu = xl.T @ (delta * wv) + 0.5 * (u @ gap) + ref.anchor_term @ v
        gv = xr.T @ (delta * wu) - 0.5 * (v @ gap) + ref.anchor_term.T @ u
        return gu, gv
