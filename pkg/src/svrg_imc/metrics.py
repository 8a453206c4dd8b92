"""Recovery metrics: relative error against the target and factor distance."""

import numpy as np

from .linalg import procrustes_align

__all__ = ["relative_error", "distance_to_truth"]


def relative_error(f, truth):
    """||x_left u v^T x_right^T - l_star||_F / ||l_star||_F."""
    denom = truth.l_star_norm
    if denom == 0.0:
        raise ValueError("ground truth is identically zero")
    estimate = (truth.x_left @ f.u) @ (truth.x_right @ f.v).T
    estimate -= truth.l_star
    return float(np.linalg.norm(estimate)) / denom


def distance_to_truth(f, truth):
    """Orthogonal-alignment distance between [u; v] and the balanced truth.

    The reference point stacks the balanced factors of m_star; the metric is
    invariant to a common orthogonal transform of both factor blocks.
    """
    return procrustes_align(f.stacked(), truth.balanced_stack()).distance
