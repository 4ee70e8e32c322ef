"""Counting conditions for unique identifiability and Kruskal rank."""

from itertools import combinations
from typing import NamedTuple

import numpy as np

from ..errors import RegimeError


class Identifiability(NamedTuple):
    first_condition: bool
    second_condition: bool
    margin: int


def _first_condition_sides(n_mics, n_sources, n_frames, estimate_gamma, shared_self_noise):
    m, r, b = n_mics, n_sources, n_frames
    known = b * m * (m + 1) // 2
    unknown = m * r + b * r - r + (b if estimate_gamma else 0) + (1 if shared_self_noise else m)
    return known, unknown


def check_identifiability(n_mics, n_sources, n_frames, variant):
    """Evaluate both counting conditions for a diagonal SCFA problem.

    The reference row of A fixes ``r`` entries and the diagonal source
    matrices fix ``r(r-1)/2`` entries per frame. ``margin`` is the surplus of
    equations over unknowns in the first condition.
    """
    if min(n_mics, n_sources, n_frames) < 1:
        raise ValueError("n_mics, n_sources and n_frames must be >= 1")
    known, unknown = _first_condition_sides(
        n_mics, n_sources, n_frames, variant.estimate_gamma, variant.shared_self_noise)
    r = n_sources
    fixed = r + n_frames * (r * r - r) // 2
    return Identifiability(known >= unknown, fixed >= r * r, known - unknown)


def _satisfied(m, r, b, estimate_gamma, shared):
    known, unknown = _first_condition_sides(m, r, b, estimate_gamma, shared)
    return known >= unknown


def minimum_mics(n_sources, n_frames, estimate_gamma, shared_self_noise, limit=1024):
    """Smallest M meeting the first condition (None if above ``limit``)."""
    for m in range(1, limit + 1):
        if _satisfied(m, n_sources, n_frames, estimate_gamma, shared_self_noise):
            return m
    return None


def minimum_frames(n_mics, n_sources, estimate_gamma, shared_self_noise, limit=100_000):
    """Smallest segment length meeting the first condition (None if unattainable).

    Both sides are affine in the frame count, so the search stops as soon as
    the per-frame surplus is nonpositive and the condition still fails.
    """
    k0, u0 = _first_condition_sides(n_mics, n_sources, 0, estimate_gamma, shared_self_noise)
    k1, u1 = _first_condition_sides(n_mics, n_sources, 1, estimate_gamma, shared_self_noise)
    slope = (k1 - u1) - (k0 - u0)
    for b in range(1, limit + 1):
        if _satisfied(n_mics, n_sources, b, estimate_gamma, shared_self_noise):
            return b
        if slope <= 0:
            return None
    return None


def maximum_sources(n_mics, n_frames, estimate_gamma, shared_self_noise):
    """Largest r meeting the first condition (0 if none)."""
    best, r = 0, 1
    # unknowns grow faster in r than equations, so the first failure ends the scan
    while _satisfied(n_mics, r, n_frames, estimate_gamma, shared_self_noise):
        best, r = r, r + 1
    return best


def kruskal_rank(matrix, rtol=1e-10, max_columns=8):
    """Largest k such that every k columns are linearly independent."""
    X = np.atleast_2d(np.asarray(matrix))
    n = X.shape[1]
    if n > max_columns:
        raise RegimeError(f"kruskal_rank supports at most {max_columns} columns, got {n}")

    def full_rank(cols):
        s = np.linalg.svd(X[:, cols], compute_uv=False)
        return s[0] > 0 and np.sum(s > rtol * s[0]) == len(cols)

    rank = 0
    for k in range(1, min(n, X.shape[0]) + 1):
        if all(full_rank(list(c)) for c in combinations(range(n), k)):
            rank = k
        else:
            break
    return rank
