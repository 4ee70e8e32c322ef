"""Constraint sets (bounds, linear rows, fixed entries) for one segment problem."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError


@dataclass
class ConstraintSet:
    """Bounds ``lower <= x <= upper``, rows ``A_ub x <= b_ub`` and fixed A entries.

    ``fixed`` maps ``(row, column)`` of the mixing matrix to its value; those
    entries are not part of the packed vector.
    """

    lower: np.ndarray
    upper: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise ConfigurationError("lower bound exceeds upper bound")

    @property
    def n_rows(self):
        return self.A_ub.shape[0]

    def violation(self, x):
        """Largest bound or row violation at ``x`` (0 when feasible)."""
        v = max(0.0, float(np.max(self.lower - x, initial=0.0)),
                float(np.max(x - self.upper, initial=0.0)))
        if self.n_rows:
            v = max(v, float(np.max(self.A_ub @ x - self.b_ub)))
        return v

    def scaled(self, psd_slice, scale):
        """Same constraints for a problem whose PSD variables are divided by ``scale``."""
        lower, upper = self.lower.copy(), self.upper.copy()
        lower[psd_slice] /= scale
        upper[psd_slice] /= scale
        return ConstraintSet(lower, upper, self.A_ub.copy(), self.b_ub / scale, dict(self.fixed))

    def project(self, x, max_sweeps=100):
        """Move ``x`` into the feasible set (clip bounds, then repair rows).

        Rows with nonnegative coefficients over nonnegative variables are
        repaired by shrinking their support, which never breaks another such
        row; other rows fall back to alternating projections.
        """
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        if not self.n_rows:
            return x
        for _ in range(max_sweeps):
            excess = self.A_ub @ x - self.b_ub
            worst = np.flatnonzero(excess > 0.0)
            if worst.size == 0:
                break
            for i in worst:
                a = self.A_ub[i]
                supp = a != 0.0
                ax = a @ x
                if ax - self.b_ub[i] <= 0.0:
                    continue
                shrinkable = (np.all(a[supp] > 0) and np.all(self.lower[supp] >= 0)
                              and self.b_ub[i] >= 0 and ax > 0)
                if shrinkable:
                    x[supp] *= self.b_ub[i] / ax
                    # guard against the product landing a hair above the bound
                    while a @ x > self.b_ub[i]:
                        x[supp] *= 1.0 - 1e-15
                else:
                    x -= (ax - self.b_ub[i]) / (a @ a) * a
                    x = np.clip(x, self.lower, self.upper)
        return x


def ratf_bounds(mode, n_mics, reference_index, min_distance, grid=None, plan=None,
                distances=None):
    """Per-microphone bound ``b_i`` with ``|Re a_ij|, |Im a_ij| <= b_i``."""
    if mode == "blind":
        if grid is None or plan is None:
            raise ConfigurationError("blind RATF box needs the frequency grid and frame plan")
        reach = plan.subframe_len * grid.speed_of_sound / grid.sampling_rate
        return np.full(n_mics, (reach + min_distance) / min_distance)
    if mode == "distance":
        if distances is None:
            raise ConfigurationError("distance-based RATF box needs a distance matrix")
        d = np.asarray(distances, dtype=float)[reference_index]
        return (d + min_distance) / min_distance
    raise ConfigurationError(f"unknown RATF box mode {mode!r}")


def build_constraints(variant, packing, P_hat, phi, grid=None, plan=None, distances=None,
                      delta1=1.2, delta2=1.0, min_distance=0.01):
    """Constraint set of ``variant`` for the segment data ``P_hat`` (frames, M, M)."""
    if delta1 <= 0 or delta2 <= 0 or min_distance <= 0:
        raise ConfigurationError("delta1, delta2 and min_distance must be positive")
    pk = packing
    P_hat = np.asarray(P_hat, dtype=complex).reshape(pk.n_frames, pk.n_mics, pk.n_mics)
    phi = np.asarray(phi, dtype=complex)
    diag_y = np.real(np.einsum("tii->ti", P_hat))
    rho = pk.reference_index
    n = pk.size
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)

    if variant.positivity_on_psds:
        lower[pk.psd] = 0.0

    if variant.ratf_box != "none":
        b = ratf_bounds(variant.ratf_box, pk.n_mics, rho, min_distance, grid, plan, distances)
        per_var = np.repeat(b[pk.free_rows], pk.n_sources)
        for sl in (pk.re, pk.im):
            lower[sl] = -per_var
            upper[sl] = per_var

    if variant.gamma_box:
        cap = diag_y.min(axis=1) / np.real(np.diag(phi)).min()
        lower[pk.gamma] = 0.0
        upper[pk.gamma] = np.maximum(cap, 0.0)

    if variant.self_noise_box:
        lower[pk.q] = 0.0
        upper[pk.q] = max(float(diag_y.min()), 0.0)

    rows, rhs = [], []
    if variant.psd_sum != "none":
        with_gamma = variant.psd_sum == "with-gamma"
        delta = delta1 if with_gamma else delta2
        for t in range(pk.n_frames):
            a = np.zeros(n)
            a[pk.p_index(t, 0):pk.p_index(t, 0) + pk.n_sources] = 1.0
            if with_gamma:
                a[pk.gamma_index(t)] = np.real(phi[rho, rho])
                a[pk.q_index(rho)] = 1.0
            rows.append(a)
            rhs.append(delta * diag_y[t, rho])
            if not variant.positivity_on_psds:
                rows.append(-a)
                rhs.append(0.0)
    A_ub = np.array(rows).reshape(-1, n)
    fixed = {(rho, j): 1.0 + 0.0j for j in range(pk.n_sources)}
    return ConstraintSet(lower, upper, A_ub, np.asarray(rhs, dtype=float), fixed)
