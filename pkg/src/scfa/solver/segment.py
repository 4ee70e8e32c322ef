"""Initialization and constrained solution of a single (segment, bin) problem.

The solver is SLSQP (sequential least squares with a BFGS Hessian
approximation and an active-set QP subproblem for the bounds and linear
rows) applied to a problem normalized by the mean data power, followed by a
feasibility repair, a monotonicity guard against the initial point and a
KKT-based stationarity measure.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls

from ..errors import InitializationError
from ..linalg import hermitian_eig
from .identifiability import check_identifiability
from .objectives import Objective

log = logging.getLogger(__name__)

MAX_ITER = 500
FEAS_TOL = 1e-8
GRAD_TOL = 1e-6
_RESTARTS = 3


@dataclass
class SolveReport:
    """Outcome of one (segment, bin) solve.

    Objective values are in the units of the input data; the stationarity
    measure ``projected_gradient`` refers to the power-normalized problem
    (data divided by ``scale``), whose objective is ``normalized_objective``.
    """

    objective: float
    initial_objective: float
    iterations: int
    feasibility_violation: float
    projected_gradient: float
    termination: str
    normalized_objective: float = float("nan")
    scale: float = 1.0
    notes: list = field(default_factory=list)

    @property
    def converged(self):
        return self.termination == "converged"


def _sampling_box(lo, hi, fallback_hi):
    lo = np.where(np.isfinite(lo), lo, 0.0)
    hi = np.where(np.isfinite(hi), hi, fallback_hi)
    return lo, np.maximum(hi, lo)


def _draw_frame_psds(x, t, packing, constraints, P_hat, phi, rng):
    """Draw the per-frame PSD variables of frame ``t`` uniformly inside their boxes."""
    pk = packing
    diag_y = np.real(np.diag(P_hat[t]))
    ref_power = diag_y[pk.reference_index]
    idx = np.arange(pk.p_index(t, 0), pk.p_index(t, 0) + pk.n_sources)
    lo, hi = _sampling_box(constraints.lower[idx], constraints.upper[idx], ref_power)
    x[idx] = rng.uniform(lo, hi)
    if pk.estimate_gamma:
        g = pk.gamma_index(t)
        cap = diag_y.min() / np.real(np.diag(phi)).min()
        lo, hi = _sampling_box(constraints.lower[g:g + 1], constraints.upper[g:g + 1], cap)
        x[g] = rng.uniform(lo[0], hi[0])
        idx = np.append(idx, g)
    _fit_rows(x, idx, constraints)


def _fit_rows(x, idx, constraints):
    """Shrink the freshly drawn entries ``idx`` until every row holds.

    Only the drawn entries move, so copied or shared variables (q) keep
    their values.
    """
    for a, b in zip(constraints.A_ub, constraints.b_ub):
        drawn = a[idx] @ x[idx]
        budget = b - (a @ x - drawn)
        if drawn <= budget or drawn <= 0 or np.any(a[idx] < 0):
            continue
        x[idx] *= max(budget, 0.0) / drawn * (1.0 - 1e-12)


def initialize_segment(P_hat, packing, constraints, phi, rng, previous=None, hop=1,
                       notes=None):
    """Feasible starting point (packed, data units) for one segment.

    Without ``previous``: A from the ``r`` dominant eigenvectors of the
    frame-averaged CPSDM, each scaled to one at the reference microphone and
    clipped into the RATF box; PSDs uniform inside their boxes. With
    ``previous`` (the estimate of the segment ``hop`` frames earlier): A and q
    are copied, overlapping frames copy the previous per-frame estimates and
    the ``hop`` newest frames are drawn uniformly.
    """
    pk = packing
    P_hat = np.asarray(P_hat, dtype=complex).reshape(pk.n_frames, pk.n_mics, pk.n_mics)
    notes = [] if notes is None else notes
    x = np.zeros(pk.size)
    rho = pk.reference_index
    if previous is None:
        _, V = hermitian_eig(P_hat.mean(axis=0))
        A = np.ones((pk.n_mics, pk.n_sources), dtype=complex)
        for j in range(min(pk.n_sources, pk.n_mics)):
            v = V[:, j]
            if abs(v[rho]) < 1e-9:
                notes.append(f"eigenvector {j} vanishes at the reference; all-ones column used")
                log.warning(notes[-1])
                continue
            A[:, j] = v / v[rho]
        a = A[pk.free_rows].ravel()
        x[pk.re], x[pk.im] = a.real, a.imag
        qi = np.arange(pk.q.start, pk.q.stop)
        lo, hi = _sampling_box(constraints.lower[qi], constraints.upper[qi],
                               np.real(np.einsum("tii->i", P_hat)).min())
        x[pk.q] = rng.uniform(lo, hi)
        for t in range(pk.n_frames):
            _draw_frame_psds(x, t, pk, constraints, P_hat, phi, rng)
    else:
        x[:] = 0.0
        prev = previous
        a = prev.A[pk.free_rows].ravel()
        x[pk.re], x[pk.im] = a.real, a.imag
        overlap = max(pk.n_frames - hop, 0)
        P = np.zeros((pk.n_frames, pk.n_sources))
        P[:overlap] = prev.p[hop:hop + overlap]
        x[pk.p] = P.ravel()
        if pk.estimate_gamma:
            g = np.zeros(pk.n_frames)
            g[:overlap] = prev.gamma[hop:hop + overlap]
            x[pk.gamma] = g
        x[pk.q] = prev.q if pk.shared_self_noise else np.broadcast_to(prev.q, (pk.n_mics,))
        for t in range(overlap, pk.n_frames):
            _draw_frame_psds(x, t, pk, constraints, P_hat, phi, rng)
    return constraints.project(x)


def kkt_residual(grad, x, constraints, atol=1e-7):
    """Stationarity measure ``min_{mu >= 0} ||grad + N mu||`` over active constraints."""
    normals = []
    lo, hi = constraints.lower, constraints.upper
    for i in np.flatnonzero(np.isfinite(lo) & (x - lo <= atol * (1.0 + np.abs(lo)))):
        e = np.zeros_like(x)
        e[i] = -1.0
        normals.append(e)
    for i in np.flatnonzero(np.isfinite(hi) & (hi - x <= atol * (1.0 + np.abs(hi)))):
        e = np.zeros_like(x)
        e[i] = 1.0
        normals.append(e)
    if constraints.n_rows:
        slack = constraints.b_ub - constraints.A_ub @ x
        for i in np.flatnonzero(slack <= atol * (1.0 + np.abs(constraints.b_ub))):
            normals.append(constraints.A_ub[i])
    if not normals:
        return float(np.linalg.norm(grad))
    N = np.array(normals).T
    _, res = nnls(N, -grad, maxiter=50 * N.shape[1])
    return float(res)


def _active_normals(grad, x, constraints, atol=1e-7):
    """Normals of the constraints that carry a positive multiplier at ``x``."""
    normals = []
    lo, hi = constraints.lower, constraints.upper
    eye = np.eye(x.size)
    for i in np.flatnonzero(np.isfinite(lo) & (x - lo <= atol * (1.0 + np.abs(lo)))):
        normals.append(-eye[i])
    for i in np.flatnonzero(np.isfinite(hi) & (hi - x <= atol * (1.0 + np.abs(hi)))):
        normals.append(eye[i])
    if constraints.n_rows:
        slack = constraints.b_ub - constraints.A_ub @ x
        for i in np.flatnonzero(slack <= atol * (1.0 + np.abs(constraints.b_ub))):
            normals.append(constraints.A_ub[i])
    if not normals:
        return np.zeros((x.size, 0))
    N = np.array(normals).T
    mu, _ = nnls(N, -grad, maxiter=50 * N.shape[1])
    return N[:, mu > 0]


def _scoring_polish(fun, z, f, g, cons, tol, max_steps=50, noise=1e-10):
    """Projected Fisher-scoring steps on the current active face.

    SLSQP's BFGS model struggles when curvatures differ by many orders of
    magnitude (e.g. self-noise far below the diffuse level at low bins);
    Newton-type steps with the exact Gauss-Newton matrix fix that. Steps
    must decrease the objective, or keep it within rounding while reducing
    the KKT residual.
    """
    steps = 0
    pg = kkt_residual(g, z, cons)
    for _ in range(max_steps):
        if pg <= tol(f):
            break
        H = fun.fisher(z)
        H = H + 1e-12 * max(np.trace(H) / H.shape[0], 1e-300) * np.eye(H.shape[0])
        N = _active_normals(g, z, cons)
        n, m = H.shape[0], N.shape[1]
        K = np.zeros((n + m, n + m))
        K[:n, :n], K[:n, n:], K[n:, :n] = H, N, N.T
        rhs = np.concatenate([-g, np.zeros(m)])
        d = np.linalg.lstsq(K, rhs, rcond=None)[0][:n]
        if not np.all(np.isfinite(d)) or g @ d >= 0:
            break
        accepted = False
        alpha = 1.0
        for _ in range(30):
            zc = cons.project(z + alpha * d)
            fc, gc = fun(zc)
            if not np.isfinite(fc):
                alpha *= 0.5
                continue
            # near the optimum the decrease can fall below the rounding of f;
            # then a smaller KKT residual decides
            pgc = kkt_residual(gc, zc, cons)
            roundoff = noise * (1.0 + abs(f))
            if fc < f - roundoff or (fc <= f + roundoff and pgc < pg):
                z, f, g, pg = zc, fc, gc, pgc
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        steps += 1
    return z, f, g, steps


def _run_slsqp(fun, x0, cons):
    bounds = list(zip(np.where(np.isfinite(cons.lower), cons.lower, None),
                      np.where(np.isfinite(cons.upper), cons.upper, None)))
    lin = []
    if cons.n_rows:
        lin.append({"type": "ineq", "fun": lambda x: cons.b_ub - cons.A_ub @ x,
                    "jac": lambda x: -cons.A_ub})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(fun, x0, jac=True, method="SLSQP", bounds=bounds, constraints=lin,
                       options={"maxiter": MAX_ITER, "ftol": 1e-16})
    return res


def solve_segment(P_hat, variant, constraints, init, phi, packing, max_iter=MAX_ITER):
    """Solve one (segment, bin) SCFA problem from a feasible ``init``.

    Returns ``(SegmentParameters, SolveReport)``. The returned point is
    feasible, never worse than ``init``, and the report records how the
    iteration ended.
    """
    pk = packing
    P_hat = np.asarray(P_hat, dtype=complex).reshape(pk.n_frames, pk.n_mics, pk.n_mics)
    notes = []
    ident = check_identifiability(pk.n_mics, pk.n_sources, pk.n_frames, variant)
    if not ident.first_condition:
        notes.append(f"first identifiability condition fails (margin {ident.margin})")
    scale = float(np.mean(np.real(np.einsum("tii->t", P_hat)))) / pk.n_mics
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    fun = Objective(variant.objective, P_hat / scale, phi, pk)
    if fun.data_loaded:
        notes.append("diagonal loading applied to sample CPSDM")
    cons = constraints.scaled(pk.psd, scale)

    def to_norm(x):
        z = np.array(x, dtype=float)
        z[pk.psd] /= scale
        return z

    def from_norm(z):
        x = np.array(z, dtype=float)
        x[pk.psd] *= scale
        return x

    z0 = cons.project(to_norm(init))
    if not np.all(np.isfinite(z0)):
        raise InitializationError("initial point has non-finite entries")
    f0, g0 = fun(z0)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise InitializationError("objective not finite at the initial point")
    z, f, g = z0, f0, g0
    pg = kkt_residual(g, z, cons)
    tol = GRAD_TOL * (1.0 + abs(f))
    iterations = 0
    termination = "converged" if pg <= tol else None
    restarts = 0
    while termination is None:
        res = _run_slsqp(fun, z, cons)
        iterations += int(res.nit)
        zc = cons.project(res.x)
        fc, gc = fun(zc)
        f_start = f
        if np.isfinite(fc) and fc <= f:
            z, f, g = zc, fc, gc
        z, f, g, n_polish = _scoring_polish(fun, z, f, g, cons,
                                            lambda v: GRAD_TOL * (1.0 + abs(v)))
        iterations += n_polish
        improved = f_start - f
        pg = kkt_residual(g, z, cons)
        tol = GRAD_TOL * (1.0 + abs(f))
        if pg <= tol:
            termination = "converged"
        elif iterations >= max_iter:
            termination = "iteration-cap"
        elif restarts >= _RESTARTS or improved <= 1e-15 * (1.0 + abs(f)):
            termination = "stalled"
            notes.append(f"solver stopped: {res.message}")
            if fun.model_loadings:
                notes.append("objective not smooth near a numerically singular model")
        restarts += 1
    if f > f0:
        z, f, g = z0, f0, g0
        pg = kkt_residual(g, z, cons)
    if fun.model_loadings:
        notes.append(f"diagonal loading applied to {fun.model_loadings} singular model matrices")
    x = from_norm(z)
    x0 = from_norm(z0)
    report = SolveReport(
        objective=_data_objective(variant.objective, P_hat, phi, pk, x),
        initial_objective=_data_objective(variant.objective, P_hat, phi, pk, x0),
        iterations=iterations,
        feasibility_violation=constraints.violation(x),
        projected_gradient=pg,
        termination=termination,
        normalized_objective=f,
        scale=scale,
        notes=notes,
    )
    return pk.unpack(x), report


def _data_objective(kind, P_hat, phi, packing, x):
    return Objective(kind, P_hat, phi, packing).value(x)
