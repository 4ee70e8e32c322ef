"""ML / LS / GLS covariance-fitting objectives summed over the frames of a segment.

Each objective is written as ``F(P_hat, P_y)`` with matrix gradient
``G = dF/dP_y`` (Hermitian), from which the packed gradient follows by the
chain rule through ``P_y = A diag(p) A^H + gamma Phi + diag(q)``:

    dF/dA        = 2 sum_t G_t A diag(p_t)     (split into Re / Im parts)
    dF/dp_j(t)   = a_j^H G_t a_j
    dF/dgamma(t) = tr(G_t Phi)
    dF/dq_i      = sum_t G_t[i, i]
"""

import logging

import numpy as np

from ..errors import ConfigurationError, NumericError
from ..linalg import diagonal_loading
from ..model import model_cpsdm

log = logging.getLogger(__name__)

LOADING_REL = 1e-10
_SINGULAR_RTOL = 1e-13


def _hermitize(P):
    return 0.5 * (P + np.conj(np.swapaxes(P, -1, -2)))


def _load_if_singular(P):
    """Diagonally load every frame whose matrix is not numerically PD."""
    P = np.array(P, dtype=complex)
    w = np.linalg.eigvalsh(P)
    bad = w[:, 0] <= _SINGULAR_RTOL * np.maximum(np.abs(w[:, -1]), 1e-300)
    if not bad.any():
        return P, False
    m = P.shape[-1]
    for t in np.flatnonzero(bad):
        P[t] += diagonal_loading(P[t], LOADING_REL) * np.eye(m)
    return P, True


class Objective:
    """Callable ``x -> (value, gradient)`` for one (segment, bin) problem.

    Data matrices that are not numerically positive definite are loaded by
    ``1e-10 * trace / M`` for ML and GLS; ``data_loaded`` records it. Model
    matrices that turn singular under ML are loaded the same way and counted
    in ``model_loadings``.
    """

    def __init__(self, kind, P_hat, phi, packing):
        if kind not in ("ml", "ls", "gls"):
            raise ConfigurationError(f"unknown objective {kind!r}")
        self.kind = kind
        self.packing = packing
        self.phi = np.asarray(phi, dtype=complex)
        P_hat = _hermitize(np.asarray(P_hat, dtype=complex).reshape(-1, *self.phi.shape))
        if not np.all(np.isfinite(P_hat)):
            raise NumericError("sample CPSDMs contain non-finite entries")
        if P_hat.shape[0] != packing.n_frames:
            raise ConfigurationError(
                f"{P_hat.shape[0]} data matrices for {packing.n_frames} frames")
        self.data_loaded = False
        if kind in ("ml", "gls"):
            P_hat, self.data_loaded = _load_if_singular(P_hat)
            if self.data_loaded:
                log.info("diagonal loading applied to singular sample CPSDM")
        self.P_hat = P_hat
        self.model_loadings = 0
        if kind == "gls":
            w, V = np.linalg.eigh(P_hat)
            self._W = np.einsum("tij,tj,tkj->tik", V, 1.0 / np.sqrt(w), V.conj())
            self._P_hat_inv = np.einsum("tij,tj,tkj->tik", V, 1.0 / w, V.conj())

    def model(self, x):
        A, P, gamma, q = self.packing.unpack_arrays(np.asarray(x, dtype=float))
        return model_cpsdm(A, P, gamma, q, self.phi)

    def value_and_matrix_gradient(self, P_y):
        """Objective value and ``dF/dP_y`` per frame for model matrices ``P_y``."""
        D = P_y - self.P_hat
        if self.kind == "ls":
            return 0.5 * float(np.sum(np.abs(D) ** 2)), D
        if self.kind == "gls":
            E = self._W @ D @ self._W
            G = self._P_hat_inv @ D @ self._P_hat_inv
            return 0.5 * float(np.sum(np.abs(E) ** 2)), _hermitize(G)
        w, V = np.linalg.eigh(P_y)
        scale = np.maximum(np.abs(w).max(axis=1), 1e-300)
        bad = np.abs(w).min(axis=1) <= _SINGULAR_RTOL * scale
        if bad.any():
            self.model_loadings += int(bad.sum())
            load = LOADING_REL * np.abs(np.trace(P_y, axis1=1, axis2=2).real) / P_y.shape[-1]
            w = w + np.where(bad, np.maximum(load, 1e-300), 0.0)[:, None]
        inv = np.einsum("tij,tj,tkj->tik", V, 1.0 / w, V.conj())
        logdet = np.sum(np.log(np.abs(w)))
        value = logdet + float(np.real(np.einsum("tij,tji->", self.P_hat, inv)))
        G = inv - inv @ self.P_hat @ inv
        return float(value), _hermitize(G)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pk = self.packing
        A, P, gamma, q = pk.unpack_arrays(x)
        value, G = self.value_and_matrix_gradient(model_cpsdm(A, P, gamma, q, self.phi))
        grad = np.empty(pk.size)
        gA = 2.0 * np.einsum("tik,kj,tj->ij", G, A, P)[pk.free_rows].ravel()
        grad[pk.re] = gA.real
        grad[pk.im] = gA.imag
        grad[pk.p] = np.einsum("ij,tik,kj->tj", A.conj(), G, A).real.ravel()
        if pk.estimate_gamma:
            grad[pk.gamma] = np.einsum("tij,ji->t", G, self.phi).real
        diag_g = np.einsum("tii->i", G).real
        grad[pk.q] = diag_g.sum() if pk.shared_self_noise else diag_g
        return value, grad

    def value(self, x):
        return self(x)[0]

    def model_derivatives(self, x):
        """``dP_y/dx_i`` for every packed variable, shape (n, T, M, M)."""
        pk = self.packing
        A, P, gamma, q = pk.unpack_arrays(np.asarray(x, dtype=float))
        T, M, r = pk.n_frames, pk.n_mics, pk.n_sources
        D = np.zeros((pk.size, T, M, M), dtype=complex)
        eye = np.eye(M)
        for row, i in enumerate(pk.free_rows):
            for j in range(r):
                off = row * r + j
                outer = np.outer(eye[i], A[:, j].conj())
                D[pk.re.start + off] = P[:, j, None, None] * (outer + outer.conj().T)
                D[pk.im.start + off] = P[:, j, None, None] * 1j * (outer - outer.conj().T)
        for t in range(T):
            for j in range(r):
                D[pk.p_index(t, j), t] = np.outer(A[:, j], A[:, j].conj())
            if pk.estimate_gamma:
                D[pk.gamma_index(t), t] = self.phi
        if pk.shared_self_noise:
            D[pk.q.start] = eye
        else:
            for i in range(M):
                D[pk.q.start + i, :, i, i] = 1.0
        return D

    def fisher(self, x):
        """Gauss-Newton / Fisher-scoring approximation of the Hessian at ``x``.

        ``F_ij = sum_t Re tr(Q_t dP_i Q_t dP_j)`` with ``Q = P_y^{-1}`` (ML),
        ``P_hat^{-1}`` (GLS) or the identity (LS).
        """
        D = self.model_derivatives(x)
        if self.kind == "ls":
            Q = None
        elif self.kind == "gls":
            Q = self._P_hat_inv
        else:
            w, V = np.linalg.eigh(self.model(x))
            floor = LOADING_REL * np.maximum(np.abs(w).max(axis=1, keepdims=True), 1e-300)
            w = np.maximum(w, floor)
            Q = np.einsum("tij,tj,tkj->tik", V, 1.0 / w, V.conj())
        QD = D if Q is None else np.einsum("tij,ntjk->ntik", Q, D)
        # Re tr(X_i X_j) with X = Q dP, summed over frames
        return np.real(np.einsum("atij,btji->ab", QD, QD))


def objective_and_gradient(kind, P_hat, x, phi, packing):
    """Objective value and packed gradient at ``x`` (see :class:`Objective`)."""
    return Objective(kind, P_hat, phi, packing)(x)
