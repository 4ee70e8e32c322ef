"""Dense complex Hermitian kernels (M <= 16 regime).

Thin wrappers over LAPACK that add the checks and conventions the rest of
the package relies on: descending eigenvalues, pivot-reporting Cholesky and
a relative positive-definiteness threshold.
"""

import numpy as np
from scipy.linalg import cho_solve, lapack

from .errors import DecompositionError, NumericError

#: Relative pivot threshold separating genuine rank deficiency from round-off.
PD_RTOL = 1e-12


def hermitize(P):
    """Return the Hermitian part ``(P + P^H) / 2``."""
    P = np.asarray(P)
    return 0.5 * (P + np.conj(np.swapaxes(P, -1, -2)))


def _check_finite(P):
    if not np.all(np.isfinite(P)):
        raise NumericError("matrix contains non-finite entries")


def cholesky_factor(P, rtol=PD_RTOL):
    """Lower-triangular ``L`` with ``L @ L^H == P``.

    Raises DecompositionError naming the first pivot (0-based) whose squared
    value falls below ``rtol * trace(P)``.
    """
    P = np.asarray(P, dtype=complex)
    _check_finite(P)
    m = P.shape[0]
    if m == 0:
        return P.copy()
    trace = float(np.real(np.trace(P)))
    if trace <= 0.0:
        raise DecompositionError("matrix has nonpositive trace", pivot=0)
    L, info = lapack.zpotrf(P, lower=1, clean=1)
    if info > 0:
        raise DecompositionError(
            f"matrix not positive definite at pivot {info - 1}", pivot=info - 1)
    if info < 0:
        raise DecompositionError(f"invalid argument {-info} to potrf")
    pivots = np.real(np.diag(L)) ** 2
    bad = np.flatnonzero(pivots <= rtol * trace)
    if bad.size:
        raise DecompositionError(
            f"matrix numerically singular at pivot {bad[0]}", pivot=int(bad[0]))
    return L


def hermitian_eig(P):
    """Eigenvalues (descending, real) and unitary eigenvector columns."""
    P = np.asarray(P, dtype=complex)
    _check_finite(P)
    w, V = np.linalg.eigh(P)
    return w[::-1].copy(), V[:, ::-1].copy()


def logdet_and_inverse_apply(P, X):
    """Return ``(log|P|, P^{-1} X)`` for positive definite ``P``."""
    L = cholesky_factor(P)
    logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))
    return logdet, cho_solve((L, True), np.asarray(X, dtype=complex))


def hermitian_sqrt(P, inverse=False, floor=0.0):
    """Eigen-based Hermitian square root (or inverse square root).

    Eigenvalues below ``floor`` are raised to it before taking roots.
    """
    w, V = np.linalg.eigh(np.asarray(P, dtype=complex))
    w = np.maximum(w, floor)
    if inverse:
        if np.any(w <= 0.0):
            raise DecompositionError("inverse square root of a singular matrix")
        s = 1.0 / np.sqrt(w)
    else:
        s = np.sqrt(w)
    return (V * s) @ V.conj().T


def psd_factor(P):
    """Factor ``F`` with ``F @ F^H == P`` for a positive semidefinite ``P``.

    Works for rank-deficient input where Cholesky does not; negative
    eigenvalues (round-off) are clipped to zero.
    """
    w, V = np.linalg.eigh(np.asarray(P, dtype=complex))
    return V * np.sqrt(np.maximum(w, 0.0))


def diagonal_loading(P, rel=1e-10):
    """Loading level ``rel * trace(P) / M`` used to regularize singular matrices."""
    P = np.asarray(P)
    m = P.shape[-1]
    return rel * float(np.real(np.trace(P, axis1=-2, axis2=-1)).max()) / m


def is_positive_definite(P, rtol=PD_RTOL):
    try:
        cholesky_factor(P, rtol=rtol)
    except DecompositionError:
        return False
    return True
