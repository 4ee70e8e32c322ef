"""Bijection between SegmentParameters and the free real variable vector.

Layout: ``[Re A_free, Im A_free, p (frame-major), gamma, q]`` where
``A_free`` are the rows of A other than the reference row, flattened
row-major.
"""

from dataclasses import dataclass

import numpy as np

from ..model import SegmentParameters


@dataclass(frozen=True)
class VariablePacking:
    n_mics: int
    n_sources: int
    n_frames: int
    reference_index: int = 0
    estimate_gamma: bool = True
    shared_self_noise: bool = True

    @classmethod
    def for_variant(cls, variant, n_mics, n_sources, n_frames, reference_index=0):
        return cls(n_mics, n_sources, n_frames, reference_index,
                   variant.estimate_gamma, variant.shared_self_noise)

    @property
    def free_rows(self):
        return np.array([i for i in range(self.n_mics) if i != self.reference_index], dtype=int)

    @property
    def n_a(self):
        return (self.n_mics - 1) * self.n_sources

    @property
    def n_q(self):
        return 1 if self.shared_self_noise else self.n_mics

    @property
    def size(self):
        return (2 * self.n_a + self.n_frames * self.n_sources
                + (self.n_frames if self.estimate_gamma else 0) + self.n_q)

    @property
    def re(self):
        return slice(0, self.n_a)

    @property
    def im(self):
        return slice(self.n_a, 2 * self.n_a)

    @property
    def p(self):
        start = 2 * self.n_a
        return slice(start, start + self.n_frames * self.n_sources)

    @property
    def gamma(self):
        start = self.p.stop
        return slice(start, start + (self.n_frames if self.estimate_gamma else 0))

    @property
    def q(self):
        return slice(self.gamma.stop, self.gamma.stop + self.n_q)

    @property
    def psd(self):
        """Slice covering every PSD variable (p, gamma, q)."""
        return slice(self.p.start, self.size)

    def p_index(self, t, j):
        return self.p.start + t * self.n_sources + j

    def gamma_index(self, t):
        return self.gamma.start + t

    def q_index(self, i):
        return self.q.start + (0 if self.shared_self_noise else i)

    def a_indices(self, i, j):
        """Packed (re, im) indices of ``A[i, j]`` for a non-reference row."""
        row = int(np.flatnonzero(self.free_rows == i)[0])
        off = row * self.n_sources + j
        return self.re.start + off, self.im.start + off

    def unpack_arrays(self, x):
        """(A, P, gamma, q) views of a packed vector, without validation."""
        m, r = self.n_mics, self.n_sources
        A = np.ones((m, r), dtype=complex)
        A[self.free_rows] = (x[self.re] + 1j * x[self.im]).reshape(m - 1, r)
        P = x[self.p].reshape(self.n_frames, r)
        gamma = x[self.gamma] if self.estimate_gamma else None
        return A, P, gamma, x[self.q]

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        A, P, gamma, q = self.unpack_arrays(x)
        return SegmentParameters(A, P.copy(), None if gamma is None else gamma.copy(),
                                 q.copy(), self.reference_index)

    def pack(self, params):
        x = np.empty(self.size)
        a = np.asarray(params.A)[self.free_rows].ravel()
        x[self.re] = a.real
        x[self.im] = a.imag
        x[self.p] = np.asarray(params.p, dtype=float).ravel()
        if self.estimate_gamma:
            x[self.gamma] = params.gamma
        q = np.atleast_1d(params.q)
        x[self.q] = q[:1] if self.shared_self_noise else np.broadcast_to(q, (self.n_mics,))
        return x
