"""STFT sub-framing and sample CPSDM estimation.

Time is split into non-overlapping time-frames of ``frame_len`` samples,
each covered by overlapping sub-frames of ``subframe_len`` samples.
Consecutive ``frames_per_segment`` frames form a time-segment; segments
advance by ``segment_hop`` frames.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InsufficientDataError


@dataclass(frozen=True)
class FramePlan:
    frame_len: int = 2000
    subframe_len: int = 200
    subframe_overlap: float = 0.75
    frames_per_segment: int = 4
    segment_hop: int = 1

    def __post_init__(self):
        if not 0 < self.subframe_len <= self.frame_len:
            raise ConfigurationError("need 0 < subframe_len <= frame_len")
        if not 0.0 <= self.subframe_overlap < 1.0:
            raise ConfigurationError("subframe_overlap must lie in [0, 1)")
        if self.frames_per_segment < 1 or self.segment_hop < 1:
            raise ConfigurationError("frames_per_segment and segment_hop must be >= 1")
        hop = self.subframe_len * (1.0 - self.subframe_overlap)
        if abs(hop - round(hop)) > 1e-9 or round(hop) < 1:
            raise ConfigurationError(f"sub-frame hop {hop} is not a positive integer")

    @property
    def subframe_hop(self):
        return int(round(self.subframe_len * (1.0 - self.subframe_overlap)))

    @property
    def subframes_per_frame(self):
        return (self.frame_len - self.subframe_len) // self.subframe_hop + 1

    def with_segment(self, frames_per_segment):
        return FramePlan(self.frame_len, self.subframe_len, self.subframe_overlap,
                         frames_per_segment, self.segment_hop)


@dataclass(frozen=True)
class FrameLayout:
    n_frames: int
    subframe_starts: np.ndarray  # (n_frames, n_sub) sample indices
    segments: tuple  # ((first_frame, stop_frame), ...)


def segment_spans(n_frames, frames_per_segment, hop=1):
    """Frame ranges ``(start, stop)`` of every complete segment."""
    return tuple((s, s + frames_per_segment)
                 for s in range(0, n_frames - frames_per_segment + 1, hop))


def frame_owners(n_frames, frames_per_segment, hop=1):
    """Index of the segment owning each frame (-1 when no segment covers it).

    The first segment owns all its frames; every later segment owns the
    frames it adds beyond its predecessor.
    """
    owner = np.full(n_frames, -1, dtype=int)
    prev_stop = 0
    for s, (start, stop) in enumerate(segment_spans(n_frames, frames_per_segment, hop)):
        first = start if s == 0 else max(prev_stop, start)
        owner[first:stop] = s
        prev_stop = stop
    return owner


def plan_frames(signal_len, plan):
    if signal_len < plan.frame_len:
        raise InsufficientDataError(
            f"signal of {signal_len} samples shorter than one frame ({plan.frame_len})")
    n_frames = signal_len // plan.frame_len
    offs = np.arange(plan.subframes_per_frame) * plan.subframe_hop
    starts = np.arange(n_frames)[:, None] * plan.frame_len + offs[None, :]
    return FrameLayout(n_frames, starts,
                       segment_spans(n_frames, plan.frames_per_segment, plan.segment_hop))


def analysis_window(n, kind="sqrt-hann"):
    if kind == "sqrt-hann":
        return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))
    if kind == "rect":
        return np.ones(n)
    raise ConfigurationError(f"unknown window {kind!r}")


def _transform(segments, n, grid, window):
    if grid.fft_len < n:
        raise ConfigurationError(f"FFT length {grid.fft_len} shorter than sub-frame {n}")
    w = analysis_window(n, window)
    return np.fft.rfft(segments * w, n=grid.fft_len, axis=-1)


def stft_subframes(signal, plan, grid, window="sqrt-hann"):
    """Sub-frame spectra of a multichannel signal.

    ``signal`` is (M, samples); returns (n_frames, n_sub, n_bins, M).
    """
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    layout = plan_frames(x.shape[1], plan)
    idx = layout.subframe_starts[..., None] + np.arange(plan.subframe_len)
    segs = x[:, idx]  # (M, n_frames, n_sub, N)
    spec = _transform(segs, plan.subframe_len, grid, window)
    return np.moveaxis(spec, 0, -1)


def stft(signal, plan, grid, window="sqrt-hann"):
    """Continuous STFT at the sub-frame hop: (n_cols, n_bins, M) and column starts."""
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    n, hop = plan.subframe_len, plan.subframe_hop
    if x.shape[1] < n:
        raise InsufficientDataError("signal shorter than one sub-frame")
    starts = np.arange(0, x.shape[1] - n + 1, hop)
    segs = x[:, starts[:, None] + np.arange(n)]
    spec = _transform(segs, n, grid, window)
    return np.moveaxis(spec, 0, -1), starts


def istft(spec, starts, plan, grid, length, window="sqrt-hann"):
    """Weighted overlap-add synthesis of (n_cols, n_bins, ...) spectra.

    Returns (..., length) time signals normalized by the summed
    analysis-synthesis window product.
    """
    n = plan.subframe_len
    w = analysis_window(n, window)
    frames = np.fft.irfft(spec, n=grid.fft_len, axis=1)[:, :n]  # (n_cols, n, ...)
    frames = np.moveaxis(frames, 1, -1) * w
    out = np.zeros(frames.shape[1:-1] + (length,))
    norm = np.zeros(length)
    for c, s in enumerate(starts):
        stop = min(s + n, length)
        out[..., s:stop] += frames[c][..., :stop - s]
        norm[s:stop] += (w * w)[:stop - s]
    nz = norm > 1e-8
    out[..., nz] /= norm[nz]
    return out


def sample_cpsdm(subframes):
    """Sample CPSDM ``(1/n) sum y y^H`` of (n_sub, M) sub-frame vectors."""
    Y = np.atleast_2d(np.asarray(subframes, dtype=complex))
    if Y.shape[0] == 0:
        raise InsufficientDataError("no sub-frames")
    P = Y.T @ Y.conj() / Y.shape[0]
    return 0.5 * (P + P.conj().T)


@dataclass
class CpsdmSeries:
    """Sample CPSDMs (n_frames, n_bins, M, M) and sub-frame counts per frame."""

    matrices: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=complex)
        self.counts = np.asarray(self.counts, dtype=int)
        if self.matrices.ndim != 4 or self.matrices.shape[-1] != self.matrices.shape[-2]:
            raise ConfigurationError("CPSDM series must be (frames, bins, M, M)")
        if self.counts.shape != (self.matrices.shape[0],) or np.any(self.counts < 1):
            raise ConfigurationError("need a positive sub-frame count per frame")

    @property
    def n_frames(self):
        return self.matrices.shape[0]

    @property
    def n_bins(self):
        return self.matrices.shape[1]

    @property
    def n_mics(self):
        return self.matrices.shape[2]

    def bin(self, k):
        """(n_frames, M, M) CPSDMs of one bin."""
        return self.matrices[:, k]


def estimate_cpsdms(subframes):
    """CPSDM series from (n_frames, n_sub, n_bins, M) sub-frame spectra."""
    Y = np.asarray(subframes, dtype=complex)
    if Y.shape[1] == 0:
        raise InsufficientDataError("no sub-frames")
    P = np.einsum("tski,tskj->tkij", Y, Y.conj()) / Y.shape[1]
    P = 0.5 * (P + np.conj(np.swapaxes(P, -1, -2)))
    return CpsdmSeries(P, np.full(Y.shape[0], Y.shape[1]))
