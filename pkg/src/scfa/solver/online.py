"""Warm-started sliding-segment estimation and oracle permutation matching."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from ..cpsdm import segment_spans
from ..errors import InsufficientDataError, RegimeError, ScfaError, SolveError
from .constraints import build_constraints
from .packing import VariablePacking
from .segment import initialize_segment, solve_segment

log = logging.getLogger(__name__)


@dataclass
class SegmentResult:
    span: tuple
    params: object  # SegmentParameters
    report: object  # SolveReport


@dataclass
class BinResult:
    bin: int
    segments: list
    error: str | None = None


@dataclass
class OnlineResult:
    """Per-bin segment estimates plus per-frame tracks.

    Tracks hold, for every frame, the estimate of the segment that owns it:
    the first segment owns all its frames, later segments their newest
    ``hop`` frames. Missing entries (failed bins, frames never owned) are NaN.
    """

    bins: list
    n_frames: int
    n_mics: int
    n_sources: int
    estimate_gamma: bool
    n_q: int

    def tracks(self):
        T, K, M, r = self.n_frames, len(self.bins), self.n_mics, self.n_sources
        A = np.full((T, K, M, r), np.nan + 0j)
        p = np.full((T, K, r), np.nan)
        gamma = np.full((T, K), np.nan)
        q = np.full((T, K, self.n_q), np.nan)
        owner = np.full((T, K), -1, dtype=int)
        for kk, b in enumerate(self.bins):
            prev_stop = 0
            for s, seg in enumerate(b.segments):
                start, stop = seg.span
                first = start if s == 0 else max(prev_stop, start)
                for t in range(first, stop):
                    A[t, kk] = seg.params.A
                    p[t, kk] = seg.params.p[t - start]
                    if seg.params.gamma is not None:
                        gamma[t, kk] = seg.params.gamma[t - start]
                    q[t, kk] = seg.params.q
                    owner[t, kk] = s
                prev_stop = stop
        return {"A": A, "p": p, "gamma": gamma, "q": q, "segment": owner}

    @property
    def failed_bins(self):
        return [b.bin for b in self.bins if b.error is not None]

    def reports(self):
        for b in self.bins:
            for s, seg in enumerate(b.segments):
                yield b.bin, s, seg.report


def _solve_bin(k, P_bin, phi, variant, n_sources, spans, hop, grid, plan, distances,
               delta1, delta2, min_distance, seed, reference_index):
    rng = np.random.default_rng([seed, int(k)])
    M = P_bin.shape[-1]
    B = spans[0][1] - spans[0][0]
    pk = VariablePacking.for_variant(variant, M, n_sources, B, reference_index)
    previous = None
    out = []
    for s, (start, stop) in enumerate(spans):
        data = P_bin[start:stop]
        try:
            cons = build_constraints(variant, pk, data, phi, grid, plan, distances,
                                     delta1, delta2, min_distance)
            notes = []
            x0 = initialize_segment(data, pk, cons, phi, rng, previous=previous, hop=hop,
                                    notes=notes)
            params, report = solve_segment(data, variant, cons, x0, phi, pk)
            report.notes[:0] = notes
        except ScfaError as exc:
            raise SolveError(f"segment {s}, bin {k}: {exc}", segment=s, bin=k) from exc
        out.append(SegmentResult((start, stop), params, report))
        previous = params
    return out


def _solve_bin_safe(args):
    k = args[0]
    try:
        return BinResult(k, _solve_bin(*args))
    except SolveError as exc:
        log.error("%s", exc)
        return BinResult(k, [], str(exc))


def run_online(series, variant, plan, phi, n_sources, grid=None, distances=None, bins=None,
               delta1=1.2, delta2=1.0, min_distance=0.01, seed=0, reference_index=0,
               workers=1, strict=False, labels=None):
    """Estimate every bin of ``series`` with segments sliding by ``plan.segment_hop``.

    ``phi`` is the (n_bins, M, M) coherence stack. Bins are independent and
    may run in ``workers`` processes; each bin draws from its own generator
    seeded by ``(seed, bin)`` so results do not depend on scheduling. With
    ``strict`` a failing bin raises SolveError; otherwise it is recorded in
    the result. ``labels`` renames the bins (for seeding and reporting) when
    ``series`` holds a subset of the full grid.
    """
    B, hop = plan.frames_per_segment, plan.segment_hop
    spans = segment_spans(series.n_frames, B, hop)
    if not spans:
        raise InsufficientDataError(
            f"{series.n_frames} frames do not fill one segment of {B}")
    bins = list(range(series.n_bins)) if bins is None else list(bins)
    if labels is None:
        labels = range(series.n_bins)
    jobs = [(labels[k], series.bin(k), phi[k], variant, n_sources, spans, hop, grid, plan,
             distances, delta1, delta2, min_distance, seed, reference_index) for k in bins]
    if strict:
        results = [BinResult(job[0], _solve_bin(*job)) for job in jobs]
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_bin_safe, jobs))
    else:
        results = [_solve_bin_safe(job) for job in jobs]
    n_q = 1 if variant.shared_self_noise else series.n_mics
    return OnlineResult(results, series.n_frames, series.n_mics, n_sources,
                        variant.estimate_gamma, n_q)


def _hermitian_angle(a, b):
    c = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(c, 0.0, 1.0)))


def resolve_permutation(estimated, reference, max_sources=6):
    """Column order of ``estimated`` minimizing the summed Hermitian angles to ``reference``.

    Returns ``perm`` such that ``estimated[:, perm]`` aligns with ``reference``.
    """
    E = np.atleast_2d(np.asarray(estimated))
    R = np.atleast_2d(np.asarray(reference))
    if E.shape != R.shape:
        raise ValueError("estimated and reference mixing matrices differ in shape")
    r = E.shape[1]
    if r > max_sources:
        raise RegimeError(f"exhaustive permutation search limited to {max_sources} sources")
    cost = np.array([[_hermitian_angle(R[:, i], E[:, j]) for j in range(r)] for i in range(r)])
    best = min(permutations(range(r)), key=lambda pm: (sum(cost[i, pm[i]] for i in range(r)), pm))
    return np.array(best, dtype=int)
