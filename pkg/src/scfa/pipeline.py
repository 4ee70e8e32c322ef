"""Scene bundles, method dispatch and metric computation for batch runs."""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import io
from .baselines import reference_dereverberation
from .beamforming import apply_weights, mwf_bank
from .config import METHOD_NAMES, REFERENCE_METHOD, parse_config
from .cpsdm import CpsdmSeries, estimate_cpsdms, frame_owners, segment_spans, stft_subframes
from .errors import ConfigurationError, CoverageError, InsufficientActivityError, ScfaError
from .evaluation import (
    MetricReport,
    hermitian_angles,
    negligible_mask,
    psd_log_errors,
    segmental_snr_subframes,
)
from .model import Geometry, coherence_stack, distance_matrix
from .scene import build_scene, synthesize_frames
from .solver import get_variant, resolve_permutation, run_online

log = logging.getLogger(__name__)


@dataclass
class SceneBundle:
    """Sub-frame spectra of the selected bins plus (optional) ground truth."""

    config: object  # RunConfig
    bins: np.ndarray  # absolute bin indices
    subframes: np.ndarray  # (T, S, Kb, M)
    phi: np.ndarray  # (Kb, M, M)
    distances: np.ndarray  # (M, M)
    truth: dict | None = None  # A (T,Kb,M,r), p (T,Kb,r), gamma (T,Kb), q (Kb,)
    sources: np.ndarray | None = None  # (T, S, Kb, r)

    @property
    def n_frames(self):
        return self.subframes.shape[0]

    @property
    def n_mics(self):
        return self.subframes.shape[-1]

    def series(self):
        return estimate_cpsdms(self.subframes)

    def manifest(self):
        cfg = self.config.model_dump(mode="json")
        plan, grid = self.config.plan(), self.config.grid_obj()
        return {
            "schema_version": io.SCHEMA_VERSION,
            "kind": "scene",
            "config": cfg,
            "config_hash": io.config_hash(cfg),
            "seed": self.config.seed,
            "bins": [int(b) for b in self.bins],
            "has_truth": self.truth is not None,
            "dims": {
                "M": int(self.n_mics),
                "K": int(grid.fft_len),
                "N": int(plan.subframe_len),
                "T": int(plan.frame_len),
                "n_frames": int(self.n_frames),
                "subframes_per_frame": int(self.subframes.shape[1]),
                "n_sources": int(self.config.sources.n_sources),
            },
        }


def make_scene_bundle(cfg):
    """Synthesize the scene described by ``cfg`` and keep the configured bins."""
    scene = build_scene(cfg.scene_config())
    frames = synthesize_frames(scene)
    bins = np.asarray(cfg.bin_list(), dtype=int)
    truth = {
        "A": scene.A[:, bins],
        "p": scene.p[:, bins],
        "gamma": scene.gamma[:, bins],
        "q": scene.q[bins],
    }
    return SceneBundle(cfg, bins, frames.subframes[:, :, bins], scene.phi[bins],
                       scene.distances, truth, frames.sources[:, :, bins])


def bundle_from_signal(cfg, signal, rate):
    """Bundle (without ground truth) from a (channels, samples) recording."""
    grid, plan = cfg.grid_obj(), cfg.plan()
    if abs(rate - grid.sampling_rate) > 1e-9:
        raise ConfigurationError(
            f"recording rate {rate} Hz differs from grid.sampling_rate {grid.sampling_rate} Hz")
    mics = cfg.array.positions()
    if signal.shape[0] != mics.shape[0]:
        raise ConfigurationError(
            f"recording has {signal.shape[0]} channels, array has {mics.shape[0]}")
    geo = Geometry(mics, np.zeros((0, 3)), cfg.array.reference_index,
                   cfg.estimation.min_distance)
    D = distance_matrix(geo)
    phi, _ = coherence_stack(D, grid)
    Y = stft_subframes(signal, plan, grid)
    bins = np.asarray(cfg.bin_list(), dtype=int)
    return SceneBundle(cfg, bins, Y[:, :, bins], phi[bins], D)


def save_bundle(bundle, directory):
    os.makedirs(directory, exist_ok=True)
    io.write_json(os.path.join(directory, "manifest.json"), bundle.manifest())
    io.write_array(directory, "subframes", bundle.subframes)
    io.write_array(directory, "phi", bundle.phi)
    io.write_array(directory, "distances", bundle.distances)
    if bundle.truth is not None:
        for name, arr in bundle.truth.items():
            io.write_array(directory, "true_" + name, arr)
    if bundle.sources is not None:
        io.write_array(directory, "clean_sources", bundle.sources)


def load_bundle(directory):
    manifest = io.read_json(os.path.join(directory, "manifest.json"))
    if manifest.get("kind") != "scene":
        raise ConfigurationError(f"{directory} is not a scene bundle")
    if manifest.get("schema_version") != io.SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported bundle schema {manifest.get('schema_version')}")
    cfg = parse_config(manifest["config"])
    truth = None
    if manifest.get("has_truth"):
        truth = {name: io.read_array(directory, "true_" + name)
                 for name in ("A", "p", "gamma", "q")}
    sources = io.read_array(directory, "clean_sources") \
        if io.has_array(directory, "clean_sources") else None
    return SceneBundle(cfg, np.asarray(manifest["bins"], dtype=int),
                       io.read_array(directory, "subframes"), io.read_array(directory, "phi"),
                       io.read_array(directory, "distances"), truth, sources)


@dataclass
class MethodEstimate:
    """Per-frame estimates of one method on the bins of a bundle."""

    method: str
    objective: str | None
    frames_per_segment: int
    segment_hop: int
    seed: int
    bins: np.ndarray
    A: np.ndarray  # (T, Kb, M, r)
    p: np.ndarray  # (T, Kb, r)
    gamma: np.ndarray | None  # (T, Kb)
    q: np.ndarray  # (T, Kb, n_q)
    reports: list = field(default_factory=list)  # (bin, segment, SolveReport)
    failed: dict = field(default_factory=dict)  # bin -> message

    def negative_psd(self):
        """(T, Kb) flag: any estimated PSD of the tile below zero."""
        neg = np.any(self.p < 0, axis=-1) | np.any(self.q < 0, axis=-1)
        if self.gamma is not None:
            neg |= self.gamma < 0
        return neg

    def manifest(self, bundle_hash=None):
        return {
            "schema_version": io.SCHEMA_VERSION,
            "kind": "estimates",
            "method": self.method,
            "objective": self.objective,
            "frames_per_segment": self.frames_per_segment,
            "segment_hop": self.segment_hop,
            "seed": self.seed,
            "bins": [int(b) for b in self.bins],
            "failed_bins": {str(k): v for k, v in sorted(self.failed.items())},
            "has_gamma": self.gamma is not None,
            "bundle_config_hash": bundle_hash,
        }


def run_method(bundle, method, objective=None, frames_per_segment=None, seed=None,
               workers=1):
    """Estimate the bundle's bins with ``method`` (an SCFA preset or ``ref-derev``)."""
    if method not in METHOD_NAMES:
        raise ConfigurationError(f"unknown method {method!r}; valid: {', '.join(METHOD_NAMES)}")
    cfg = bundle.config
    plan = cfg.plan()
    if frames_per_segment is not None:
        plan = plan.with_segment(frames_per_segment)
    seed = cfg.seed if seed is None else seed
    est_cfg = cfg.estimation
    series = bundle.series()
    r = cfg.sources.n_sources
    T, Kb, M = series.n_frames, series.n_bins, series.n_mics
    if method == REFERENCE_METHOD:
        return _run_reference(bundle, series, plan, seed)
    variant = get_variant(method, objective)
    result = run_online(series, variant, plan, bundle.phi, r, cfg.grid_obj(), bundle.distances,
                        delta1=est_cfg.delta1, delta2=est_cfg.delta2,
                        min_distance=est_cfg.min_distance, seed=seed,
                        reference_index=cfg.array.reference_index, workers=workers,
                        labels=[int(b) for b in bundle.bins])
    tr = result.tracks()
    return MethodEstimate(
        method, variant.objective, plan.frames_per_segment, plan.segment_hop, seed,
        bundle.bins.copy(), tr["A"], tr["p"], tr["gamma"] if variant.estimate_gamma else None,
        tr["q"], list(result.reports()),
        {b.bin: b.error for b in result.bins if b.error is not None})


def _run_reference(bundle, series, plan, seed):
    cfg = bundle.config
    if cfg.sources.n_sources != 1:
        raise ConfigurationError(f"{REFERENCE_METHOD} handles exactly one source")
    if bundle.truth is None:
        raise ConfigurationError(f"{REFERENCE_METHOD} needs the true self-noise PSD")
    T, Kb, M = series.n_frames, series.n_bins, series.n_mics
    A = np.full((T, Kb, M, 1), np.nan + 0j)
    p = np.full((T, Kb, 1), np.nan)
    gamma = np.full((T, Kb), np.nan)
    q = np.full((T, Kb, 1), np.nan)
    failed = {}
    for kk, k in enumerate(bundle.bins):
        sub = CpsdmSeries(series.matrices[:, kk:kk + 1], series.counts)
        try:
            tr = reference_dereverberation(sub, bundle.phi[kk:kk + 1], bundle.truth["q"][kk:kk + 1],
                                           plan.frames_per_segment, plan.segment_hop,
                                           cfg.array.reference_index)
        except ScfaError as exc:
            log.error("bin %d: %s", k, exc)
            failed[int(k)] = str(exc)
            continue
        A[:, kk], p[:, kk], gamma[:, kk], q[:, kk] = tr["A"][:, 0], tr["p"][:, 0], \
            tr["gamma"][:, 0], tr["q"][:, 0]
    return MethodEstimate(REFERENCE_METHOD, None, plan.frames_per_segment, plan.segment_hop,
                          seed, bundle.bins.copy(), A, p, gamma, q, [], failed)


def save_estimate(est, directory, bundle_hash=None):
    os.makedirs(directory, exist_ok=True)
    io.write_json(os.path.join(directory, "manifest.json"), est.manifest(bundle_hash))
    io.write_array(directory, "A", est.A)
    io.write_array(directory, "p", est.p)
    io.write_array(directory, "q", est.q)
    if est.gamma is not None:
        io.write_array(directory, "gamma", est.gamma)
    neg = est.negative_psd()
    kk = {int(b): i for i, b in enumerate(est.bins)}
    owner = frame_owners(est.A.shape[0], est.frames_per_segment, est.segment_hop)
    with open(os.path.join(directory, "reports.csv"), "w") as fh:
        fh.write("bin,segment,termination,iterations,objective,initial_objective,"
                 "projected_gradient,feasibility_violation,negative_psd,notes\n")
        for k, s, rep in est.reports:
            flag = int(np.any(neg[owner == s, kk[int(k)]]))
            notes = " | ".join(rep.notes).replace('"', "'")
            fh.write(f"{k},{s},{rep.termination},{rep.iterations},{rep.objective!r},"
                     f"{rep.initial_objective!r},{rep.projected_gradient!r},"
                     f"{rep.feasibility_violation!r},{flag},\"{notes}\"\n")


def load_estimate(directory):
    m = io.read_json(os.path.join(directory, "manifest.json"))
    if m.get("kind") != "estimates":
        raise ConfigurationError(f"{directory} is not an estimates directory")
    gamma = io.read_array(directory, "gamma") if m["has_gamma"] else None
    return MethodEstimate(m["method"], m["objective"], m["frames_per_segment"],
                          m["segment_hop"], m["seed"], np.asarray(m["bins"], dtype=int),
                          io.read_array(directory, "A"), io.read_array(directory, "p"), gamma,
                          io.read_array(directory, "q"), [],
                          {int(k): v for k, v in m["failed_bins"].items()})


def align_to_truth(est, true_A):
    """Permute source columns of every tile to best match ``true_A``."""
    A, p = est.A.copy(), est.p.copy()
    if A.shape[-1] < 2:
        return A, p
    T, Kb = A.shape[:2]
    for t in range(T):
        for k in range(Kb):
            if not np.all(np.isfinite(A[t, k])):
                continue
            perm = resolve_permutation(A[t, k], true_A[t, k])
            A[t, k] = A[t, k][:, perm]
            p[t, k] = p[t, k][perm]
    return A, p


def _spans_for_rows(rows, spans_of_row):
    """Re-index per-row segment spans into positions within ``rows``."""
    return [(int(np.searchsorted(rows, a)), int(np.searchsorted(rows, b)))
            for a, b in spans_of_row]


def evaluate_estimate(bundle, est, skip_threshold=1e-6, with_ssnr=True):
    """MetricReport of ``est`` against the bundle's ground truth.

    Frames never owned by a segment and bins recorded as failed are left out;
    any other missing estimate is a coverage error.
    """
    if bundle.truth is None:
        raise CoverageError("bundle has no ground truth")
    truth = bundle.truth
    if list(est.bins) != list(bundle.bins):
        raise CoverageError("estimates and bundle cover different bins")
    T = bundle.n_frames
    owner = frame_owners(T, est.frames_per_segment, est.segment_hop)
    spans = segment_spans(T, est.frames_per_segment, est.segment_hop)
    rows = np.flatnonzero(owner >= 0)
    keep = np.array([int(b) not in est.failed for b in est.bins])
    if not rows.size or not keep.any():
        raise CoverageError("no frames or bins with estimates")
    A, p = align_to_truth(est, truth["A"])
    sel = np.ix_(rows, np.flatnonzero(keep))
    checks = [A[sel], p[sel], est.q[sel]] + ([est.gamma[sel]] if est.gamma is not None else [])
    if not all(np.all(np.isfinite(c)) for c in checks):
        raise CoverageError("estimates missing for some owned frames")
    row_spans = _spans_for_rows(rows, [spans[owner[t]] for t in rows])
    r = p.shape[-1]
    report = MetricReport()
    if r:
        report.E_s = psd_log_errors(truth["p"][sel], p[sel], skip_threshold, row_spans)
    if est.gamma is not None and np.any(truth["gamma"][sel] > 0):
        report.E_l = psd_log_errors(truth["gamma"][sel], est.gamma[sel], skip_threshold,
                                    row_spans, divisor=max(r, 1))
    q_true = np.broadcast_to(truth["q"][None, :, None], est.q.shape)
    if np.any(q_true[sel] > 0):
        report.E_v = psd_log_errors(q_true[sel], est.q[sel], skip_threshold, row_spans,
                                    divisor=max(r, 1))
    if r:
        # one RATF estimate per (segment, bin): take each segment's first owned frame
        firsts = [int(np.flatnonzero(owner == s)[0]) for s in np.unique(owner[rows])]
        kb = np.flatnonzero(keep)
        small = negligible_mask(truth["p"][rows][:, kb], skip_threshold, row_spans)
        pos = np.searchsorted(rows, firsts)
        ang = hermitian_angles(truth["A"][firsts][:, kb], A[firsts][:, kb])
        include = ~small[pos]
        report.skipped_ratf = int((~include).sum())
        report.E_A = float(np.mean(ang[include])) if include.any() else 0.0
    if with_ssnr and r and bundle.sources is not None:
        report.ssnr = _ssnr(bundle, est, A, p, rows, np.flatnonzero(keep))
    return report


def _ssnr(bundle, est, A, p, rows, kb):
    M = bundle.n_mics
    W = np.zeros((rows.size, kb.size, p.shape[-1], M), dtype=complex)
    for i, t in enumerate(rows):
        for j, k in enumerate(kb):
            g = None if est.gamma is None else est.gamma[t, k]
            q = np.broadcast_to(est.q[t, k], (M,)) if est.q.shape[-1] == 1 else est.q[t, k]
            W[i, j] = mwf_bank(A[t, k], p[t, k], g, np.maximum(q, 0.0), bundle.phi[k])
    Y = bundle.subframes[rows][:, :, kb]
    S = bundle.sources[rows][:, :, kb]
    try:
        return segmental_snr_subframes(S, apply_weights(W, Y))
    except InsufficientActivityError as exc:
        log.warning("SSNR not computed: %s", exc)
        return float("nan")
