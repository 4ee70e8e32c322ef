"""Model-consistent synthetic scenes in the STFT domain.

Sub-frame vectors are drawn directly from the CPSDM model, so the expected
sample CPSDM of a frame equals the model CPSDM exactly and estimator error
is isolated from model mismatch. An optional mismatch knob rotates each
frame's RATFs by a fixed Hermitian angle to emulate early reflections the
model does not capture.
"""

from dataclasses import dataclass, field

import numpy as np

from .cpsdm import FramePlan
from .errors import SceneError
from .linalg import psd_factor
from .model import (
    FrequencyGrid,
    Geometry,
    SegmentParameters,
    circular_array,
    coherence_stack,
    distance_matrix,
    model_cpsdm,
    ratf_matrix,
)

PROFILES = ("constant", "random-walk")


def default_sources(n_sources):
    """Source positions 1-2 m from the array at spread-out azimuths."""
    az = np.deg2rad([30.0, 150.0, 260.0, 340.0, 90.0, 210.0])[:n_sources]
    dist = np.array([1.0, 1.5, 2.0, 1.2, 1.8, 1.3])[:n_sources]
    return np.stack([dist * np.cos(az), dist * np.sin(az), np.full(n_sources, 0.2)], axis=1)


@dataclass
class SceneConfig:
    mic_positions: np.ndarray = field(default_factory=lambda: circular_array(4, 0.02))
    source_positions: np.ndarray = field(default_factory=lambda: default_sources(1))
    reference_index: int = 0
    min_distance: float = 0.01
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    plan: FramePlan = field(default_factory=FramePlan)
    n_frames: int = 8
    source_levels_db: tuple = (0.0,)
    source_profile: str = "random-walk"
    source_step_db: float = 3.0
    gamma_level_db: float = 0.0
    gamma_profile: str = "random-walk"
    gamma_step_db: float = 1.0
    self_noise: float = 9e-6
    mismatch_angle: float = 0.0
    subframes_per_frame: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        self.source_positions = np.asarray(self.source_positions, dtype=float).reshape(-1, 3)
        r = self.source_positions.shape[0]
        levels = np.atleast_1d(np.asarray(self.source_levels_db, dtype=float))
        if levels.size == 1 and r != 1:
            levels = np.full(r, levels[0])
        if levels.size != r:
            raise SceneError(f"{levels.size} source levels for {r} sources")
        self.source_levels_db = tuple(levels.tolist())
        for name in ("source_profile", "gamma_profile"):
            if getattr(self, name) not in PROFILES:
                raise SceneError(f"{name} must be one of {PROFILES}")
        if self.self_noise < 0:
            raise SceneError("self-noise PSD must be nonnegative")
        if self.n_frames < 1:
            raise SceneError("need at least one frame")
        if self.mismatch_angle < 0 or self.mismatch_angle > np.pi / 2:
            raise SceneError("mismatch angle must lie in [0, pi/2]")

    @property
    def n_sources(self):
        return self.source_positions.shape[0]

    @property
    def n_subframes(self):
        return self.subframes_per_frame or self.plan.subframes_per_frame


@dataclass
class SceneModel:
    config: SceneConfig
    geometry: Geometry
    distances: np.ndarray
    phi: np.ndarray  # (K, M, M)
    phi_floored: np.ndarray  # (K,) bool
    A: np.ndarray  # (T, K, M, r) nominal RATFs
    A_synth: np.ndarray  # (T, K, M, r) RATFs used to draw the data
    p: np.ndarray  # (T, K, r)
    gamma: np.ndarray  # (T, K)
    q: np.ndarray  # (K,)

    @property
    def n_frames(self):
        return self.p.shape[0]

    @property
    def n_bins(self):
        return self.p.shape[1]

    def model_cpsdms(self, k):
        """(T, M, M) model CPSDMs of bin ``k`` (using the synthesis RATFs)."""
        return np.stack([
            model_cpsdm(self.A_synth[t, k], self.p[t, k][None], self.gamma[t, k:k + 1],
                        self.q[k:k + 1], self.phi[k])[0]
            for t in range(self.n_frames)])

    def segment_parameters(self, k, start, stop):
        """Ground truth of bin ``k`` over frames ``start:stop`` (A of the first frame)."""
        return SegmentParameters(self.A[start, k], self.p[start:stop, k],
                                 self.gamma[start:stop, k], np.array([self.q[k]]),
                                 self.config.reference_index)


def _track(rng, n_frames, n_bins, level_db, profile, step_db, shape=()):
    base = np.full((n_frames, n_bins) + shape, level_db, dtype=float)
    if profile == "random-walk":
        steps = rng.normal(0.0, step_db, (n_frames, n_bins) + shape)
        steps[0] = 0.0
        base = base + np.cumsum(steps, axis=0)
    return 10.0 ** (base / 10.0)


def _rotate_columns(A, angle, ref, rng):
    """Rotate every column of ``A`` by Hermitian angle ``angle``; keep the reference at 1."""
    out = A.copy()
    for j in range(A.shape[1]):
        a = A[:, j] / np.linalg.norm(A[:, j])
        u = rng.normal(size=a.size) + 1j * rng.normal(size=a.size)
        u -= np.vdot(a, u) * a
        u /= np.linalg.norm(u)
        b = np.cos(angle) * a + np.sin(angle) * u
        out[:, j] = b / b[ref] if abs(b[ref]) > 1e-12 else b
    return out


def build_scene(config):
    """Geometry-derived RATFs and coherence plus ground-truth PSD tracks."""
    cfg = config
    geo = Geometry(cfg.mic_positions, cfg.source_positions, cfg.reference_index,
                   cfg.min_distance)
    grid = cfg.grid
    K, T, r, M = grid.n_bins, cfg.n_frames, cfg.n_sources, geo.n_mics
    D = distance_matrix(geo)
    phi, floored = coherence_stack(D, grid)
    A_bin = np.stack([ratf_matrix(geo, k, grid) for k in grid.bins]) if r else \
        np.zeros((K, M, 0), dtype=complex)
    A = np.broadcast_to(A_bin, (T, K, M, r)).copy()
    rng = np.random.default_rng([cfg.seed, 0])
    p = np.stack([_track(rng, T, K, lvl, cfg.source_profile, cfg.source_step_db)
                  for lvl in cfg.source_levels_db], axis=-1) if r else np.zeros((T, K, 0))
    gamma = _track(rng, T, K, cfg.gamma_level_db, cfg.gamma_profile, cfg.gamma_step_db)
    if not np.isfinite(cfg.gamma_level_db):
        gamma = np.zeros((T, K))
    A_synth = A
    if cfg.mismatch_angle > 0 and r:
        A_synth = np.empty_like(A)
        for t in range(T):
            for k in range(K):
                A_synth[t, k] = _rotate_columns(A[t, k], cfg.mismatch_angle,
                                                cfg.reference_index, rng)
    q = np.full(K, float(cfg.self_noise))
    return SceneModel(cfg, geo, D, phi, floored, A, A_synth, p, gamma, q)


@dataclass
class SynthesizedFrames:
    subframes: np.ndarray  # (T, S, K, M) noisy sub-frame spectra
    sources: np.ndarray  # (T, S, K, r) source signals at the reference microphone


def _cn(rng, shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)


def synthesize_frames(scene, n_subframes=None, seed=None):
    """Draw sub-frame vectors ``y = sum_j a_j s_j + sqrt(gamma) F xi + sqrt(q) eta``.

    ``F`` is a factor of Phi (eigen-based, since Phi is rank-deficient at
    low frequencies). Every bin uses its own generator derived from
    ``(seed, bin)``.
    """
    cfg = scene.config
    S = n_subframes or cfg.n_subframes
    seed = cfg.seed if seed is None else seed
    T, K = scene.n_frames, scene.n_bins
    M, r = scene.A.shape[2], scene.A.shape[3]
    Y = np.zeros((T, S, K, M), dtype=complex)
    src = np.zeros((T, S, K, r), dtype=complex)
    for k in range(K):
        F = psd_factor(scene.phi[k])
        if not np.all(np.isfinite(F)):
            raise SceneError(f"coherence at bin {k} cannot be factored")
        rng = np.random.default_rng([seed, k, 1])
        s = _cn(rng, (T, S, r)) * np.sqrt(scene.p[:, k])[:, None, :]
        late = _cn(rng, (T, S, M)) @ F.T * np.sqrt(scene.gamma[:, k])[:, None, None]
        noise = _cn(rng, (T, S, M)) * np.sqrt(scene.q[k])
        direct = np.einsum("tmj,tsj->tsm", scene.A_synth[:, k], s)
        Y[:, :, k] = direct + late + noise
        src[:, :, k] = s
    return SynthesizedFrames(Y, src)
