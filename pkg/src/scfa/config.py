"""Run configuration (JSON) validated with pydantic.

Validation errors are re-raised as ConfigurationError naming the offending
field path, e.g. ``frames.subframe_overlap: Input should be less than 1``.
"""

import json
import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .cpsdm import FramePlan
from .errors import ConfigurationError, ScfaError
from .model import FrequencyGrid, Geometry, circular_array
from .scene import SceneConfig, default_sources
from .solver.variants import METHODS

REFERENCE_METHOD = "ref-derev"
METHOD_NAMES = tuple(METHODS) + (REFERENCE_METHOD,)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ArraySection(_Strict):
    n_mics: int = Field(4, ge=1)
    spacing: float = Field(0.02, gt=0)
    mic_positions: Optional[list[list[float]]] = None
    reference_index: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _reference_in_range(self):
        if self.mic_positions is not None:
            if any(len(row) != 3 for row in self.mic_positions):
                raise ValueError("mic_positions rows must be (x, y, z)")
            n = len(self.mic_positions)
        else:
            n = self.n_mics
        if self.reference_index >= n:
            raise ValueError(f"reference_index {self.reference_index} outside 0..{n - 1}")
        return self

    def positions(self):
        if self.mic_positions is not None:
            return np.asarray(self.mic_positions, dtype=float)
        return circular_array(self.n_mics, self.spacing)


class SourceSection(_Strict):
    n_sources: int = Field(1, ge=0, le=6)
    positions: Optional[list[list[float]]] = None
    levels_db: list[float] = Field(default_factory=lambda: [0.0])
    profile: Literal["constant", "random-walk"] = "random-walk"
    step_db: float = Field(3.0, ge=0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.positions is not None and len(self.positions) != self.n_sources:
            raise ValueError(f"{len(self.positions)} positions for {self.n_sources} sources")
        if len(self.levels_db) not in (1, self.n_sources):
            raise ValueError("levels_db needs one entry or one per source")
        return self

    def source_positions(self):
        if self.positions is not None:
            return np.asarray(self.positions, dtype=float).reshape(-1, 3)
        return default_sources(self.n_sources)


class GridSection(_Strict):
    fft_len: int = Field(256, ge=2)
    sampling_rate: float = Field(16000.0, gt=0)
    speed_of_sound: float = Field(343.0, gt=0)


class FrameSection(_Strict):
    frame_len: int = Field(2000, ge=1)
    subframe_len: int = Field(200, ge=1)
    subframe_overlap: float = Field(0.75, ge=0, lt=1)
    frames_per_segment: int = Field(4, ge=1)
    segment_hop: int = Field(1, ge=1)
    n_frames: int = Field(8, ge=1)
    subframes_per_frame: Optional[int] = Field(None, ge=1)


class ReverbSection(_Strict):
    # null disables late reverberation (gamma = 0)
    level_db: Optional[float] = 0.0
    profile: Literal["constant", "random-walk"] = "random-walk"
    step_db: float = Field(1.0, ge=0)


class EstimationSection(_Strict):
    method: str = "scfa-rev1"
    objective: Optional[Literal["ml", "ls", "gls"]] = None
    delta1: float = Field(1.2, gt=0)
    delta2: float = Field(1.0, gt=0)
    min_distance: float = Field(0.01, gt=0)

    @model_validator(mode="after")
    def _known_method(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}; valid: {', '.join(METHOD_NAMES)}")
        return self


class RunConfig(_Strict):
    seed: int = Field(0, ge=0)
    array: ArraySection = Field(default_factory=ArraySection)
    sources: SourceSection = Field(default_factory=SourceSection)
    grid: GridSection = Field(default_factory=GridSection)
    frames: FrameSection = Field(default_factory=FrameSection)
    reverb: ReverbSection = Field(default_factory=ReverbSection)
    self_noise: float = Field(9e-6, ge=0)
    mismatch_angle: float = Field(0.0, ge=0, le=math.pi / 2)
    bins: Optional[list[int]] = None
    estimation: EstimationSection = Field(default_factory=EstimationSection)

    @model_validator(mode="after")
    def _bins_in_range(self):
        n_bins = self.grid.fft_len // 2 + 1
        if self.bins is not None:
            if not self.bins:
                raise ValueError("bins must not be empty")
            bad = [b for b in self.bins if not 0 <= b < n_bins]
            if bad:
                raise ValueError(f"bins {bad} outside 0..{n_bins - 1}")
            if len(set(self.bins)) != len(self.bins):
                raise ValueError("bins must be distinct")
        return self

    def grid_obj(self):
        g = self.grid
        return FrequencyGrid(g.fft_len, g.sampling_rate, g.speed_of_sound)

    def plan(self):
        f = self.frames
        return FramePlan(f.frame_len, f.subframe_len, f.subframe_overlap,
                         f.frames_per_segment, f.segment_hop)

    def bin_list(self):
        n_bins = self.grid.fft_len // 2 + 1
        return list(range(n_bins)) if self.bins is None else sorted(self.bins)

    def scene_config(self):
        lvl = self.reverb.level_db
        return SceneConfig(
            mic_positions=self.array.positions(),
            source_positions=self.sources.source_positions(),
            reference_index=self.array.reference_index,
            min_distance=self.estimation.min_distance,
            grid=self.grid_obj(),
            plan=self.plan(),
            n_frames=self.frames.n_frames,
            source_levels_db=tuple(self.sources.levels_db),
            source_profile=self.sources.profile,
            source_step_db=self.sources.step_db,
            gamma_level_db=-math.inf if lvl is None else lvl,
            gamma_profile=self.reverb.profile,
            gamma_step_db=self.reverb.step_db,
            self_noise=self.self_noise,
            mismatch_angle=self.mismatch_angle,
            subframes_per_frame=self.frames.subframes_per_frame,
            seed=self.seed,
        )


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data):
    """Validate a mapping into a RunConfig (ConfigurationError on failure)."""
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_errors(exc)) from None
    try:
        # cross-field checks that live in the domain types
        cfg.plan()
        cfg.grid_obj()
        sc = cfg.scene_config()
        Geometry(sc.mic_positions, sc.source_positions, sc.reference_index, sc.min_distance)
    except (ScfaError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)
