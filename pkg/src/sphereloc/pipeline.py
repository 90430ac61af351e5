"""End-to-end localization: sensors to grid, descriptor, retrieval, vote.

The query path runs six stages: project sensor data onto the grid,
transform channels, fuse, shortlist map entries by descriptor distance,
correlate against each candidate with the taper bank, and vote.  Every
stage is timed into a breakdown so the cost profile is visible; the
breakdown sums to the measured total up to loop glue.

Map entries keep their grid channels, so candidate-side windowed spectra
are computed lazily once per entry and cached on the index.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .config import Config, worker_count
from .descriptor import EmbeddingModel, feature_vector
from .errors import InvalidParameterError
from .grid import CameraView, PointCloud, SphericalGrid, assemble_feature, build_grid, \
    project_cameras, project_lidar
from .map_store import MapEntry, MapStore, RetrievalHit
from .sensor_io import RigConfig
from .sht import Spectrum, forward_sht
from .spectra import fuse_spectra, standardize_support
from .taper import TaperBank, fused_correlation, grid_tapers, make_tapers
from .voting import VoteResult, vote_score


class StageTimer:
    """Accumulates wall-clock seconds per named stage."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start


def build_feature_sphere(
    scan: PointCloud,
    views: list[CameraView],
    rig: RigConfig,
    grid: SphericalGrid,
    config: Config | None = None,
    timer: StageTimer | None = None,
) -> np.ndarray:
    """Project one place's sensor data into (3, 2B, 2B) grid channels."""
    config = config or Config()
    timer = timer or StageTimer()
    max_angle = config.projection.max_angle or None
    with timer.stage("projection"):
        range_ch, intensity_ch = project_lidar(scan, rig.lidar, grid,
                                               max_angle=max_angle,
                                               k=config.projection.k)
        photometry = project_cameras(views, grid)
        feature = assemble_feature(photometry, range_ch, intensity_ch, grid)
    return feature.channels


def describe(
    channels: np.ndarray,
    grid: SphericalGrid,
    model: EmbeddingModel,
    config: Config | None = None,
    timer: StageTimer | None = None,
) -> np.ndarray:
    """Embedded place descriptor of a channel stack, float32."""
    config = config or Config()
    timer = timer or StageTimer()
    with timer.stage("sht"):
        feats = feature_vector(channels, grid,
                               l_feat=config.descriptor.l_feat,
                               standardize=config.descriptor.standardize)
    with timer.stage("embedding"):
        desc = model.embed(feats)
    return desc.astype(np.float32)


def make_taper_bank(config: Config) -> TaperBank:
    return make_tapers(theta0=config.taper.theta0,
                       l_h=config.taper.l_h,
                       n_tapers=config.taper.n_tapers or None)


@dataclass
class QueryOutcome:
    """Everything one localization query produces."""

    hits: list[RetrievalHit]
    vote: VoteResult
    selected_id: int
    timings: dict[str, float] = field(default_factory=dict)


class LocalizationIndex:
    """A queryable place map: descriptor shortlist plus correlation voting."""

    def __init__(self, store: MapStore, bank: TaperBank, config: Config | None = None):
        self.store = store
        self.bank = bank
        self.config = config or Config()
        self.grid = build_grid(store.bandwidth)
        self._tapers = grid_tapers(bank, self.grid)
        self._vote_cache: dict[int, list[Spectrum]] = {}
        store.build_index()

    def _windowed_fused(self, channels: np.ndarray, timer: StageTimer) -> list[Spectrum]:
        """Per-taper fused spectra with the transform and fusion stages timed."""
        l_eval = self.config.vote.l_eval
        standardize = self.config.fusion.standardize
        with timer.stage("sht"):
            chans = [np.asarray(c, dtype=np.float64) for c in channels]
            std = [standardize_support(c) for c in chans] if standardize else None
        per_taper = []
        for taper in self._tapers:
            with timer.stage("sht"):
                raw = [forward_sht(c * taper, self.grid, l_max=l_eval) for c in chans]
                sel = None
                if std is not None:
                    sel = [forward_sht(c * taper, self.grid, l_max=l_eval) for c in std]
            with timer.stage("fusion"):
                per_taper.append(fuse_spectra(raw, selection_spectra=sel).spectrum)
        return per_taper

    def candidate_spectra(self, entry_id: int) -> list[Spectrum]:
        cached = self._vote_cache.get(entry_id)
        if cached is None:
            entry = self.store.get(entry_id)
            cached = self._windowed_fused(entry.channels.astype(np.float64), StageTimer())
            self._vote_cache[entry_id] = cached
        return cached

    def warm_cache(self, entry_ids=None) -> None:
        """Precompute candidate-side spectra (all entries by default)."""
        ids = entry_ids if entry_ids is not None else [e.entry_id for e in self.store.entries]
        workers = worker_count()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(self.candidate_spectra, ids))
        else:
            for entry_id in ids:
                self.candidate_spectra(entry_id)

    def locate(
        self,
        channels: np.ndarray,
        model: EmbeddingModel,
        k: int | None = None,
    ) -> QueryOutcome:
        """Full query: shortlist k entries by descriptor, vote, select."""
        k = k or self.config.vote.k_candidates
        timer = StageTimer()
        descriptor = describe(channels, self.grid, model, self.config, timer)
        with timer.stage("knn"):
            hits = self.store.query(descriptor, k=k)
        query_ws = self._windowed_fused(channels, timer)
        with timer.stage("multitaper"):
            candidates = [self.candidate_spectra(h.entry_id) for h in hits]
            correlations = [fused_correlation(query_ws, c) for c in candidates]
        with timer.stage("voting"):
            result = vote_from_correlations(correlations, self.config)
        return QueryOutcome(hits=hits, vote=result,
                            selected_id=hits[result.selected].entry_id,
                            timings=dict(timer.seconds))


def vote_from_correlations(correlations: list[np.ndarray], config: Config) -> VoteResult:
    """Score precomputed per-candidate correlation profiles and select."""
    if not correlations:
        raise InvalidParameterError("vote needs at least one candidate")
    scores = np.array([
        vote_score(q, carry=config.vote.carry, mode=config.vote.zscore_mode)
        for q in correlations
    ])
    selected = int(np.argmax(scores))
    margin = float(scores[selected] - np.partition(scores, -2)[-2]) if len(scores) > 1 else float("inf")
    return VoteResult(scores=scores, selected=selected, margin=margin,
                      correlations=list(correlations))


def query_with_sensors(
    scan: PointCloud,
    views: list[CameraView],
    rig: RigConfig,
    index: LocalizationIndex,
    model: EmbeddingModel,
    k: int | None = None,
) -> QueryOutcome:
    """Sensor-data-in localization, with projection included in the timings."""
    timer = StageTimer()
    channels = build_feature_sphere(scan, views, rig, index.grid, index.config, timer)
    outcome = index.locate(channels, model, k=k)
    merged = dict(timer.seconds)
    for name, secs in outcome.timings.items():
        merged[name] = merged.get(name, 0.0) + secs
    outcome.timings = merged
    return outcome


def build_map(
    places: list[tuple[int, "np.ndarray", "np.ndarray"]],
    bandwidth: int,
    model: EmbeddingModel,
    config: Config | None = None,
) -> MapStore:
    """Assemble a MapStore from (entry_id, pose_translation_or_pose, channels).

    ``places`` rows are (entry_id, pose, channels) where pose is a
    RigidTransform and channels a (3, 2B, 2B) array.
    """
    config = config or Config()
    store = MapStore(bandwidth=bandwidth)
    grid = build_grid(bandwidth)
    for entry_id, pose, channels in places:
        desc = describe(channels, grid, model, config)
        store.add(MapEntry(entry_id=entry_id, pose=pose, descriptor=desc,
                           channels=np.asarray(channels, dtype=np.float32)))
    store.build_index()
    return store
