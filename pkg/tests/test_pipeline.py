"""End-to-end localization tests on a micro world.

A 15-place map at bandwidth 16 is rendered once per module; queries are
re-renders of stored places, so the whole shortlist-correlate-vote path is
exercised with ground truth known by construction.
"""

import time
from types import SimpleNamespace

import numpy as np
import pytest

from sphereloc.config import THREADS_ENV, Config
from sphereloc.descriptor import feature_vector, init_embedding
from sphereloc.errors import InvalidParameterError
from sphereloc.grid import assemble_feature, build_grid, project_cameras, project_lidar
from sphereloc.pipeline import (
    LocalizationIndex,
    StageTimer,
    build_feature_sphere,
    build_map,
    describe,
    make_taper_bank,
    query_with_sensors,
    vote_from_correlations,
)
from sphereloc.synth import make_rig, make_world, render_place, sample_positions
from sphereloc.taper import shannon_count
from sphereloc.transforms import RigidTransform
from sphereloc.voting import vote_score

from conftest import micro_config


def _pipeline_config() -> Config:
    config = micro_config()
    config.synth.n_beams = 32
    config.synth.n_azimuths = 96
    config.taper.l_h = 8
    config.taper.n_tapers = 2
    config.vote.l_eval = 8
    config.descriptor.l_feat = 12
    config.descriptor.embed_dim = 16
    return config


@pytest.fixture(scope="module")
def scene():
    config = _pipeline_config()
    world = make_world(seed=13, n_boxes=20, extent=24.0)
    rig = make_rig(n_cameras=2, image_size=(64, 48))
    grid = build_grid(16)
    positions = sample_positions(world, n=15, min_spacing=2.5, seed=5)
    poses = [RigidTransform.yaw(0.7 * i, p) for i, p in enumerate(positions)]
    rendered = [render_place(world, rig, pose, n_beams=32, n_azimuths=96)
                for pose in poses]
    channels = [build_feature_sphere(scan, views, rig, grid, config)
                for scan, views in rendered]
    model = init_embedding(3 * config.descriptor.l_feat,
                           config.descriptor.embed_dim, seed=3)
    store = build_map(list(zip(range(15), poses, channels)), 16, model, config)
    index = LocalizationIndex(store, make_taper_bank(config), config)
    index.warm_cache()
    return SimpleNamespace(config=config, world=world, rig=rig, grid=grid,
                           poses=poses, rendered=rendered, channels=channels,
                           model=model, store=store, index=index)


class TestStageTimer:
    def test_accumulates_across_uses(self):
        timer = StageTimer()
        with timer.stage("a"):
            time.sleep(0.01)
        with timer.stage("a"):
            pass
        with timer.stage("b"):
            pass
        assert set(timer.seconds) == {"a", "b"}
        assert timer.seconds["a"] >= 0.01
        assert timer.seconds["b"] >= 0.0

    def test_records_despite_exception(self):
        timer = StageTimer()
        with pytest.raises(ValueError):
            with timer.stage("boom"):
                raise ValueError("x")
        assert "boom" in timer.seconds


class TestBuildFeatureSphere:
    def test_shape_and_direct_composition(self, scene):
        scan, views = scene.rendered[0]
        out = build_feature_sphere(scan, views, scene.rig, scene.grid, scene.config)
        assert out.shape == (3, 32, 32)
        range_ch, intensity_ch = project_lidar(scan, scene.rig.lidar, scene.grid,
                                               max_angle=None, k=1)
        photometry = project_cameras(views, scene.grid)
        direct = assemble_feature(photometry, range_ch, intensity_ch, scene.grid)
        assert np.array_equal(out, direct.channels)

    def test_projection_stage_is_timed(self, scene):
        scan, views = scene.rendered[0]
        timer = StageTimer()
        build_feature_sphere(scan, views, scene.rig, scene.grid, scene.config, timer)
        assert list(timer.seconds) == ["projection"]


class TestDescribe:
    def test_matches_feature_then_embed(self, scene):
        channels = scene.channels[1]
        desc = describe(channels, scene.grid, scene.model, scene.config)
        feats = feature_vector(channels, scene.grid, l_feat=12, standardize=True)
        expected = scene.model.embed(feats).astype(np.float32)
        assert desc.dtype == np.float32
        assert np.array_equal(desc, expected)

    def test_stages_are_timed(self, scene):
        timer = StageTimer()
        describe(scene.channels[0], scene.grid, scene.model, scene.config, timer)
        assert set(timer.seconds) == {"sht", "embedding"}


class TestMakeTaperBank:
    def test_honors_config(self, scene):
        bank = make_taper_bank(scene.config)
        assert bank.l_h == 8
        assert bank.n_tapers == 2
        assert bank.theta0 == pytest.approx(np.pi / 6)

    def test_zero_count_selects_shannon_default(self):
        config = Config()
        config.taper.n_tapers = 0
        bank = make_taper_bank(config)
        assert bank.n_tapers == shannon_count(config.taper.theta0, config.taper.l_h)


class TestBuildMap:
    def test_store_contents(self, scene):
        assert scene.store.bandwidth == 16
        assert len(scene.store) == 15
        ids = [e.entry_id for e in scene.store.entries]
        assert ids == list(range(15))
        entry = scene.store.get(4)
        expected = describe(scene.channels[4], scene.grid, scene.model, scene.config)
        assert np.array_equal(entry.descriptor, expected)
        assert entry.channels.dtype == np.float32
        assert np.array_equal(entry.channels,
                              scene.channels[4].astype(np.float32))

    def test_index_is_ready(self, scene):
        desc = scene.store.get(9).descriptor
        hits = scene.store.query(desc, k=1)
        assert hits[0].entry_id == 9
        assert hits[0].distance == 0.0


class TestLocalizationIndex:
    @pytest.mark.parametrize("j", [0, 6, 14])
    def test_self_query_wins(self, scene, j):
        outcome = scene.index.locate(scene.channels[j], scene.model)
        assert outcome.hits[0].entry_id == j
        assert outcome.selected_id == j
        assert outcome.vote.margin > 0.0

    def test_timing_breakdown_keys(self, scene):
        outcome = scene.index.locate(scene.channels[2], scene.model)
        assert set(outcome.timings) == {"sht", "embedding", "knn",
                                        "fusion", "multitaper", "voting"}
        assert all(v >= 0.0 for v in outcome.timings.values())

    def test_candidate_spectra_cached(self, scene):
        first = scene.index.candidate_spectra(5)
        assert scene.index.candidate_spectra(5) is first

    def test_warm_cache_fills_every_entry(self, scene, monkeypatch):
        for threads in ("1", "2"):
            monkeypatch.setenv(THREADS_ENV, threads)
            fresh = LocalizationIndex(scene.store, make_taper_bank(scene.config),
                                      scene.config)
            fresh.warm_cache()
            assert sorted(fresh._vote_cache) == list(range(15))

    def test_query_with_sensors_matches_locate(self, scene):
        scan, views = scene.rendered[8]
        outcome = query_with_sensors(scan, views, scene.rig, scene.index,
                                     scene.model)
        assert outcome.selected_id == 8
        assert "projection" in outcome.timings
        assert outcome.timings["projection"] > 0.0
        direct = scene.index.locate(scene.channels[8], scene.model)
        assert outcome.selected_id == direct.selected_id
        assert np.allclose(outcome.vote.scores, direct.vote.scores)


class TestVoteFromCorrelations:
    def test_empty_candidates_rejected(self):
        with pytest.raises(InvalidParameterError):
            vote_from_correlations([], Config())

    def test_single_candidate_has_infinite_margin(self):
        result = vote_from_correlations([np.array([0.0, 0.2, 0.1])], Config())
        assert result.selected == 0
        assert result.margin == float("inf")

    def test_scores_match_scalar_scoring(self, rng):
        config = Config()
        profiles = [np.concatenate(([0.0], rng.uniform(-0.9, 0.9, size=7)))
                    for _ in range(4)]
        result = vote_from_correlations(profiles, config)
        expected = np.array([vote_score(q, carry="previous", mode="described")
                             for q in profiles])
        assert np.allclose(result.scores, expected, atol=1e-15)
        assert result.selected == int(np.argmax(expected))
        top, second = np.sort(expected)[-1], np.sort(expected)[-2]
        assert result.margin == pytest.approx(top - second)

    def test_vote_config_is_forwarded(self):
        profile = [np.array([0.0, 0.6, 0.4, 0.2])]
        literal = Config()
        literal.vote.zscore_mode = "literal"
        described = vote_from_correlations(profile, Config()).scores[0]
        lit = vote_from_correlations(profile, literal).scores[0]
        assert described == pytest.approx(vote_score(profile[0], mode="described"))
        assert lit == pytest.approx(vote_score(profile[0], mode="literal"))
        assert described != lit


class TestDisplacedReRenderVote:
    def test_small_displacement_selected(self, scene):
        # 15 candidates, one of which is the query's own place; the query
        # itself is re-rendered at most 0.5 m away from that place.
        rng = np.random.default_rng(99)
        trials = 200
        wins = 0
        for _ in range(trials):
            j = int(rng.integers(0, 15))
            radius = rng.uniform(0.0, 0.5)
            angle = rng.uniform(0.0, 2 * np.pi)
            delta = np.array([radius * np.cos(angle), radius * np.sin(angle), 0.0])
            pose = scene.poses[j]
            moved = RigidTransform(rotation=pose.rotation,
                                   translation=pose.translation + delta)
            scan, views = render_place(scene.world, scene.rig, moved,
                                       n_beams=32, n_azimuths=96)
            channels = build_feature_sphere(scan, views, scene.rig, scene.grid,
                                            scene.config)
            outcome = scene.index.locate(channels, scene.model, k=15)
            wins += outcome.selected_id == j
        assert wins >= 0.90 * trials
