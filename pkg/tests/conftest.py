"""Shared fixtures: small grids, seeded generators, and a micro world."""

import numpy as np
import pytest

from sphereloc.config import Config
from sphereloc.grid import build_grid
from sphereloc.sht import Spectrum, num_coeffs


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spectrum(rng, bandwidth, l_max=None):
    """Random complex spectrum with real F(l, 0), as real input produces."""
    l_max = bandwidth if l_max is None else l_max
    coeffs = rng.normal(size=num_coeffs(l_max)) + 1j * rng.normal(size=num_coeffs(l_max))
    for l in range(l_max):
        start = l * (l + 1) // 2
        coeffs[start] = coeffs[start].real
    return Spectrum(bandwidth, l_max, coeffs)


def micro_config(**eval_overrides) -> Config:
    """Desk-scale configuration for end-to-end pipeline tests."""
    config = Config()
    config.grid.bandwidth = 16
    config.eval.bandwidth = 16
    config.descriptor.l_feat = 16
    config.taper.l_h = 10
    config.taper.n_tapers = 4
    config.eval.map_size = 24
    config.eval.n_queries = 8
    config.eval.map_spacing = 2.0
    config.eval.extent = 20.0
    config.eval.n_boxes = 30
    config.eval.rotation_map_size = 12
    config.eval.rotation_queries = 6
    config.eval.rotation_angles_deg = (0.0, 90.0)
    config.eval.rotation_recall_at = 5
    config.eval.recall_at = (1, 5)
    config.eval.train_extent = 14.0
    config.eval.train_boxes = 16
    config.eval.train_places = 30
    config.eval.timing_bandwidth = 16
    config.eval.timing_samples = 2
    config.eval.timing_knn_entries = 64
    config.eval.image_width = 64
    config.eval.image_height = 48
    config.synth.n_azimuths = 128
    config.synth.n_places = 8
    config.train.epochs = 8
    config.vote.k_candidates = 5
    for key, value in eval_overrides.items():
        setattr(config.eval, key, value)
    return config
