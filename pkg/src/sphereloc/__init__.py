"""Multi-modal place recognition on the unit sphere.

Sensor data is sampled onto an equiangular spherical grid, analyzed with a
spherical harmonic transform, and summarized by rotation-invariant spectral
descriptors.  Retrieval shortlists map entries through a trained linear
embedding and an exact KD-tree; shortlisted candidates are re-scored by
multitaper cross-spectral correlation and a per-degree confidence vote.
"""

from .config import Config, load_config, resolved, worker_count
from .descriptor import (EmbeddingModel, feature_vector, init_embedding,
                         mine_triplets, train_embedding, triplet_loss)
from .errors import (FormatError, InvalidParameterError, ShapeMismatchError,
                     SpherelocError)
from .evaluation import (recall_at_n, rotation_experiment, run_suite,
                         selection_experiment, timing_breakdown)
from .grid import (CameraView, FeatureSphere, PointCloud, SphericalGrid,
                   assemble_feature, build_grid, project_cameras, project_lidar)
from .map_store import KDTree, MapEntry, MapStore, RetrievalHit
from .pipeline import (LocalizationIndex, QueryOutcome, build_feature_sphere,
                       build_map, describe, query_with_sensors)
from .sht import (Spectrum, forward_sht, inverse_sht, num_coeffs, transform_feature,
                  yaw_rotate)
from .spectra import (FusedSpectrum, correlation, cross_spectrum, fuse_spectra,
                      power_spectrum, standardize_support, total_power)
from .taper import (TaperBank, fused_correlation, grid_tapers, make_tapers,
                    multitaper_correlation, taper_gram, windowed_fused_spectra)
from .transforms import RigidTransform, look_rotation
from .voting import VoteResult, confidence_profile, degree_zscores, vote, vote_score, z_score

__version__ = "0.1.0"

__all__ = [
    "CameraView", "Config", "EmbeddingModel", "FeatureSphere", "FormatError",
    "FusedSpectrum", "InvalidParameterError", "KDTree", "LocalizationIndex",
    "MapEntry", "MapStore", "PointCloud", "QueryOutcome", "RetrievalHit",
    "RigidTransform", "ShapeMismatchError", "SphericalGrid", "Spectrum",
    "SpherelocError", "TaperBank", "VoteResult", "assemble_feature",
    "build_feature_sphere", "build_grid", "build_map", "confidence_profile",
    "correlation", "cross_spectrum", "degree_zscores", "describe",
    "feature_vector", "forward_sht", "fuse_spectra", "fused_correlation",
    "grid_tapers", "init_embedding", "inverse_sht", "load_config",
    "look_rotation", "make_tapers", "mine_triplets", "multitaper_correlation",
    "num_coeffs", "power_spectrum", "project_cameras", "project_lidar",
    "query_with_sensors", "recall_at_n", "resolved", "rotation_experiment",
    "run_suite", "selection_experiment", "standardize_support", "taper_gram",
    "timing_breakdown", "total_power", "train_embedding", "transform_feature",
    "triplet_loss", "vote", "vote_score", "z_score", "worker_count",
    "yaw_rotate",
]
