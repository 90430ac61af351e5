"""Equiangular sampling grids on the sphere and sensor-to-grid projection.

The grid has 2B x 2B directions with colatitudes theta_j = pi*j/(2B) and
azimuths phi_k = pi*k/B.  Quadrature weights are the classical exact weights
for this sampling, one per colatitude ring; integrating the constant function
over the grid recovers the sphere area 4*pi to machine precision.

Projection fills three real channels on the grid (photometry, range,
intensity).  LiDAR returns are assigned to grid directions by angular
nearest-neighbor lookup; camera images are sampled bilinearly along each grid
direction.  Directions with no measurement hold exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidParameterError, ShapeMismatchError
from .transforms import RigidTransform

MAX_BANDWIDTH = 512

# Channel ordering inside a FeatureSphere.
PHOTOMETRY, RANGE, INTENSITY = 0, 1, 2
CHANNEL_NAMES = ("photometry", "range", "intensity")


@dataclass(frozen=True)
class SphericalGrid:
    """2B x 2B equiangular sampling of the sphere with ring quadrature weights."""

    bandwidth: int
    colatitudes: np.ndarray  # (2B,), strictly increasing in [0, pi)
    azimuths: np.ndarray     # (2B,), strictly increasing in [0, 2*pi)
    weights: np.ndarray      # (2B,), one weight per colatitude ring

    @property
    def n_rings(self) -> int:
        return 2 * self.bandwidth

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.bandwidth, 2 * self.bandwidth)

    def directions(self) -> np.ndarray:
        """Unit direction vectors, shape (2B, 2B, 3), row j = ring theta_j."""
        st = np.sin(self.colatitudes)[:, None]
        ct = np.cos(self.colatitudes)[:, None]
        cp = np.cos(self.azimuths)[None, :]
        sp = np.sin(self.azimuths)[None, :]
        return np.stack([st * cp, st * sp, np.broadcast_to(ct, (self.n_rings, self.n_rings)).copy()], axis=-1)

    def quadrature(self, values: np.ndarray) -> float:
        """Integrate a real sampled function over the sphere."""
        values = np.asarray(values)
        if values.shape != self.shape:
            raise ShapeMismatchError(f"expected {self.shape} samples, got {values.shape}")
        return float(np.pi / self.bandwidth * self.weights @ values.sum(axis=1))


@dataclass
class PointCloud:
    """LiDAR returns in the sensor frame with per-point intensities."""

    points: np.ndarray        # (N, 3) meters
    intensities: np.ndarray   # (N,) unitless, >= 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.intensities = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.intensities):
            raise ShapeMismatchError(
                f"{len(self.points)} points but {len(self.intensities)} intensities"
            )
        if np.isnan(self.points).any():
            raise InvalidParameterError("point cloud contains NaN coordinates")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CameraView:
    """A grayscale image with pinhole intrinsics and a camera-to-base extrinsic."""

    image: np.ndarray          # (H, W) float, values in [0, 1]
    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: RigidTransform  # camera frame -> base frame

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim != 2 or min(self.image.shape) < 2:
            raise InvalidParameterError("image must be 2-D with at least 2x2 pixels")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError("focal lengths must be positive")


@dataclass
class FeatureSphere:
    """Fused multi-modal input: (photometry, range, intensity) on one grid."""

    grid: SphericalGrid
    channels: np.ndarray  # (3, 2B, 2B)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        expected = (3,) + self.grid.shape
        if self.channels.shape != expected:
            raise ShapeMismatchError(
                f"channels shape {self.channels.shape} does not match grid ({expected})"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels.shape

    def channel(self, index: int) -> np.ndarray:
        return self.channels[index]


def build_grid(bandwidth: int) -> SphericalGrid:
    """Build the 2B x 2B equiangular grid with exact ring quadrature weights.

    The ring weights satisfy sum_j w_j = 2, so the full quadrature
    sum_{j,k} w_j * (pi/B) equals 4*pi, and the rule integrates any
    band-limited function of degree < 2B exactly.
    """
    if not isinstance(bandwidth, (int, np.integer)) or isinstance(bandwidth, bool):
        raise InvalidParameterError(f"bandwidth must be an integer, got {bandwidth!r}")
    if not 1 <= bandwidth <= MAX_BANDWIDTH:
        raise InvalidParameterError(
            f"bandwidth must be in [1, {MAX_BANDWIDTH}], got {bandwidth}"
        )
    b = int(bandwidth)
    j = np.arange(2 * b)
    theta = np.pi * j / (2 * b)
    phi = np.pi * j / b
    q = np.arange(b)
    # w_j = (2/B) sin(theta_j) * sum_q sin((2q+1) theta_j) / (2q+1)
    series = np.sin(np.outer(theta, 2 * q + 1)) @ (1.0 / (2 * q + 1))
    weights = (2.0 / b) * np.sin(theta) * series
    return SphericalGrid(bandwidth=b, colatitudes=theta, azimuths=phi, weights=weights)


def default_max_angle(grid: SphericalGrid) -> float:
    """Default angular search radius: two colatitude grid steps."""
    return 2.0 * (np.pi / (2 * grid.bandwidth))


def project_lidar(
    scan: PointCloud,
    extrinsic: RigidTransform,
    grid: SphericalGrid,
    max_angle: float | None = None,
    k: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a LiDAR scan onto the grid, returning (range, intensity) channels.

    Each grid direction averages the k nearest measurement directions (by
    angle) within ``max_angle``; directions with no measurement inside the
    cone are 0.  Ranges are measured after transforming points to the base
    frame.
    """
    if max_angle is None:
        max_angle = default_max_angle(grid)
    if max_angle <= 0:
        raise InvalidParameterError(f"max_angle must be positive, got {max_angle}")
    if k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")

    range_ch = np.zeros(grid.shape)
    intensity_ch = np.zeros(grid.shape)
    if len(scan) == 0:
        return range_ch, intensity_ch

    pts = extrinsic.apply(scan.points)
    radii = np.linalg.norm(pts, axis=1)
    valid = radii > 0
    pts, radii = pts[valid], radii[valid]
    intens = scan.intensities[valid]
    if len(pts) == 0:
        return range_ch, intensity_ch

    dirs = pts / radii[:, None]
    tree = cKDTree(dirs)
    grid_dirs = grid.directions().reshape(-1, 3)
    # Angular NN reduces to euclidean NN on unit vectors: chord = 2 sin(angle/2).
    chord_bound = 2.0 * np.sin(min(max_angle, np.pi) / 2.0)
    k_eff = min(k, len(pts))
    dist, idx = tree.query(grid_dirs, k=k_eff, distance_upper_bound=chord_bound * (1 + 1e-12))
    if k_eff == 1:
        dist, idx = dist[:, None], idx[:, None]

    hit = idx < len(pts)
    counts = hit.sum(axis=1)
    safe_idx = np.where(hit, idx, 0)
    range_sum = np.where(hit, radii[safe_idx], 0.0).sum(axis=1)
    intens_sum = np.where(hit, intens[safe_idx], 0.0).sum(axis=1)
    covered = counts > 0
    flat_range = np.zeros(len(grid_dirs))
    flat_intens = np.zeros(len(grid_dirs))
    flat_range[covered] = range_sum[covered] / counts[covered]
    flat_intens[covered] = intens_sum[covered] / counts[covered]
    return flat_range.reshape(grid.shape), flat_intens.reshape(grid.shape)


def project_cameras(views: list[CameraView], grid: SphericalGrid) -> np.ndarray:
    """Sample camera images along grid directions, returning the photometry channel.

    Grid directions are rotated into each camera frame (directions have no
    position, so the extrinsic translation does not apply).  Directions with
    positive depth that land inside the image contribute a bilinear sample;
    overlapping cameras are averaged and uncovered directions stay 0.
    """
    acc = np.zeros(grid.shape)
    cnt = np.zeros(grid.shape, dtype=np.int64)
    if not views:
        return acc

    dirs = grid.directions().reshape(-1, 3)
    for view in views:
        cam_dirs = dirs @ view.extrinsic.rotation  # == R.T @ d per direction
        z = cam_dirs[:, 2]
        front = z > 1e-12
        u = np.full(len(dirs), -1.0)
        v = np.full(len(dirs), -1.0)
        u[front] = view.fx * cam_dirs[front, 0] / z[front] + view.cx
        v[front] = view.fy * cam_dirs[front, 1] / z[front] + view.cy
        h, w = view.image.shape
        inside = front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
        samples = _bilinear(view.image, u[inside], v[inside])
        flat_acc = acc.reshape(-1)
        flat_cnt = cnt.reshape(-1)
        flat_acc[inside] += samples
        flat_cnt[inside] += 1

    out = np.zeros(grid.shape)
    covered = cnt > 0
    out[covered] = acc[covered] / cnt[covered]
    return out


def _bilinear(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = image.shape
    u0 = np.clip(np.floor(u).astype(np.int64), 0, w - 2)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, h - 2)
    fu = u - u0
    fv = v - v0
    top = image[v0, u0] * (1 - fu) + image[v0, u0 + 1] * fu
    bot = image[v0 + 1, u0] * (1 - fu) + image[v0 + 1, u0 + 1] * fu
    return top * (1 - fv) + bot * fv


def assemble_feature(
    photometry: np.ndarray,
    range_channel: np.ndarray,
    intensity: np.ndarray,
    grid: SphericalGrid,
) -> FeatureSphere:
    """Stack the three modality channels into a FeatureSphere (fixed order)."""
    channels = []
    for name, ch in (("photometry", photometry), ("range", range_channel), ("intensity", intensity)):
        ch = np.asarray(ch, dtype=np.float64)
        if ch.shape != grid.shape:
            raise ShapeMismatchError(
                f"{name} channel has shape {ch.shape}, grid expects {grid.shape}"
            )
        channels.append(ch)
    return FeatureSphere(grid=grid, channels=np.stack(channels, axis=0))
