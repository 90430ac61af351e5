"""Deterministic synthetic worlds and sensor rendering for experiments.

A world is a ground plane at z = 0 plus axis-aligned boxes resting on it,
each with its own albedo (camera response) and reflectivity (LiDAR
response).  Box placement is seeded and keeps a clear disc around the
origin so a sensor dropped there is never inside geometry.

Rendering is exact ray casting.  LiDAR rays follow an elevation fan times a
uniform azimuth ring; returns are reported in the sensor frame with
intensity reflectivity / (1 + 0.01 r^2).  Cameras are ideal pinholes
(+z forward, +x right, +y down) under a fixed directional light with
Lambertian shading; rays that miss geometry see the sky value, which is
brighter than any lit surface because scene normals are axis-aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .grid import CameraView, PointCloud
from .sensor_io import CameraMount, RigConfig
from .transforms import RigidTransform, look_rotation

SKY_VALUE = 0.8
LIGHT_DIR = np.array([0.4, 0.25, 0.88]) / np.linalg.norm([0.4, 0.25, 0.88])
GROUND_ALBEDO = 0.35
GROUND_REFLECTIVITY = 0.45
MAX_ALBEDO = 0.9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box resting on the ground plane."""

    lo: np.ndarray  # (3,) minimum corner
    hi: np.ndarray  # (3,) maximum corner
    albedo: float
    reflectivity: float


@dataclass
class World:
    extent: float                  # half-width of the populated square
    boxes: list[Box] = field(default_factory=list)
    ground_albedo: float = GROUND_ALBEDO
    ground_reflectivity: float = GROUND_REFLECTIVITY

    def is_free(self, point: np.ndarray, margin: float = 0.5) -> bool:
        """True when the point clears every box by at least ``margin``."""
        if not self.boxes:
            return True
        p = np.asarray(point, dtype=np.float64)
        lo, hi, _, _ = _box_arrays(self)
        inside = np.all(p >= lo - margin, axis=1) & np.all(p <= hi + margin, axis=1)
        return not inside.any()


def make_world(
    seed: int,
    n_boxes: int = 24,
    extent: float = 28.0,
    clear_radius: float = 3.0,
    size_range: tuple[float, float] = (1.2, 5.0),
    height_range: tuple[float, float] = (1.0, 7.0),
) -> World:
    """Scatter boxes over the square, keeping the origin disc clear."""
    if n_boxes < 0 or extent <= clear_radius:
        raise InvalidParameterError("extent must exceed the clear radius")
    rng = np.random.default_rng(seed)
    world = World(extent=float(extent))
    attempts = 0
    while len(world.boxes) < n_boxes and attempts < 200 * max(n_boxes, 1):
        attempts += 1
        cx, cy = rng.uniform(-extent, extent, size=2)
        sx, sy = rng.uniform(*size_range, size=2)
        h = rng.uniform(*height_range)
        lo = np.array([cx - sx / 2, cy - sy / 2, 0.0])
        hi = np.array([cx + sx / 2, cy + sy / 2, h])
        # Keep the spawn disc clear: reject footprints that reach into it.
        nearest = np.maximum(lo[:2], np.minimum(0.0, hi[:2]))
        if np.hypot(*nearest) < clear_radius:
            continue
        world.boxes.append(Box(lo=lo, hi=hi,
                               albedo=float(rng.uniform(0.2, MAX_ALBEDO)),
                               reflectivity=float(rng.uniform(0.1, 1.0))))
    return world


@dataclass
class RayHits:
    """Closest-hit results for a batch of rays from one origin."""

    t: np.ndarray             # (n,) hit distance, inf for misses
    normal: np.ndarray        # (n, 3) outward surface normal at the hit
    albedo: np.ndarray        # (n,)
    reflectivity: np.ndarray  # (n,)

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.t)


_RAY_CHUNK = 2048


def _box_arrays(world: World):
    """Per-world box slabs and surface parameters, cached on the instance."""
    cached = world.__dict__.get("_slabs")
    if cached is None or len(cached[0]) != len(world.boxes):
        lo = np.stack([b.lo for b in world.boxes]) if world.boxes else np.zeros((0, 3))
        hi = np.stack([b.hi for b in world.boxes]) if world.boxes else np.zeros((0, 3))
        albedo = np.array([b.albedo for b in world.boxes])
        reflect = np.array([b.reflectivity for b in world.boxes])
        cached = (lo, hi, albedo, reflect)
        world.__dict__["_slabs"] = cached
    return cached


def cast_rays(world: World, origin: np.ndarray, dirs: np.ndarray,
              max_range: float = 80.0) -> RayHits:
    """Intersect unit rays from one origin with the ground and all boxes.

    Slab method, broadcast over ray chunks times all boxes so the box count
    never shows up as a Python-level loop.  Slab arithmetic runs in float32
    on origin-relative coordinates: the ~1e-5 m error at full range sits far
    below the angular quantization of any simulated sensor.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(dirs)
    t_best = np.full(n, np.inf)
    normal = np.zeros((n, 3))
    albedo = np.zeros(n)
    reflect = np.zeros(n)

    # Ground plane z = 0, seen from above only.
    dz = dirs[:, 2]
    down = dz < -1e-12
    if origin[2] > 0 and down.any():
        t = np.full(n, np.inf)
        t[down] = -origin[2] / dz[down]
        close = t < t_best
        t_best = np.where(close, t, t_best)
        normal[close] = (0.0, 0.0, 1.0)
        albedo[close] = world.ground_albedo
        reflect[close] = world.ground_reflectivity

    if world.boxes:
        lo64, hi64, box_albedo, box_reflect = _box_arrays(world)
        lo = (lo64 - origin).astype(np.float32)                # (nb, 3)
        hi = (hi64 - origin).astype(np.float32)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = (1.0 / dirs).astype(np.float32)  # inf where a component vanishes
        # Bounding-sphere data for the per-chunk cone cull below.  A box can
        # only be hit by a chunk if its sphere overlaps the chunk's direction
        # cone and starts within max_range; dropping the rest is exact.
        center = (lo64 + hi64) / 2 - origin                    # (nb, 3)
        dist = np.linalg.norm(center, axis=1)
        radius = np.linalg.norm(hi64 - lo64, axis=1) / 2
        safe = np.maximum(dist, 1e-12)
        halo = np.arcsin(np.minimum(radius / safe, 1.0))
        engulfs = dist <= radius
        reachable = dist - radius <= max_range
        center_dir = center / safe[:, None]
        for start in range(0, n, _RAY_CHUNK):
            sl = slice(start, min(start + _RAY_CHUNK, n))
            dirs_c = dirs[sl]
            axis_vec = dirs_c.sum(axis=0)
            axis_norm = np.linalg.norm(axis_vec)
            if axis_norm > 1e-9:
                axis_vec = axis_vec / axis_norm
                spread = np.arccos(np.clip(np.min(dirs_c @ axis_vec), -1.0, 1.0))
                in_cone = np.arccos(np.clip(center_dir @ axis_vec, -1.0, 1.0)) \
                    <= spread + halo
                kept = np.flatnonzero(reachable & (in_cone | engulfs))
            else:
                kept = np.flatnonzero(reachable)
            if kept.size == 0:
                continue
            inv_c = inv[sl]                                    # (c, 3)
            c = inv_c.shape[0]
            lo_k, hi_k = lo[kept], hi[kept]
            t_near = np.full((c, kept.size), -np.inf, dtype=np.float32)
            t_far = np.full((c, kept.size), np.inf, dtype=np.float32)
            with np.errstate(invalid="ignore"):
                for ax in range(3):
                    t1 = inv_c[:, ax, None] * lo_k[:, ax]      # (c, kept)
                    t2 = inv_c[:, ax, None] * hi_k[:, ax]
                    np.fmax(t_near, np.fmin(t1, t2), out=t_near)  # fmin/fmax drop
                    np.fmin(t_far, np.fmax(t1, t2), out=t_far)    # the 0*inf nans
            valid = (t_near <= t_far) & (t_near > 1e-9)
            t_near = np.where(valid, t_near, np.float32(np.inf))
            best_box = np.argmin(t_near, axis=1)               # (c,)
            rows = np.arange(c)
            t_box = t_near[rows, best_box].astype(np.float64)
            closer = t_box < t_best[sl]
            if not closer.any():
                continue
            idx = np.flatnonzero(closer) + start
            chosen = kept[best_box[closer]]
            t_best[idx] = t_box[closer]
            with np.errstate(invalid="ignore"):
                near_w = np.fmin(inv[idx] * lo[chosen], inv[idx] * hi[chosen])
            ax = np.argmax(near_w, axis=1)                     # entry face axis
            face = np.zeros((len(idx), 3))
            face[np.arange(len(idx)), ax] = -np.sign(dirs[idx, ax])
            normal[idx] = face
            albedo[idx] = box_albedo[chosen]
            reflect[idx] = box_reflect[chosen]

    out = t_best > max_range
    t_best[out] = np.inf
    return RayHits(t=t_best, normal=normal, albedo=albedo, reflectivity=reflect)


def lidar_directions(n_beams: int, n_azimuths: int, fan: float) -> np.ndarray:
    """Unit ray directions, beam-major: elevations in [-fan, fan] x azimuth ring."""
    if n_beams < 1 or n_azimuths < 1:
        raise InvalidParameterError("beam and azimuth counts must be positive")
    elev = np.linspace(-fan, fan, n_beams)
    az = 2 * np.pi * np.arange(n_azimuths) / n_azimuths
    ce, se = np.cos(elev)[:, None], np.sin(elev)[:, None]
    ca, sa = np.cos(az)[None, :], np.sin(az)[None, :]
    dirs = np.stack([ce * ca, ce * sa, np.broadcast_to(se, (n_beams, n_azimuths)).copy()],
                    axis=-1)
    return dirs.reshape(-1, 3)


def default_fan(n_beams: int) -> float:
    """Elevation half-angle of the beam fan.

    Dense 128-beam heads cover +-45 deg of elevation, the sparse 64-beam
    family +-22.5 deg, mirroring the wide- and narrow-field sensor lines.
    """
    return np.pi / 4 if n_beams >= 128 else np.pi / 8


def render_lidar(
    world: World,
    sensor_pose: RigidTransform,
    n_beams: int = 128,
    n_azimuths: int = 256,
    fan: float | None = None,
    max_range: float = 80.0,
) -> PointCloud:
    """Ray-cast a spinning head; returns points in the sensor frame."""
    if fan is None:
        fan = default_fan(n_beams)
    dirs_sensor = lidar_directions(n_beams, n_azimuths, fan)
    hits = cast_rays(world, sensor_pose.translation,
                     sensor_pose.rotate(dirs_sensor), max_range=max_range)
    keep = hits.hit
    ranges = hits.t[keep]
    points = dirs_sensor[keep] * ranges[:, None]
    intensities = hits.reflectivity[keep] / (1.0 + 0.01 * ranges ** 2)
    return PointCloud(points=points, intensities=intensities)


def render_camera(
    world: World,
    camera_pose: RigidTransform,
    fx: float, fy: float, cx: float, cy: float,
    width: int, height: int,
    max_range: float = 200.0,
) -> np.ndarray:
    """Render a grayscale pinhole view; shape (height, width), values [0, 1]."""
    u = np.arange(width)[None, :].repeat(height, axis=0)
    v = np.arange(height)[:, None].repeat(width, axis=1)
    d_cam = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u, dtype=np.float64)],
                     axis=-1).reshape(-1, 3)
    d_cam /= np.linalg.norm(d_cam, axis=1, keepdims=True)
    hits = cast_rays(world, camera_pose.translation, camera_pose.rotate(d_cam),
                     max_range=max_range)
    shade = np.full(len(d_cam), SKY_VALUE)
    lit = hits.albedo * np.maximum(0.0, hits.normal @ LIGHT_DIR)
    shade[hits.hit] = lit[hits.hit]
    return shade.reshape(height, width)


def make_rig(
    n_cameras: int,
    image_size: tuple[int, int] = (128, 96),
    hfov: float = np.pi / 2,
    lidar_height: float = 0.4,
    camera_height: float = 0.3,
) -> RigConfig:
    """Sensor rig: roof LiDAR plus a ring of evenly spaced cameras.

    ``n_cameras`` of 4 covers the full ring at 90 degree spacing; 1 keeps
    only the forward view.
    """
    if n_cameras < 0:
        raise InvalidParameterError("camera count must be non-negative")
    width, height = image_size
    fx = width / (2 * np.tan(hfov / 2))
    fy = fx
    lidar = RigidTransform.identity()
    lidar = RigidTransform(rotation=lidar.rotation,
                           translation=np.array([0.0, 0.0, lidar_height]))
    cams = []
    for i in range(n_cameras):
        yaw = 2 * np.pi * i / max(n_cameras, 1)
        forward = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        rot = look_rotation(forward)
        cams.append(CameraMount(
            name=f"cam{i}",
            extrinsic=RigidTransform(rotation=rot,
                                     translation=np.array([0.12 * np.cos(yaw),
                                                           0.12 * np.sin(yaw),
                                                           camera_height])),
            fx=float(fx), fy=float(fy),
            cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
            width=int(width), height=int(height),
        ))
    return RigConfig(lidar=lidar, cameras=tuple(cams))


def render_place(
    world: World,
    rig: RigConfig,
    base_pose: RigidTransform,
    n_beams: int = 128,
    n_azimuths: int = 256,
    max_range: float = 80.0,
) -> tuple[PointCloud, list[CameraView]]:
    """Render every sensor on the rig at one base pose."""
    scan = render_lidar(world, base_pose.compose(rig.lidar),
                        n_beams=n_beams, n_azimuths=n_azimuths, max_range=max_range)
    views = []
    for cam in rig.cameras:
        image = render_camera(world, base_pose.compose(cam.extrinsic),
                              cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)
        views.append(CameraView(image=image, fx=cam.fx, fy=cam.fy,
                                cx=cam.cx, cy=cam.cy, extrinsic=cam.extrinsic))
    return scan, views


def sample_positions(
    world: World,
    n: int,
    min_spacing: float,
    seed: int,
    margin: float = 0.8,
    border: float = 2.0,
) -> np.ndarray:
    """Seeded rejection sampling of well-spaced free positions on the ground."""
    rng = np.random.default_rng(seed)
    limit = world.extent - border
    buf = np.empty((n, 3))
    count = 0
    attempts = 0
    while count < n and attempts < 5000 * max(n, 1):
        attempts += 1
        p = np.array([rng.uniform(-limit, limit), rng.uniform(-limit, limit), 0.0])
        if not world.is_free(p, margin=margin):
            continue
        if count and np.min(np.linalg.norm(buf[:count] - p, axis=1)) < min_spacing:
            continue
        buf[count] = p
        count += 1
    kept = buf[:count]
    if len(kept) < n:
        raise InvalidParameterError(
            f"could only place {len(kept)} of {n} positions; "
            "lower the spacing or enlarge the world"
        )
    return kept.copy()
