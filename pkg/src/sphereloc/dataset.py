"""On-disk dataset layout shared by the command-line stages.

A dataset directory holds one rig description, one trajectory, and per-place
sensor files:

    rig.toml                  sensor mounts and intrinsics
    poses.txt                 one "index tx ty tz qx qy qz qw" row per place
    scans/000042.xyzi         LiDAR returns in the sensor frame
    images/000042_cam0.pgm    one grayscale frame per rig camera

Place indices are the trajectory row numbers; camera file suffixes follow
the rig's camera order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import CameraView, PointCloud
from .sensor_io import (RigConfig, read_pgm, read_rig, read_trajectory, read_xyzi,
                        write_pgm, write_rig, write_trajectory, write_xyzi)
from .transforms import RigidTransform


def _scan_path(root: Path, index: int) -> Path:
    return root / "scans" / f"{index:06d}.xyzi"


def _image_path(root: Path, index: int, cam: int) -> Path:
    return root / "images" / f"{index:06d}_cam{cam}.pgm"


def init_dataset(root: str | Path, rig: RigConfig) -> None:
    root = Path(root)
    (root / "scans").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)
    write_rig(root / "rig.toml", rig)


def write_place(root: str | Path, index: int, scan: PointCloud,
                views: list[CameraView]) -> None:
    root = Path(root)
    write_xyzi(_scan_path(root, index), scan.points, scan.intensities)
    for c, view in enumerate(views):
        write_pgm(_image_path(root, index, c), view.image)


def write_poses(root: str | Path, poses: list[RigidTransform]) -> None:
    rows = [(float(i), pose) for i, pose in enumerate(poses)]
    write_trajectory(Path(root) / "poses.txt", rows)


@dataclass
class Dataset:
    """Read-side view of a dataset directory."""

    root: Path
    rig: RigConfig
    poses: list[RigidTransform]

    def __len__(self) -> int:
        return len(self.poses)

    def load_place(self, index: int) -> tuple[PointCloud, list[CameraView]]:
        points, intensities = read_xyzi(_scan_path(self.root, index))
        scan = PointCloud(points=points, intensities=intensities)
        views = []
        for c, cam in enumerate(self.rig.cameras):
            image = read_pgm(_image_path(self.root, index, c))
            views.append(CameraView(image=image, fx=cam.fx, fy=cam.fy,
                                    cx=cam.cx, cy=cam.cy, extrinsic=cam.extrinsic))
        return scan, views

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])


def open_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    rig_path = root / "rig.toml"
    poses_path = root / "poses.txt"
    if not rig_path.exists():
        raise FormatError(f"dataset: missing {rig_path}")
    if not poses_path.exists():
        raise FormatError(f"dataset: missing {poses_path}")
    rig = read_rig(rig_path)
    rows = read_trajectory(poses_path)
    return Dataset(root=root, rig=rig, poses=[pose for _, pose in rows])
