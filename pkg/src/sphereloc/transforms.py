"""Rigid transforms and quaternion helpers.

Quaternions are stored in (qx, qy, qz, qw) order everywhere, matching the
TUM trajectory convention used by the pose files and the map format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation


@dataclass(frozen=True)
class RigidTransform:
    """A rotation followed by a translation, mapping child-frame points to parent."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_quat(cls, translation, quat_xyzw) -> "RigidTransform":
        quat = np.asarray(quat_xyzw, dtype=np.float64)
        rot = Rotation.from_quat(quat).as_matrix()
        out = cls(rotation=rot, translation=translation)
        # Keep the caller's quaternion so serialization round-trips exactly;
        # matrix -> quaternion is deterministic but not bit-stable.
        object.__setattr__(out, "_quat", quat.copy())
        return out

    @classmethod
    def yaw(cls, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rotation=rot, translation=translation)

    def quat_xyzw(self) -> np.ndarray:
        cached = getattr(self, "_quat", None)
        if cached is not None:
            return cached.copy()
        return Rotation.from_matrix(self.rotation).as_quat()

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points (..., 3) from the child frame into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (..., 3); translation is ignored."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rotation=rot_inv, translation=-rot_inv @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self ∘ other (apply ``other`` first, then ``self``)."""
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation whose camera frame (+z optical axis, +x right, +y down) looks along ``forward``.

    The returned matrix maps camera-frame vectors into the parent frame.
    """
    fwd = np.asarray(forward, dtype=np.float64)
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    nrm = np.linalg.norm(right)
    if nrm < 1e-12:
        raise ValueError("forward direction is parallel to the up vector")
    right /= nrm
    down = np.cross(fwd, right)
    return np.column_stack([right, down, fwd])
