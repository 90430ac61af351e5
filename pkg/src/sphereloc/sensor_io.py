"""File formats for sensor data, rigs, tapers, descriptors, and place maps.

Binary formats are little-endian with a 4-byte ASCII magic.  Readers
validate magics, versions, and sizes and report the byte offset of the
first problem.  Text formats are whitespace-separated with '#' comments.

Formats:
  XYZI  point clouds: magic, u32 count, then count * (x y z intensity) f32
  PGM   binary (P5) grayscale images, 8- or 16-bit, normalized by maxval
  TOML  sensor rig: lidar + camera extrinsics (quaternion x y z w),
        pinhole intrinsics, image size
  TAPR  taper bank: version, theta0 f64, u16 l_h, u16 count, coefficient rows f64
  DESC  descriptor matrix: u32 count, u32 dim, rows f32
  EMBD  embedding model: version, u32 rows, u32 cols, weights f64, bias f64
  SMAP  place map: header, then per entry id u32, pose 7 f64 (t xyz, q xyzw),
        descriptor f32, and three channel blocks (raw f32 or zero-run-length)
  text  spectra as "l m re im" rows; trajectories as "t tx ty tz qx qy qz qw"
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError
from .map_store import MapEntry, MapStore
from .sht import Spectrum, flat_index, num_coeffs
from .descriptor import EmbeddingModel
from .taper import TaperBank, concentration_matrix
from .transforms import RigidTransform

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class _Reader:
    """Byte cursor that reports offsets in errors."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.label = label
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"{self.label}: truncated, needed {n} more bytes", offset=self.offset
            )
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype, count=count)

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(
                f"{self.label}: bad magic {got!r}, expected {magic!r}", offset=0
            )

    def done(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{self.label}: {len(self.data) - self.offset} trailing bytes",
                offset=self.offset,
            )


# ---------------------------------------------------------------- XYZI

def write_xyzi(path: str | Path, points: np.ndarray, intensities: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    intensities = np.asarray(intensities, dtype=np.float32).reshape(-1, 1)
    if len(points) != len(intensities):
        raise InvalidParameterError("point and intensity counts differ")
    recs = np.hstack([points, intensities]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"XYZI")
        fh.write(struct.pack("<I", len(recs)))
        fh.write(recs.tobytes())


def read_xyzi(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    r = _Reader(Path(path).read_bytes(), "XYZI")
    r.expect_magic(b"XYZI")
    (count,) = r.unpack("I")
    recs = r.array("<f4", count * 4).reshape(count, 4)
    r.done()
    return recs[:, :3].astype(np.float64), recs[:, 3].astype(np.float64)


# ----------------------------------------------------------------- PGM

def write_pgm(path: str | Path, image: np.ndarray, maxval: int = 65535) -> None:
    """Write a [0, 1] float image as binary PGM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InvalidParameterError("image must be 2-D")
    if not 1 <= maxval <= 65535:
        raise InvalidParameterError(f"maxval must be in [1, 65535], got {maxval}")
    q = np.clip(np.rint(image * maxval), 0, maxval)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        if maxval < 256:
            fh.write(q.astype(np.uint8).tobytes())
        else:
            fh.write(q.astype(">u2").tobytes())  # PGM stores 16-bit big-endian


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a [0, 1] float image."""
    data = Path(path).read_bytes()
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(data):
            raise FormatError("PGM: truncated header", offset=pos)
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"PGM: unsupported format {tokens[0]!r}", offset=0)
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FormatError("PGM: non-numeric header field", offset=0) from None
    if w < 1 or h < 1 or not 1 <= maxval <= 65535:
        raise FormatError(f"PGM: bad dimensions {w}x{h} maxval {maxval}", offset=0)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    need = w * h * dtype.itemsize if maxval >= 256 else w * h
    if len(data) - pos < need:
        raise FormatError("PGM: truncated pixel data", offset=pos)
    pixels = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    return pixels.reshape(h, w).astype(np.float64) / maxval


# ------------------------------------------------------------- rig TOML

@dataclass(frozen=True)
class CameraMount:
    name: str
    extrinsic: RigidTransform  # camera -> base
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass(frozen=True)
class RigConfig:
    lidar: RigidTransform  # lidar -> base
    cameras: tuple[CameraMount, ...]


def _pose_from_table(table: dict, label: str) -> RigidTransform:
    try:
        t = table["translation"]
        q = table["rotation"]
    except KeyError as e:
        raise FormatError(f"rig: {label} missing {e.args[0]}") from None
    if len(t) != 3 or len(q) != 4:
        raise FormatError(f"rig: {label} pose must be 3 translation + 4 quaternion values")
    return RigidTransform.from_quat(t, q)


def read_rig(path: str | Path) -> RigConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise FormatError(f"rig: invalid TOML: {e}") from None
    if "lidar" not in doc:
        raise FormatError("rig: missing [lidar] table")
    lidar = _pose_from_table(doc["lidar"], "lidar")
    cams = []
    for i, cam in enumerate(doc.get("camera", [])):
        label = cam.get("name", f"camera {i}")
        pose = _pose_from_table(cam, label)
        try:
            cams.append(CameraMount(
                name=str(cam.get("name", f"cam{i}")),
                extrinsic=pose,
                fx=float(cam["fx"]), fy=float(cam["fy"]),
                cx=float(cam["cx"]), cy=float(cam["cy"]),
                width=int(cam["width"]), height=int(cam["height"]),
            ))
        except KeyError as e:
            raise FormatError(f"rig: {label} missing {e.args[0]}") from None
    return RigConfig(lidar=lidar, cameras=tuple(cams))


def _fmt_floats(values) -> str:
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def write_rig(path: str | Path, rig: RigConfig) -> None:
    lines = ["[lidar]",
             f"translation = {_fmt_floats(rig.lidar.translation)}",
             f"rotation = {_fmt_floats(rig.lidar.quat_xyzw())}",
             ""]
    for cam in rig.cameras:
        lines += ["[[camera]]",
                  f'name = "{cam.name}"',
                  f"translation = {_fmt_floats(cam.extrinsic.translation)}",
                  f"rotation = {_fmt_floats(cam.extrinsic.quat_xyzw())}",
                  f"fx = {float(cam.fx)!r}", f"fy = {float(cam.fy)!r}",
                  f"cx = {float(cam.cx)!r}", f"cy = {float(cam.cy)!r}",
                  f"width = {cam.width}", f"height = {cam.height}",
                  ""]
    Path(path).write_text("\n".join(lines), encoding="ascii")


# ------------------------------------------------------------ taper bank

def write_taper_bank(path: str | Path, bank: TaperBank) -> None:
    with open(path, "wb") as fh:
        fh.write(b"TAPR")
        fh.write(struct.pack("<Hd HH", 1, bank.theta0, bank.l_h, bank.n_tapers))
        fh.write(bank.coefficients.astype("<f8").tobytes())


def read_taper_bank(path: str | Path) -> TaperBank:
    r = _Reader(Path(path).read_bytes(), "TAPR")
    r.expect_magic(b"TAPR")
    version, theta0, l_h, n = r.unpack("Hd HH")
    if version != 1:
        raise FormatError(f"TAPR: unsupported version {version}", offset=4)
    coeffs = r.array("<f8", n * (l_h + 1)).reshape(n, l_h + 1).astype(np.float64)
    r.done()
    # Concentrations are derived data; recover them from the operator.
    mat = concentration_matrix(theta0, l_h)
    vals = np.clip(np.einsum("ij,jk,ik->i", coeffs, mat, coeffs), 0.0, 1.0)
    return TaperBank(theta0=theta0, l_h=l_h, coefficients=coeffs, eigenvalues=vals)


# ------------------------------------------------------------ descriptors

def write_descriptors(path: str | Path, descriptors: np.ndarray) -> None:
    descriptors = np.asarray(descriptors, dtype=np.float32)
    if descriptors.ndim != 2:
        raise InvalidParameterError("descriptor matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(b"DESC")
        fh.write(struct.pack("<II", descriptors.shape[0], descriptors.shape[1]))
        fh.write(descriptors.astype("<f4").tobytes())


def read_descriptors(path: str | Path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), "DESC")
    r.expect_magic(b"DESC")
    count, dim = r.unpack("II")
    out = r.array("<f4", count * dim).reshape(count, dim).astype(np.float32)
    r.done()
    return out


# -------------------------------------------------------------- embedding

def write_embedding(path: str | Path, model: EmbeddingModel) -> None:
    with open(path, "wb") as fh:
        fh.write(b"EMBD")
        fh.write(struct.pack("<HII", 1, model.d_out, model.d_in))
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.bias.astype("<f8").tobytes())


def read_embedding(path: str | Path) -> EmbeddingModel:
    r = _Reader(Path(path).read_bytes(), "EMBD")
    r.expect_magic(b"EMBD")
    version, rows, cols = r.unpack("HII")
    if version != 1:
        raise FormatError(f"EMBD: unsupported version {version}", offset=4)
    weights = r.array("<f8", rows * cols).reshape(rows, cols).astype(np.float64)
    bias = r.array("<f8", rows).astype(np.float64)
    r.done()
    return EmbeddingModel(weights=weights, bias=bias)


# -------------------------------------------------------------- place map

def _encode_channel(values: np.ndarray) -> bytes:
    """Channel block: u32 length, u8 flag (0 raw, 1 zero-RLE), payload."""
    flat = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    raw = flat.tobytes()
    rle = _zero_rle_encode(flat)
    flag, payload = (1, rle) if len(rle) < len(raw) else (0, raw)
    return struct.pack("<IB", len(payload) + 1, flag) + payload


def _zero_rle_encode(flat: np.ndarray) -> bytes:
    """Alternating (u32 zero run, u32 value count, values f32) groups."""
    out = bytearray()
    n = len(flat)
    nonzero = flat != 0
    i = 0
    while i < n:
        j = i
        while j < n and not nonzero[j]:
            j += 1
        k = j
        while k < n and nonzero[k]:
            k += 1
        out += struct.pack("<II", j - i, k - j)
        out += flat[j:k].tobytes()
        i = k
    return bytes(out)


def _decode_channel(r: _Reader, n_cells: int) -> np.ndarray:
    (length,) = r.unpack("I")
    start = r.offset
    (flag,) = r.unpack("B")
    if flag == 0:
        flat = r.array("<f4", n_cells).astype(np.float32)
    elif flag == 1:
        flat = np.zeros(n_cells, dtype=np.float32)
        pos = 0
        while pos < n_cells:
            zeros, values = r.unpack("II")
            pos += zeros
            if pos + values > n_cells:
                raise FormatError("SMAP: channel run overflows cell count", offset=r.offset)
            if values:
                flat[pos:pos + values] = r.array("<f4", values)
            pos += values
    else:
        raise FormatError(f"SMAP: unknown channel encoding {flag}", offset=r.offset - 1)
    if r.offset - start != length:
        raise FormatError(
            f"SMAP: channel block length mismatch ({r.offset - start} != {length})",
            offset=start,
        )
    return flat


def write_map(path: str | Path, store: MapStore) -> None:
    if not store.entries:
        raise InvalidParameterError("refusing to write an empty map")
    dim = store.entries[0].descriptor.size
    with open(path, "wb") as fh:
        fh.write(b"SMAP")
        fh.write(struct.pack("<HIHH", 1, len(store.entries), dim, store.bandwidth))
        for e in store.entries:
            t = e.pose.translation
            q = e.pose.quat_xyzw()
            fh.write(struct.pack("<I", e.entry_id))
            fh.write(struct.pack("<7d", t[0], t[1], t[2], q[0], q[1], q[2], q[3]))
            fh.write(e.descriptor.astype("<f4").tobytes())
            for c in range(3):
                fh.write(_encode_channel(e.channels[c]))


def read_map(path: str | Path) -> MapStore:
    r = _Reader(Path(path).read_bytes(), "SMAP")
    r.expect_magic(b"SMAP")
    version, count, dim, bandwidth = r.unpack("HIHH")
    if version != 1:
        raise FormatError(f"SMAP: unsupported version {version}", offset=4)
    store = MapStore(bandwidth=bandwidth)
    n = 2 * bandwidth
    for _ in range(count):
        (entry_id,) = r.unpack("I")
        pose_vals = r.unpack("7d")
        desc = r.array("<f4", dim).astype(np.float32)
        channels = np.stack([_decode_channel(r, n * n).reshape(n, n) for _ in range(3)])
        pose = RigidTransform.from_quat(pose_vals[:3], pose_vals[3:])
        store.add(MapEntry(entry_id=entry_id, pose=pose, descriptor=desc,
                           channels=channels))
    r.done()
    return store


# ------------------------------------------------------------- text forms

def write_spectrum_text(path: str | Path, spectrum: Spectrum) -> None:
    """One "l m re im" row per stored coefficient."""
    lines = []
    for l in range(spectrum.l_max):
        for m in range(l + 1):
            c = spectrum.coeffs[flat_index(l, m)]
            lines.append(f"{l} {m} {float(c.real)!r} {float(c.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_spectrum_text(path: str | Path, bandwidth: int | None = None) -> Spectrum:
    rows = {}
    for ln, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 4:
            raise FormatError(f"spectrum: line {ln} has {len(parts)} fields, expected 4")
        try:
            l, m = int(parts[0]), int(parts[1])
            val = complex(float(parts[2]), float(parts[3]))
        except ValueError:
            raise FormatError(f"spectrum: line {ln} is not numeric") from None
        if not 0 <= m <= l:
            raise FormatError(f"spectrum: line {ln} has invalid (l, m) = ({l}, {m})")
        if (l, m) in rows:
            raise FormatError(f"spectrum: duplicate coefficient ({l}, {m}) at line {ln}")
        rows[(l, m)] = val
    if not rows:
        raise FormatError("spectrum: no coefficients")
    l_max = max(l for l, _ in rows) + 1
    if len(rows) != num_coeffs(l_max):
        raise FormatError(
            f"spectrum: {len(rows)} coefficients do not fill degrees < {l_max}"
        )
    coeffs = np.zeros(num_coeffs(l_max), dtype=np.complex128)
    for (l, m), val in rows.items():
        coeffs[flat_index(l, m)] = val
    return Spectrum(bandwidth=bandwidth or l_max, l_max=l_max, coeffs=coeffs)


def write_trajectory(path: str | Path, poses: list[tuple[float, RigidTransform]]) -> None:
    """Timestamped poses, one "t tx ty tz qx qy qz qw" row each."""
    lines = []
    for t, pose in poses:
        tr = pose.translation
        q = pose.quat_xyzw()
        vals = " ".join(repr(float(v)) for v in (*tr, *q))
        lines.append(f"{float(t)!r} {vals}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_trajectory(path: str | Path) -> list[tuple[float, RigidTransform]]:
    poses = []
    for ln, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 8:
            raise FormatError(f"trajectory: line {ln} has {len(parts)} fields, expected 8")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"trajectory: line {ln} is not numeric") from None
        poses.append((vals[0], RigidTransform.from_quat(vals[1:4], vals[4:8])))
    return poses
