"""Spherical harmonic analysis and synthesis on the equiangular grid.

Coefficients use orthonormal complex spherical harmonics with the
Condon-Shortley phase.  Input functions are real, so only orders m >= 0 are
stored; the missing half follows from F(l,-m) = (-1)^m * conj(F(l,m)).
Coefficients live in a flat degree-major layout: index(l, m) = l*(l+1)/2 + m.

The transform splits into an FFT along each azimuth ring followed by a
weighted Legendre sum over colatitudes.  Associated Legendre functions are
fully normalized and built by the standard three-term recurrence in l with a
diagonal seed recurrence in m; full normalization keeps every recurrence
coefficient O(1), so no factorials or rescaling passes are needed.  For high
orders at rings near the poles the seed underflows to zero; there the true
values are far below double precision anyway, so flushing to zero is exact
to machine precision for every supported bandwidth.

Synthesis followed by analysis is the identity for band-limited input
because the ring quadrature rule is exact through polynomial degree 2B-1.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .grid import SphericalGrid, build_grid

# Largest cached Legendre table; bigger bandwidths stream per-order blocks.
_MAX_TABLE_BYTES = 256 * 1024 * 1024
_table_lock = threading.Lock()


def num_coeffs(l_max: int) -> int:
    """Number of stored (l, m >= 0) coefficients for degrees l < l_max."""
    return l_max * (l_max + 1) // 2


def flat_index(l: int, m: int) -> int:
    """Position of coefficient (l, m) in the flat degree-major layout."""
    if not 0 <= m <= l:
        raise InvalidParameterError(f"order must satisfy 0 <= m <= l, got l={l} m={m}")
    return l * (l + 1) // 2 + m


@lru_cache(maxsize=32)
def degree_order_arrays(l_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat arrays (l_of_index, m_of_index) for the degree-major layout."""
    ls = np.concatenate([np.full(l + 1, l) for l in range(l_max)])
    ms = np.concatenate([np.arange(l + 1) for l in range(l_max)])
    ls.flags.writeable = False
    ms.flags.writeable = False
    return ls, ms


@dataclass
class Spectrum:
    """Harmonic coefficients of one real channel, degrees l < l_max."""

    bandwidth: int        # grid bandwidth the coefficients were computed on
    l_max: int            # number of degrees stored
    coeffs: np.ndarray    # complex128, flat layout, size l_max*(l_max+1)/2

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.complex128).reshape(-1)
        if not 1 <= self.l_max <= self.bandwidth:
            raise InvalidParameterError(
                f"l_max must be in [1, bandwidth], got l_max={self.l_max} bandwidth={self.bandwidth}"
            )
        if self.coeffs.size != num_coeffs(self.l_max):
            raise ShapeMismatchError(
                f"expected {num_coeffs(self.l_max)} coefficients for l_max={self.l_max}, "
                f"got {self.coeffs.size}"
            )

    def __getitem__(self, lm: tuple[int, int]) -> complex:
        l, m = lm
        if l >= self.l_max:
            raise InvalidParameterError(f"degree {l} out of range (l_max={self.l_max})")
        if m < 0:
            return (-1) ** (-m) * np.conj(self.coeffs[flat_index(l, -m)])
        return complex(self.coeffs[flat_index(l, m)])

    def degree_slice(self, l: int) -> np.ndarray:
        """Coefficients (l, 0..l) as a view."""
        if not 0 <= l < self.l_max:
            raise InvalidParameterError(f"degree {l} out of range (l_max={self.l_max})")
        start = flat_index(l, 0)
        return self.coeffs[start:start + l + 1]

    def truncated(self, l_max: int) -> "Spectrum":
        """Copy restricted to degrees l < l_max."""
        if l_max > self.l_max:
            raise InvalidParameterError(
                f"cannot extend spectrum from l_max={self.l_max} to {l_max}"
            )
        return Spectrum(self.bandwidth, l_max, self.coeffs[:num_coeffs(l_max)].copy())


def _legendre_blocks(bandwidth: int, l_max: int):
    """Yield (m, block) where block[i, j] = Pbar(l=m+i, m, cos theta_j).

    Blocks come out in increasing m with rows l = m .. l_max-1.  The diagonal
    seed carries the Condon-Shortley sign.
    """
    theta = np.pi * np.arange(2 * bandwidth) / (2 * bandwidth)
    x = np.cos(theta)
    u = np.sin(theta)
    with np.errstate(under="ignore"):
        pmm = np.full(2 * bandwidth, np.sqrt(1.0 / (4.0 * np.pi)))
        for m in range(l_max):
            if m > 0:
                pmm = pmm * (-np.sqrt((2 * m + 1) / (2.0 * m)) * u)
            block = np.empty((l_max - m, 2 * bandwidth))
            block[0] = pmm
            if l_max - m > 1:
                block[1] = np.sqrt(2 * m + 3.0) * x * pmm
            for i in range(2, l_max - m):
                l = m + i
                a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = -np.sqrt(
                    (2.0 * l + 1.0) * ((l - 1.0) ** 2 - m * m)
                    / ((2.0 * l - 3.0) * (l * l - m * m))
                )
                block[i] = a * x * block[i - 1] + b * block[i - 2]
            yield m, block


@lru_cache(maxsize=8)
def _cached_blocks(bandwidth: int, l_max: int) -> tuple[np.ndarray, ...]:
    return tuple(block for _, block in _legendre_blocks(bandwidth, l_max))


def _iter_blocks(bandwidth: int, l_max: int):
    table_bytes = num_coeffs(l_max) * 2 * bandwidth * 8
    if table_bytes <= _MAX_TABLE_BYTES:
        with _table_lock:
            blocks = _cached_blocks(bandwidth, l_max)
        return enumerate(blocks)
    return _legendre_blocks(bandwidth, l_max)


def forward_sht(values: np.ndarray, grid: SphericalGrid, l_max: int | None = None) -> Spectrum:
    """Analyze real grid samples into harmonic coefficients for l < l_max.

    l_max defaults to the grid bandwidth; smaller values compute a truncated
    analysis at proportionally lower cost.
    """
    b = grid.bandwidth
    if l_max is None:
        l_max = b
    if not 1 <= l_max <= b:
        raise InvalidParameterError(f"l_max must be in [1, {b}], got {l_max}")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ShapeMismatchError(f"expected {grid.shape} samples, got {values.shape}")

    rings = np.fft.fft(values, axis=1)          # ring FFT: G[j, m] for m < 2B
    weighted = grid.weights[:, None] * rings[:, :l_max]
    scale = np.pi / b
    coeffs = np.empty(num_coeffs(l_max), dtype=np.complex128)
    for m, block in _iter_blocks(b, l_max):
        col = scale * (block @ weighted[:, m])  # F(l, m) for l = m..l_max-1
        ls = np.arange(m, l_max)
        coeffs[ls * (ls + 1) // 2 + m] = col
    return Spectrum(bandwidth=b, l_max=l_max, coeffs=coeffs)


def inverse_sht(spectrum: Spectrum, grid: SphericalGrid | None = None) -> np.ndarray:
    """Synthesize real grid samples from harmonic coefficients."""
    if grid is None:
        grid = build_grid(spectrum.bandwidth)
    elif grid.bandwidth != spectrum.bandwidth:
        raise ShapeMismatchError(
            f"grid bandwidth {grid.bandwidth} does not match spectrum "
            f"bandwidth {spectrum.bandwidth}"
        )
    b = spectrum.bandwidth
    l_max = spectrum.l_max
    n = 2 * b
    packed = np.zeros((n, n), dtype=np.complex128)
    for m, block in _iter_blocks(b, l_max):
        ls = np.arange(m, l_max)
        col = spectrum.coeffs[ls * (ls + 1) // 2 + m]
        ring_m = block.T @ col                  # h_m(theta_j), shape (2B,)
        if m == 0:
            packed[:, 0] = ring_m
        else:
            # Real signal: negative orders fold into the conjugate bins.
            packed[:, m] = ring_m
            packed[:, n - m] = np.conj(ring_m)
    return np.fft.ifft(packed, axis=1).real * n


def yaw_rotate(spectrum: Spectrum, angle: float) -> Spectrum:
    """Coefficients of the input rotated by ``angle`` about the polar axis.

    The convention is f'(theta, phi) = f(theta, phi - angle), i.e. the
    function is carried in the +phi direction, which multiplies order m by
    exp(-i*m*angle).
    """
    _, ms = degree_order_arrays(spectrum.l_max)
    phase = np.exp(-1j * ms * float(angle))
    return Spectrum(spectrum.bandwidth, spectrum.l_max, spectrum.coeffs * phase)


def transform_feature(channels: np.ndarray, grid: SphericalGrid, l_max: int | None = None) -> list[Spectrum]:
    """Analyze each modality channel of a (3, 2B, 2B) stack."""
    channels = np.asarray(channels)
    if channels.ndim != 3 or channels.shape[1:] != grid.shape:
        raise ShapeMismatchError(
            f"expected (n, {2 * grid.bandwidth}, {2 * grid.bandwidth}) channels, got {channels.shape}"
        )
    return [forward_sht(channels[i], grid, l_max=l_max) for i in range(channels.shape[0])]


def clear_legendre_cache() -> None:
    """Drop cached Legendre tables (mainly for memory-sensitive callers)."""
    with _table_lock:
        _cached_blocks.cache_clear()
