"""Rotation-invariant power spectra, cross-spectral correlation, and fusion.

Per-degree power sums |F(l,m)|^2 over the stored orders m = 0..l.  Rotating
the underlying function about the polar axis multiplies each coefficient by
a unit phase, so these sums are invariant; arbitrary rotations mix orders
within one degree and leave them invariant as well.

The per-degree correlation of two channels is the normalized real part of
the cross spectrum.  When either side carries (numerically) no power at a
degree the correlation there is defined to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .sht import Spectrum, degree_order_arrays

# Below this power product a degree is treated as empty.
POWER_FLOOR = 1e-12


def _check_compatible(f: Spectrum, g: Spectrum) -> int:
    if f.l_max != g.l_max:
        raise ShapeMismatchError(f"spectra have l_max {f.l_max} and {g.l_max}")
    return f.l_max


def power_spectrum(spectrum: Spectrum) -> np.ndarray:
    """S(l) = sum_{m=0..l} |F(l,m)|^2, shape (l_max,)."""
    ls, _ = degree_order_arrays(spectrum.l_max)
    return np.bincount(ls, weights=np.abs(spectrum.coeffs) ** 2, minlength=spectrum.l_max)


def cross_spectrum(f: Spectrum, g: Spectrum) -> np.ndarray:
    """S_fg(l) = sum_{m=0..l} F(l,m) * conj(G(l,m)), complex, shape (l_max,)."""
    l_max = _check_compatible(f, g)
    ls, _ = degree_order_arrays(l_max)
    prod = f.coeffs * np.conj(g.coeffs)
    return (
        np.bincount(ls, weights=prod.real, minlength=l_max)
        + 1j * np.bincount(ls, weights=prod.imag, minlength=l_max)
    )


def correlation(f: Spectrum, g: Spectrum) -> np.ndarray:
    """Per-degree correlation Q(l) = Re S_fg(l) / sqrt(S_ff(l) S_gg(l))."""
    sff = power_spectrum(f)
    sgg = power_spectrum(g)
    sfg = cross_spectrum(f, g)
    denom_sq = sff * sgg
    out = np.zeros(f.l_max)
    ok = denom_sq >= POWER_FLOOR
    out[ok] = sfg.real[ok] / np.sqrt(denom_sq[ok])
    return out


def total_power(spectrum: Spectrum) -> float:
    """Full power including negative orders: equals the integral of f^2."""
    _, ms = degree_order_arrays(spectrum.l_max)
    mags = np.abs(spectrum.coeffs) ** 2
    return float(mags[ms == 0].sum() + 2.0 * mags[ms > 0].sum())


def standardize_support(values: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance rescale over the nonzero cells of a channel.

    Cells that hold exactly 0 (no measurement) are left at 0 so empty
    regions stay empty.  A channel with no support, or with constant
    support, is passed through unscaled apart from mean removal.
    """
    values = np.asarray(values, dtype=np.float64)
    support = values != 0
    if not support.any():
        return values.copy()
    cells = values[support]
    mean = cells.mean()
    std = cells.std()
    if std < 1e-12:
        std = 1.0
    out = np.zeros_like(values)
    out[support] = (cells - mean) / std
    return out


@dataclass(frozen=True)
class FusedSpectrum:
    """Per-degree winner-take-all combination of modality spectra."""

    spectrum: Spectrum
    winners: np.ndarray  # (l_max,) index of the modality chosen per degree


def fuse_spectra(
    spectra: list[Spectrum],
    selection_spectra: list[Spectrum] | None = None,
) -> FusedSpectrum:
    """Fuse modality spectra by copying, per degree, the most powerful row.

    Selection compares per-degree power across modalities and takes the
    first maximum (lowest modality index wins ties).  When
    ``selection_spectra`` is given the comparison uses those (typically
    computed from standardized channels) while the fused coefficients are
    still copied from ``spectra``.
    """
    if not spectra:
        raise InvalidParameterError("fusion needs at least one spectrum")
    l_max = spectra[0].l_max
    for s in spectra[1:]:
        _check_compatible(spectra[0], s)
    sel = spectra if selection_spectra is None else selection_spectra
    if len(sel) != len(spectra):
        raise ShapeMismatchError(
            f"{len(selection_spectra)} selection spectra for {len(spectra)} spectra"
        )
    for s in sel:
        if s.l_max != l_max:
            raise ShapeMismatchError(f"selection spectra have l_max {s.l_max}, expected {l_max}")

    powers = np.stack([power_spectrum(s) for s in sel], axis=0)  # (n_mod, l_max)
    winners = np.argmax(powers, axis=0)
    coeffs = np.empty_like(spectra[0].coeffs)
    for l in range(l_max):
        start = l * (l + 1) // 2
        coeffs[start:start + l + 1] = spectra[winners[l]].degree_slice(l)
    fused = Spectrum(spectra[0].bandwidth, l_max, coeffs)
    return FusedSpectrum(spectrum=fused, winners=winners)
