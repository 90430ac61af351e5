"""Zonal concentration tapers and multitaper cross-spectral correlation.

A taper is a zonal (m = 0) function band-limited to degrees <= l_h whose
energy is maximally concentrated inside the polar cap theta <= theta0.  The
tapers are eigenvectors of the cap concentration matrix

    D[l, l'] = sqrt((2l+1)(2l'+1))/2 * integral_{cos theta0}^{1} P_l P_l' dx

expressed in the orthonormal zonal basis sqrt((2l+1)/(4pi)) * P_l(cos theta).
Eigenvalues are the concentration fractions; the bank keeps the most
concentrated few.  For the full sphere the matrix is the identity and the
first taper is the constant function, so single-taper correlation reduces to
the plain unwindowed correlation.

Multitaper correlation windows both inputs with each taper in the spatial
domain, transforms, correlates per degree, and averages over tapers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre

from .errors import InvalidParameterError, ShapeMismatchError
from .grid import SphericalGrid
from .sht import Spectrum, forward_sht
from .spectra import correlation, fuse_spectra, standardize_support

DEFAULT_THETA0 = np.pi / 6
DEFAULT_L_H = 20
MAX_TAPERS = 8


@dataclass(frozen=True)
class TaperBank:
    """Concentrated zonal tapers: coefficient rows in the orthonormal basis."""

    theta0: float
    l_h: int
    coefficients: np.ndarray  # (n_tapers, l_h + 1), unit-norm rows
    eigenvalues: np.ndarray   # (n_tapers,) concentration fractions, descending

    @property
    def n_tapers(self) -> int:
        return len(self.coefficients)


def shannon_count(theta0: float, l_h: int) -> int:
    """Default taper count: the cap Shannon number, clamped to [1, 8]."""
    n = int((l_h + 1) ** 2 * (1.0 - np.cos(theta0)) / 2.0)
    return max(1, min(MAX_TAPERS, n))


def concentration_matrix(theta0: float, l_h: int) -> np.ndarray:
    """Cap concentration operator in the orthonormal zonal basis."""
    # Gauss-Legendre over [cos theta0, 1]; the integrand has degree <= 2*l_h,
    # so l_h + 1 nodes are exact.
    nodes, wts = np.polynomial.legendre.leggauss(l_h + 1)
    lo = np.cos(theta0)
    x = 0.5 * (1.0 - lo) * nodes + 0.5 * (1.0 + lo)
    w = 0.5 * (1.0 - lo) * wts
    ls = np.arange(l_h + 1)
    p = eval_legendre(ls[:, None], x[None, :])      # (l_h+1, n_nodes)
    scale = np.sqrt((2 * ls + 1) / 2.0)
    return (scale[:, None] * p) @ (w[:, None] * (scale[:, None] * p).T)


def make_tapers(
    theta0: float = DEFAULT_THETA0,
    l_h: int = DEFAULT_L_H,
    n_tapers: int | None = None,
) -> TaperBank:
    """Solve the cap concentration problem and keep the top tapers."""
    if not 0 < theta0 <= np.pi:
        raise InvalidParameterError(f"theta0 must be in (0, pi], got {theta0}")
    if l_h < 0:
        raise InvalidParameterError(f"l_h must be non-negative, got {l_h}")
    if n_tapers is None:
        n_tapers = min(shannon_count(theta0, l_h), max(l_h, 1))
    if not 1 <= n_tapers <= l_h:
        raise InvalidParameterError(
            f"n_tapers must be in [1, {l_h}], got {n_tapers}"
        )
    mat = concentration_matrix(theta0, l_h)
    if np.max(np.abs(mat - np.eye(l_h + 1))) < 1e-12:
        # Full sphere: every band-limited zonal function is fully
        # concentrated, so the eigenproblem is degenerate.  Use the
        # degree-ordered basis; the first taper is then the constant.
        vals = np.ones(l_h + 1)
        vecs = np.eye(l_h + 1)
    else:
        vals, vecs = np.linalg.eigh(mat)
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order[:n_tapers]], 0.0, 1.0)
    vecs = vecs[:, order[:n_tapers]].T.copy()
    # Deterministic sign: the largest-magnitude coefficient is positive.
    for row in vecs:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return TaperBank(theta0=float(theta0), l_h=int(l_h), coefficients=vecs, eigenvalues=vals)


def grid_tapers(bank: TaperBank, grid: SphericalGrid) -> np.ndarray:
    """Sample the tapers on the grid, shape (n_tapers, 2B, 2B)."""
    if bank.l_h > grid.bandwidth:
        raise InvalidParameterError(
            f"taper band limit {bank.l_h} exceeds grid bandwidth {grid.bandwidth}"
        )
    x = np.cos(grid.colatitudes)
    ls = np.arange(bank.l_h + 1)
    basis = np.sqrt((2 * ls[:, None] + 1) / (4.0 * np.pi)) * eval_legendre(ls[:, None], x[None, :])
    rings = bank.coefficients @ basis                       # (n_tapers, 2B)
    return np.repeat(rings[:, :, None], grid.n_rings, axis=2)


def taper_gram(bank: TaperBank, grid: SphericalGrid) -> np.ndarray:
    """Pairwise quadrature inner products of the sampled tapers."""
    sampled = grid_tapers(bank, grid)
    n = bank.n_tapers
    gram = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            gram[i, j] = gram[j, i] = grid.quadrature(sampled[i] * sampled[j])
    return gram


def windowed_spectra(
    values: np.ndarray,
    grid: SphericalGrid,
    bank: TaperBank,
    l_eval: int,
) -> list[Spectrum]:
    """Per-taper spectra of a channel: window in space, then transform."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ShapeMismatchError(f"expected {grid.shape} samples, got {values.shape}")
    sampled = grid_tapers(bank, grid)
    return [forward_sht(values * taper, grid, l_max=l_eval) for taper in sampled]


def multitaper_correlation(
    f_values: np.ndarray,
    g_values: np.ndarray,
    grid: SphericalGrid,
    bank: TaperBank,
    l_eval: int,
) -> np.ndarray:
    """Average per-degree correlation over the taper bank, shape (l_eval,)."""
    spec_f = windowed_spectra(f_values, grid, bank, l_eval)
    spec_g = windowed_spectra(g_values, grid, bank, l_eval)
    acc = np.zeros(l_eval)
    for sf, sg in zip(spec_f, spec_g):
        acc += correlation(sf, sg)
    return acc / bank.n_tapers


def windowed_fused_spectra(
    channels: np.ndarray,
    grid: SphericalGrid,
    bank: TaperBank,
    l_eval: int,
    standardize: bool = True,
) -> list[Spectrum]:
    """Per-taper fused spectra of a multi-modal channel stack.

    Each taper windows every modality, the windowed channels are analyzed,
    and per-degree fusion picks the dominant modality.  The result has one
    fused spectrum per taper and is what the voting stage correlates; the
    query side can be computed once and reused across candidates.
    """
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim != 3 or channels.shape[1:] != grid.shape:
        raise ShapeMismatchError(f"expected (n, {grid.shape[0]}, {grid.shape[1]}) channels")
    sampled = grid_tapers(bank, grid)
    std = [standardize_support(ch) for ch in channels] if standardize else None
    out = []
    for taper in sampled:
        raw = [forward_sht(ch * taper, grid, l_max=l_eval) for ch in channels]
        sel = None
        if std is not None:
            sel = [forward_sht(ch * taper, grid, l_max=l_eval) for ch in std]
        out.append(fuse_spectra(raw, selection_spectra=sel).spectrum)
    return out


def fused_correlation(query_ws: list[Spectrum], cand_ws: list[Spectrum]) -> np.ndarray:
    """Average per-degree correlation of precomputed per-taper fused spectra."""
    if len(query_ws) != len(cand_ws):
        raise ShapeMismatchError(
            f"taper counts differ: {len(query_ws)} vs {len(cand_ws)}"
        )
    acc = np.zeros(query_ws[0].l_max)
    for sf, sg in zip(query_ws, cand_ws):
        acc += correlation(sf, sg)
    return acc / len(query_ws)
