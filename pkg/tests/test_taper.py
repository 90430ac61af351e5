"""Concentration taper and multitaper correlation tests.

The spatial-domain oracle evaluates each taper on a fine colatitude rule
and integrates its squared magnitude over the polar cap directly; the
eigenvalue from the matrix problem must equal that energy fraction.
"""

import numpy as np
import pytest
from scipy.special import eval_legendre

from sphereloc.errors import InvalidParameterError, ShapeMismatchError
from sphereloc.grid import build_grid
from sphereloc.sht import forward_sht, inverse_sht
from sphereloc.spectra import correlation
from sphereloc.taper import (
    TaperBank,
    concentration_matrix,
    fused_correlation,
    grid_tapers,
    make_tapers,
    multitaper_correlation,
    shannon_count,
    taper_gram,
    windowed_fused_spectra,
    windowed_spectra,
)

from conftest import random_spectrum


def _cap_energy_fraction(bank: TaperBank, idx: int) -> float:
    """integral of taper^2 over the cap / integral over the sphere, by
    high-order Gauss-Legendre in x = cos(theta)."""
    ls = np.arange(bank.l_h + 1)
    coeff = bank.coefficients[idx]

    def density(x):
        basis = np.sqrt((2 * ls[:, None] + 1) / (4.0 * np.pi)) * eval_legendre(
            ls[:, None], x[None, :]
        )
        return (coeff @ basis) ** 2

    nodes, wts = np.polynomial.legendre.leggauss(4 * bank.l_h + 8)

    def integrate(lo, hi):
        x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        return 2.0 * np.pi * np.sum(wts * density(x)) * 0.5 * (hi - lo)

    cap = integrate(np.cos(bank.theta0), 1.0)
    total = integrate(-1.0, 1.0)
    return cap / total


class TestMakeTapers:
    def test_full_sphere_first_taper_is_total(self):
        bank = make_tapers(theta0=np.pi, l_h=20, n_tapers=1)
        assert bank.eigenvalues[0] == pytest.approx(1.0, abs=1e-8)

    def test_full_sphere_matrix_is_identity(self):
        mat = concentration_matrix(np.pi, 12)
        np.testing.assert_allclose(mat, np.eye(13), atol=1e-12)

    def test_gram_is_identity(self, grid32):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=3)
        gram = taper_gram(bank, grid32)
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-6)

    def test_eigenvalues_match_spatial_energy(self):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=3)
        for i in range(bank.n_tapers):
            assert bank.eigenvalues[i] == pytest.approx(
                _cap_energy_fraction(bank, i), abs=1e-6
            )

    def test_concentrations_sorted_in_unit_interval(self):
        bank = make_tapers(theta0=np.pi / 4, l_h=16)
        vals = bank.eigenvalues
        assert np.all(vals > 0.0) and np.all(vals <= 1.0)
        assert np.all(np.diff(vals) <= 1e-12)

    def test_default_count_is_clamped_shannon(self):
        assert make_tapers().n_tapers == shannon_count(np.pi / 6, 20)
        assert 1 <= shannon_count(0.01, 4) <= 8
        assert shannon_count(np.pi, 20) == 8  # clamped at the ceiling

    def test_too_many_tapers_rejected(self):
        with pytest.raises(InvalidParameterError):
            make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=21)
        with pytest.raises(InvalidParameterError):
            make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=0)

    def test_parameter_validation(self):
        with pytest.raises(InvalidParameterError):
            make_tapers(theta0=0.0)
        with pytest.raises(InvalidParameterError):
            make_tapers(theta0=4.0)
        with pytest.raises(InvalidParameterError):
            make_tapers(l_h=-1)

    def test_deterministic_sign_and_unit_rows(self):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=4)
        again = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=4)
        np.testing.assert_array_equal(bank.coefficients, again.coefficients)
        np.testing.assert_allclose(
            np.linalg.norm(bank.coefficients, axis=1), 1.0, atol=1e-12
        )
        for row in bank.coefficients:
            assert row[np.argmax(np.abs(row))] > 0

    def test_band_limit_enforced_on_grid(self):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=2)
        with pytest.raises(InvalidParameterError):
            grid_tapers(bank, build_grid(16))


class TestWindowedSpectra:
    def test_windowing_is_definitional(self, grid32, rng):
        # windowed spectrum == forward transform of the pointwise product
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=3)
        values = rng.normal(size=grid32.shape)
        sampled = grid_tapers(bank, grid32)
        specs = windowed_spectra(values, grid32, bank, l_eval=15)
        assert len(specs) == 3
        for spec, taper in zip(specs, sampled):
            direct = forward_sht(values * taper, grid32, l_max=15)
            np.testing.assert_array_equal(spec.coeffs, direct.coeffs)

    def test_shape_check(self, grid16):
        bank = make_tapers(theta0=np.pi / 6, l_h=10, n_tapers=2)
        with pytest.raises(ShapeMismatchError):
            windowed_spectra(np.zeros((32, 31)), grid16, bank, l_eval=8)


class TestMultitaperCorrelation:
    def test_full_sphere_single_taper_equals_unwindowed(self, grid32, rng):
        # the full-sphere taper is constant, so windowing only rescales
        bank = make_tapers(theta0=np.pi, l_h=20, n_tapers=1)
        f = inverse_sht(random_spectrum(rng, 32), grid32)
        g = inverse_sht(random_spectrum(rng, 32), grid32)
        windowed = multitaper_correlation(f, g, grid32, bank, l_eval=15)
        plain = correlation(
            forward_sht(f, grid32, l_max=15), forward_sht(g, grid32, l_max=15)
        )
        np.testing.assert_allclose(windowed, plain, atol=1e-10)

    def test_self_correlation_on_support(self, grid32, rng):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=3)
        f = inverse_sht(random_spectrum(rng, 32), grid32)
        q = multitaper_correlation(f, f, grid32, bank, l_eval=15)
        np.testing.assert_allclose(q, 1.0, atol=1e-10)

    def test_average_over_tapers(self, grid32, rng):
        bank = make_tapers(theta0=np.pi / 6, l_h=20, n_tapers=3)
        f = rng.normal(size=grid32.shape)
        g = rng.normal(size=grid32.shape)
        per_taper = [
            correlation(sf, sg)
            for sf, sg in zip(
                windowed_spectra(f, grid32, bank, 15),
                windowed_spectra(g, grid32, bank, 15),
            )
        ]
        np.testing.assert_allclose(
            multitaper_correlation(f, g, grid32, bank, 15),
            np.mean(per_taper, axis=0),
            atol=1e-12,
        )

    def test_bounded(self, grid16, rng):
        bank = make_tapers(theta0=np.pi / 6, l_h=10, n_tapers=3)
        for _ in range(5):
            f = rng.normal(size=grid16.shape)
            g = rng.normal(size=grid16.shape)
            q = multitaper_correlation(f, g, grid16, bank, l_eval=10)
            assert np.max(np.abs(q)) <= 1.0 + 1e-12


class TestFusedWindowing:
    def test_matches_manual_composition(self, grid16, rng):
        bank = make_tapers(theta0=np.pi / 6, l_h=10, n_tapers=2)
        channels = rng.normal(size=(3,) + grid16.shape)
        channels[channels < 0] = 0.0  # give standardization a support mask
        out = windowed_fused_spectra(channels, grid16, bank, l_eval=8)
        assert len(out) == bank.n_tapers
        # query/candidate symmetry: correlating a stack against itself is 1
        q = fused_correlation(out, out)
        np.testing.assert_allclose(q, 1.0, atol=1e-10)

    def test_taper_count_mismatch(self, grid16, rng):
        bank2 = make_tapers(theta0=np.pi / 6, l_h=10, n_tapers=2)
        bank3 = make_tapers(theta0=np.pi / 6, l_h=10, n_tapers=3)
        channels = np.abs(rng.normal(size=(3,) + grid16.shape))
        a = windowed_fused_spectra(channels, grid16, bank2, l_eval=8)
        b = windowed_fused_spectra(channels, grid16, bank3, l_eval=8)
        with pytest.raises(ShapeMismatchError):
            fused_correlation(a, b)
