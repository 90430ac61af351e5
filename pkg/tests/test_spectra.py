"""Power spectrum, cross spectrum, correlation, and fusion tests.

Oracles here are literal double loops over (l, m) including negative
orders, written against the accessor rather than the flat coefficient
array so the two layouts are checked against each other.
"""

import numpy as np
import pytest

from sphereloc.errors import InvalidParameterError, ShapeMismatchError
from sphereloc.sht import Spectrum, flat_index, forward_sht, inverse_sht, num_coeffs, yaw_rotate
from sphereloc.spectra import (
    FusedSpectrum,
    correlation,
    cross_spectrum,
    fuse_spectra,
    power_spectrum,
    standardize_support,
    total_power,
)

from conftest import random_spectrum


def _brute_power(spec):
    out = np.zeros(spec.l_max)
    for l in range(spec.l_max):
        for m in range(l + 1):
            out[l] += abs(spec[l, m]) ** 2
    return out


def _brute_cross(f, g):
    out = np.zeros(f.l_max, dtype=complex)
    for l in range(f.l_max):
        for m in range(l + 1):
            out[l] += f[l, m] * np.conj(g[l, m])
    return out


def _brute_correlation(f, g):
    sff = _brute_power(f)
    sgg = _brute_power(g)
    sfg = _brute_cross(f, g)
    out = np.zeros(f.l_max)
    for l in range(f.l_max):
        denom = np.sqrt(sff[l] * sgg[l])
        if denom**2 >= 1e-12:
            out[l] = sfg[l].real / denom
    return out


class TestPowerSpectrum:
    def test_constant_function_power(self, grid8):
        spec = forward_sht(np.ones(grid8.shape), grid8)
        s = power_spectrum(spec)
        assert s[0] == pytest.approx(4.0 * np.pi, rel=1e-10)
        assert np.all(s[1:] < 1e-15)

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            spec = random_spectrum(rng, 12)
            np.testing.assert_allclose(power_spectrum(spec), _brute_power(spec), atol=1e-12)

    def test_rotation_invariance(self, rng):
        spec = random_spectrum(rng, 16)
        for angle in (0.35, 1.2, np.pi, 5.0):
            rotated = yaw_rotate(spec, angle)
            np.testing.assert_allclose(
                power_spectrum(rotated), power_spectrum(spec), rtol=0, atol=1e-12
            )

    def test_total_power_is_parseval_sum(self, grid16, rng):
        spec = random_spectrum(rng, 16)
        values = inverse_sht(spec, grid16)
        integral = np.sum(grid16.weights[:, None] * values**2) * np.pi / 16
        assert total_power(spec) == pytest.approx(integral, rel=1e-10)


class TestCrossSpectrum:
    def test_matches_brute_force(self, rng):
        for _ in range(100):
            f = random_spectrum(rng, 10)
            g = random_spectrum(rng, 10)
            np.testing.assert_allclose(cross_spectrum(f, g), _brute_cross(f, g), atol=1e-12)

    def test_self_cross_is_power(self, rng):
        f = random_spectrum(rng, 12)
        sff = cross_spectrum(f, f)
        np.testing.assert_allclose(sff.imag, 0.0, atol=1e-15)
        np.testing.assert_allclose(sff.real, power_spectrum(f), atol=1e-12)

    def test_swap_conjugates(self, rng):
        f = random_spectrum(rng, 12)
        g = random_spectrum(rng, 12)
        np.testing.assert_allclose(
            cross_spectrum(g, f), np.conj(cross_spectrum(f, g)), atol=1e-13
        )

    def test_lmax_mismatch(self, rng):
        f = random_spectrum(rng, 12)
        g = random_spectrum(rng, 10)
        with pytest.raises(ShapeMismatchError):
            cross_spectrum(f, g)


class TestCorrelation:
    def test_matches_brute_force(self, rng):
        for _ in range(100):
            f = random_spectrum(rng, 10)
            g = random_spectrum(rng, 10)
            np.testing.assert_allclose(correlation(f, g), _brute_correlation(f, g), atol=1e-12)

    def test_bounded_by_one(self, rng):
        # Cauchy-Schwarz per degree; check over many random pairs
        worst = 0.0
        for _ in range(200):
            f = random_spectrum(rng, 8)
            g = random_spectrum(rng, 8)
            worst = max(worst, np.max(np.abs(correlation(f, g))))
        assert worst <= 1.0 + 1e-12

    def test_self_correlation_is_one_on_support(self, rng):
        f = random_spectrum(rng, 12)
        q = correlation(f, f)
        supported = power_spectrum(f) ** 2 >= 1e-12
        np.testing.assert_allclose(q[supported], 1.0, atol=1e-12)

    def test_orthogonal_degrees_give_zero(self):
        # disjoint degree support: f lives on l=2, g on l=3
        f_coeffs = np.zeros(num_coeffs(6), dtype=complex)
        g_coeffs = np.zeros(num_coeffs(6), dtype=complex)
        f_coeffs[flat_index(2, 1)] = 1.0 + 0.5j
        g_coeffs[flat_index(3, 2)] = -0.7 + 0.1j
        f = Spectrum(8, 6, f_coeffs)
        g = Spectrum(8, 6, g_coeffs)
        np.testing.assert_array_equal(correlation(f, g), np.zeros(6))

    def test_empty_degree_defined_as_zero(self, rng):
        f = random_spectrum(rng, 6)
        g_coeffs = rng.normal(size=num_coeffs(6)) + 1j * rng.normal(size=num_coeffs(6))
        g_coeffs[flat_index(4, 0): flat_index(4, 4) + 1] = 0.0
        ls = np.array([l for l in range(6) for _ in range(l + 1)])
        g_coeffs[ls == 0] = g_coeffs[ls == 0].real
        g = Spectrum(8, 6, g_coeffs)
        assert correlation(f, g)[4] == 0.0

    def test_negated_signal_fully_anticorrelated(self, rng):
        f = random_spectrum(rng, 8)
        neg = Spectrum(f.bandwidth, f.l_max, -f.coeffs)
        q = correlation(f, neg)
        supported = power_spectrum(f) ** 2 >= 1e-12
        np.testing.assert_allclose(q[supported], -1.0, atol=1e-12)


class TestStandardizeSupport:
    def test_zero_mean_unit_variance_on_support(self, rng):
        values = np.zeros((8, 8))
        values[2:6, 1:7] = rng.normal(loc=3.0, scale=2.0, size=(4, 6))
        out = standardize_support(values)
        support = values != 0
        assert out[support].mean() == pytest.approx(0.0, abs=1e-12)
        assert out[support].std() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(out[~support], 0.0)

    def test_all_zero_passthrough(self):
        out = standardize_support(np.zeros((4, 4)))
        np.testing.assert_array_equal(out, np.zeros((4, 4)))

    def test_constant_support_only_demeaned(self):
        values = np.zeros((4, 4))
        values[1, :] = 5.0
        out = standardize_support(values)
        np.testing.assert_allclose(out[1, :], 0.0, atol=1e-12)
        np.testing.assert_array_equal(out[0, :], 0.0)


class TestFusion:
    def test_winner_rows_copied_verbatim(self, rng):
        specs = [random_spectrum(rng, 8) for _ in range(3)]
        fused = fuse_spectra(specs)
        assert isinstance(fused, FusedSpectrum)
        powers = np.stack([power_spectrum(s) for s in specs])
        np.testing.assert_array_equal(fused.winners, np.argmax(powers, axis=0))
        for l in range(8):
            np.testing.assert_array_equal(
                fused.spectrum.degree_slice(l), specs[fused.winners[l]].degree_slice(l)
            )

    def test_single_input_is_identity(self, rng):
        spec = random_spectrum(rng, 8)
        fused = fuse_spectra([spec])
        np.testing.assert_array_equal(fused.spectrum.coeffs, spec.coeffs)
        np.testing.assert_array_equal(fused.winners, np.zeros(8, dtype=int))

    def test_idempotent(self, rng):
        specs = [random_spectrum(rng, 8) for _ in range(3)]
        once = fuse_spectra(specs)
        twice = fuse_spectra([once.spectrum, once.spectrum, once.spectrum])
        np.testing.assert_array_equal(twice.spectrum.coeffs, once.spectrum.coeffs)

    def test_ties_take_lowest_index(self, rng):
        spec = random_spectrum(rng, 6)
        clone = Spectrum(spec.bandwidth, spec.l_max, spec.coeffs.copy())
        fused = fuse_spectra([spec, clone])
        np.testing.assert_array_equal(fused.winners, np.zeros(6, dtype=int))

    def test_selection_spectra_steer_without_replacing(self, rng):
        # selection says modality 1 everywhere, but coefficients come from spectra
        specs = [random_spectrum(rng, 6) for _ in range(2)]
        quiet = Spectrum(8, 6, np.zeros(num_coeffs(6), dtype=complex))
        loud = random_spectrum(rng, 6)
        fused = fuse_spectra(specs, selection_spectra=[quiet, loud])
        np.testing.assert_array_equal(fused.winners, np.ones(6, dtype=int))
        np.testing.assert_array_equal(fused.spectrum.coeffs, specs[1].coeffs)

    def test_validation(self, rng):
        with pytest.raises(InvalidParameterError):
            fuse_spectra([])
        f = random_spectrum(rng, 8)
        g = random_spectrum(rng, 6)
        with pytest.raises(ShapeMismatchError):
            fuse_spectra([f, g])
        with pytest.raises(ShapeMismatchError):
            fuse_spectra([f, f], selection_spectra=[f])
