from __future__ import annotations

import numpy as np
import pytest

from app.config import ChannelConfig, SystemConfig
from app.errors import InvalidArgumentError
from app.physics.channel import REFLECT, TRANSMIT, ChannelRealization, sample_channels
from app.physics.noma import (
    BeamformingSet,
    achievable_rates,
    check_constraints,
    decoding_order,
    effective_channels,
    energy_efficiency,
    order_by_gain,
    rates_from_effective,
    transmit_power,
)
from app.physics.star import TWO_PI, StarCoefficients, build_coefficient_matrix, wrap_phase


def scalar_channels(h_values, users_t: int) -> ChannelRealization:
    """Single-element, single-antenna realization with G = 1."""
    h = np.asarray(h_values, dtype=complex).reshape(-1, 1)
    users = h.shape[0]
    return ChannelRealization(
        G=np.ones((1, 1), dtype=complex), h=h, distances=np.ones(users), users_t=users_t, users_r=users - users_t
    )


def random_coefficients(rng: np.random.Generator, elements: int) -> StarCoefficients:
    beta_t = rng.uniform(0.0, 1.0, elements)
    return StarCoefficients(beta_t, 1.0 - beta_t, rng.uniform(0, TWO_PI, elements), rng.uniform(0, TWO_PI, elements))


class TestCoefficients:
    def test_identity_for_full_transmission(self):
        coefficients = StarCoefficients(np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3))
        np.testing.assert_array_equal(build_coefficient_matrix(coefficients, TRANSMIT), np.eye(3))
        np.testing.assert_array_equal(build_coefficient_matrix(coefficients, REFLECT), np.zeros((3, 3)))

    def test_even_split_amplitudes(self):
        coefficients = StarCoefficients.even_split(np.zeros(2), np.full(2, np.pi))
        np.testing.assert_allclose(np.diag(build_coefficient_matrix(coefficients, TRANSMIT)), np.sqrt(0.5))
        np.testing.assert_allclose(np.diag(build_coefficient_matrix(coefficients, REFLECT)), -np.sqrt(0.5), atol=1e-15)

    def test_energy_is_conserved(self, rng):
        coefficients = random_coefficients(rng, 16)
        energy = np.abs(np.diag(build_coefficient_matrix(coefficients, TRANSMIT))) ** 2 + np.abs(
            np.diag(build_coefficient_matrix(coefficients, REFLECT))
        ) ** 2
        np.testing.assert_allclose(energy, 1.0, atol=1e-12)

    def test_unknown_zone(self):
        with pytest.raises(InvalidArgumentError):
            build_coefficient_matrix(StarCoefficients.even_split(np.zeros(1), np.zeros(1)), "X")

    def test_wrap_phase(self):
        wrapped = wrap_phase(np.array([-np.pi / 2, 0.0, TWO_PI, 3 * np.pi, -1e-20]))
        np.testing.assert_allclose(wrapped[:4], [1.5 * np.pi, 0.0, 0.0, np.pi])
        assert np.all((wrapped >= 0) & (wrapped < TWO_PI))


class TestDecodingOrder:
    def test_weaker_user_first(self):
        channels = scalar_channels([np.sqrt(1.8), np.sqrt(0.2)], users_t=1)
        coefficients = StarCoefficients.even_split(np.zeros(1), np.zeros(1))
        assert decoding_order(channels, coefficients) == (1, 0)

    def test_equal_gains_keep_index_order(self):
        channels = scalar_channels([1.0, 1.0, 1.0], users_t=2)
        coefficients = StarCoefficients.even_split(np.zeros(1), np.zeros(1))
        assert decoding_order(channels, coefficients) == (0, 1, 2)

    def test_matches_independent_sort(self, rng):
        channels = sample_channels(ChannelConfig(antennas=4, elements=3, users_t=2, users_r=2), rng)
        coefficients = random_coefficients(rng, 3)
        gains = []
        for user in range(4):
            zone = channels.zone_of(user)
            phi = np.diag(np.sqrt(coefficients.amplitudes(zone)) * np.exp(1j * coefficients.phases(zone)))
            g = channels.h[user].conj() @ phi @ channels.G
            gains.append(float(np.sum(np.abs(g) ** 2)))
        assert decoding_order(channels, coefficients) == tuple(int(u) for u in np.argsort(gains, kind="stable"))

    def test_order_by_gain_on_rows(self):
        assert order_by_gain(np.array([[3.0, 0.0], [1.0, 1.0], [0.0, 0.5]])) == (2, 1, 0)


class TestRates:
    def test_two_user_example(self):
        effective = np.array([[1.0], [0.5]], dtype=complex)
        beams = BeamformingSet(np.array([[np.sqrt(0.6)], [np.sqrt(0.4)]], dtype=complex))
        report = rates_from_effective(effective, beams, 0.1, order_by_gain(effective))
        assert report.order == (1, 0)
        assert report.pair_rates[(1, 1)] == pytest.approx(0.4854, abs=1e-4)
        assert report.pair_rates[(1, 0)] == pytest.approx(0.6521, abs=1e-4)
        assert report.rates[1] == pytest.approx(0.4854, abs=1e-4)
        assert report.rates[0] == pytest.approx(np.log2(7.0), abs=1e-12)
        assert report.rates[0] == pytest.approx(2.8074, abs=1e-4)

    def test_two_user_example_through_the_surface(self):
        channels = scalar_channels([np.sqrt(2.0), np.sqrt(0.5)], users_t=1)
        coefficients = StarCoefficients.even_split(np.zeros(1), np.zeros(1))
        beams = BeamformingSet(np.array([[np.sqrt(0.6)], [np.sqrt(0.4)]], dtype=complex))
        report = achievable_rates(channels, coefficients, beams, 0.1)
        np.testing.assert_allclose(report.rates, [np.log2(7.0), np.log2(1.4)], rtol=1e-12)

    def test_single_user(self):
        effective = np.array([[1.0 + 1.0j, 0.5]])
        beams = BeamformingSet(np.array([[0.3, 0.2j]]))
        report = rates_from_effective(effective, beams, 0.01, (0,))
        gain = abs((1.0 + 1.0j) * 0.3 + 0.5 * 0.2j) ** 2
        assert report.rates[0] == pytest.approx(np.log2(1.0 + gain / 0.01), rel=1e-12)

    def test_zero_beam_gets_zero_rate(self):
        effective = np.array([[1.0], [2.0]], dtype=complex)
        beams = BeamformingSet(np.array([[0.0], [0.5]], dtype=complex))
        report = rates_from_effective(effective, beams, 0.1, (0, 1))
        assert report.rates[0] == 0.0
        assert report.rates[1] > 0.0

    def test_non_positive_noise(self):
        with pytest.raises(InvalidArgumentError):
            rates_from_effective(np.ones((1, 1)), BeamformingSet(np.ones((1, 1))), 0.0, (0,))

    def test_order_must_be_a_permutation(self):
        with pytest.raises(InvalidArgumentError):
            rates_from_effective(np.ones((2, 1)), BeamformingSet(np.ones((2, 1))), 1.0, (0, 0))

    def test_rate_is_min_over_decoders(self, rng):
        effective = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        beams = BeamformingSet(rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)))
        order = order_by_gain(effective)
        report = rates_from_effective(effective, beams, 0.5, order)
        for position, user in enumerate(order):
            decoders = order[position:]
            assert report.rates[user] == min(report.pair_rates[(user, j)] for j in decoders)
            assert report.rates[user] <= report.pair_rates[(user, user)]

    def test_rates_fall_as_noise_grows(self, rng):
        effective = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        beams = BeamformingSet(rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)))
        order = order_by_gain(effective)
        quiet = rates_from_effective(effective, beams, 0.1, order).rates
        loud = rates_from_effective(effective, beams, 1.0, order).rates
        assert np.all(loud <= quiet)

    def test_effective_channels_need_matching_elements(self, rng):
        channels = sample_channels(ChannelConfig(antennas=2, elements=3, users_t=1, users_r=1), rng)
        with pytest.raises(InvalidArgumentError):
            effective_channels(channels, StarCoefficients.even_split(np.zeros(2), np.zeros(2)))


class TestEfficiency:
    def test_transmit_power(self):
        assert transmit_power(BeamformingSet(np.zeros((2, 3)))) == 0.0
        assert transmit_power(BeamformingSet(np.array([[1 + 1j, 1 + 1j]]))) == pytest.approx(4.0)

    def test_ten_bits_at_low_power(self):
        assert energy_efficiency(np.array([4.0, 6.0]), 0.1, SystemConfig()) == pytest.approx(175000.0, rel=1e-9)

    def test_full_watt(self):
        assert energy_efficiency(np.array([3.2928]), 1.0, SystemConfig()) == pytest.approx(46099.2, rel=1e-4)

    def test_zero_rates(self):
        assert energy_efficiency(np.zeros(3), 0.5, SystemConfig()) == 0.0

    def test_negative_power(self):
        with pytest.raises(InvalidArgumentError):
            energy_efficiency(np.ones(1), -1.0, SystemConfig())


class TestConstraints:
    def beams(self, power: float) -> BeamformingSet:
        return BeamformingSet(np.array([[np.sqrt(power / 2)], [np.sqrt(power / 2)]], dtype=complex))

    def test_all_pass(self):
        report = check_constraints(
            self.beams(0.1), StarCoefficients.even_split(np.zeros(2), np.ones(2)), np.array([0.2, 1.0]), SystemConfig()
        )
        assert report.all_passed
        assert report.checks["rate"].margin == pytest.approx(0.1)
        assert report.rate_violations == 0

    def test_split_violation_margin(self):
        coefficients = StarCoefficients(np.array([0.6]), np.array([0.6]), np.zeros(1), np.zeros(1))
        report = check_constraints(self.beams(0.05), coefficients, np.array([1.0, 1.0]), SystemConfig())
        assert not report.passed("energy_split")
        assert report.checks["energy_split"].margin == pytest.approx(0.2)

    def test_rate_violation_margin(self):
        report = check_constraints(
            self.beams(0.05), StarCoefficients.even_split(np.zeros(1), np.zeros(1)), np.array([0.05, 2.0]), SystemConfig()
        )
        assert not report.passed("rate")
        assert report.checks["rate"].margin == pytest.approx(-0.05)
        assert report.rate_violations == 1

    def test_power_violation(self):
        report = check_constraints(
            self.beams(0.2), StarCoefficients.even_split(np.zeros(1), np.zeros(1)), np.ones(2), SystemConfig()
        )
        assert not report.passed("power")
        assert report.checks["power"].margin == pytest.approx(-0.1)

    def test_phase_outside_range(self):
        coefficients = StarCoefficients(np.array([0.5]), np.array([0.5]), np.array([TWO_PI]), np.array([0.0]))
        report = check_constraints(self.beams(0.05), coefficients, np.ones(2), SystemConfig())
        assert not report.passed("phase")
