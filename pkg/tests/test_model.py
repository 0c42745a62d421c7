import json

import numpy as np
import pytest

from fimalloc import model
from fimalloc.errors import (
    DimensionMismatch,
    InfeasibleGeometry,
    NotPositiveDefinite,
    NotSymmetric,
    ParseError,
    SchemaVersionMismatch,
)


class TestMakePrior:
    def test_reference_covariance_inverse_trace(self):
        # Closed form for [[4, .5], [.5, .25]]: det = 0.75,
        # tr(inverse) = (0.25 + 4) / 0.75 = 17/3.
        prior = model.make_prior([[4.0, 0.5], [0.5, 0.25]])
        assert abs(prior.inverse_trace - 17.0 / 3.0) < 1e-12

    def test_identity_inverse_trace(self):
        prior = model.make_prior(np.eye(3))
        assert prior.inverse_trace == pytest.approx(3.0, abs=1e-14)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            model.make_prior([[1.0, 2.0], [2.0, 1.0]])

    def test_asymmetric_rejected(self):
        with pytest.raises(NotSymmetric):
            model.make_prior([[1.0, 0.2], [0.3, 1.0]])

    def test_non_square_rejected(self):
        with pytest.raises(DimensionMismatch):
            model.make_prior([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    def test_inverse_times_covariance_is_identity(self, default_prior):
        product = default_prior.inverse @ default_prior.covariance
        np.testing.assert_allclose(product, np.eye(2), atol=1e-10)

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            base = rng.uniform(-1, 1, size=(3, 3))
            cov = base @ base.T + 0.5 * np.eye(3)
            prior = model.make_prior(cov)
            back = np.linalg.inv(prior.inverse)
            err = np.linalg.norm(back - prior.covariance) / np.linalg.norm(prior.covariance)
            assert err < 1e-8


class TestMakeTau:
    def test_reference_values(self, default_prior):
        # gain' C gain = 2.08 for the reference gain, so tau = 3 sqrt(3.08).
        tau = model.make_tau([0.6, 0.8], 1.0, default_prior)
        assert tau == pytest.approx(3.0 * np.sqrt(3.08), rel=1e-12)

    def test_zero_gain(self, default_prior):
        assert model.make_tau([0.0, 0.0], 1.0, default_prior) == pytest.approx(3.0, rel=1e-12)

    def test_tiny_noise(self):
        prior = model.make_prior(np.eye(2))
        tau = model.make_tau([1.0, 0.0], 0.001, prior)
        assert tau == pytest.approx(3.0 * np.sqrt(1.0 + 1e-6), rel=1e-12)

    def test_dimension_mismatch(self, default_prior):
        with pytest.raises(DimensionMismatch):
            model.make_tau([1.0, 0.0, 0.0], 1.0, default_prior)

    def test_monotone_in_noise_and_prior_scale(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            base = rng.uniform(-1, 1, size=(2, 2))
            cov = base @ base.T + 0.4 * np.eye(2)
            prior = model.make_prior(cov)
            gain = rng.uniform(0.1, 2.0, size=2)
            sigma = rng.uniform(0.3, 2.0)
            tau = model.make_tau(gain, sigma, prior)
            assert model.make_tau(gain, sigma * 1.3, prior) >= tau
            bumped = model.make_prior(cov + np.diag(rng.uniform(0.1, 1.0, size=2)))
            assert model.make_tau(gain, sigma, bumped) >= tau


class TestGenerateDeployment:
    def test_gains_match_distance_ratios(self):
        net = model.generate_deployment(5, 12)
        g = net.geometry
        d0 = np.linalg.norm(g.source_positions, axis=1)
        for sensor, pos in zip(net.sensors, g.sensor_positions):
            dist = np.linalg.norm(g.source_positions - pos, axis=1)
            expected = (d0 / dist) ** g.decay_exponent
            np.testing.assert_allclose(sensor.gain, expected, rtol=1e-12)

    def test_distance_floor_and_gain_bounds(self):
        net = model.generate_deployment(9, 30)
        g = net.geometry
        d0 = np.linalg.norm(g.source_positions, axis=1)
        for pos in g.sensor_positions:
            dist = np.linalg.norm(g.source_positions - pos, axis=1)
            assert np.all(dist >= g.d_min)
        bound = (d0 / g.d_min) ** g.decay_exponent
        for sensor in net.sensors:
            assert np.all(sensor.gain > 0.0)
            assert np.all(sensor.gain <= bound)

    def test_unit_distance_ratio_gives_unit_gain(self, default_prior):
        # A sensor exactly as far from each source as the origin is has gain 1.
        sources = model._default_sources()
        d0 = np.linalg.norm(sources, axis=1)
        gain = (d0 / d0) ** 2.0
        np.testing.assert_allclose(gain, [1.0, 1.0])

    def test_determinism(self, tmp_path):
        a = model.generate_deployment(42, 8)
        b = model.generate_deployment(42, 8)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        model.save_scenario(a, pa)
        model.save_scenario(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_tau_consistent_with_make_tau(self, default_prior):
        net = model.generate_deployment(3, 5)
        for sensor in net.sensors:
            expected = model.make_tau(sensor.gain, sensor.sigma_n, net.prior)
            assert sensor.tau == pytest.approx(expected, rel=1e-12)

    def test_infeasible_geometry(self):
        # d_min larger than any achievable source distance forces exhaustion.
        with pytest.raises(InfeasibleGeometry):
            model.generate_deployment(1, 4, d_min=5.0)

    def test_per_sensor_parameter_arrays(self):
        sigma_n = [0.5, 1.0, 1.5]
        bits = [1, 2, 3]
        net = model.generate_deployment(2, 3, sigma_n=sigma_n, bits=bits,
                                        h_mag=[0.5, 0.7, 0.9])
        for sensor, sn, b in zip(net.sensors, sigma_n, bits):
            assert sensor.sigma_n == sn
            assert sensor.bits == b
        assert [s.h_mag for s in net.sensors] == [0.5, 0.7, 0.9]


class TestScenarioIO:
    def test_roundtrip_byte_equal(self, tmp_path):
        net = model.generate_deployment(7, 6)
        first = tmp_path / "first.json"
        second = tmp_path / "second.json"
        model.save_scenario(net, first)
        model.save_scenario(model.load_scenario(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_numeric_fields_survive(self, tmp_path):
        net = model.generate_deployment(13, 4)
        path = tmp_path / "s.json"
        model.save_scenario(net, path)
        loaded = model.load_scenario(path)
        for a, b in zip(net.sensors, loaded.sensors):
            np.testing.assert_array_equal(a.gain, b.gain)
            assert a.tau == b.tau and a.sigma_n == b.sigma_n
        np.testing.assert_array_equal(
            net.geometry.sensor_positions, loaded.geometry.sensor_positions
        )

    def test_missing_prior_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"version": 1, "sensors": []}))
        with pytest.raises(ParseError, match="prior"):
            model.load_scenario(path)

    def test_unknown_field_rejected(self, tmp_path):
        net = model.homogeneous_network(2)
        payload = model.network_to_dict(net)
        payload["surprise"] = 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ParseError, match="surprise"):
            model.load_scenario(path)

    def test_version_mismatch(self, tmp_path):
        net = model.homogeneous_network(2)
        payload = model.network_to_dict(net)
        payload["version"] = 2
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SchemaVersionMismatch):
            model.load_scenario(path)

    def test_golden_fixture_loads(self, golden_network):
        assert golden_network.k == 20
        assert golden_network.prior.q == 2
        assert golden_network.seed == 42

    def test_golden_fixture_matches_regeneration(self, golden_scenario_path, tmp_path):
        regenerated = tmp_path / "regen.json"
        model.save_scenario(model.generate_deployment(42, 20), regenerated)
        assert regenerated.read_bytes() == golden_scenario_path.read_bytes()


class TestHomogeneousNetwork:
    def test_sensors_identical(self):
        net = model.homogeneous_network(5, gain=(0.6, 0.8))
        first = net.sensors[0]
        for sensor in net.sensors[1:]:
            np.testing.assert_array_equal(sensor.gain, first.gain)
            assert sensor.tau == first.tau

    def test_network_requires_consistent_dimensions(self, default_prior):
        good = model.Sensor(gain=np.array([1.0, 0.5]), sigma_n=1.0, h_mag=0.7,
                            sigma_nu=1.0, bits=2, tau=3.0)
        bad = model.Sensor(gain=np.array([1.0, 0.5, 0.2]), sigma_n=1.0, h_mag=0.7,
                           sigma_nu=1.0, bits=2, tau=3.0)
        with pytest.raises(DimensionMismatch):
            model.Network(sensors=(good, bad), prior=default_prior)
