import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fasris.geometry_channel import (
    ConfigError,
    DomainError,
    PathAngles,
    PortLayout,
    ScenarioConfig,
    ScenarioGeometry,
    TransmitPowers,
    dbm_to_watts,
    line_array,
    path_loss,
    port_coordinate,
    receive_field_matrix,
    receive_field_response,
    sample_path_response,
    sample_scenario,
    synthesize_channel,
    transmit_field_matrix,
)

import oracles

angles_st = st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, math.pi), min_size=n, max_size=n),
    st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=n, max_size=n),
)).map(lambda t: PathAngles(np.array(t[0]), np.array(t[1])))
coord = st.floats(-0.5, 0.5)


# ---------------------------------------------------------------------------
# ports


def test_port_coordinate_single_port_at_origin():
    assert port_coordinate(1, PortLayout(1, 0.0, 0.06)) == 0.0


@pytest.mark.parametrize("r, expected", [(10, -0.5), (20, 9.5)])
def test_port_coordinate_closed_form(r, expected):
    # W * lambda / (M - 1) = 1 m
    layout = PortLayout(20, 19.0, 1.0)
    assert layout.spacing == pytest.approx(1.0)
    assert port_coordinate(r, layout) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("r", [0.5, 20.5, -1])
def test_port_coordinate_out_of_range(r):
    with pytest.raises(DomainError):
        port_coordinate(r, PortLayout(20, 2.0, 0.06))


def test_spacing_definition():
    lay = PortLayout(20, 2.0, 0.06)
    assert lay.spacing == pytest.approx(2.0 * 0.06 / 19)


@given(st.integers(2, 40), st.floats(0.1, 6.0), st.floats(1.0, 40.0))
def test_coordinates_match_oracle_and_invert(M, W, r):
    r = min(r, M)
    lay = PortLayout(M, W, 0.06)
    y = lay.coordinates(r)
    assert y == pytest.approx(oracles.port_y(r, M, lay.spacing), abs=1e-14)
    assert lay.index_of(y) == pytest.approx(r, abs=1e-9)
    # symmetric aperture of total length W * lambda
    assert lay.coordinates(M) - lay.coordinates(1) == pytest.approx(W * 0.06)


# ---------------------------------------------------------------------------
# field responses


def test_receive_response_at_origin_is_ones():
    ang = PathAngles(np.array([0.3, 1.0, 2.0]), np.array([0.1, 3.0, 5.0]))
    np.testing.assert_allclose(receive_field_response([0, 0], ang, 0.06), np.ones(3))


def test_receive_response_half_wavelength_endfire():
    lam = 0.06
    ang = PathAngles(np.array([0.0]), np.array([0.0]))
    np.testing.assert_allclose(receive_field_response([0, lam / 2], ang, lam), [-1.0], atol=1e-12)


def test_receive_response_rejects_bad_wavelength():
    ang = PathAngles(np.array([0.0]), np.array([0.0]))
    with pytest.raises(DomainError):
        receive_field_response([0, 0], ang, 0.0)


@given(angles_st, coord, coord)
def test_receive_response_unit_modulus_and_oracle(ang, x, y):
    f = receive_field_response([x, y], ang, 0.06)
    np.testing.assert_allclose(np.abs(f), 1.0, atol=1e-12)
    np.testing.assert_allclose(f, oracles.field_column((x, y), ang, 0.06), atol=1e-12)


@given(angles_st, coord, coord, coord, coord)
def test_moving_a_port_changes_only_phases(ang, x1, y1, x2, y2):
    a = receive_field_response([x1, y1], ang, 0.06)
    b = receive_field_response([x2, y2], ang, 0.06)
    np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-12)


def test_receive_matrix_columns(rng):
    ang = PathAngles.sample(3, rng)
    lay = PortLayout(20, 2.0, 0.06)
    pos = lay.positions([2.0, 5.0, 11.0, 17.0])
    F = receive_field_matrix(pos, ang, 0.06)
    assert F.shape == (3, 4)
    for m in range(4):
        np.testing.assert_allclose(F[:, m], oracles.field_column(pos[m], ang, 0.06), atol=1e-12)


def test_receive_matrix_single_and_duplicate_ports(rng):
    ang = PathAngles.sample(3, rng)
    np.testing.assert_allclose(receive_field_matrix([[0.0, 0.0]], ang, 0.06), np.ones((3, 1)))
    F = receive_field_matrix([[0.0, 0.01], [0.0, 0.01]], ang, 0.06)
    np.testing.assert_array_equal(F[:, 0], F[:, 1])


def test_receive_matrix_rejects_empty(rng):
    with pytest.raises(DomainError):
        receive_field_matrix(np.zeros((0, 2)), PathAngles.sample(2, rng), 0.06)


def test_transmit_matrix_line_array(rng):
    lam = 0.06
    ang = PathAngles.sample(3, rng)
    np.testing.assert_allclose(transmit_field_matrix([[0.0, 0.0]], ang, lam), np.ones((3, 1)))
    pos = line_array(4, lam / 2)
    Lam = transmit_field_matrix(pos, ang, lam)
    assert Lam.shape == (3, 4)
    for j in range(4):
        np.testing.assert_allclose(Lam[:, j], oracles.field_column(pos[j], ang, lam), atol=1e-12)
    np.testing.assert_allclose(np.abs(Lam), 1.0, atol=1e-12)


def test_path_angles_validation(rng):
    with pytest.raises(DomainError):
        PathAngles(np.array([4.0]), np.array([0.0]))
    with pytest.raises(DomainError):
        PathAngles(np.array([1.0]), np.array([2 * np.pi]))
    a = PathAngles.sample(5, rng)
    assert a.count == 5


# ---------------------------------------------------------------------------
# path responses and synthesis


def test_path_response_los_limit(rng):
    psi = sample_path_response(3, 3, math.inf, 2e-6, rng)
    assert psi[0, 0] == pytest.approx(math.sqrt(2e-6))
    assert np.count_nonzero(psi) == 1


def test_path_response_rayleigh_limit(rng):
    psi = sample_path_response(3, 3, 0.0, 1e-6, rng)
    assert psi[0, 0] == 0
    assert np.count_nonzero(np.diag(psi)[1:]) == 2
    assert np.count_nonzero(psi - np.diag(np.diag(psi))) == 0


def test_path_response_los_entry():
    psi = sample_path_response(3, 3, 5.0, 4.0, np.random.default_rng(0))
    assert psi[0, 0] == pytest.approx(math.sqrt(4.0 * 5 / 6))


def test_path_response_power_budget(rng):
    pl = 3e-7
    draws = [np.sum(np.abs(sample_path_response(3, 3, 5.0, pl, rng)) ** 2) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(pl, rel=0.03)


def test_path_response_errors(rng):
    with pytest.raises(DomainError):
        sample_path_response(0, 3, 1.0, 1.0, rng)
    with pytest.raises(DomainError):
        sample_path_response(3, 3, -1.0, 1.0, rng)
    with pytest.raises(DomainError):
        sample_path_response(3, 3, 1.0, 0.0, rng)


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_synthesize_zero_and_ones(rng):
    F, Lam = _cplx(rng, 3, 4), _cplx(rng, 3, 2)
    np.testing.assert_array_equal(synthesize_channel(F, np.zeros((3, 3)), Lam), 0)
    out = synthesize_channel(np.ones((3, 4)), np.eye(3), np.ones((3, 2)))
    np.testing.assert_allclose(out, np.full((4, 2), 3.0))


def test_synthesize_matches_triple_product(rng):
    F, Psi, Lam = _cplx(rng, 3, 4), _cplx(rng, 3, 2), _cplx(rng, 2, 5)
    np.testing.assert_allclose(synthesize_channel(F, Psi, Lam),
                               oracles.triple_product(F, Psi, Lam), atol=1e-12)


def test_synthesize_shape_mismatch(rng):
    with pytest.raises(DomainError):
        synthesize_channel(_cplx(rng, 3, 4), np.eye(2), _cplx(rng, 2, 2))


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_synthesis_linear_in_psi(seed, a, b):
    rng = np.random.default_rng(seed)
    F, Lam = _cplx(rng, 3, 4), _cplx(rng, 3, 2)
    P1, P2 = _cplx(rng, 3, 3), _cplx(rng, 3, 3)
    lhs = synthesize_channel(F, a * P1 + b * P2, Lam)
    rhs = a * synthesize_channel(F, P1, Lam) + b * synthesize_channel(F, P2, Lam)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


# ---------------------------------------------------------------------------
# path loss, powers, geometry


def test_path_loss_values():
    assert path_loss(1.0, 1e-3, 2.0) == pytest.approx(1e-3)
    assert path_loss(10.0, 1e-3, 2.0) == pytest.approx(1e-5)
    with pytest.raises(DomainError):
        path_loss(0.0, 1e-3, 2.0)


@given(st.floats(1, 1e4), st.floats(1, 1e4), st.floats(1.5, 4))
def test_path_loss_decreasing(d1, d2, exp):
    lo, hi = sorted((d1, d2))
    assert path_loss(hi, 1e-3, exp) <= path_loss(lo, 1e-3, exp)


def test_uniform_powers():
    p = TransmitPowers.uniform(4, 0.01, 6)
    assert np.vdot(p.p_bs, p.p_bs).real == pytest.approx(0.01)
    assert p.p_k.shape == (6, 4)
    np.testing.assert_allclose(np.sum(np.abs(p.p_k) ** 2, axis=1), 0.01)
    with pytest.raises(DomainError):
        TransmitPowers(np.ones(4), np.ones((0, 4)), 1.0)


def test_geometry_rejects_coincident_nodes_and_negative_heights():
    with pytest.raises(DomainError):
        ScenarioGeometry([0, 0, 10], np.zeros((0, 3)), [0, 0, 10], [5, 0, 50])
    with pytest.raises(DomainError):
        ScenarioGeometry([0, 0, -1], np.zeros((0, 3)), [1, 0, 50], [5, 0, 50])


def test_noise_power_is_psd_over_bandwidth():
    cfg = ScenarioConfig()
    assert 10 * np.log10(cfg.noise_power * 1e3) == pytest.approx(-104.0)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# scenario sampling


def test_scenario_shapes_at_reference_setup(default_channels):
    ch = default_channels
    cfg = ScenarioConfig()
    r = np.array([2.0, 7.0, 12.0, 19.0])
    assert (cfg.n_tx, cfg.num_ports, cfg.tx_paths, cfg.rx_paths, cfg.num_interferers) == (4, 20, 3, 3, 6)
    assert ch.h_bs(r).shape == (4, 4)
    assert all(h.shape == (4, 4) for h in ch.h_k(r))
    assert ch.h_d(r).shape == (100, 4)
    assert ch.g_bs.shape == (100, 4)
    assert ch.g_k.shape == (6, 100, 4)
    assert ch.geometry.num_interferers == 6


def test_scenario_seeded_determinism():
    a = sample_scenario(ScenarioConfig(), np.random.default_rng(3))
    b = sample_scenario(ScenarioConfig(), np.random.default_rng(3))
    r = [1.0, 4.0, 9.0, 20.0]
    np.testing.assert_array_equal(a.h_bs(r), b.h_bs(r))
    np.testing.assert_array_equal(a.g_k, b.g_k)
    np.testing.assert_array_equal(a.h_d(r), b.h_d(r))
    np.testing.assert_array_equal(a.geometry.interferer_pos, b.geometry.interferer_pos)


def test_scenario_without_interferers():
    ch = sample_scenario(ScenarioConfig(num_interferers=0), np.random.default_rng(1))
    assert ch.interferer_links == ()
    assert ch.g_k.shape == (0, 100, 4)


def test_scenario_rejects_bad_config():
    with pytest.raises(ConfigError) as exc:
        sample_scenario(ScenarioConfig(active_ports=30), np.random.default_rng(0))
    assert any("active_ports" in p and "num_ports" in p for p in exc.value.problems)


def test_distance_range_and_link_structure():
    cfg = ScenarioConfig()
    for seed in range(20):
        ch = sample_scenario(cfg, np.random.default_rng(seed))
        assert 50.0 - 1e-9 <= ch.geometry.d_bu <= 200.0 + 1e-9
        # RIS links are LoS-only: a single nonzero path entry
        assert np.count_nonzero(ch.ris_link.psi) == 1
        # Rician direct link: LoS entry carries K/(K+1) of the LoS path loss
        pl = path_loss(ch.geometry.d_bu, cfg.beta0, cfg.los_exponent)
        assert abs(ch.bs_link.psi[0, 0]) == pytest.approx(math.sqrt(pl * 5 / 6))


def test_channel_rows_match_field_model(small_channels):
    ch = small_channels
    r = np.array([2.0, 6.5])
    np.testing.assert_allclose(ch.h_bs(r), oracles.link_rows(ch.bs_link, ch.layout, r), atol=1e-18)
    # the port link factorization agrees with explicit synthesis of F^H Psi Lambda
    F = receive_field_matrix(ch.layout.positions(r), ch.bs_link.angles, ch.layout.wavelength)
    np.testing.assert_allclose(ch.h_bs(r), F.conj().T @ ch.bs_link.coupling, rtol=1e-12)


def test_config_validation_lists_every_problem():
    errs = ScenarioConfig(active_ports=30, bandwidth_hz=-1, rician_factor=-2).validate()
    assert len(errs) == 3
