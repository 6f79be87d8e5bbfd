"""Channel model tests: correlation structure, fading statistics, SNR map."""

import numpy as np
import pytest

import mumimo as m
from mumimo.channel import _distance_grid, _receive_corr_sqrt
from mumimo.errors import NumericalError, ParameterError, StructuralError


def test_correlation_matrix_hand_values():
    theta = m.correlation_matrix(3, 0.2)
    expected = np.array([
        [1.0, 0.2, 0.2 ** 4],
        [0.2, 1.0, 0.2],
        [0.2 ** 4, 0.2, 1.0],
    ])
    np.testing.assert_allclose(theta, expected, rtol=0, atol=1e-15)


def test_correlation_matrix_edge_rho():
    np.testing.assert_array_equal(m.correlation_matrix(4, 0.0), np.eye(4))
    np.testing.assert_array_equal(m.correlation_matrix(4, 1.0), np.ones((4, 4)))


@pytest.mark.parametrize("rho", [0.0, 0.2, 0.5, 0.9, 0.99, 1.0])
def test_correlation_matrix_is_psd(rho):
    theta = m.correlation_matrix(16, rho)
    assert np.min(np.linalg.eigvalsh(theta)) >= -1e-10


def test_matrix_sqrt_squares_back():
    theta = m.correlation_matrix(8, 0.7)
    root = m.matrix_sqrt(theta)
    np.testing.assert_allclose(root @ root.conj().T, theta, atol=1e-12)
    np.testing.assert_allclose(root, root.conj().T, atol=1e-12)


def test_matrix_sqrt_rejects_indefinite():
    with pytest.raises(NumericalError):
        m.matrix_sqrt(np.diag([1.0, -1.0]))


def test_receive_corr_sqrt_is_block_diagonal():
    cfg = m.SystemConfig(n_users=2, n_bs=3, n_heads=2, antennas_per_head=2, rho=0.8)
    root = _receive_corr_sqrt(cfg, cfg.n_rx_total)
    cov = root @ root.conj().T
    # no coupling between the central array and any head, nor across heads
    assert np.all(cov[:3, 3:] == 0)
    assert np.all(cov[3:5, 5:] == 0)
    np.testing.assert_allclose(cov[:3, :3], m.correlation_matrix(3, 0.8), atol=1e-12)
    np.testing.assert_allclose(cov[3:5, 3:5], m.correlation_matrix(2, 0.8), atol=1e-12)


def test_small_scale_unit_power_and_correlation(rng):
    cfg = m.SystemConfig(n_users=1, n_bs=2, rho=0.9)
    draws = np.stack([m.draw_small_scale(cfg, 2, rng)[:, 0] for _ in range(20000)])
    power = np.mean(np.abs(draws) ** 2, axis=0)
    np.testing.assert_allclose(power, 1.0, atol=0.05)
    cross = np.mean(draws[:, 0] * draws[:, 1].conj())
    assert abs(cross - 0.9) < 0.03


def test_small_scale_uncorrelated_when_rho_zero(rng):
    cfg = m.SystemConfig(n_users=1, n_bs=4, rho=0.0)
    draws = np.stack([m.draw_small_scale(cfg, 4, rng)[:, 0] for _ in range(8000)])
    gram = draws.conj().T @ draws / len(draws)
    np.testing.assert_allclose(gram, np.eye(4), atol=0.06)


def test_distance_grid_step_and_endpoints():
    grid = _distance_grid((0.1, 0.95))
    assert len(grid) == 18
    np.testing.assert_allclose(np.diff(grid), 0.05, atol=1e-12)
    assert grid[0] == pytest.approx(0.1) and grid[-1] == pytest.approx(0.95)


def test_large_scale_draw_consistency(rng):
    cfg = m.SystemConfig(n_users=5, n_bs=2, n_heads=3, antennas_per_head=1,
                         path_loss_exp=3.0, shadow_spread_db=2.0,
                         path_gain_range=(0.5, 0.9), distance_range=(0.2, 0.6))
    ls = m.draw_large_scale(cfg, rng)
    assert ls.gains.shape == (5, 4)
    grid = set(np.round(_distance_grid((0.2, 0.6)), 10))
    assert set(np.round(ls.distances, 10).ravel()) <= grid
    assert np.all((ls.path_gains >= 0.5) & (ls.path_gains <= 0.9))
    np.testing.assert_allclose(ls.alpha, np.sqrt(ls.path_gains / ls.distances ** 3.0))
    np.testing.assert_allclose(ls.beta, 10.0 ** (2.0 * ls.shadow_db_draws / 10.0))
    np.testing.assert_allclose(ls.gains, ls.alpha * ls.beta)


def test_large_scale_degenerate_ranges(rng):
    cfg = m.SystemConfig(n_users=3, n_bs=4, shadow_spread_db=0.0,
                         path_gain_range=(0.5, 0.5), distance_range=(0.5, 0.5))
    ls = m.draw_large_scale(cfg, rng)
    # alpha = sqrt(0.5 / 0.5^2) = sqrt(2), beta = 1
    np.testing.assert_allclose(ls.alpha, np.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(ls.beta, 1.0, atol=1e-12)


def test_shadowing_second_moment_closed_form(rng):
    # beta = 10^(sigma v / 10) is lognormal; E[beta^2] = exp((sigma ln10 / 5)^2 / 2)
    sigma = 3.0
    closed_form = np.exp((sigma * np.log(10.0) / 5.0) ** 2 / 2.0)
    assert closed_form == pytest.approx(2.5971, abs=5e-4)
    v = rng.standard_normal(400000)
    mc = np.mean(10.0 ** (sigma * v / 5.0))
    assert mc == pytest.approx(closed_form, rel=0.03)


def test_mean_gamma_sq_matches_independent_factorization(rng):
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    est, stderr = m.estimate_mean_gamma_sq(cfg, 500000, rng)
    # gamma^2 = link * d^-tau * beta^2 with independent factors
    grid = _distance_grid(cfg.distance_range)
    sigma = cfg.shadow_spread_db
    exact = 0.7 * np.mean(grid ** -2.0) * np.exp((sigma * np.log(10.0) / 5.0) ** 2 / 2.0)
    assert abs(est - exact) < 5 * stderr + 1e-12


def test_mean_gamma_sq_rejects_tiny_sample(rng):
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    with pytest.raises(ParameterError):
        m.estimate_mean_gamma_sq(cfg, 10, rng)


def test_gain_diagonal_repeats_over_blocks():
    cfg = m.SystemConfig(n_users=2, n_bs=2, n_heads=2, antennas_per_head=1)
    ls = m.draw_large_scale(cfg, np.random.default_rng(0))
    ls.gains = np.array([[3.0, 4.0, 5.0], [6.0, 7.0, 8.0]])
    np.testing.assert_array_equal(m.gain_diagonal(cfg, ls, 0), [3.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(m.gain_diagonal(cfg, ls, 1), [6.0, 6.0, 7.0, 8.0])


def test_compose_channel_scales_columns():
    cfg = m.SystemConfig(n_users=2, n_bs=2, n_heads=1, antennas_per_head=1)
    ls = m.draw_large_scale(cfg, np.random.default_rng(1))
    ls.gains = np.array([[2.0, 3.0], [4.0, 5.0]])
    small = [np.ones((3, 1), dtype=complex), np.full((3, 1), 1j)]
    real = m.compose_channel(cfg, small, ls)
    np.testing.assert_allclose(real.stacked[:, 0], [2.0, 2.0, 3.0])
    np.testing.assert_allclose(real.stacked[:, 1], [4j, 4j, 5j])
    assert real.stacked.shape == (3, 2)


def test_compose_channel_shape_errors():
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    ls = m.draw_large_scale(cfg, np.random.default_rng(2))
    with pytest.raises(StructuralError):
        m.compose_channel(cfg, [np.ones((4, 1))], ls)
    with pytest.raises(StructuralError):
        m.compose_channel(cfg, [np.ones((4, 1)), np.ones((3, 1))], ls)


def test_draw_channel_deterministic():
    cfg = m.SystemConfig(n_users=3, n_bs=6, antennas_per_user=2)
    from mumimo import rng as rmod
    def draws():
        small = [rmod.substream(9, 0, 0, rmod.SMALL_SCALE, k) for k in range(3)]
        return m.draw_channel(cfg, small, rmod.substream(9, 0, 0, rmod.LARGE_SCALE))
    a, b = draws(), draws()
    np.testing.assert_array_equal(a.stacked, b.stacked)
    assert a.stacked.shape == (6, 6)


def test_snr_to_noise_variance_hand_value():
    cfg = m.SystemConfig(n_users=2, n_bs=4, symbol_power=1.0)
    # sigma_n^2 = K Nu sp E / (R C 10^(snr/10)) = 2*1*1*2 / (1*2*10^0.3)
    got = m.snr_to_noise_variance(3.0, cfg, 1.0, 2, 2.0)
    assert got == pytest.approx(4.0 / (2.0 * 10.0 ** 0.3), rel=1e-12)


def test_snr_to_noise_variance_coded_rate_scales():
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    full = m.snr_to_noise_variance(10.0, cfg, 1.0, 2, 1.5)
    half = m.snr_to_noise_variance(10.0, cfg, 0.5, 2, 1.5)
    assert half == pytest.approx(2.0 * full, rel=1e-12)


def test_snr_to_noise_variance_validates():
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    with pytest.raises(ParameterError):
        m.snr_to_noise_variance(10.0, cfg, 0.0, 2, 1.0)
    with pytest.raises(ParameterError):
        m.snr_to_noise_variance(10.0, cfg, 1.0, 0, 1.0)
    with pytest.raises(ParameterError):
        m.snr_to_noise_variance(10.0, cfg, 1.0, 2, 0.0)


def test_config_validation_errors():
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=0, n_bs=4)
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=1, n_bs=4, rho=1.2)
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=1, n_bs=4, path_loss_exp=5.0)
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=1, n_bs=4, distance_range=(0.0, 0.5))
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=8, n_bs=4)  # more streams than antennas
    with pytest.raises(ParameterError):
        m.SystemConfig(n_users=1, n_bs=2, n_heads=2, antennas_per_head=0)
