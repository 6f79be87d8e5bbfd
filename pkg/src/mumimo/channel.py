"""Uplink channel model: antenna correlation, small- and large-scale fading.

The composite channel of user k is ``G_k = Gamma_k * H_k`` where ``H_k``
carries correlated Rayleigh fading and ``Gamma_k`` the large-scale gain
(path loss, link gain and log-normal shadowing).  In a distributed
deployment the receive correlation is block diagonal over co-located
antenna groups and every group sees its own large-scale coefficient.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DISTANCE_GRID_STEP, SystemConfig
from .errors import NumericalError, ParameterError, StructuralError

_PSD_TOL = 1e-10


def correlation_matrix(n: int, rho: float) -> np.ndarray:
    """Antenna correlation matrix with entries rho ** (i - j)^2.

    ``rho = 0`` gives the identity and ``rho = 1`` the all-ones matrix; any
    rho in [0, 1] yields a symmetric positive semidefinite matrix.
    """
    if n < 1:
        raise ParameterError(f"correlation matrix size must be >= 1, got {n}")
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [0, 1], got {rho}")
    idx = np.arange(n)
    expo = (idx[:, None] - idx[None, :]) ** 2
    # 0**0 == 1 keeps the diagonal at unity for rho = 0
    return np.power(float(rho), expo)


def matrix_sqrt(mat: np.ndarray) -> np.ndarray:
    """Hermitian square root S of a PSD matrix, with S @ S.conj().T == mat.

    Eigenvalues within a small negative tolerance of zero are clipped;
    anything more negative raises :class:`NumericalError`.
    """
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise StructuralError(f"matrix_sqrt expects a square matrix, got shape {mat.shape}")
    w, v = np.linalg.eigh(mat)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if np.min(w) < -_PSD_TOL * scale:
        raise NumericalError(
            f"matrix is not positive semidefinite (min eigenvalue {np.min(w):.3e})")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.conj().T
    return root


@lru_cache(maxsize=64)
def _cached_corr_sqrt(n: int, rho: float) -> np.ndarray:
    out = matrix_sqrt(correlation_matrix(n, rho))
    out.setflags(write=False)
    return out


def _receive_corr_sqrt(cfg: SystemConfig, n_rx: int) -> np.ndarray:
    """Block-diagonal square root of the receive correlation matrix."""
    if n_rx == cfg.n_rx_total:
        blocks = cfg.receive_blocks()
    else:
        # callers drawing an ad-hoc array size get one co-located block
        blocks = [n_rx]
    root = np.zeros((n_rx, n_rx))
    start = 0
    for size in blocks:
        root[start:start + size, start:start + size] = _cached_corr_sqrt(size, cfg.rho)
        start += size
    return root


def draw_small_scale(cfg: SystemConfig, n_rx: int, rng: np.random.Generator) -> np.ndarray:
    """Correlated Rayleigh channel of one user, shape (n_rx, N_U).

    An i.i.d. CN(0, 1) matrix is colored on the receive side by the
    (block-diagonal) correlation root and on the transmit side by the
    per-user antenna correlation root.
    """
    if n_rx < 1:
        raise ParameterError(f"n_rx must be >= 1, got {n_rx}")
    n_tx = cfg.antennas_per_user
    white = (rng.standard_normal((n_rx, n_tx))
             + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2.0)
    rx_root = _receive_corr_sqrt(cfg, n_rx)
    tx_root = _cached_corr_sqrt(n_tx, cfg.rho)
    return rx_root @ white @ tx_root


@dataclass
class LargeScaleDraw:
    """Large-scale coefficients of one channel realization.

    All arrays have shape (K, L + 1); column j is the coefficient between
    each user and co-located group j (the central array is group 0).  For a
    centralized system the shape degenerates to (K, 1).
    """

    distances: np.ndarray
    path_gains: np.ndarray
    shadow_db_draws: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gains: np.ndarray  # gamma = alpha * beta


def _distance_grid(distance_range) -> np.ndarray:
    lo, hi = distance_range
    n = int(round((hi - lo) / DISTANCE_GRID_STEP)) + 1
    return np.linspace(lo, hi, max(n, 1))


def draw_large_scale(cfg: SystemConfig, rng: np.random.Generator) -> LargeScaleDraw:
    """Draw distances, link gains and shadowing for every (user, group) pair.

    Distances are uniform on a discrete grid over ``cfg.distance_range``,
    link gains uniform (continuous) on ``cfg.path_gain_range`` and the
    shadowing exponent is ``10 ** (sigma * v / 10)`` with v standard normal.
    """
    shape = (cfg.n_users, cfg.n_heads + 1)
    grid = _distance_grid(cfg.distance_range)
    d = grid[rng.integers(0, len(grid), size=shape)]
    lo, hi = cfg.path_gain_range
    link = lo + (hi - lo) * rng.random(size=shape)
    v = rng.standard_normal(shape)
    alpha = np.sqrt(link / d ** cfg.path_loss_exp)
    beta = 10.0 ** (cfg.shadow_spread_db * v / 10.0)
    return LargeScaleDraw(distances=d, path_gains=link, shadow_db_draws=v,
                          alpha=alpha, beta=beta, gains=alpha * beta)


def gain_diagonal(cfg: SystemConfig, large: LargeScaleDraw, user: int) -> np.ndarray:
    """Per-receive-antenna large-scale gain vector for one user (length N_A)."""
    reps = cfg.receive_blocks()
    return np.repeat(large.gains[user], reps)


@dataclass
class ChannelRealization:
    """One composite channel draw: per-user matrices plus the stacked G."""

    per_user: list
    large: LargeScaleDraw
    stacked: np.ndarray  # (N_A, K * N_U)


def compose_channel(cfg: SystemConfig, small: list, large: LargeScaleDraw) -> ChannelRealization:
    """Scale each user's fading matrix by its large-scale gains and stack.

    ``small`` holds one (N_A, N_U) matrix per user.  The stacked channel has
    the users' columns side by side, shape (N_A, K * N_U).
    """
    if len(small) != cfg.n_users:
        raise StructuralError(
            f"expected {cfg.n_users} per-user matrices, got {len(small)}")
    per_user = []
    for k, h in enumerate(small):
        h = np.asarray(h)
        if h.shape != (cfg.n_rx_total, cfg.antennas_per_user):
            raise StructuralError(
                f"user {k}: expected shape {(cfg.n_rx_total, cfg.antennas_per_user)}, got {h.shape}")
        per_user.append(gain_diagonal(cfg, large, k)[:, None] * h)
    return ChannelRealization(per_user=per_user, large=large,
                              stacked=np.hstack(per_user))


def draw_channel(cfg: SystemConfig, small_rngs, large_rng) -> ChannelRealization:
    """Full channel draw: large-scale once, small-scale per user."""
    large = draw_large_scale(cfg, large_rng)
    small = [draw_small_scale(cfg, cfg.n_rx_total, r) for r in small_rngs]
    return compose_channel(cfg, small, large)


def estimate_mean_gamma_sq(cfg: SystemConfig, n_draws: int,
                           rng: np.random.Generator):
    """Monte Carlo estimate of E[gamma^2] with its standard error.

    The large-scale coefficients are i.i.d. across (user, group) pairs, so
    the estimate samples the marginal distribution directly.
    """
    if n_draws < 1000:
        raise ParameterError(f"n_draws must be >= 1000, got {n_draws}")
    grid = _distance_grid(cfg.distance_range)
    d = grid[rng.integers(0, len(grid), size=n_draws)]
    lo, hi = cfg.path_gain_range
    link = lo + (hi - lo) * rng.random(size=n_draws)
    v = rng.standard_normal(n_draws)
    gamma_sq = (link / d ** cfg.path_loss_exp) * 10.0 ** (cfg.shadow_spread_db * v / 5.0)
    mean = float(np.mean(gamma_sq))
    stderr = float(np.std(gamma_sq, ddof=1) / np.sqrt(n_draws))
    return mean, stderr


def snr_to_noise_variance(snr_db: float, cfg: SystemConfig, code_rate: float,
                          bits_per_symbol: int, mean_gamma_sq: float) -> float:
    """Noise variance realizing a target SNR.

    The SNR definition normalizes the total mean received symbol energy by
    the noise energy per coded bit:

        SNR = K * N_U * sigma_s^2 * E[gamma^2] / (R * C * sigma_n^2)

    so ``sigma_n^2 = K * N_U * sigma_s^2 * E[gamma^2] / (R * C * 10**(SNR/10))``.
    """
    if code_rate <= 0.0 or code_rate > 1.0:
        raise ParameterError(f"code_rate must lie in (0, 1], got {code_rate}")
    if bits_per_symbol < 1:
        raise ParameterError("bits_per_symbol must be >= 1")
    if mean_gamma_sq <= 0.0:
        raise ParameterError("mean_gamma_sq must be > 0")
    signal = cfg.n_streams * cfg.symbol_power * mean_gamma_sq
    return signal / (code_rate * bits_per_symbol * 10.0 ** (snr_db / 10.0))
