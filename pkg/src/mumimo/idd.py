"""Iterative detection and decoding for coded uplink frames.

The receiver loops a soft-input soft-output MMSE detector with parallel
soft interference cancellation against per-stream BCJR decoders.  LLRs
follow the convention ``lambda = log P(b = 0) / P(b = 1)`` (bit 0 is the
positive amplitude), so ``P(b = 0) = 1 / (1 + exp(-lambda))``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (EstimationQualityWarning, NumericalError, ParameterError,
                     StructuralError)
from .txchain import (LLR_CLIP, TrellisSpec, deinterleave, interleave,
                      qpsk_constellation, trellis_tables)

_VAR_FLOOR = 1e-30


def soft_symbol_stats(priors: np.ndarray, constellation=None,
                      symbol_power: float = 1.0):
    """Per-symbol soft mean and variance from bitwise prior LLRs.

    ``priors`` has shape (..., 2) holding the LLR of each QPSK label bit.
    Returns ``(means, variances)`` where the mean is the prior expectation
    of the constellation point and the variance its spread around the mean.
    Zero LLRs give mean 0 and variance equal to the symbol energy.
    """
    priors = np.asarray(priors, dtype=float)
    if priors.shape[-1] != 2:
        raise StructuralError("QPSK priors need a trailing axis of 2 bit LLRs")
    if constellation is None:
        constellation = qpsk_constellation(symbol_power)
    lam = np.clip(priors, -LLR_CLIP, LLR_CLIP)
    p_zero = 1.0 / (1.0 + np.exp(-lam))  # P(bit = 0) per label bit
    labels = np.arange(len(constellation))
    bits = np.stack([(labels >> 1) & 1, labels & 1], axis=-1)  # (4, 2)
    # P(point) = prod over bits of the matching bit probability
    probs = np.where(bits[:, 0] == 0, p_zero[..., :1], 1.0 - p_zero[..., :1]) \
        * np.where(bits[:, 1] == 0, p_zero[..., 1:], 1.0 - p_zero[..., 1:])
    means = probs @ constellation
    spread = np.abs(constellation[None, :] - means[..., None]) ** 2
    variances = np.einsum('...m,...m->...', probs, spread)
    return means, variances


def soft_mmse_sic_detect(r_block: np.ndarray, chan: np.ndarray,
                         means: np.ndarray, variances: np.ndarray,
                         noise_var: float, symbol_power: float = 1.0):
    """Soft MMSE detection with parallel soft interference cancellation.

    For each stream j the soft means of all other streams are subtracted
    and an MMSE filter built against the residual covariance
    ``sum_{m != j} v_m g_m g_m^H + noise_var I`` is applied.  Returns the
    filter outputs ``z`` (M, T) together with the model-implied effective
    amplitude and residual variance per (stream, symbol) — the statistics
    of the scalar model ``z = V s + xi``.
    """
    chan = np.asarray(chan, dtype=complex)
    r_block = np.asarray(r_block, dtype=complex)
    means = np.asarray(means, dtype=complex)
    variances = np.asarray(variances, dtype=float)
    n_rx, m = chan.shape
    if r_block.shape[0] != n_rx:
        raise StructuralError("received block does not match channel row count")
    if means.shape != variances.shape or means.shape[0] != m:
        raise StructuralError("soft statistics must be (M, T) matching the channel")
    if noise_var <= 0.0:
        raise ParameterError("soft MMSE detection requires noise_var > 0")

    residual = r_block - chan @ means  # (N_A, T)
    uniform = bool(np.all(variances == variances[:, :1]))
    try:
        if uniform:
            cov = (chan * variances[:, 0]) @ chan.conj().T + noise_var * np.eye(n_rx)
            cov_inv = np.linalg.inv(cov)
            a = cov_inv @ chan  # (N_A, M)
            q = np.einsum('am,am->m', chan.conj(), a).real  # g^H C^-1 g
            u = a.conj().T @ residual + means * q[:, None]
            q = np.broadcast_to(q[:, None], means.shape)
        else:
            cov = np.einsum('am,mt,bm->tab', chan, variances, chan.conj())
            cov += noise_var * np.eye(n_rx)
            cov_inv = np.linalg.inv(cov)
            a = np.einsum('tab,bm->tam', cov_inv, chan)
            q = np.einsum('am,tam->tm', chan.conj(), a).real.T  # (M, T)
            u = np.einsum('tam,at->mt', a.conj(), residual) + means * q
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"soft detection covariance is singular: {exc}") from None

    denom = 1.0 + (symbol_power - variances) * q
    z = symbol_power * u / denom
    v_model = symbol_power * q / denom
    xi_model = np.maximum(symbol_power ** 2 * q * (1.0 - variances * q) / denom ** 2,
                          _VAR_FLOOR)
    return z, v_model, xi_model


def estimate_effective_channel(z: np.ndarray, symbols: np.ndarray,
                               symbol_power: float = 1.0):
    """Sample-average effective amplitude and residual variance per stream.

    Fits the scalar model ``z = V s + xi`` against known symbols:
    ``V = Re(mean(conj(s) z)) / sigma_s^2`` and the residual variance is the
    mean squared deviation from that fit.  Averages run over the last axis.
    """
    z = np.asarray(z, dtype=complex)
    symbols = np.asarray(symbols, dtype=complex)
    if z.shape != symbols.shape:
        raise StructuralError("filter outputs and symbols must share a shape")
    n = z.shape[-1]
    if n == 0:
        raise ParameterError("cannot estimate the effective channel from zero samples")
    if n < 32:
        warnings.warn(f"effective-channel estimate from only {n} samples",
                      EstimationQualityWarning, stacklevel=2)
    v_hat = np.mean(symbols.conj() * z, axis=-1).real / symbol_power
    resid = z - v_hat[..., None] * symbols
    xi_var = np.mean(np.abs(resid) ** 2, axis=-1)
    return v_hat, xi_var


def extrinsic_llr(z: np.ndarray, v_hat, xi_var, constellation=None,
                  symbol_power: float = 1.0, priors=None,
                  max_log: bool = False, clip: float = LLR_CLIP) -> np.ndarray:
    """Detector-side bitwise LLRs from the Gaussian scalar model.

    For each bit the candidate constellation points are weighted by
    ``exp(-|z - V a|^2 / (2 sigma_xi^2))`` (plus the other bits' priors if
    given), reduced by log-sum-exp over the bit-0 and bit-1 subsets and
    differenced; for Gray QPSK the prior weighting on the other bit has no
    effect.  ``max_log = True`` substitutes a max for the log-sum-exp.
    Output is clipped to ``+/- clip``.
    """
    z = np.asarray(z, dtype=complex)
    if constellation is None:
        constellation = qpsk_constellation(symbol_power)
    constellation = np.asarray(constellation)
    if np.any(np.asarray(xi_var) < 0):
        raise ParameterError("residual variance must be non-negative")
    v = np.broadcast_to(np.asarray(v_hat, dtype=float), z.shape)
    s2 = np.broadcast_to(np.maximum(np.asarray(xi_var, dtype=float), _VAR_FLOOR),
                         z.shape)
    diff = z[..., None] - v[..., None] * constellation  # broadcast over points
    metric = -np.abs(diff) ** 2 / (2.0 * s2[..., None])
    labels = np.arange(len(constellation))
    bit_table = np.stack([(labels >> 1) & 1, labels & 1], axis=0)  # (2, 4)
    if priors is not None:
        priors = np.clip(np.asarray(priors, dtype=float), -LLR_CLIP, LLR_CLIP)
        # total prior weight per point; each bit's own prior is removed after
        # the reduction, leaving only the other bits' contribution
        sign = 1.0 - 2.0 * bit_table  # bit 0 -> +1
        metric = metric + 0.5 * np.einsum('...c,cm->...m', priors, sign)
    out = np.empty(z.shape + (2,))
    for c in range(2):
        zero = metric[..., bit_table[c] == 0]
        one = metric[..., bit_table[c] == 1]
        if max_log:
            out[..., c] = zero.max(axis=-1) - one.max(axis=-1)
        else:
            out[..., c] = (np.logaddexp.reduce(zero, axis=-1)
                           - np.logaddexp.reduce(one, axis=-1))
        if priors is not None:
            out[..., c] -= priors[..., c]
    return np.clip(out, -clip, clip)


# -- BCJR decoding ----------------------------------------------------------

@dataclass
class BcjrResult:
    """Outputs of one BCJR pass (arrays are per stream when batched)."""

    extrinsic: np.ndarray   # coded-bit extrinsic LLRs, same shape as the input
    info_llrs: np.ndarray   # a-posteriori LLRs of the information bits
    info_bits: np.ndarray   # hard information-bit decisions


def bcjr_decode(channel_llrs: np.ndarray,
                trellis: TrellisSpec = TrellisSpec()) -> BcjrResult:
    """Exact log-domain BCJR for a zero-tail terminated convolutional code.

    ``channel_llrs`` holds one LLR per coded bit, shape (n_coded,) or
    (streams, n_coded) with ``n_coded = n_out * (k_info + memory)``.  The
    forward/backward boundary conditions pin both endpoint states at zero,
    matching the tail-bit termination.  Extrinsic LLRs are the coded-bit
    posteriors minus the inputs; information-bit LLRs exclude the tail.
    """
    lam = np.asarray(channel_llrs, dtype=float)
    squeeze = lam.ndim == 1
    lam = np.atleast_2d(lam)
    n_out = trellis.n_out
    if lam.shape[1] % n_out != 0:
        raise StructuralError(
            f"coded length {lam.shape[1]} is not a multiple of {n_out}")
    n_steps = lam.shape[1] // n_out
    if n_steps <= trellis.memory:
        raise StructuralError("coded block is shorter than the code tail")
    batch = lam.shape[0]
    n_states = trellis.n_states
    next_state, out_bits = trellis_tables(trellis)
    sign = (1.0 - 2.0 * out_bits).astype(float)  # (S, 2, n_out), bit 0 -> +1
    lam_steps = lam.reshape(batch, n_steps, n_out)

    # branch metrics gamma[t] for all (state, input) pairs at once
    gammas = 0.5 * np.einsum('btc,suc->btsu', lam_steps, sign)

    neg_inf = -np.inf
    alphas = np.full((batch, n_steps + 1, n_states), neg_inf)
    alphas[:, 0, 0] = 0.0
    # predecessors: state s' is reached from pred_state[s', :] under input s'&1
    pred_state = np.empty((n_states, 2), dtype=np.int64)
    pred_input = np.empty((n_states, 2), dtype=np.int64)
    for sp in range(n_states):
        preds = [(s, u) for s in range(n_states) for u in (0, 1)
                 if next_state[s, u] == sp]
        pred_state[sp] = [p[0] for p in preds]
        pred_input[sp] = [p[1] for p in preds]
    for t in range(n_steps):
        cand = alphas[:, t, pred_state] + gammas[:, t, pred_state, pred_input]
        step = np.logaddexp(cand[..., 0], cand[..., 1])
        # normalize to keep the recursion bounded; differences are invariant
        alphas[:, t + 1] = step - step.max(axis=1, keepdims=True)

    beta = np.full((batch, n_states), neg_inf)
    beta[:, 0] = 0.0
    extrinsic = np.empty_like(lam_steps)
    info_llrs = np.empty((batch, n_steps))
    flat_next = next_state.reshape(-1)
    out_flat = out_bits.reshape(-1, n_out)  # (S*2, n_out)
    input_flat = np.tile([0, 1], n_states)
    for t in range(n_steps - 1, -1, -1):
        # joint metric of every branch (s, u) at time t
        joint = (alphas[:, t, :, None] + gammas[:, t]
                 + beta[:, flat_next].reshape(batch, n_states, 2))
        jf = joint.reshape(batch, -1)
        for c in range(n_out):
            zero = np.logaddexp.reduce(jf[:, out_flat[:, c] == 0], axis=1)
            one = np.logaddexp.reduce(jf[:, out_flat[:, c] == 1], axis=1)
            extrinsic[:, t, c] = zero - one - lam_steps[:, t, c]
        info_llrs[:, t] = (np.logaddexp.reduce(jf[:, input_flat == 0], axis=1)
                           - np.logaddexp.reduce(jf[:, input_flat == 1], axis=1))
        cand = gammas[:, t] + beta[:, flat_next].reshape(batch, n_states, 2)
        step = np.logaddexp(cand[..., 0], cand[..., 1])
        beta = step - step.max(axis=1, keepdims=True)

    k_info = n_steps - trellis.memory
    info = info_llrs[:, :k_info]
    bits = (info < 0).astype(np.int8)  # ties resolve toward bit 0
    ext = extrinsic.reshape(batch, -1)
    if squeeze:
        return BcjrResult(ext[0], info[0], bits[0])
    return BcjrResult(ext, info, bits)


# -- full receiver ----------------------------------------------------------

@dataclass
class IddResult:
    """Decoded bits after the final iteration plus per-iteration snapshots."""

    info_bits: np.ndarray
    per_iteration_bits: list
    v_hat: np.ndarray
    xi_var: np.ndarray


def idd_receive(r_block: np.ndarray, chan: np.ndarray, noise_var: float,
                perms: np.ndarray, trellis: TrellisSpec = TrellisSpec(),
                symbol_power: float = 1.0, n_outer: int = 4,
                max_log: bool = False, known_symbols=None) -> IddResult:
    """Iterative detection and decoding of one coded frame.

    Each outer iteration forms soft symbols from the decoders' extrinsic
    LLRs, runs the soft MMSE detector, fits the scalar model ``z = V s +
    xi`` per stream over the whole packet (against ``known_symbols`` if
    given, otherwise from the detector's own filter statistics), converts
    the outputs to extrinsic bit LLRs, deinterleaves them into the
    decoders, and feeds the decoder extrinsics back as the next priors.
    """
    if n_outer < 1:
        raise ParameterError("n_outer must be >= 1")
    chan = np.asarray(chan, dtype=complex)
    r_block = np.asarray(r_block, dtype=complex)
    perms = np.asarray(perms)
    m = chan.shape[1]
    n_sym = r_block.shape[1]
    if perms.shape[0] != m or perms.shape[1] != 2 * n_sym:
        raise StructuralError("permutations must be (M, 2 * n_symbols) for QPSK")
    constellation = qpsk_constellation(symbol_power)

    priors = np.zeros((m, n_sym, 2))
    per_iter = []
    info_bits = None
    v_hat = xi_var = None
    for _ in range(n_outer):
        means, variances = soft_symbol_stats(priors, constellation, symbol_power)
        z, v_model, xi_model = soft_mmse_sic_detect(
            r_block, chan, means, variances, noise_var, symbol_power)
        if known_symbols is not None:
            v_hat, xi_var = estimate_effective_channel(z, known_symbols, symbol_power)
        else:
            v_hat = v_model.mean(axis=1)
            xi_var = xi_model.mean(axis=1)
        lam1 = extrinsic_llr(z, v_hat[:, None], xi_var[:, None], constellation,
                             symbol_power, max_log=max_log)
        lam1_flat = lam1.reshape(m, -1)
        dec_in = np.stack([deinterleave(row, p) for row, p in zip(lam1_flat, perms)])
        decoded = bcjr_decode(dec_in, trellis)
        feedback = np.clip(decoded.extrinsic, -LLR_CLIP, LLR_CLIP)
        priors = np.stack([interleave(row, p) for row, p in
                           zip(feedback, perms)]).reshape(m, n_sym, 2)
        info_bits = decoded.info_bits
        per_iter.append(info_bits)
    return IddResult(info_bits=info_bits, per_iteration_bits=per_iter,
                     v_hat=v_hat, xi_var=xi_var)
