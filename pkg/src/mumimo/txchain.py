"""Per-user transmit chain: convolutional coding, interleaving, QPSK framing.

Coded streams use a rate-1/2 feedforward convolutional code (generators 7
and 5 octal, constraint length 3) terminated with zero tail bits, a random
per-stream bit interleaver and Gray-mapped QPSK.  Uncoded streams map raw
bits straight onto symbols.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import SystemConfig
from .errors import ParameterError, StructuralError

LLR_CLIP = 50.0  # feedback log-likelihood ratios are clipped to +/- this


@dataclass(frozen=True)
class TrellisSpec:
    """Feedforward convolutional code description (octal generators)."""

    constraint_length: int = 3
    generators: tuple = (0o7, 0o5)

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def rate(self) -> float:
        return 1.0 / self.n_out


@lru_cache(maxsize=8)
def trellis_tables(trellis: TrellisSpec):
    """(next_state, out_bits) tables indexed by [state, input].

    ``out_bits`` has shape (n_states, 2, n_out).  State bits hold the most
    recent input in the least significant position.
    """
    m = trellis.memory
    n_states = trellis.n_states
    next_state = np.zeros((n_states, 2), dtype=np.int64)
    out_bits = np.zeros((n_states, 2, trellis.n_out), dtype=np.int8)
    for s in range(n_states):
        reg_state = [(s >> t) & 1 for t in range(m)]  # [b(i-1), ..., b(i-m)]
        for u in (0, 1):
            reg = [u] + reg_state
            for gi, gen in enumerate(trellis.generators):
                acc = 0
                for t in range(trellis.constraint_length):
                    if (gen >> (trellis.constraint_length - 1 - t)) & 1:
                        acc ^= reg[t]
                out_bits[s, u, gi] = acc
            next_state[s, u] = (u + (s << 1)) & (n_states - 1)
    return next_state, out_bits


def conv_encode(bits, trellis: TrellisSpec = TrellisSpec()) -> np.ndarray:
    """Encode a bit vector, appending zero tail bits to flush the register.

    Output length is ``n_out * (len(bits) + memory)``; an empty input still
    produces the tail.
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ParameterError("input bits must be 0/1")
    next_state, out_bits = trellis_tables(trellis)
    seq = np.concatenate([bits, np.zeros(trellis.memory, dtype=np.int64)])
    out = np.empty((seq.size, trellis.n_out), dtype=np.int8)
    state = 0
    for i, u in enumerate(seq):
        out[i] = out_bits[state, u]
        state = next_state[state, u]
    return out.ravel()


def interleave(x, perm) -> np.ndarray:
    """Reorder ``x`` by ``perm``: out[i] = x[perm[i]]."""
    x = np.asarray(x)
    perm = np.asarray(perm)
    if x.shape[-1] != perm.size:
        raise StructuralError(
            f"length mismatch: data {x.shape[-1]} vs permutation {perm.size}")
    return x[..., perm]


def deinterleave(x, perm) -> np.ndarray:
    """Invert :func:`interleave` for the same permutation."""
    x = np.asarray(x)
    perm = np.asarray(perm)
    if x.shape[-1] != perm.size:
        raise StructuralError(
            f"length mismatch: data {x.shape[-1]} vs permutation {perm.size}")
    out = np.empty_like(x)
    out[..., perm] = x
    return out


# -- QPSK -----------------------------------------------------------------

def qpsk_constellation(symbol_power: float = 1.0) -> np.ndarray:
    """Gray QPSK points indexed by the 2-bit label (b0 b1).

    b0 selects the real sign, b1 the imaginary sign; bit 0 maps to +.
    Every point has energy ``symbol_power``.
    """
    if symbol_power <= 0.0:
        raise ParameterError("symbol_power must be > 0")
    amp = np.sqrt(symbol_power / 2.0)
    labels = np.arange(4)
    re = 1.0 - 2.0 * (labels >> 1)
    im = 1.0 - 2.0 * (labels & 1)
    return amp * (re + 1j * im)


def qpsk_map(bits, symbol_power: float = 1.0) -> np.ndarray:
    """Map pairs of bits onto QPSK symbols (last axis holds the bits)."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % 2 != 0:
        raise StructuralError("bit count must be even for QPSK")
    pairs = bits.reshape(bits.shape[:-1] + (-1, 2))
    labels = (pairs[..., 0] << 1) | pairs[..., 1]
    return qpsk_constellation(symbol_power)[labels]


def qpsk_slice_labels(symbols) -> np.ndarray:
    """Hard decisions as 2-bit labels; boundary ties resolve toward bit 0."""
    symbols = np.asarray(symbols)
    b0 = (symbols.real < 0).astype(np.int64)
    b1 = (symbols.imag < 0).astype(np.int64)
    return (b0 << 1) | b1


def qpsk_slice(symbols) -> np.ndarray:
    """Hard decisions as bits, one extra trailing axis of length 2."""
    labels = qpsk_slice_labels(symbols)
    return labels_to_bits(labels)


def labels_to_bits(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return np.stack([(labels >> 1) & 1, labels & 1], axis=-1).astype(np.int8)


# -- frame assembly ---------------------------------------------------------

@dataclass
class SymbolFrame:
    """Everything one trial transmits, per stream.

    ``data_symbols`` has shape (M, P) for M = K * N_U streams; pilots, if
    any, are prepended on the air interface (see :meth:`symbols`).
    ``channel_bits`` holds the bits in transmitted symbol order, which for
    coded frames is the interleaved code stream.
    """

    info_bits: np.ndarray
    channel_bits: np.ndarray
    pilots: np.ndarray
    data_symbols: np.ndarray
    symbol_power: float
    coded: bool = False
    coded_bits: np.ndarray = None
    perms: np.ndarray = None
    trellis: TrellisSpec = field(default_factory=TrellisSpec)

    @property
    def n_pilots(self) -> int:
        return self.pilots.shape[1]

    @property
    def n_data(self) -> int:
        return self.data_symbols.shape[1]

    def symbols(self) -> np.ndarray:
        """Pilot symbols followed by data symbols, shape (M, N_p + P)."""
        return np.concatenate([self.pilots, self.data_symbols], axis=1)


def assemble_frame(cfg: SystemConfig, payload_bits, pilot_len: int,
                   rng: np.random.Generator, coded: bool = False,
                   trellis: TrellisSpec = TrellisSpec()) -> SymbolFrame:
    """Build the transmit frame for all streams.

    Parameters
    ----------
    payload_bits : array (M, n_bits)
        For uncoded frames, the channel bits themselves (n_bits even).  For
        coded frames, the information bits of each stream.
    pilot_len : int
        Number of pseudo-random QPSK pilot symbols per stream, drawn from
        ``rng`` and known at the receiver.
    rng : Generator
        Frame randomness: pilots first, then one interleaver permutation
        per stream (coded frames only).
    """
    payload_bits = np.atleast_2d(np.asarray(payload_bits, dtype=np.int8))
    n_streams = cfg.n_streams
    if payload_bits.shape[0] != n_streams:
        raise StructuralError(
            f"payload has {payload_bits.shape[0]} streams, config expects {n_streams}")
    if pilot_len < 0:
        raise ParameterError("pilot_len must be >= 0")

    pilot_labels = rng.integers(0, 4, size=(n_streams, pilot_len))
    pilots = qpsk_constellation(cfg.symbol_power)[pilot_labels]

    if coded:
        coded_bits = np.stack([conv_encode(row, trellis) for row in payload_bits])
        n_coded = coded_bits.shape[1]
        if n_coded % 2 != 0:
            raise StructuralError("coded stream length must be even for QPSK")
        perms = np.stack([rng.permutation(n_coded) for _ in range(n_streams)])
        channel_bits = np.stack([interleave(cb, p) for cb, p in zip(coded_bits, perms)])
    else:
        if payload_bits.shape[1] % 2 != 0:
            raise StructuralError("uncoded payload length must be even for QPSK")
        coded_bits = None
        perms = None
        channel_bits = payload_bits

    data_symbols = qpsk_map(channel_bits, cfg.symbol_power)
    return SymbolFrame(info_bits=payload_bits, channel_bits=channel_bits,
                       pilots=pilots, data_symbols=data_symbols,
                       symbol_power=cfg.symbol_power, coded=coded,
                       coded_bits=coded_bits, perms=perms, trellis=trellis)


def coded_payload_length(n_data_symbols: int, trellis: TrellisSpec = TrellisSpec(),
                         bits_per_symbol: int = 2) -> int:
    """Information bits per stream that fill ``n_data_symbols`` exactly."""
    total = n_data_symbols * bits_per_symbol
    if total % trellis.n_out != 0:
        raise ParameterError("symbol budget does not fit a whole code block")
    k_info = total // trellis.n_out - trellis.memory
    if k_info < 1:
        raise ParameterError(f"packet of {n_data_symbols} symbols is too short to code")
    return k_info


def channel_transmit(chan: np.ndarray, symbols: np.ndarray, noise_var: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Pass stacked stream symbols through the channel and add CN(0, noise_var).

    ``chan`` is (N_A, M), ``symbols`` (M, T); the result is (N_A, T).
    """
    chan = np.asarray(chan)
    symbols = np.asarray(symbols)
    if chan.shape[1] != symbols.shape[0]:
        raise StructuralError(
            f"channel has {chan.shape[1]} streams, symbols carry {symbols.shape[0]}")
    if noise_var < 0.0:
        raise ParameterError("noise_var must be >= 0")
    clean = chan @ symbols
    if noise_var == 0.0:
        return clean
    scale = np.sqrt(noise_var / 2.0)
    noise = scale * (rng.standard_normal(clean.shape)
                     + 1j * rng.standard_normal(clean.shape))
    return clean + noise
