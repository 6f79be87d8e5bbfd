"""Multiuser detection: linear filters, SIC, multi-branch SIC, decision feedback.

All detectors accept a received block ``r`` of shape (N_A,) for a single
symbol vector or (N_A, T) for a batch sharing one channel realization; the
batch form is what the Monte Carlo harness uses, since filters and
orderings depend only on the channel.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParameterError, SingularMatrixError, StructuralError
from .txchain import qpsk_constellation, qpsk_slice_labels

LINEAR_DESIGNS = ("rmf", "zf", "mmse")
ORDERING_CRITERIA = ("norm", "snr", "sinr", "exhaustive")
ML_CANDIDATE_GUARD = 10 ** 6
EXHAUSTIVE_STREAM_GUARD = 6


@dataclass
class ReceiveFilterSet:
    """Receive filter bank W (N_A, M); estimates are ``W.conj().T @ r``."""

    design: str
    weights: np.ndarray


@dataclass
class OrderingPattern:
    """Detection order for successive cancellation (first entry detected first)."""

    criterion: str
    permutation: np.ndarray


@dataclass
class DetectorOutput:
    """Hard decisions plus any branch bookkeeping a detector produced.

    ``labels`` carries constellation indices with the same trailing shape as
    the input block; ``symbols`` the corresponding points in natural stream
    order.  Multi-branch detectors also report per-branch Euclidean
    distances and the selected branch per symbol vector.
    """

    labels: np.ndarray
    symbols: np.ndarray
    branch_distances: np.ndarray = None
    selected_branch: np.ndarray = None


def _as_block(r, n_rx):
    r = np.asarray(r, dtype=complex)
    if r.ndim == 1:
        if r.shape[0] != n_rx:
            raise StructuralError(f"received vector has length {r.shape[0]}, expected {n_rx}")
        return r[:, None], True
    if r.ndim != 2 or r.shape[0] != n_rx:
        raise StructuralError(f"received block shape {r.shape} does not match {n_rx} antennas")
    return r, False


def compute_receive_filter(chan: np.ndarray, symbol_power: float, noise_var: float,
                           design: str) -> ReceiveFilterSet:
    """Linear receive filter bank for the stacked channel.

    rmf   W = G
    zf    W = G (G^H G)^{-1}
    mmse  W = G (G^H G + (sigma_n^2 / sigma_s^2) I)^{-1}
    """
    chan = np.asarray(chan, dtype=complex)
    if chan.ndim != 2:
        raise StructuralError(f"channel must be 2-D, got shape {chan.shape}")
    if design not in LINEAR_DESIGNS:
        raise ParameterError(f"unknown filter design {design!r}")
    if symbol_power <= 0.0:
        raise ParameterError("symbol_power must be > 0")
    if design == "rmf":
        return ReceiveFilterSet(design, chan.copy())
    gram = chan.conj().T @ chan
    if design == "zf":
        if np.linalg.matrix_rank(chan) < chan.shape[1]:
            raise SingularMatrixError("zf filter: channel is rank deficient")
        inv = np.linalg.inv(gram)
    else:
        if noise_var <= 0.0:
            raise ParameterError("mmse filter requires noise_var > 0")
        inv = np.linalg.inv(gram + (noise_var / symbol_power) * np.eye(gram.shape[0]))
    return ReceiveFilterSet(design, chan @ inv)


def linear_detect(filters: ReceiveFilterSet, r, constellation=None) -> DetectorOutput:
    """Filter, then slice each stream independently."""
    w = filters.weights if isinstance(filters, ReceiveFilterSet) else np.asarray(filters)
    block, single = _as_block(r, w.shape[0])
    if constellation is None:
        constellation = qpsk_constellation()
    soft = w.conj().T @ block
    labels = qpsk_slice_labels(soft)
    symbols = constellation[labels]
    if single:
        labels, symbols = labels[:, 0], symbols[:, 0]
    return DetectorOutput(labels=labels, symbols=symbols)


def _stream_keys(chan, symbol_power, noise_var, criterion):
    norms_sq = np.sum(np.abs(chan) ** 2, axis=0)
    if criterion == "norm":
        return norms_sq
    if criterion == "snr":
        if noise_var <= 0.0:
            raise ParameterError("snr ordering requires noise_var > 0")
        return symbol_power * norms_sq / noise_var
    # one-shot output SINR under the initial MMSE filter bank
    w = compute_receive_filter(chan, symbol_power, noise_var, "mmse").weights
    cross = w.conj().T @ chan  # (M, M): row j = responses of filter j
    sig = np.abs(np.diagonal(cross)) ** 2
    interf = np.sum(np.abs(cross) ** 2, axis=1) - sig
    noise = noise_var * np.sum(np.abs(w) ** 2, axis=0)
    return symbol_power * sig / (symbol_power * interf + noise)


def compute_ordering(chan: np.ndarray, symbol_power: float, noise_var: float,
                     criterion: str = "norm", r=None,
                     filter_design: str = "mmse") -> OrderingPattern:
    """Detection order over streams (descending key, ties by stream index).

    ``exhaustive`` enumerates every permutation, runs SIC on the given
    single received vector and keeps the order with the smallest final
    Euclidean distance; it is an oracle for small stream counts only.
    """
    chan = np.asarray(chan, dtype=complex)
    m = chan.shape[1]
    if criterion not in ORDERING_CRITERIA:
        raise ParameterError(f"unknown ordering criterion {criterion!r}")
    if criterion == "exhaustive":
        if m > EXHAUSTIVE_STREAM_GUARD:
            raise CapacityError(
                f"exhaustive ordering limited to {EXHAUSTIVE_STREAM_GUARD} streams, got {m}")
        if r is None:
            raise ParameterError("exhaustive ordering needs the received vector")
        r = np.asarray(r, dtype=complex)
        if r.ndim != 1:
            raise ParameterError("exhaustive ordering operates on a single received vector")
        best, best_perm = None, None
        for perm in itertools.permutations(range(m)):
            order = np.array(perm)
            out = sic_detect(chan, r, order, filter_design, symbol_power, noise_var)
            dist = np.linalg.norm(r - chan @ out.symbols)
            if best is None or dist < best - 1e-15:
                best, best_perm = dist, order
        return OrderingPattern("exhaustive", best_perm)
    keys = _stream_keys(chan, symbol_power, noise_var, criterion)
    perm = np.argsort(-keys, kind="stable")
    return OrderingPattern(criterion, perm)


def _resolve_order(ordering, m):
    perm = ordering.permutation if isinstance(ordering, OrderingPattern) else np.asarray(ordering)
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(m)):
        raise StructuralError(f"ordering {perm} is not a permutation of {m} streams")
    return perm


def sic_detect(chan: np.ndarray, r, ordering, filter_design: str = "mmse",
               symbol_power: float = 1.0, noise_var: float = 1.0,
               constellation=None) -> DetectorOutput:
    """Successive interference cancellation with per-stage refiltering.

    At every stage the filter for the current stream is recomputed from the
    deflated channel holding only the not-yet-detected columns, the stream
    is sliced, and its reconstructed contribution is subtracted.
    """
    chan = np.asarray(chan, dtype=complex)
    block, single = _as_block(r, chan.shape[0])
    m = chan.shape[1]
    perm = _resolve_order(ordering, m)
    if constellation is None:
        constellation = qpsk_constellation(symbol_power)
    labels = np.empty((m, block.shape[1]), dtype=np.int64)
    residual = block.copy()
    for stage in range(m):
        remaining = perm[stage:]
        filt = compute_receive_filter(chan[:, remaining], symbol_power, noise_var,
                                      filter_design)
        w = filt.weights[:, 0]  # column of the stream detected now
        soft = w.conj() @ residual
        lab = qpsk_slice_labels(soft)
        labels[perm[stage]] = lab
        residual -= np.outer(chan[:, perm[stage]], constellation[lab])
    symbols = constellation[labels]
    if single:
        labels, symbols = labels[:, 0], symbols[:, 0]
    return DetectorOutput(labels=labels, symbols=symbols)


def _branch_orderings(base: np.ndarray, n_branches: int, exhaustive: bool):
    m = base.size
    if exhaustive:
        if m > EXHAUSTIVE_STREAM_GUARD:
            raise CapacityError(
                f"exhaustive branch set limited to {EXHAUSTIVE_STREAM_GUARD} streams, got {m}")
        return [np.array(p) for p in itertools.permutations(range(m))]
    if not 1 <= n_branches <= m:
        raise ParameterError(
            f"branch count must lie in [1, {m}] for circularly shifted orderings, got {n_branches}")
    return [np.roll(base, -shift) for shift in range(n_branches)]


def mb_sic_detect(chan: np.ndarray, r, n_branches: int = 4,
                  filter_design: str = "mmse", symbol_power: float = 1.0,
                  noise_var: float = 1.0, base_criterion: str = "norm",
                  constellation=None, exhaustive_branches: bool = False) -> DetectorOutput:
    """Multi-branch SIC: parallel SIC branches under shifted orderings.

    Branch 1 uses the base ordering; branch l applies a circular left shift
    by l - 1.  Every branch produces a full decision vector and the branch
    with the smallest Euclidean distance ``||r - G s_l||`` wins, per
    received vector.  ``exhaustive_branches`` replaces the shifts with all
    stream permutations (small stream counts only).
    """
    chan = np.asarray(chan, dtype=complex)
    block, single = _as_block(r, chan.shape[0])
    if constellation is None:
        constellation = qpsk_constellation(symbol_power)
    base = compute_ordering(chan, symbol_power, noise_var, base_criterion).permutation
    orders = _branch_orderings(base, n_branches, exhaustive_branches)
    n_vec = block.shape[1]
    all_labels = np.empty((len(orders), chan.shape[1], n_vec), dtype=np.int64)
    dists = np.empty((len(orders), n_vec))
    for li, order in enumerate(orders):
        out = sic_detect(chan, block, order, filter_design, symbol_power,
                         noise_var, constellation)
        all_labels[li] = out.labels
        dists[li] = np.linalg.norm(block - chan @ out.symbols, axis=0)
    selected = np.argmin(dists, axis=0)
    labels = all_labels[selected, :, np.arange(n_vec)].T
    symbols = constellation[labels]
    if single:
        return DetectorOutput(labels=labels[:, 0], symbols=symbols[:, 0],
                              branch_distances=dists[:, 0],
                              selected_branch=int(selected[0]))
    return DetectorOutput(labels=labels, symbols=symbols,
                          branch_distances=dists, selected_branch=selected)


def df_detect(chan: np.ndarray, r, mode: str = "s-df",
              filter_design: str = "mmse", symbol_power: float = 1.0,
              noise_var: float = 1.0, constellation=None) -> DetectorOutput:
    """Decision feedback detection seeded by a linear first pass.

    The feedback matrix is ``W^H G`` with the diagonal zeroed (parallel
    mode, "p-df") or with only the strictly lower triangle kept
    (successive mode, "s-df"), so exactly the cross-stream response of the
    linear stage is cancelled using the first-pass decisions.
    """
    if mode not in ("s-df", "p-df"):
        raise ParameterError(f"unknown decision-feedback mode {mode!r}")
    chan = np.asarray(chan, dtype=complex)
    block, single = _as_block(r, chan.shape[0])
    if constellation is None:
        constellation = qpsk_constellation(symbol_power)
    w = compute_receive_filter(chan, symbol_power, noise_var, filter_design).weights
    soft = w.conj().T @ block
    first = constellation[qpsk_slice_labels(soft)]
    feedback = w.conj().T @ chan
    if mode == "p-df":
        np.fill_diagonal(feedback, 0.0)
    else:
        feedback = np.tril(feedback, k=-1)
    labels = qpsk_slice_labels(soft - feedback @ first)
    symbols = constellation[labels]
    if single:
        labels, symbols = labels[:, 0], symbols[:, 0]
    return DetectorOutput(labels=labels, symbols=symbols)


def ml_detect_oracle(chan: np.ndarray, r, constellation=None,
                     chunk: int = 512) -> DetectorOutput:
    """Exhaustive maximum-likelihood detection (reference oracle).

    Enumerates every candidate stream vector in lexicographic label order
    and returns the minimum-distance one (first hit wins ties).  Guarded to
    ``ML_CANDIDATE_GUARD`` candidates.
    """
    chan = np.asarray(chan, dtype=complex)
    block, single = _as_block(r, chan.shape[0])
    if constellation is None:
        constellation = qpsk_constellation()
    constellation = np.asarray(constellation)
    m = chan.shape[1]
    n_cand = len(constellation) ** m
    if n_cand > ML_CANDIDATE_GUARD:
        raise CapacityError(
            f"ML enumeration of {n_cand} candidates exceeds guard {ML_CANDIDATE_GUARD}")
    # first stream varies slowest -> row i of cand_labels is lexicographic
    cand_labels = np.array(np.unravel_index(np.arange(n_cand),
                                            (len(constellation),) * m))
    cand_points = chan @ constellation[cand_labels]  # (N_A, n_cand)
    cand_energy = np.sum(np.abs(cand_points) ** 2, axis=0)
    n_vec = block.shape[1]
    best = np.empty(n_vec, dtype=np.int64)
    for start in range(0, n_vec, chunk):
        seg = block[:, start:start + chunk]
        # ||r - c||^2 = ||r||^2 - 2 Re(c^H r) + ||c||^2; drop the ||r||^2 term
        score = cand_energy[:, None] - 2.0 * (cand_points.conj().T @ seg).real
        best[start:start + chunk] = np.argmin(score, axis=0)
    labels = cand_labels[:, best]
    symbols = constellation[labels]
    if single:
        labels, symbols = labels[:, 0], symbols[:, 0]
    return DetectorOutput(labels=labels, symbols=symbols)
