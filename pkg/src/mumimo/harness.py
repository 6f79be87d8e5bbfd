"""Monte Carlo harness: scenario configuration, trial execution, sweeps, CSV.

A :class:`ScenarioSpec` pins everything a run needs; every random draw
inside a trial comes from a substream keyed on (master seed, SNR index,
trial index, purpose), so trials are pure functions and sweeps reproduce
byte-identically regardless of execution order or worker count.
"""

import concurrent.futures
import hashlib
import time
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .channel import (compose_channel, draw_large_scale, draw_small_scale,
                      estimate_mean_gamma_sq, snr_to_noise_variance)
from .config import SystemConfig
from .detectors import (ML_CANDIDATE_GUARD, compute_ordering,
                        compute_receive_filter, df_detect, linear_detect,
                        mb_sic_detect, ml_detect_oracle, sic_detect)
from .errors import ConfigError, NumericalError
from .estimation import (DEFAULT_DELTA, JioFilterBank, LmsChannelEstimator,
                         ReducedRankFilterBank, RlsChannelEstimator,
                         RlsFilterBank, ls_channel_estimate)
from .idd import idd_receive
from .txchain import (TrellisSpec, assemble_frame, channel_transmit,
                      coded_payload_length, labels_to_bits,
                      qpsk_constellation)

DETECTORS = ("rmf", "zf", "mmse", "sic", "mb-sic", "df-s", "df-p", "ml")
ESTIMATORS = ("perfect", "ls", "rls", "lms", "rr-pc", "rr-krylov", "rr-jio")
CSV_COLUMNS = ("snr_db", "bits", "errors", "ber", "ci_low", "ci_high",
               "detector", "estimator", "seed")

_Z95 = 1.959963984540054
_GAMMA_MOMENT_SEED = 0x5EED
_GAMMA_MOMENT_DRAWS = 200_000


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation campaign: system, receiver chain and sweep control."""

    system: SystemConfig
    detector: str = "mmse"
    ordering: str = "norm"
    branches: int = 4
    filter_design: str = "mmse"
    coded: bool = False
    idd_iterations: int = 4
    idd_max_log: bool = False
    estimator: str = "perfect"
    forgetting: float = 1.0
    step_size: float = 0.05
    rank: int = 5
    pilot_len: int = 0
    packet_symbols: int = 1500
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0)
    packets: int = 100
    seed: int = 1
    out: str = "results.csv"

    def validate(self):
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector {self.detector!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.ordering not in ("norm", "snr", "sinr"):
            raise ConfigError(f"unknown ordering criterion {self.ordering!r}")
        if self.filter_design not in ("zf", "mmse"):
            raise ConfigError(f"unknown filter design {self.filter_design!r}")
        if self.detector == "ml" and 4 ** self.system.n_streams > ML_CANDIDATE_GUARD:
            raise ConfigError(
                f"ml detector would enumerate 4^{self.system.n_streams} candidates")
        if self.coded and self.detector != "mmse":
            raise ConfigError(
                "coded reception runs the soft MMSE detector; set detector = mmse")
        if self.coded and self.estimator.startswith("rr-"):
            raise ConfigError("direct filter estimation does not feed the coded receiver")
        if self.estimator != "perfect" and self.pilot_len < 1:
            raise ConfigError(f"estimator {self.estimator!r} needs pilot_len >= 1")
        if self.packet_symbols < 1:
            raise ConfigError("packet_symbols must be >= 1")
        if self.coded:
            try:
                coded_payload_length(self.packet_symbols)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if not 0.0 < self.forgetting <= 1.0:
            raise ConfigError("lambda must lie in (0, 1]")
        if self.step_size <= 0.0:
            raise ConfigError("mu must be > 0")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if self.estimator.startswith("rr-") and self.rank > self.system.n_rx_total:
            raise ConfigError("rank cannot exceed the number of receive antennas")
        if not self.snr_db:
            raise ConfigError("snr_db must list at least one point")
        if len(set(self.snr_db)) != len(self.snr_db):
            raise ConfigError("snr_db points must be distinct")
        if self.packets < 1:
            raise ConfigError("packets must be >= 1")
        return self


@dataclass
class TrialResult:
    bits: int
    errors: int
    per_iteration_errors: tuple = None


@dataclass
class SweepRow:
    snr_db: float
    bits: int
    errors: int
    ber: float
    ci_low: float
    ci_high: float
    failed: bool = False
    message: str = ""


@dataclass
class SweepResult:
    scenario: ScenarioSpec
    rows: list
    scenario_hash: str
    wall_time_s: float = 0.0

    @property
    def failures(self):
        return {row.snr_db: row.message for row in self.rows if row.failed}


# -- configuration files ------------------------------------------------------

_SYSTEM_KEYS = {
    "n_users": int, "n_bs": int, "n_heads": int, "antennas_per_head": int,
    "antennas_per_user": int, "rho": float, "path_loss_exp": float,
    "shadow_spread_db": float, "path_gain_min": float, "path_gain_max": float,
    "distance_min": float, "distance_max": float, "symbol_power": float,
}

_SCENARIO_KEYS = {
    "detector": str, "ordering": str, "branches": int, "filter_design": str,
    "coded": bool, "idd.iterations": int, "idd.maxlog": bool,
    "estimator": str, "lambda": float, "mu": float, "rank": int,
    "pilot_len": int, "packet_symbols": int, "snr_db": str, "packets": int,
    "seed": int, "out": str,
}

_KEY_TO_FIELD = {
    "idd.iterations": "idd_iterations", "idd.maxlog": "idd_max_log",
    "lambda": "forgetting", "mu": "step_size",
}


def _parse_bool(raw, key):
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: cannot read boolean from {raw!r}")


def parse_snr_spec(raw: str) -> tuple:
    """SNR points from ``a:b:step`` (inclusive) or a comma list."""
    raw = raw.strip()
    try:
        if ":" in raw:
            parts = raw.split(":")
            if len(parts) != 3:
                raise ValueError("expected a:b:step")
            a, b, step = (float(p) for p in parts)
            if step <= 0 or b < a:
                raise ValueError("need step > 0 and b >= a")
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 10) for i in range(n))
        return tuple(float(p) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse SNR specification {raw!r}: {exc}") from None


def parse_config(text: str) -> ScenarioSpec:
    """Parse a flat ``key = value`` scenario file.

    Lines starting with ``#`` (or inline ``#`` suffixes) are comments.
    Unknown keys are rejected with their line number.  ``n_rx_total`` is
    accepted as a cross-check against the geometry keys.
    """
    system_kwargs = {}
    scenario_kwargs = {}
    check_n_rx = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "n_rx_total":
            check_n_rx = int(raw)
        elif key in _SYSTEM_KEYS:
            system_kwargs[key] = _SYSTEM_KEYS[key](raw)
        elif key in _SCENARIO_KEYS:
            typ = _SCENARIO_KEYS[key]
            if typ is bool:
                value = _parse_bool(raw, key)
            elif key == "snr_db":
                value = parse_snr_spec(raw)
            else:
                value = typ(raw)
            scenario_kwargs[_KEY_TO_FIELD.get(key, key)] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    gain = (system_kwargs.pop("path_gain_min", 0.7),
            system_kwargs.pop("path_gain_max", None))
    if gain[1] is None:
        gain = (gain[0], gain[0])
    dist = (system_kwargs.pop("distance_min", 0.1),
            system_kwargs.pop("distance_max", 0.95))
    try:
        system = SystemConfig(path_gain_range=gain, distance_range=dist,
                              **system_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system configuration: {exc}") from None
    if check_n_rx is not None and check_n_rx != system.n_rx_total:
        raise ConfigError(
            f"n_rx_total = {check_n_rx} contradicts geometry "
            f"(n_bs + n_heads * antennas_per_head = {system.n_rx_total})")
    spec = ScenarioSpec(system=system, **scenario_kwargs)
    return spec.validate()


def serialize_config(spec: ScenarioSpec) -> str:
    """Canonical flat text for a scenario; parses back to an equal spec."""
    sysc = spec.system
    lines = [
        f"n_users = {sysc.n_users}",
        f"n_bs = {sysc.n_bs}",
        f"n_heads = {sysc.n_heads}",
        f"antennas_per_head = {sysc.antennas_per_head}",
        f"antennas_per_user = {sysc.antennas_per_user}",
        f"rho = {sysc.rho!r}",
        f"path_loss_exp = {sysc.path_loss_exp!r}",
        f"shadow_spread_db = {sysc.shadow_spread_db!r}",
        f"path_gain_min = {sysc.path_gain_range[0]!r}",
        f"path_gain_max = {sysc.path_gain_range[1]!r}",
        f"distance_min = {sysc.distance_range[0]!r}",
        f"distance_max = {sysc.distance_range[1]!r}",
        f"symbol_power = {sysc.symbol_power!r}",
        f"detector = {spec.detector}",
        f"ordering = {spec.ordering}",
        f"branches = {spec.branches}",
        f"filter_design = {spec.filter_design}",
        f"coded = {str(spec.coded).lower()}",
        f"idd.iterations = {spec.idd_iterations}",
        f"idd.maxlog = {str(spec.idd_max_log).lower()}",
        f"estimator = {spec.estimator}",
        f"lambda = {spec.forgetting!r}",
        f"mu = {spec.step_size!r}",
        f"rank = {spec.rank}",
        f"pilot_len = {spec.pilot_len}",
        f"packet_symbols = {spec.packet_symbols}",
        "snr_db = " + ",".join(format(s, ".10g") for s in spec.snr_db),
        f"packets = {spec.packets}",
        f"seed = {spec.seed}",
        f"out = {spec.out}",
    ]
    return "\n".join(lines) + "\n"


def scenario_hash(spec: ScenarioSpec) -> str:
    return hashlib.sha256(serialize_config(spec).encode()).hexdigest()[:12]


# -- trial execution ----------------------------------------------------------

_gamma_moment_cache = {}


def mean_gamma_sq(cfg: SystemConfig) -> float:
    """Deterministic Monte Carlo moment E[gamma^2] used by the SNR mapping."""
    if cfg not in _gamma_moment_cache:
        gen = rngmod.substream(_GAMMA_MOMENT_SEED, rngmod.GAMMA_MOMENT)
        _gamma_moment_cache[cfg], _ = estimate_mean_gamma_sq(
            cfg, _GAMMA_MOMENT_DRAWS, gen)
    return _gamma_moment_cache[cfg]


def trial_noise_variance(spec: ScenarioSpec, snr_db: float) -> float:
    rate = TrellisSpec().rate if spec.coded else 1.0
    return snr_to_noise_variance(snr_db, spec.system, rate, 2,
                                 mean_gamma_sq(spec.system))


def _draw_trial_channel(spec: ScenarioSpec, snr_index: int, trial_index: int):
    cfg = spec.system
    large = draw_large_scale(cfg, rngmod.substream(
        spec.seed, snr_index, trial_index, rngmod.LARGE_SCALE))
    small = [draw_small_scale(cfg, cfg.n_rx_total, rngmod.substream(
        spec.seed, snr_index, trial_index, rngmod.SMALL_SCALE, k))
        for k in range(cfg.n_users)]
    return compose_channel(cfg, small, large)


def _build_trial_frame(spec: ScenarioSpec, snr_index: int, trial_index: int):
    cfg = spec.system
    m = cfg.n_streams
    payload_rng = rngmod.substream(spec.seed, snr_index, trial_index, rngmod.PAYLOAD)
    if spec.coded:
        k_info = coded_payload_length(spec.packet_symbols)
        payload = payload_rng.integers(0, 2, size=(m, k_info))
    else:
        payload = payload_rng.integers(0, 2, size=(m, 2 * spec.packet_symbols))
    frame_rng = rngmod.substream(spec.seed, snr_index, trial_index, rngmod.FRAME)
    return assemble_frame(cfg, payload, spec.pilot_len, frame_rng, coded=spec.coded)


def _estimate_channel(spec: ScenarioSpec, frame, received_pilots):
    cfg = spec.system
    if spec.estimator == "ls":
        return ls_channel_estimate(frame.pilots, received_pilots, spec.forgetting)
    if spec.estimator == "rls":
        tracker = RlsChannelEstimator(cfg.n_streams, cfg.n_rx_total, spec.forgetting)
        for i in range(frame.n_pilots):
            tracker.update(frame.pilots[:, i], received_pilots[:, i])
        return tracker.estimate
    tracker = LmsChannelEstimator(cfg.n_streams, cfg.n_rx_total, spec.step_size,
                                  cfg.symbol_power)
    for i in range(frame.n_pilots):
        tracker.update(frame.pilots[:, i], received_pilots[:, i])
    return tracker.estimate


def _train_filter_bank(spec: ScenarioSpec, frame, received_pilots):
    cfg = spec.system
    kind = spec.estimator.split("-", 1)[1]
    if kind == "jio":
        bank = JioFilterBank(cfg.n_rx_total, cfg.n_streams, spec.rank, spec.forgetting)
    else:
        bank = ReducedRankFilterBank(cfg.n_rx_total, cfg.n_streams, kind,
                                     spec.rank, spec.forgetting)
    for i in range(frame.n_pilots):
        bank.update(received_pilots[:, i], frame.pilots[:, i])
    return bank.weights


def _hard_detect(spec: ScenarioSpec, chan, block, noise_var, constellation):
    sp = spec.system.symbol_power
    name = spec.detector
    if name in ("rmf", "zf", "mmse"):
        filters = compute_receive_filter(chan, sp, noise_var, name)
        return linear_detect(filters, block, constellation)
    if name == "sic":
        order = compute_ordering(chan, sp, noise_var, spec.ordering)
        return sic_detect(chan, block, order, spec.filter_design, sp, noise_var,
                          constellation)
    if name == "mb-sic":
        return mb_sic_detect(chan, block, spec.branches, spec.filter_design, sp,
                             noise_var, spec.ordering, constellation)
    if name == "df-s" or name == "df-p":
        mode = "s-df" if name == "df-s" else "p-df"
        return df_detect(chan, block, mode, spec.filter_design, sp, noise_var,
                         constellation)
    return ml_detect_oracle(chan, block, constellation)


def run_trial(spec: ScenarioSpec, snr_db: float, trial_index: int) -> TrialResult:
    """Simulate one packet at one SNR point; pure in (spec, snr, trial)."""
    try:
        snr_index = spec.snr_db.index(float(snr_db))
    except ValueError:
        raise ConfigError(f"snr_db = {snr_db} is not part of the scenario sweep") from None
    cfg = spec.system
    noise_var = trial_noise_variance(spec, snr_db)
    chan = _draw_trial_channel(spec, snr_index, trial_index)
    frame = _build_trial_frame(spec, snr_index, trial_index)
    received = channel_transmit(
        chan.stacked, frame.symbols(), noise_var,
        rngmod.substream(spec.seed, snr_index, trial_index, rngmod.NOISE))
    rx_pilots = received[:, :frame.n_pilots]
    rx_data = received[:, frame.n_pilots:]
    constellation = qpsk_constellation(cfg.symbol_power)

    filter_bank = None
    chan_for_detection = chan.stacked
    if spec.estimator.startswith("rr-"):
        filter_bank = _train_filter_bank(spec, frame, rx_pilots)
    elif spec.estimator != "perfect":
        chan_for_detection = _estimate_channel(spec, frame, rx_pilots)

    if spec.coded:
        result = idd_receive(rx_data, chan_for_detection, noise_var, frame.perms,
                             frame.trellis, cfg.symbol_power,
                             n_outer=spec.idd_iterations,
                             max_log=spec.idd_max_log,
                             known_symbols=frame.data_symbols)
        per_iter = tuple(int(np.sum(bits != frame.info_bits))
                         for bits in result.per_iteration_bits)
        return TrialResult(bits=frame.info_bits.size, errors=per_iter[-1],
                           per_iteration_errors=per_iter)

    if filter_bank is not None:
        out = linear_detect(filter_bank, rx_data, constellation)
    else:
        out = _hard_detect(spec, chan_for_detection, rx_data, noise_var, constellation)
    decided = labels_to_bits(out.labels)
    reference = frame.channel_bits.reshape(decided.shape)
    return TrialResult(bits=reference.size, errors=int(np.sum(decided != reference)))


def confidence_interval(errors: int, bits: int, z: float = _Z95):
    """Binomial normal-approximation CI; one-sided exact bound at zero errors."""
    if bits <= 0:
        return float("nan"), float("nan")
    p = errors / bits
    if errors == 0:
        return 0.0, 1.0 - 0.025 ** (1.0 / bits)
    half = z * np.sqrt(p * (1.0 - p) / bits)
    return max(p - half, 0.0), min(p + half, 1.0)


def _trial_task(args):
    spec, snr_db, trial_index = args
    try:
        res = run_trial(spec, snr_db, trial_index)
        return snr_db, trial_index, res, None
    except NumericalError as exc:
        return snr_db, trial_index, None, f"{type(exc).__name__}: {exc}"


def run_sweep(spec: ScenarioSpec, workers: int = 1) -> SweepResult:
    """Run every (SNR, packet) trial and aggregate order-independently.

    A numerical failure in any trial marks that SNR point failed and the
    sweep moves on.  Results are identical for any worker count.
    """
    spec.validate()
    start = time.perf_counter()
    tasks = [(spec, snr, t) for snr in spec.snr_db for t in range(spec.packets)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=8))
    else:
        outcomes = [_trial_task(t) for t in tasks]

    by_point = {snr: [] for snr in spec.snr_db}
    failures = {}
    for snr_db, trial_index, res, err in outcomes:
        if err is not None:
            failures.setdefault(snr_db, err)
        else:
            by_point[snr_db].append(res)
    rows = []
    for snr in sorted(spec.snr_db):
        if snr in failures:
            rows.append(SweepRow(snr_db=snr, bits=0, errors=0, ber=float("nan"),
                                 ci_low=float("nan"), ci_high=float("nan"),
                                 failed=True, message=failures[snr]))
            continue
        bits = sum(r.bits for r in by_point[snr])
        errors = sum(r.errors for r in by_point[snr])
        lo, hi = confidence_interval(errors, bits)
        rows.append(SweepRow(snr_db=snr, bits=bits, errors=errors,
                             ber=errors / bits, ci_low=lo, ci_high=hi))
    return SweepResult(scenario=spec, rows=rows, scenario_hash=scenario_hash(spec),
                       wall_time_s=time.perf_counter() - start)


def format_csv(result: SweepResult) -> str:
    """Render sweep rows with the fixed column set (no timing fields)."""
    spec = result.scenario
    lines = [",".join(CSV_COLUMNS)]
    for row in result.rows:
        lines.append(",".join([
            format(row.snr_db, ".10g"),
            str(row.bits),
            str(row.errors),
            format(row.ber, ".10g"),
            format(row.ci_low, ".10g"),
            format(row.ci_high, ".10g"),
            spec.detector,
            spec.estimator,
            str(spec.seed),
        ]))
    return "\n".join(lines) + "\n"


def write_csv(result: SweepResult, path):
    text = format_csv(result)
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)
    return text


# -- receive-filter training experiment --------------------------------------

def filter_training_experiment(cfg: SystemConfig, snr_db: float, method: str,
                               rank: int, lam: float, n_train: int,
                               checkpoints, n_eval: int, seed: int,
                               delta: float = DEFAULT_DELTA) -> np.ndarray:
    """BER of linear detection with trained filters, at training checkpoints.

    One channel realization per seed; filters adapt over ``n_train`` known
    symbol vectors at the given SNR and are frozen at each checkpoint to
    detect a held-out block of ``n_eval`` vectors (fresh symbols and
    noise).  Methods: ``rls`` (full rank), ``krylov``, ``pc``, ``jio``.
    The substreams depend only on (seed, purpose), so different methods
    see identical data.
    """
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if checkpoints[0] < 1 or checkpoints[-1] > n_train:
        raise ConfigError("checkpoints must lie in [1, n_train]")
    noise_var = snr_to_noise_variance(snr_db, cfg, 1.0, 2, mean_gamma_sq(cfg))
    large = draw_large_scale(cfg, rngmod.substream(seed, 0, 0, rngmod.LARGE_SCALE))
    small = [draw_small_scale(cfg, cfg.n_rx_total,
                              rngmod.substream(seed, 0, 0, rngmod.SMALL_SCALE, k))
             for k in range(cfg.n_users)]
    chan = compose_channel(cfg, small, large).stacked
    m = cfg.n_streams
    constellation = qpsk_constellation(cfg.symbol_power)

    payload_rng = rngmod.substream(seed, 0, 0, rngmod.PAYLOAD)
    train_labels = payload_rng.integers(0, 4, size=(m, n_train))
    train_syms = constellation[train_labels]
    train_rx = channel_transmit(chan, train_syms, noise_var,
                                rngmod.substream(seed, 0, 0, rngmod.NOISE))
    eval_rng = rngmod.substream(seed, 0, 0, rngmod.EVAL)
    eval_labels = eval_rng.integers(0, 4, size=(m, n_eval))
    eval_syms = constellation[eval_labels]
    eval_rx = channel_transmit(chan, eval_syms, noise_var,
                               rngmod.substream(seed, 0, 0, rngmod.EVAL, 1))

    if method == "rls":
        bank = RlsFilterBank(cfg.n_rx_total, m, lam, delta)
    elif method == "jio":
        # joint refinement starts once the pooled covariance has ~4 snapshots
        # per dimension; before that the bank runs on the Krylov ladder
        bank = JioFilterBank(cfg.n_rx_total, m, rank, lam, delta,
                             warmup=4 * cfg.n_rx_total)
    elif method in ("krylov", "pc"):
        bank = ReducedRankFilterBank(cfg.n_rx_total, m, method, rank, lam, delta)
    else:
        raise ConfigError(f"unknown training method {method!r}")

    eval_bits = labels_to_bits(eval_labels)
    bers = np.empty(len(checkpoints))
    ci = 0
    for i in range(n_train):
        bank.update(train_rx[:, i], train_syms[:, i])
        if ci < len(checkpoints) and i + 1 == checkpoints[ci]:
            out = linear_detect(bank.weights, eval_rx, constellation)
            bers[ci] = np.mean(labels_to_bits(out.labels) != eval_bits)
            ci += 1
    return bers
