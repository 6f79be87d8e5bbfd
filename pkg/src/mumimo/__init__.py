"""Link-level simulator for the uplink of a multiuser MIMO system.

Centralized or distributed antenna arrays, correlated Rayleigh fading with
lognormal shadowing, QPSK streams (optionally convolutionally coded),
linear / successive / multi-branch / decision-feedback detection, iterative
detection-and-decoding, and adaptive channel / receive-filter estimation
including reduced-rank variants.
"""

from .config import SystemConfig
from .errors import (CapacityError, ConfigError, EstimationQualityWarning,
                     NumericalError, ParameterError, ParameterWarning,
                     RankError, SingularMatrixError, StructuralError)
from .channel import (ChannelRealization, LargeScaleDraw, compose_channel,
                      correlation_matrix, draw_channel, draw_large_scale,
                      draw_small_scale, estimate_mean_gamma_sq, gain_diagonal,
                      matrix_sqrt, snr_to_noise_variance)
from .txchain import (SymbolFrame, TrellisSpec, assemble_frame,
                      channel_transmit, coded_payload_length, conv_encode,
                      deinterleave, interleave, labels_to_bits,
                      qpsk_constellation, qpsk_map, qpsk_slice_labels,
                      trellis_tables)
from .detectors import (DetectorOutput, OrderingPattern, ReceiveFilterSet,
                        compute_ordering, compute_receive_filter, df_detect,
                        linear_detect, mb_sic_detect, ml_detect_oracle,
                        sic_detect)
from .idd import (BcjrResult, IddResult, bcjr_decode,
                  estimate_effective_channel, extrinsic_llr, idd_receive,
                  soft_mmse_sic_detect, soft_symbol_stats)
from .estimation import (JioFilterBank, JioRlsFilter, LmsChannelEstimator,
                         LmsFilterEstimator, ProjectionSpec,
                         ReducedRankFilterBank, ReducedRankRlsFilter,
                         RlsChannelEstimator, RlsFilterBank,
                         RlsFilterEstimator, build_projection,
                         ls_channel_estimate, ls_filter_estimate)
from .harness import (ScenarioSpec, SweepResult, SweepRow, TrialResult,
                      confidence_interval, filter_training_experiment,
                      format_csv, mean_gamma_sq, parse_config, parse_snr_spec,
                      run_sweep, run_trial, serialize_config, trial_noise_variance,
                      write_csv)

__version__ = "0.1.0"

__all__ = [
    "SystemConfig",
    "CapacityError", "ConfigError", "EstimationQualityWarning",
    "NumericalError", "ParameterError", "ParameterWarning", "RankError",
    "SingularMatrixError", "StructuralError",
    "ChannelRealization", "LargeScaleDraw", "compose_channel",
    "correlation_matrix", "draw_channel", "draw_large_scale",
    "draw_small_scale", "estimate_mean_gamma_sq", "gain_diagonal",
    "matrix_sqrt", "snr_to_noise_variance",
    "SymbolFrame", "TrellisSpec", "assemble_frame", "channel_transmit",
    "coded_payload_length", "conv_encode", "deinterleave", "interleave",
    "labels_to_bits", "qpsk_constellation", "qpsk_map", "qpsk_slice_labels",
    "trellis_tables",
    "DetectorOutput", "OrderingPattern", "ReceiveFilterSet",
    "compute_ordering", "compute_receive_filter", "df_detect",
    "linear_detect", "mb_sic_detect", "ml_detect_oracle", "sic_detect",
    "BcjrResult", "IddResult", "bcjr_decode", "estimate_effective_channel",
    "extrinsic_llr", "idd_receive", "soft_mmse_sic_detect",
    "soft_symbol_stats",
    "JioFilterBank", "JioRlsFilter", "LmsChannelEstimator",
    "LmsFilterEstimator", "ProjectionSpec", "ReducedRankFilterBank",
    "ReducedRankRlsFilter", "RlsChannelEstimator", "RlsFilterBank",
    "RlsFilterEstimator", "build_projection", "ls_channel_estimate",
    "ls_filter_estimate",
    "ScenarioSpec", "SweepResult", "SweepRow", "TrialResult",
    "confidence_interval", "filter_training_experiment", "format_csv",
    "mean_gamma_sq", "parse_config", "parse_snr_spec", "run_sweep",
    "run_trial", "serialize_config", "trial_noise_variance", "write_csv",
]
