"""Harness tests: config parsing, trial/sweep determinism, CSV, CLI."""

import numpy as np
import pytest

import mumimo as m
from mumimo import cli, harness
from mumimo.errors import ConfigError, NumericalError

MINIMAL = """
# smallest interesting uplink
n_users = 2
n_bs = 4
detector = mmse
packet_symbols = 64
snr_db = 8
packets = 2
seed = 3
"""


def small_spec(**overrides):
    base = dict(system=m.SystemConfig(n_users=2, n_bs=4), packet_symbols=64,
                snr_db=(8.0,), packets=2, seed=3)
    base.update(overrides)
    return m.ScenarioSpec(**base).validate()


# -- config parsing -----------------------------------------------------------

def test_parse_minimal_config():
    spec = m.parse_config(MINIMAL)
    assert spec.system.n_users == 2
    assert spec.system.n_rx_total == 4
    assert spec.detector == "mmse"
    assert spec.snr_db == (8.0,)
    assert spec.packets == 2


def test_parse_serialize_roundtrip():
    spec = m.parse_config(MINIMAL)
    again = m.parse_config(m.serialize_config(spec))
    assert again == spec
    # and a second round trip is a fixed point of the text form
    assert m.serialize_config(again) == m.serialize_config(spec)


def test_parse_rejects_unknown_key_with_line():
    text = "n_users = 2\nn_bs = 4\ndetctor = mmse\n"
    with pytest.raises(ConfigError, match=r"line 3.*detctor"):
        m.parse_config(text)


def test_parse_rejects_bad_syntax():
    with pytest.raises(ConfigError, match="line 1"):
        m.parse_config("just some words\n")


def test_parse_snr_specs():
    assert m.parse_snr_spec("0:16:4") == (0.0, 4.0, 8.0, 12.0, 16.0)
    assert m.parse_snr_spec("2.5") == (2.5,)
    assert m.parse_snr_spec("1,3,9") == (1.0, 3.0, 9.0)
    with pytest.raises(ConfigError):
        m.parse_snr_spec("5:1:2")
    with pytest.raises(ConfigError):
        m.parse_snr_spec("a:b:c")


def test_parse_n_rx_total_cross_check():
    ok = "n_users = 2\nn_bs = 4\nn_rx_total = 4\nsnr_db = 10\n"
    assert m.parse_config(ok).system.n_rx_total == 4
    bad = "n_users = 2\nn_bs = 4\nn_rx_total = 6\nsnr_db = 10\n"
    with pytest.raises(ConfigError, match="n_rx_total"):
        m.parse_config(bad)


def test_parse_large_distributed_scenario():
    text = """
    n_users = 32
    antennas_per_user = 2
    n_bs = 32
    n_heads = 32
    antennas_per_head = 1
    n_rx_total = 64
    coded = true
    idd.iterations = 4
    packet_symbols = 500
    snr_db = 0:16:2
    """
    spec = m.parse_config(text)
    assert spec.system.n_rx_total == 64
    assert spec.system.n_streams == 64
    assert spec.system.architecture == "DAS"
    assert spec.coded and spec.idd_iterations == 4


def test_parse_comments_and_inline_comments():
    text = "n_users = 2  # two terminals\nn_bs = 4\n\n# done\nsnr_db = 5\n"
    assert m.parse_config(text).system.n_users == 2


def test_validate_rejects_bad_combinations():
    with pytest.raises(ConfigError, match="ml"):
        small_spec(system=m.SystemConfig(n_users=11, n_bs=12), detector="ml")
    with pytest.raises(ConfigError, match="soft MMSE"):
        small_spec(detector="sic", coded=True)
    with pytest.raises(ConfigError, match="pilot_len"):
        small_spec(estimator="rls", pilot_len=0)
    with pytest.raises(ConfigError, match="lambda"):
        small_spec(forgetting=1.5)
    with pytest.raises(ConfigError):
        small_spec(detector="vblast")
    with pytest.raises(ConfigError):
        small_spec(snr_db=(3.0, 3.0))
    with pytest.raises(ConfigError, match="rank"):
        small_spec(estimator="rr-pc", pilot_len=16, rank=100)
    with pytest.raises(ConfigError):
        small_spec(coded=True, estimator="rr-jio", pilot_len=16)


# -- trials and sweeps --------------------------------------------------------

def test_run_trial_is_deterministic():
    spec = small_spec()
    a = m.run_trial(spec, 8.0, 1)
    b = m.run_trial(spec, 8.0, 1)
    assert (a.bits, a.errors) == (b.bits, b.errors)


def test_run_trial_rejects_unswept_snr():
    with pytest.raises(ConfigError):
        m.run_trial(small_spec(), 9.0, 0)


def test_run_trial_zero_noise_zf_is_error_free(monkeypatch):
    spec = small_spec(detector="zf")
    monkeypatch.setattr(harness, "trial_noise_variance", lambda s, snr: 0.0)
    res = m.run_trial(spec, 8.0, 0)
    assert res.errors == 0
    assert res.bits == 2 * 64 * 2  # streams x symbols x bits per symbol


def test_trial_bits_accounting_coded():
    spec = small_spec(coded=True, packet_symbols=100, detector="mmse")
    res = m.run_trial(spec, 8.0, 0)
    assert res.bits == 2 * 98  # streams x information bits
    assert res.errors <= res.bits
    assert len(res.per_iteration_errors) == spec.idd_iterations


def test_sweep_single_point_structure():
    spec = small_spec(packets=1)
    result = m.run_sweep(spec)
    assert len(result.rows) == 1
    row = result.rows[0]
    assert row.bits == 2 * 64 * 2
    assert 0 <= row.errors <= row.bits
    assert row.ci_low <= row.ber <= row.ci_high


def test_sweep_parallel_matches_serial():
    spec = small_spec(snr_db=(4.0, 10.0), packets=3)
    serial = m.run_sweep(spec, workers=1)
    parallel = m.run_sweep(spec, workers=3)
    assert m.format_csv(serial) == m.format_csv(parallel)


def test_sweep_marks_failed_points(monkeypatch):
    spec = small_spec(snr_db=(4.0, 10.0), packets=2)

    real = harness.run_trial

    def sometimes(s, snr_db, trial_index):
        if snr_db == 4.0:
            raise NumericalError("synthetic failure")
        return real(s, snr_db, trial_index)

    monkeypatch.setattr(harness, "run_trial", sometimes)
    result = m.run_sweep(spec)
    assert result.rows[0].failed and np.isnan(result.rows[0].ber)
    assert not result.rows[1].failed
    assert 4.0 in result.failures


def test_csv_format_and_rerun_bytes(tmp_path):
    spec = small_spec(snr_db=(4.0, 10.0), out=str(tmp_path / "r.csv"))
    text1 = m.write_csv(m.run_sweep(spec), spec.out)
    text2 = m.write_csv(m.run_sweep(spec), spec.out)
    assert text1 == text2
    lines = text1.strip().split("\n")
    assert lines[0] == "snr_db,bits,errors,ber,ci_low,ci_high,detector,estimator,seed"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "4" and first[6] == "mmse" and first[7] == "perfect"
    assert first[8] == "3"
    assert (tmp_path / "r.csv").read_text() == text1


def test_confidence_interval_zero_errors():
    lo, hi = m.confidence_interval(0, 1000)
    assert lo == 0.0
    assert hi == pytest.approx(1.0 - 0.025 ** (1.0 / 1000))


def test_confidence_interval_normal_case():
    lo, hi = m.confidence_interval(100, 1000)
    p = 0.1
    half = 1.959963984540054 * np.sqrt(p * 0.9 / 1000)
    assert lo == pytest.approx(p - half)
    assert hi == pytest.approx(p + half)
    assert m.confidence_interval(0, 0) == (pytest.approx(np.nan, nan_ok=True),) * 2


def test_mean_gamma_sq_cached_and_deterministic():
    cfg = m.SystemConfig(n_users=2, n_bs=4)
    assert m.mean_gamma_sq(cfg) == m.mean_gamma_sq(cfg)
    other = m.SystemConfig(n_users=2, n_bs=4, path_loss_exp=3.0)
    assert m.mean_gamma_sq(other) > m.mean_gamma_sq(cfg)


def test_estimators_dispatch_smoke():
    for est in ("ls", "rls", "lms"):
        spec = small_spec(estimator=est, pilot_len=16)
        res = m.run_trial(spec, 8.0, 0)
        assert res.bits == 256
    for est in ("rr-pc", "rr-krylov", "rr-jio"):
        spec = small_spec(estimator=est, pilot_len=24, rank=2, forgetting=0.998)
        res = m.run_trial(spec, 8.0, 0)
        assert res.bits == 256


def test_filter_training_experiment_contract():
    cfg = m.SystemConfig(n_users=2, n_bs=8)
    bers = m.filter_training_experiment(cfg, 12.0, "rls", rank=2, lam=1.0,
                                        n_train=60, checkpoints=(10, 30, 60),
                                        n_eval=200, seed=4)
    again = m.filter_training_experiment(cfg, 12.0, "rls", rank=2, lam=1.0,
                                         n_train=60, checkpoints=(10, 30, 60),
                                         n_eval=200, seed=4)
    assert bers.shape == (3,)
    np.testing.assert_array_equal(bers, again)
    assert np.all((bers >= 0) & (bers <= 1))
    with pytest.raises(ConfigError):
        m.filter_training_experiment(cfg, 12.0, "rls", 2, 1.0, 60, (0, 10), 100, 4)
    with pytest.raises(ConfigError):
        m.filter_training_experiment(cfg, 12.0, "hyb", 2, 1.0, 60, (10,), 100, 4)


def test_filter_training_methods_share_data():
    cfg = m.SystemConfig(n_users=2, n_bs=8)
    kw = dict(snr_db=12.0, rank=2, lam=0.998, n_train=40, checkpoints=(40,),
              n_eval=100, seed=11)
    a = m.filter_training_experiment(cfg, method="rls", **kw)
    b = m.filter_training_experiment(cfg, method="jio", **kw)
    assert a.shape == b.shape  # same grid; data identity is by construction


# -- CLI ----------------------------------------------------------------------

def write_config(tmp_path, extra=""):
    path = tmp_path / "scen.cfg"
    path.write_text(MINIMAL + extra)
    return path


def test_cli_runs_and_writes(tmp_path, capsys):
    out = tmp_path / "res.csv"
    cfg = write_config(tmp_path, f"out = {out}\n")
    assert cli.main(["--config", str(cfg)]) == 0
    assert out.exists()
    text = out.read_text()
    assert text.startswith("snr_db,bits,errors")
    captured = capsys.readouterr()
    assert "wrote" in captured.out


def test_cli_overrides(tmp_path):
    out = tmp_path / "res.csv"
    cfg = write_config(tmp_path)
    code = cli.main(["--config", str(cfg), "--snr", "2:6:2", "--detector", "zf",
                     "--seed", "9", "--packets", "1", "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 4  # header + 3 SNR points
    assert lines[1].split(",")[6] == "zf"
    assert lines[1].split(",")[8] == "9"


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_users = 2\nn_bs = 4\nwhoops = 1\n")
    assert cli.main(["--config", str(cfg)]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_override_validation_error(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["--config", str(cfg), "--detector", "nope"]) == 2


def test_cli_rerun_is_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = write_config(tmp_path)
    assert cli.main(["--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["--config", str(cfg), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
