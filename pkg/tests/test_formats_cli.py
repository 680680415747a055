"""File formats and the command-line pipeline."""

import numpy as np
import pytest

from photonstat import formats
from photonstat.cli import main
from photonstat.errors import ValidationError
from photonstat.simulate import SourceParams, TimestampRecord, simulate
from photonstat.stats import G2Curve, g2_empirical, mandel_sweep
from photonstat.sync import PhotocountSeries

TAU = 488e-9


@pytest.fixture(scope="module")
def record():
    return simulate(SourceParams(n_pulses=120_000, seed=8, t_start_true=1e-4))


class TestTimestampFiles:
    @pytest.mark.parametrize("mode", ["text", "binary"])
    def test_roundtrip(self, tmp_path, record, mode):
        path = tmp_path / f"r.{mode}.ts"
        formats.write_timestamps(path, record, mode=mode, config_digest="abcd1234")
        back = formats.read_timestamps(path)
        assert np.array_equal(back.times, record.times)
        assert np.array_equal(back.channels, record.channels)

    def test_header_is_64_bytes(self, tmp_path, record):
        path = tmp_path / "r.ts"
        formats.write_timestamps(path, record, mode="binary")
        raw = path.read_bytes()
        assert raw[63:64] == b"\n"
        assert raw[:17] == b"#photonstat-ts v1"
        assert len(raw) == 64 + 9 * len(record)

    def test_empty_record(self, tmp_path):
        empty = TimestampRecord(
            times=np.zeros(0, dtype=np.int64), channels=np.zeros(0, dtype=np.uint8)
        )
        path = tmp_path / "empty.ts"
        formats.write_timestamps(path, empty, mode="text")
        assert len(formats.read_timestamps(path)) == 0

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus"
        path.write_text("not a timestamp file\n")
        with pytest.raises(ValidationError):
            formats.read_timestamps(path)


class TestSeriesFiles:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        counts = np.minimum(rng.poisson(0.05, size=50_000), 2).astype(np.uint8)
        series = PhotocountSeries(
            counts=counts, n_pulses=counts.size, window=30e-9, tau_rep=4.880000000013e-7
        )
        path = tmp_path / "s.series"
        formats.write_series(path, series, config_digest="cafe0001")
        back = formats.read_series(path)
        assert np.array_equal(back.counts, series.counts)
        assert back.n_pulses == series.n_pulses
        assert back.tau_rep == series.tau_rep  # full float precision survives
        assert back.window == series.window


class TestCurveFiles:
    def test_mandel_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(5)
        counts = np.minimum(rng.poisson(0.05, size=80_000), 2).astype(np.uint8)
        series = PhotocountSeries(
            counts=counts, n_pulses=counts.size, window=30e-9, tau_rep=TAU
        )
        curve = mandel_sweep(series)
        path = tmp_path / "m.curve"
        formats.write_curve(path, curve, input_digest="ab12cd34")
        kind, back, tau_rep = formats.read_curve(path)
        assert kind == "mandel"
        assert tau_rep == pytest.approx(TAU, rel=1e-12)
        assert np.array_equal(back.m_pulses, curve.m_pulses)
        assert np.array_equal(back.q_values, curve.q_values)
        assert np.array_equal(back.std_errors[~np.isnan(back.std_errors)],
                              curve.std_errors[~np.isnan(curve.std_errors)])
        assert np.array_equal(back.n_samples, curve.n_samples)

    def test_g2_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(6)
        counts = np.minimum(rng.poisson(0.05, size=80_000), 2).astype(np.uint8)
        series = PhotocountSeries(
            counts=counts, n_pulses=counts.size, window=30e-9, tau_rep=TAU
        )
        curve = g2_empirical(series, 64)
        path = tmp_path / "g.curve"
        formats.write_curve(path, curve, tau_rep=TAU, n_pulses=series.n_pulses)
        kind, back, tau_rep = formats.read_curve(path)
        assert kind == "g2"
        assert np.array_equal(back.lags, curve.lags)
        assert np.array_equal(back.g2_values, curve.g2_values)
        assert np.array_equal(back.std_errors, curve.std_errors)

    def test_g2_needs_tau(self, tmp_path):
        curve = G2Curve(
            lags=np.arange(1, 11),
            g2_values=np.ones(10),
            std_errors=np.full(10, 0.1),
        )
        with pytest.raises(ValidationError):
            formats.write_curve(tmp_path / "x.curve", curve)


class TestReports:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "r.txt"
        formats.write_report(path, {"eta": "0.04456", "n": 3})
        back = formats.read_report(path)
        assert back == {"eta": "0.04456", "n": "3"}


class TestCli:
    def test_simulate_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.ts", tmp_path / "b.ts"
        argv = ["--n-pulses", "50000", "--seed", "7"]
        assert main(["simulate", str(a), *argv]) == 0
        assert main(["simulate", str(b), *argv]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_pulse_run(self, tmp_path, capsys):
        out = tmp_path / "zero.ts"
        assert main(["simulate", str(out), "--n-pulses", "0"]) == 0
        assert len(formats.read_timestamps(out)) == 0

    def test_full_pipeline(self, tmp_path, capsys):
        ts = tmp_path / "run.ts"
        series = tmp_path / "run.series"
        prefix = tmp_path / "run"
        assert (
            main(
                [
                    "simulate", str(ts),
                    "--n-pulses", "400000",
                    "--seed", "21",
                    "--t-start-true", "2e-4",
                ]
            )
            == 0
        )
        assert main(["sync", str(ts), str(series), "--tau-guess", "4.8804e-7"]) == 0
        captured = capsys.readouterr().out
        assert "recovered tau_rep = 4.880000000" in captured
        assert main(["stats", str(series), str(prefix)]) == 0
        assert main(["calibrate", str(series), "--out", str(tmp_path / "cal.txt")]) == 0
        cal = formats.read_report(tmp_path / "cal.txt")
        assert 0.02 < float(cal["eta"]) < 0.07
        assert (
            main(
                [
                    "fit",
                    "--mandel", f"{prefix}.mandel.curve",
                    "--g2", f"{prefix}.g2.curve",
                    "--eta", cal["eta"],
                    "--out", str(tmp_path / "fit.txt"),
                ]
            )
            == 0
        )
        fit = formats.read_report(tmp_path / "fit.txt")
        assert 0.3 < float(fit["mandel.p_isc"]) / 2.1e-4 < 3.0
        assert 0.3 < float(fit["g2.tau_triplet"]) / 250e-6 < 3.0

    def test_sync_idempotent_output(self, tmp_path):
        ts = tmp_path / "r.ts"
        main(["simulate", str(ts), "--n-pulses", "300000", "--seed", "4",
              "--t-start-true", "1e-4"])
        s1, s2 = tmp_path / "a.series", tmp_path / "b.series"
        assert main(["sync", str(ts), str(s1)]) == 0
        assert main(["sync", str(ts), str(s2)]) == 0
        assert s1.read_bytes() == s2.read_bytes()

    def test_validation_exit_code(self, tmp_path, capsys):
        out = tmp_path / "x.ts"
        assert main(["simulate", str(out), "--eta", "2.0"]) == 2
        assert not out.exists()

    def test_empty_input_is_clean_error(self, tmp_path, capsys):
        ts = tmp_path / "empty.ts"
        main(["simulate", str(ts), "--n-pulses", "0"])
        out = tmp_path / "out.series"
        assert main(["sync", str(ts), str(out)]) == 2
        assert not out.exists()

    def test_convergence_exit_code(self, tmp_path):
        # flat correlation curve cannot yield a blinking contrast
        lags = np.arange(1, 101)
        flat = G2Curve(
            lags=lags, g2_values=np.ones(100), std_errors=np.full(100, 0.01)
        )
        path = tmp_path / "flat.curve"
        formats.write_curve(path, flat, tau_rep=TAU)
        assert main(["fit", "--g2", str(path)]) == 3

    def test_io_exit_code(self, tmp_path):
        assert main(["sync", str(tmp_path / "missing.ts"), str(tmp_path / "o")]) == 4

    def test_all_zero_series_is_validation_error(self, tmp_path):
        series = PhotocountSeries(
            counts=np.zeros(1000, dtype=np.uint8),
            n_pulses=1000,
            window=30e-9,
            tau_rep=TAU,
        )
        path = tmp_path / "zeros.series"
        formats.write_series(path, series)
        assert main(["stats", str(path), str(tmp_path / "out")]) == 2

    def test_stats_outputs_deterministic(self, tmp_path):
        ts = tmp_path / "d.ts"
        series = tmp_path / "d.series"
        main(["simulate", str(ts), "--n-pulses", "200000", "--seed", "3",
              "--t-start-true", "1e-4"])
        main(["sync", str(ts), str(series)])
        p1, p2 = tmp_path / "one", tmp_path / "two"
        assert main(["stats", str(series), str(p1)]) == 0
        assert main(["stats", str(series), str(p2)]) == 0
        for suffix in (".mandel.curve", ".g2.curve", ".stats.txt"):
            assert (
                (tmp_path / f"one{suffix}").read_bytes()
                == (tmp_path / f"two{suffix}").read_bytes()
            )

    def test_stats_report_on_reference_series(self, tmp_path, ref_series):
        path = tmp_path / "ref.series"
        formats.write_series(path, ref_series)
        prefix = tmp_path / "ref"
        assert main(["stats", str(path), str(prefix)]) == 0
        rep = formats.read_report(f"{prefix}.stats.txt")
        assert float(rep["mean_per_pulse"]) == pytest.approx(0.04653, abs=1e-5)
        assert float(rep["mandel_q"]) == pytest.approx(-0.04455, abs=2e-5)
        assert float(rep["coherent_reference_q"]) == pytest.approx(-0.02327, abs=1e-5)

    def test_calibrate_report_on_reference_series(self, tmp_path, ref_series):
        path = tmp_path / "ref.series"
        formats.write_series(path, ref_series)
        assert main(["calibrate", str(path), "--out", str(tmp_path / "c.txt")]) == 0
        rep = formats.read_report(tmp_path / "c.txt")
        assert float(rep["eta"]) == pytest.approx(0.04456, abs=1e-4)
        assert float(rep["eta_gamma"]) == pytest.approx(2.02e-3, abs=2e-5)
        assert float(rep["signal_to_background"]) == pytest.approx(22.0, abs=1.0)

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("n_pulses = 1000\nseed = 5\n# comment\n")
        a, b = tmp_path / "a.ts", tmp_path / "b.ts"
        assert main(["simulate", str(a), "--config", str(cfg)]) == 0
        assert main(["simulate", str(b), "--config", str(cfg), "--seed", "6"]) == 0
        ra, rb = formats.read_timestamps(a), formats.read_timestamps(b)
        assert not np.array_equal(ra.times, rb.times)
