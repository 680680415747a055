"""Clock recovery, pulse assignment and gating."""

import numpy as np
import pytest

from photonstat.errors import AmbiguousClock, ValidationError
from photonstat.simulate import PS_PER_S, SourceParams, simulate
from photonstat.sync import (
    ClockEstimate,
    assign_pulses,
    delay_of,
    estimate_clock,
    gate_counts,
)

TAU = 488e-9
TAU_PS = TAU * PS_PER_S


def modal_offset(truth, recovered):
    offs = truth - recovered
    values, counts = np.unique(offs, return_counts=True)
    return values[np.argmax(counts)], offs


class TestDelayOf:
    def test_zero_at_origin(self):
        assert delay_of(1000.0, 1000.0, TAU_PS) == 0.0

    def test_modular(self):
        t = 1000.0 + 3.25 * TAU_PS
        assert delay_of(t, 1000.0, TAU_PS) == pytest.approx(0.25 * TAU_PS, rel=1e-12)

    def test_sawtooth_drift(self):
        # events on an exact grid measured with a slightly short clock
        eps = 1e-5
        k = np.arange(1, 2001, dtype=np.float64)
        t = k * TAU_PS
        d = delay_of(t, 0.0, TAU_PS * (1 - eps))
        growing = k * eps * TAU_PS
        wrapped = growing - np.floor(growing / TAU_PS) * TAU_PS
        assert np.allclose(d, wrapped, rtol=1e-6, atol=1e-3)

    def test_range(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(0, 1e12, size=1000)
        d = delay_of(t, 123.456, TAU_PS)
        assert np.all((d >= 0) & (d < TAU_PS))

    def test_validation(self):
        with pytest.raises(ValidationError):
            delay_of(1.0, 0.0, 0.0)


class TestEstimateClock:
    def test_exact_grid_fixed_point(self):
        times = np.arange(2000, dtype=np.int64) * int(round(TAU_PS)) + 10**9
        clock = estimate_clock(times, tau_guess=TAU)
        assert clock.tau_rep == TAU
        assert clock.residual_slope == 0.0
        assert clock.used_fraction == pytest.approx(1.0, abs=0.02)

    def test_recovers_period_from_biased_guess(self):
        record = simulate(SourceParams(t_start_true=3e-4, seed=101))
        for rel_err in (1e-4, -1e-4, 1e-3, -1e-3):
            clock = estimate_clock(record, tau_guess=TAU * (1 + rel_err))
            assert abs(clock.tau_rep - TAU) / TAU <= 1e-9
            assert abs(clock.residual_slope) <= 1e-9 * clock.tau_rep

    def test_robust_to_uniform_dark_counts(self):
        # ~10 % of all events are non-synchronous dark counts
        record = simulate(SourceParams(t_start_true=3e-4, dark_rate=4500.0, seed=42))
        dark_fraction = np.mean(record.truth_pulse < 0)
        assert 0.05 < dark_fraction < 0.15
        clock = estimate_clock(record, tau_guess=TAU * (1 + 1e-4))
        assert abs(clock.tau_rep - TAU) / TAU <= 1e-9

    def test_idempotent(self):
        record = simulate(SourceParams(t_start_true=3e-4, seed=77))
        first = estimate_clock(record, tau_guess=TAU * (1 + 1e-4))
        second = estimate_clock(record, tau_guess=first.tau_rep)
        assert abs(second.tau_rep - first.tau_rep) / first.tau_rep < 1e-12

    def test_too_few_events(self):
        with pytest.raises(AmbiguousClock):
            estimate_clock(np.arange(50, dtype=np.int64) * 488_000, tau_guess=TAU)

    def test_sparse_record_with_bad_guess_is_ambiguous(self):
        # a couple hundred events cannot pin down a 5e-2 period error
        from photonstat.errors import NonConvergence

        record = simulate(
            SourceParams(n_pulses=2_000_000, eta=1e-4, gamma=0.0, seed=11)
        )
        with pytest.raises((AmbiguousClock, NonConvergence)):
            estimate_clock(record, tau_guess=TAU * (1 + 5e-2))


class TestAssignPulses:
    def test_ground_truth_indices(self):
        record = simulate(SourceParams(t_start_true=5e-4, seed=55))
        clock = estimate_clock(record, tau_guess=TAU * (1 - 1e-4))
        assignment = assign_pulses(record, clock)
        nondark = record.truth_pulse >= 0
        offset, offs = modal_offset(
            record.truth_pulse[nondark], assignment.pulse_index[nondark]
        )
        assert np.mean(offs == offset) >= 0.999
        assert np.all(assignment.delay[~assignment.negative_mask] >= 0)
        assert np.all(assignment.delay < clock.tau_rep_ps)

    def test_grid_events(self):
        clock = ClockEstimate(
            t_start=0.0, tau_rep=TAU, residual_slope=0.0, iterations=1, used_fraction=1.0
        )
        times = np.array(
            [0, int(round(3 * TAU_PS)) + 3000], dtype=np.int64
        )  # second event 3 ns after pulse 3
        assignment = assign_pulses(times, clock)
        assert assignment.pulse_index.tolist() == [0, 3]
        assert assignment.delay[1] == pytest.approx(3000, abs=1)

    def test_negative_times_flagged(self):
        clock = ClockEstimate(
            t_start=1e6, tau_rep=TAU, residual_slope=0.0, iterations=1, used_fraction=1.0
        )
        times = np.array([0, 2 * 10**6], dtype=np.int64)
        assignment = assign_pulses(times, clock)
        assert assignment.negative_mask.tolist() == [True, False]
        assert assignment.pulse_index[0] == 0
        assert assignment.n_negative == 1


@pytest.fixture(scope="module")
def synced():
    params = SourceParams(t_start_true=3e-4, seed=303)
    record = simulate(params)
    clock = estimate_clock(record, tau_guess=TAU * (1 + 1e-4))
    return params, record, assign_pulses(record, clock)


class TestGateCounts:
    def test_empty_assignment(self):
        clock = ClockEstimate(
            t_start=0.0, tau_rep=TAU, residual_slope=0.0, iterations=1, used_fraction=1.0
        )
        assignment = assign_pulses(np.zeros(0, dtype=np.int64), clock)
        series = gate_counts(assignment, 100, 30e-9)
        assert series.total_counts == 0
        assert len(series) == 100

    def test_window_monotonicity(self, synced):
        _, _, assignment = synced
        n = int(assignment.pulse_index.max()) + 1
        narrow = gate_counts(assignment, n, 10e-9)
        wide = gate_counts(assignment, n, 60e-9)
        assert np.all(wide.counts >= narrow.counts)

    def test_full_window_keeps_every_signal_event(self):
        params = SourceParams(t_start_true=3e-4, dark_rate=0.0, seed=99)
        record = simulate(params)
        clock = estimate_clock(record, tau_guess=TAU * (1 + 1e-4))
        assignment = assign_pulses(record, clock)
        n = int(assignment.pulse_index.max()) + 1
        series = gate_counts(assignment, n, TAU * 0.999)
        # within-pulse pileups collapse under the cap, so compare capped sums
        per_pulse = np.bincount(assignment.pulse_index, minlength=n)
        assert series.total_counts == int(np.minimum(per_pulse, 2).sum())

    def test_retained_fraction_with_nonsynchronous_background(self):
        """With the off-gate rate tuned to the reference acquisition, the
        30 ns gate keeps about 98.7 % of raw events."""
        params = SourceParams(t_start_true=3e-4, dark_rate=650.0, seed=606)
        record = simulate(params)
        clock = estimate_clock(record, tau_guess=TAU * (1 + 1e-4))
        assignment = assign_pulses(record, clock)
        n = int(assignment.pulse_index.max()) + 1
        series = gate_counts(assignment, n, 30e-9)
        retained = series.total_counts / len(record)
        assert 0.980 <= retained <= 0.993

    def test_channel_relabeling_invariance(self, synced):
        params, record, assignment = synced
        n = int(assignment.pulse_index.max()) + 1
        series = gate_counts(assignment, n, 30e-9)
        swapped = simulate(params)
        swapped.channels = (1 - swapped.channels).astype(np.uint8)
        clock2 = estimate_clock(swapped, tau_guess=TAU * (1 + 1e-4))
        series2 = gate_counts(
            assign_pulses(swapped, clock2), n, 30e-9
        )
        assert np.array_equal(series.counts, series2.counts)

    def test_window_validation(self, synced):
        _, _, assignment = synced
        with pytest.raises(ValidationError):
            gate_counts(assignment, 100, TAU * 2)
        with pytest.raises(ValidationError):
            gate_counts(assignment, 100, 0.0)
