import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from joulecast import probe
from joulecast.arch import LayerConfig, LayerKind, load_architecture
from joulecast.errors import (
    AllRepeatsFailedError,
    ConcurrentMeasurementError,
    RaplUnavailableError,
    ShapeError,
)
from joulecast.probe import (
    RaplDomain,
    SimulatedMachine,
    conv2d_forward,
    counters_delta_uj,
    discover_rapl_domains,
    energy_delta,
    forward_workload,
    linear_forward,
    maxpool2d_forward,
    measure_config,
    relu_forward,
    softmax_forward,
    adaptive_avg_pool_forward,
    measure_architecture_workload,
)


# hand-rolled per-element oracles -------------------------------------------

def conv_oracle(x, weight, bias, stride, padding):
    batch, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    out = np.zeros((batch, c_out, out_h, out_w))
    for b in range(batch):
        for co in range(c_out):
            for i in range(out_h):
                for j in range(out_w):
                    acc = bias[co]
                    for ci in range(c_in):
                        for ki in range(k):
                            for kj in range(k):
                                yi = i * stride + ki - padding
                                xj = j * stride + kj - padding
                                if 0 <= yi < h and 0 <= xj < w:
                                    acc += x[b, ci, yi, xj] * weight[co, ci, ki, kj]
                    out[b, co, i, j] = acc
    return out


def pool_oracle(x, k, stride, padding):
    batch, channels, h, w = x.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    out = np.full((batch, channels, out_h, out_w), -np.inf)
    for b in range(batch):
        for c in range(channels):
            for i in range(out_h):
                for j in range(out_w):
                    for ki in range(k):
                        for kj in range(k):
                            yi = i * stride + ki - padding
                            xj = j * stride + kj - padding
                            if 0 <= yi < h and 0 <= xj < w:
                                out[b, c, i, j] = max(out[b, c, i, j], x[b, c, yi, xj])
    return out


class TestKernels:
    def test_unit_conv(self):
        x = np.full((1, 1, 1, 1), 3.0)
        weight = np.full((1, 1, 1, 1), 2.0)
        out = conv2d_forward(x, weight, np.zeros(1), stride=1, padding=0)
        assert out.item() == 6.0

    def test_relu(self):
        np.testing.assert_array_equal(relu_forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_conv_matches_hand_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 1, 4, 4))
        weight = rng.standard_normal((1, 1, 3, 3))
        bias = rng.standard_normal(1)
        got = conv2d_forward(x, weight, bias, stride=1, padding=0)
        np.testing.assert_allclose(got, conv_oracle(x, weight, bias, 1, 0), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
        st.integers(3, 7), st.integers(1, 3), st.integers(1, 2), st.integers(0, 1),
    )
    def test_conv_oracle_equivalence(self, batch, c_in, c_out, side, k, stride, padding):
        if side + 2 * padding < k:
            return
        rng = np.random.default_rng(42)
        x = rng.standard_normal((batch, c_in, side, side))
        weight = rng.standard_normal((c_out, c_in, k, k))
        bias = rng.standard_normal(c_out)
        got = conv2d_forward(x, weight, bias, stride, padding)
        np.testing.assert_allclose(got, conv_oracle(x, weight, bias, stride, padding), atol=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(3, 8), st.integers(1, 3), st.integers(1, 2), st.integers(0, 1))
    def test_pool_oracle_equivalence(self, side, k, stride, padding):
        if padding > k // 2:
            return
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 2, side, side))
        got = maxpool2d_forward(x, k, stride, padding)
        np.testing.assert_array_equal(got, pool_oracle(x, k, stride, padding))

    def test_linear(self):
        x = np.array([[1.0, 2.0]])
        weight = np.array([[3.0, 4.0], [5.0, 6.0]])
        bias = np.array([0.5, -0.5])
        np.testing.assert_array_equal(linear_forward(x, weight, bias), [[11.5, 16.5]])

    def test_softmax_rows_sum_to_one_and_is_stable(self):
        x = np.array([[1000.0, 1001.0], [0.0, 0.0]])
        out = softmax_forward(x)
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, rtol=1e-12)

    def test_adaptive_avg_pool_identity_when_sides_match(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 3, 7, 7))
        np.testing.assert_array_equal(adaptive_avg_pool_forward(x, 7), x)

    def test_adaptive_avg_pool_means(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        out = adaptive_avg_pool_forward(x, 2)
        np.testing.assert_array_equal(out[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_forward_workload_shape_errors(self):
        cfg = LayerConfig(kind=LayerKind.LINEAR, batch_size=1, in_channels=4, out_channels=2)
        with pytest.raises(ShapeError):
            forward_workload(cfg, np.ones((1, 3)))

    def test_workload_deterministic(self):
        cfg = LayerConfig(
            kind=LayerKind.CONV2D, batch_size=1, image_size=6, kernel_size=3,
            in_channels=2, out_channels=3, stride=1, padding=1,
        )
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 6, 6))
        a = forward_workload(cfg, x, seed=5)
        b = forward_workload(cfg, x, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_architecture_workload_runs(self):
        run = probe.make_architecture_workload(load_architecture("alexnet"), batch_size=1, seed=0)
        # shrink: use a tiny custom architecture instead of the 224px preset
        from joulecast.arch import ArchitectureSpec, TensorShape

        tiny = ArchitectureSpec(
            "tiny", TensorShape(1, 2, 8, 8),
            (
                LayerConfig(kind=LayerKind.CONV2D, kernel_size=3, in_channels=2,
                            out_channels=3, stride=1, padding=1),
                LayerConfig(kind=LayerKind.RELU),
                LayerConfig(kind=LayerKind.MAXPOOL2D, kernel_size=2, stride=2, padding=0),
                LayerConfig(kind=LayerKind.ADAPTIVE_AVG_POOL, output_size=2),
                LayerConfig(kind=LayerKind.FLATTEN),
                LayerConfig(kind=LayerKind.LINEAR, in_channels=12, out_channels=5),
                LayerConfig(kind=LayerKind.SOFTMAX),
            ),
        )
        out = probe.make_architecture_workload(tiny, batch_size=2, seed=1)()
        assert out.shape == (2, 5)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, rtol=1e-12)
        del run


class TestEnergyDelta:
    def test_plain_difference(self):
        assert energy_delta(100, 250, 10**6) == 150

    def test_wraparound(self):
        assert energy_delta(999_990, 10, 10**6) == 20

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6 - 1), st.integers(0, 10**6 - 1))
    def test_delta_always_in_range(self, before, after):
        delta = energy_delta(before, after, 10**6)
        assert 0 <= delta < 10**6

    def test_multi_domain_sum(self):
        before = (100, 999_990)
        after = (250, 10)
        assert counters_delta_uj(before, after, (10**6, 10**6)) == 170


class ScriptedCounter:
    """Counter returning a fixed sequence of readings; 'fail' raises."""

    def __init__(self, readings, max_range=10**9):
        self._readings = list(readings)
        self._max = max_range

    @property
    def max_ranges_uj(self):
        return (self._max,)

    def read_uj(self):
        value = self._readings.pop(0)
        if value == "fail":
            raise probe.CounterReadError("scripted failure")
        return (value,)


class TickingClock:
    """Advances only when the workload runs."""

    def __init__(self, step):
        self.now = 0.0
        self.step = step

    def __call__(self):
        return self.now

    def workload(self):
        self.now += self.step


class TestMeasureConfig:
    def cfg(self):
        return LayerConfig(kind=LayerKind.RELU, batch_size=1, in_channels=50_000)

    def test_per_pass_normalization(self):
        clock = TickingClock(step=0.03)
        counter = ScriptedCounter([0, 30_000_000])  # 30 J over the window
        result = measure_config(
            self.cfg(), window_seconds=30.0, repeats=1,
            counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
        )
        assert result.repeats[0].passes == 1000
        assert result.repeats[0].energy_j == 30.0
        assert result.energy_per_pass_j == 0.03

    def test_three_repeat_averaging(self):
        clock = TickingClock(step=0.03)
        counter = ScriptedCounter([0, 30_000_000, 30_000_000, 61_000_000, 61_000_000, 90_000_000])
        result = measure_config(
            self.cfg(), window_seconds=30.0, repeats=3,
            counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
        )
        per_pass = [r.energy_per_pass_j for r in result.repeats]
        assert per_pass == [0.03, 0.031, 0.029]
        assert result.energy_per_pass_j == pytest.approx(0.03, rel=1e-12)

    def test_failed_repeat_dropped(self):
        clock = TickingClock(step=0.03)
        counter = ScriptedCounter([0, 30_000_000, "fail", 0, 29_000_000])
        with pytest.warns(UserWarning, match="failed counter read"):
            result = measure_config(
                self.cfg(), window_seconds=30.0, repeats=3,
                counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
            )
        assert len(result.repeats) == 2
        assert result.failed_repeats == 1
        assert result.energy_per_pass_j == pytest.approx((0.030 + 0.029) / 2, rel=1e-12)

    def test_all_repeats_failed(self):
        clock = TickingClock(step=0.03)
        counter = ScriptedCounter(["fail", "fail"])
        with pytest.warns(UserWarning):
            with pytest.raises(AllRepeatsFailedError):
                measure_config(
                    self.cfg(), window_seconds=30.0, repeats=2,
                    counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
                )

    def test_wraparound_inside_window(self):
        clock = TickingClock(step=1.0)
        counter = ScriptedCounter([999_999_990, 20], max_range=10**9)
        result = measure_config(
            self.cfg(), window_seconds=1.0, repeats=1,
            counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
        )
        assert result.repeats[0].energy_j == pytest.approx(30 / 1e6)

    def test_single_long_pass_flagged(self):
        clock = TickingClock(step=45.0)
        counter = ScriptedCounter([0, 1_000_000])
        result = measure_config(
            self.cfg(), window_seconds=30.0, repeats=1,
            counter=counter, workload=clock.workload, clock=clock, warn_on_load=False,
        )
        assert result.repeats[0].passes == 1
        assert result.repeats[0].long_pass

    def test_concurrent_measurement_refused(self):
        assert probe._measure_lock.acquire(blocking=False)
        try:
            with pytest.raises(ConcurrentMeasurementError):
                measure_config(self.cfg(), window_seconds=1.0, repeats=1,
                               counter=ScriptedCounter([0, 1]), workload=lambda: None,
                               clock=lambda: 100.0, warn_on_load=False)
        finally:
            probe._measure_lock.release()

    @pytest.mark.skipif(not hasattr(os, "sched_setaffinity"), reason="no CPU affinity on this platform")
    def test_cpu_pinning_is_restored(self):
        before = os.sched_getaffinity(0)
        cpu = min(before)
        clock = TickingClock(step=1.0)
        seen = []

        def workload():
            seen.append(os.sched_getaffinity(0))
            clock.workload()

        measure_config(
            self.cfg(), window_seconds=1.0, repeats=1, counter=ScriptedCounter([0, 1_000]),
            workload=workload, clock=clock, warn_on_load=False, pin_to_cpu=cpu,
        )
        assert seen == [{cpu}]
        assert os.sched_getaffinity(0) == before

    def test_simulated_machine_energy_tracks_macs(self):
        machine = SimulatedMachine(mac_rate=5e9, power_w=20.0, noise=0.0, seed=0)
        macs = 25_000
        result = measure_config(
            self.cfg(), window_seconds=0.01, repeats=3,
            counter=machine.counter(), workload=machine.workload(macs),
            clock=machine.clock, warn_on_load=False,
        )
        expected = 20.0 * macs / 5e9
        assert result.energy_per_pass_j == pytest.approx(expected, rel=1e-6)


class TestRaplDiscovery:
    def make_tree(self, tmp_path, domains):
        for i, (name, max_range, energy) in enumerate(domains):
            d = tmp_path / f"intel-rapl:{i}"
            d.mkdir()
            (d / "name").write_text(name + "\n")
            (d / "max_energy_range_uj").write_text(f"{max_range}\n")
            (d / "energy_uj").write_text(f"{energy}\n")
        return tmp_path

    def test_discovers_package_domains(self, tmp_path):
        root = self.make_tree(tmp_path, [("package-0", 262143328850, 12345), ("psys", 10**9, 1)])
        sub = tmp_path / "intel-rapl:0:0"
        sub.mkdir()
        (sub / "name").write_text("core\n")
        (sub / "max_energy_range_uj").write_text("1000\n")
        (sub / "energy_uj").write_text("5\n")
        domains = discover_rapl_domains(str(root))
        assert [d.name for d in domains] == ["package-0"]
        assert domains[0].max_range_uj == 262143328850
        assert probe.read_energy(domains[0]) == 12345

    def test_env_override(self, tmp_path, monkeypatch):
        self.make_tree(tmp_path, [("package-0", 1000, 1)])
        monkeypatch.setenv(probe.POWERCAP_ROOT_ENV, str(tmp_path))
        assert len(discover_rapl_domains()) == 1

    def test_unavailable_raises(self, tmp_path):
        with pytest.raises(RaplUnavailableError):
            probe.RaplCounterSource(root=str(tmp_path / "nothing"))

    def test_counter_source_reads(self, tmp_path):
        root = self.make_tree(tmp_path, [("package-0", 10**6, 111), ("package-1", 10**6, 222)])
        source = probe.RaplCounterSource(root=str(root))
        assert source.read_uj() == (111, 222)
        assert source.max_ranges_uj == (10**6, 10**6)


HAVE_RAPL = bool(discover_rapl_domains())


@pytest.mark.skipif(not HAVE_RAPL, reason="no readable RAPL powercap domains on this host")
def test_rapl_smoke_measurement():
    cfg = LayerConfig(kind=LayerKind.TANH, batch_size=8, in_channels=100_000)
    result = measure_config(cfg, window_seconds=0.5, repeats=1, warn_on_load=False)
    assert result.energy_per_pass_j > 0.0
