import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from joulecast.arch import LayerConfig, LayerKind
from joulecast.dataset import (
    DEFAULT_SAMPLER_RANGES,
    MeasurementRecord,
    ModelWiseLayer,
    ModelWiseRecord,
    SplitSpec,
    config_key,
    load_layerwise_csv,
    load_modelwise_csv,
    merge_real_configs,
    modelwise_to_layerwise,
    sample_config,
    split,
    write_layerwise_csv,
    write_modelwise_csv,
)
from joulecast.errors import (
    ConsistencyWarning,
    KindMismatchError,
    SchemaError,
    TooFewRecordsError,
    ValidationError,
)
from joulecast.macs import standalone_macs


def make_record(seed=0, kind=LayerKind.CONV2D, energy=0.5, repeat=1, source="random"):
    config = sample_config(kind, seed)
    return MeasurementRecord(
        module=kind, config=config, macs=standalone_macs(config),
        cpu_energy_j=energy, repeat=repeat, source=source,
    )


class TestSampler:
    def test_conv_fields_within_ranges(self):
        rng = np.random.default_rng(0)
        table = DEFAULT_SAMPLER_RANGES[LayerKind.CONV2D]
        for _ in range(200):
            cfg = sample_config(LayerKind.CONV2D, rng)
            for name, (lo, hi) in table.items():
                assert lo <= getattr(cfg, name) <= hi

    def test_fixed_seed_repeats(self):
        assert sample_config(LayerKind.LINEAR, 42) == sample_config(LayerKind.LINEAR, 42)

    def test_maxpool_padding_never_violates_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            cfg = sample_config(LayerKind.MAXPOOL2D, rng)
            assert cfg.padding <= cfg.kernel_size // 2
            assert cfg.image_size + 2 * cfg.padding >= cfg.kernel_size

    def test_activation_in_size_range(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            cfg = sample_config(LayerKind.SIGMOID, rng)
            assert 50_000 <= cfg.in_channels <= 5_000_000

    def test_unsampleable_kind(self):
        with pytest.raises(ValidationError):
            sample_config(LayerKind.DROPOUT, 0)

    def test_impossible_ranges_exhaust_retries(self):
        from joulecast.errors import RetryExhaustedError

        impossible = {LayerKind.CONV2D: {
            "batch_size": (1, 1), "image_size": (4, 4), "kernel_size": (11, 11),
            "in_channels": (1, 1), "out_channels": (1, 1), "stride": (1, 1), "padding": (0, 0),
        }}
        with pytest.raises(RetryExhaustedError):
            sample_config(LayerKind.CONV2D, 0, impossible, max_retries=50)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(sorted(DEFAULT_SAMPLER_RANGES, key=lambda k: k.value)), st.integers(0, 2**31))
    def test_samples_always_valid_standalone(self, kind, seed):
        cfg = sample_config(kind, seed)
        cfg.require_standalone()
        assert standalone_macs(cfg) >= 0


class TestSplit:
    def test_ten_distinct_records(self):
        records = [make_record(seed=i, energy=0.1 * (i + 1)) for i in range(10)]
        train, val, test = split(records, SplitSpec(seed=0))
        assert (len(train), len(val), len(test)) == (7, 2, 1)

    def test_repeats_stay_together(self):
        records = []
        for i in range(10):
            cfg = sample_config(LayerKind.LINEAR, i)
            for r in range(1, 4):
                records.append(
                    MeasurementRecord(
                        module=LayerKind.LINEAR, config=cfg, macs=standalone_macs(cfg),
                        cpu_energy_j=0.1 * r, repeat=r,
                    )
                )
        train, val, test = split(records, SplitSpec(seed=5))
        for part in (train, val, test):
            keys = {config_key(r.config) for r in part}
            assert len(part) == 3 * len(keys)
        assert (len(train), len(val), len(test)) == (21, 6, 3)

    def test_same_seed_identical_partition(self):
        records = [make_record(seed=i) for i in range(25)]
        a = split(records, SplitSpec(seed=9))
        b = split(records, SplitSpec(seed=9))
        assert a == b

    def test_too_few_records(self):
        with pytest.raises(TooFewRecordsError):
            split([make_record(seed=i) for i in range(9)], SplitSpec())

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            SplitSpec(train_fraction=0.5, val_fraction=0.2, test_fraction=0.1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(10, 60), st.integers(0, 1000))
    def test_partition_disjoint_and_exhaustive(self, n, seed):
        records = [make_record(seed=i, energy=float(i + 1)) for i in range(n)]
        train, val, test = split(records, SplitSpec(seed=seed))
        assert len(train) + len(val) + len(test) == n
        ids = [id(r) for part in (train, val, test) for r in part]
        assert len(set(ids)) == n
        # grouped: a key appears in exactly one part
        parts_by_key = {}
        for label, part in (("t", train), ("v", val), ("s", test)):
            for record in part:
                parts_by_key.setdefault(config_key(record.config), set()).add(label)
        assert all(len(v) == 1 for v in parts_by_key.values())


class TestMerge:
    def test_concatenation_keeps_tags(self):
        train = [make_record(seed=i) for i in range(100)]
        real = [make_record(seed=1000 + i, source="real_architecture") for i in range(20)]
        merged = merge_real_configs(train, real)
        assert len(merged) == 120
        assert sum(1 for r in merged if r.source == "real_architecture") == 20

    def test_empty_real_is_identity(self):
        train = [make_record(seed=i) for i in range(5)]
        assert merge_real_configs(train, []) == train

    def test_kind_mismatch(self):
        with pytest.raises(KindMismatchError):
            merge_real_configs([make_record(kind=LayerKind.CONV2D)], [make_record(kind=LayerKind.LINEAR)])


class TestLayerwiseCsv:
    def test_round_trip_field_identical(self, tmp_path):
        records = [make_record(seed=i, kind=kind, energy=0.001 * (i + 1), repeat=i % 3 + 1)
                   for i, kind in enumerate([LayerKind.CONV2D, LayerKind.LINEAR, LayerKind.RELU,
                                             LayerKind.MAXPOOL2D, LayerKind.SOFTMAX])]
        path = tmp_path / "rows.csv"
        write_layerwise_csv(path, records)
        assert load_layerwise_csv(path) == records

    def test_single_valid_row(self, tmp_path):
        path = tmp_path / "one.csv"
        write_layerwise_csv(path, [make_record()])
        assert len(load_layerwise_csv(path)) == 1

    def test_negative_energy_dropped_with_warning(self, tmp_path):
        path = tmp_path / "bad.csv"
        record = make_record()
        write_layerwise_csv(path, [record])
        text = path.read_text().replace("0.5", "-1.0")
        path.write_text(text)
        with pytest.warns(UserWarning, match="dropped"):
            assert load_layerwise_csv(path) == []

    def test_missing_column_schema_error(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("module,batch_size\nConv2d,1\n")
        with pytest.raises(SchemaError):
            load_layerwise_csv(path)

    def test_mac_mismatch_warns_but_keeps(self, tmp_path):
        record = make_record()
        path = tmp_path / "rows.csv"
        write_layerwise_csv(path, [record])
        text = path.read_text().replace(str(record.macs), str(record.macs + 1))
        path.write_text(text)
        with pytest.warns(ConsistencyWarning):
            loaded = load_layerwise_csv(path)
        assert len(loaded) == 1
        assert loaded[0].macs == record.macs + 1

    def test_append_mode(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_layerwise_csv(path, [make_record(seed=0)])
        write_layerwise_csv(path, [make_record(seed=1)], append=True)
        assert len(load_layerwise_csv(path)) == 2
        assert path.read_text().count("module") == 1  # single header


class TestModelwiseCsv:
    def _record(self):
        cfg = LayerConfig(
            kind=LayerKind.CONV2D, batch_size=2, image_size=16, kernel_size=3,
            in_channels=3, out_channels=8, stride=1, padding=1,
        )
        relu = LayerConfig(kind=LayerKind.RELU, batch_size=2, in_channels=8 * 16 * 16)
        layers = (
            ModelWiseLayer(0, LayerKind.CONV2D, cfg, standalone_macs(cfg), 0.004),
            ModelWiseLayer(1, LayerKind.RELU, relu, standalone_macs(relu), 0.0002),
        )
        return ModelWiseRecord("tiny", 2, 0.00425, sum(l.macs for l in layers), layers)

    def test_round_trip(self, tmp_path):
        record = self._record()
        path = tmp_path / "model.csv"
        write_modelwise_csv(path, [record])
        assert load_modelwise_csv(path) == [record]

    def test_layer_sum_property(self):
        record = self._record()
        assert record.layer_energy_sum_j == pytest.approx(0.0042, rel=1e-12)

    def test_to_layerwise_conversion(self):
        rows = modelwise_to_layerwise([self._record()])
        assert len(rows) == 2
        assert all(r.source == "real_architecture" for r in rows)
        assert rows[0].macs == self._record().layers[0].macs


def test_record_rejects_negative_energy():
    cfg = sample_config(LayerKind.RELU, 0)
    with pytest.raises(ValidationError):
        MeasurementRecord(module=LayerKind.RELU, config=cfg, macs=1, cpu_energy_j=-0.1)


def test_record_module_config_consistency():
    cfg = sample_config(LayerKind.RELU, 0)
    with pytest.raises(ValidationError):
        MeasurementRecord(module=LayerKind.TANH, config=cfg, macs=1, cpu_energy_j=0.1)
