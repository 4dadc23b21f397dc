"""Measurement records, random configuration sampling, CSV I/O, and splits.

Layer-wise rows hold one repeat of one standalone module measurement;
model-wise rows hold a full-architecture total plus each of its layers.
Energies are joules per single forward pass.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .arch import ACTIVATION_KINDS, LayerConfig, LayerKind, PREDICTABLE_KINDS
from .errors import (
    ConsistencyWarning,
    KindMismatchError,
    ParseError,
    RetryExhaustedError,
    SchemaError,
    TooFewRecordsError,
    ValidationError,
)
from .macs import standalone_macs

SOURCE_RANDOM = "random"
SOURCE_REAL = "real_architecture"


@dataclass(frozen=True)
class MeasurementRecord:
    """One layer-wise dataset row: a standalone module, its MACs, and one energy reading."""

    module: LayerKind
    config: LayerConfig
    macs: int
    cpu_energy_j: float
    repeat: int = 1
    source: str = SOURCE_RANDOM

    def __post_init__(self):
        if self.cpu_energy_j < 0:
            raise ValidationError(f"cpu_energy_j={self.cpu_energy_j} must be non-negative")
        if self.repeat < 1:
            raise ValidationError("repeat index is 1-based")
        if self.source not in (SOURCE_RANDOM, SOURCE_REAL):
            raise ValidationError(f"unknown source {self.source!r}")
        if self.module is not self.config.kind:
            raise ValidationError("record module does not match its config kind")


@dataclass(frozen=True)
class ModelWiseLayer:
    layer_index: int
    module: LayerKind
    config: LayerConfig
    macs: int
    cpu_energy_j: float


@dataclass(frozen=True)
class ModelWiseRecord:
    """One full-architecture measurement with its per-layer measurements."""

    architecture: str
    batch_size: int
    total_energy_j: float
    total_macs: int
    layers: tuple[ModelWiseLayer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.total_energy_j < 0 or any(l.cpu_energy_j < 0 for l in self.layers):
            raise ValidationError("energies must be non-negative")
        if list(l.layer_index for l in self.layers) != sorted(l.layer_index for l in self.layers):
            raise ValidationError("layer measurements must be ordered by layer_index")

    @property
    def layer_energy_sum_j(self) -> float:
        return float(sum(l.cpu_energy_j for l in self.layers))


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions applied to configuration groups."""

    train_fraction: float = 0.7
    val_fraction: float = 0.2
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"split fractions sum to {total}, expected 1")
        if min(self.train_fraction, self.val_fraction, self.test_fraction) < 0:
            raise ValidationError("split fractions must be non-negative")


# parameter sampling ranges per layer kind: {field: (lo, hi)} inclusive
DEFAULT_SAMPLER_RANGES: dict[LayerKind, dict[str, tuple[int, int]]] = {
    LayerKind.CONV2D: {
        "batch_size": (1, 256),
        "image_size": (4, 224),
        "kernel_size": (1, 11),
        "in_channels": (1, 512),
        "out_channels": (1, 512),
        "stride": (1, 5),
        "padding": (0, 3),
    },
    LayerKind.MAXPOOL2D: {
        "batch_size": (1, 256),
        "image_size": (4, 224),
        "kernel_size": (1, 11),
        # pooling preserves channels; the sampled channel range sets the input's
        "in_channels": (1, 512),
        "stride": (1, 5),
        "padding": (0, 3),
    },
    LayerKind.LINEAR: {
        "batch_size": (1, 512),
        "in_channels": (1, 5000),
        "out_channels": (1, 5000),
    },
    **{
        kind: {"batch_size": (1, 512), "in_channels": (50_000, 5_000_000)}
        for kind in ACTIVATION_KINDS
    },
}


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_config(
    kind: LayerKind,
    rng,
    ranges: dict[LayerKind, dict[str, tuple[int, int]]] | None = None,
    max_retries: int = 1000,
) -> LayerConfig:
    """Draw each applicable parameter integer-uniform from its range.

    ``rng`` may be a seed or a ``numpy.random.Generator``. Configurations
    violating the layer invariants (kernel larger than the padded image,
    pooling padding above half the kernel) are rejected and redrawn.
    """
    if kind not in PREDICTABLE_KINDS:
        raise ValidationError(f"{kind.value} is not a measurable module kind")
    gen = _as_rng(rng)
    table = (ranges or DEFAULT_SAMPLER_RANGES)[kind]
    for _ in range(max_retries):
        fields = {
            name: int(gen.integers(lo, hi + 1)) for name, (lo, hi) in table.items()
        }
        try:
            return LayerConfig(kind=kind, **fields)
        except ValidationError:
            continue
    raise RetryExhaustedError(f"no valid {kind.value} config after {max_retries} draws")


def config_key(config: LayerConfig) -> tuple:
    """Canonical hashable identity of a configuration (grouping key for splits)."""
    return (
        config.kind.value,
        config.batch_size,
        config.image_size,
        config.kernel_size,
        config.in_channels,
        config.out_channels,
        config.stride,
        config.padding,
    )


def _largest_remainder_sizes(n: int, fractions: tuple[float, ...]) -> list[int]:
    exact = [n * f for f in fractions]
    sizes = [int(x) for x in exact]
    remainder = n - sum(sizes)
    # distribute leftovers to the largest fractional parts; ties go to the
    # earlier bucket (train before val before test)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def split(
    records: list[MeasurementRecord], spec: SplitSpec
) -> tuple[list[MeasurementRecord], list[MeasurementRecord], list[MeasurementRecord]]:
    """Deterministic grouped train/val/test partition.

    All repeats of one configuration land in the same part; fractions are
    applied to the configuration groups with largest-remainder rounding.
    """
    if len(records) < 10:
        raise TooFewRecordsError(f"need at least 10 records to split, got {len(records)}")
    groups: dict[tuple, list[MeasurementRecord]] = {}
    for record in records:
        groups.setdefault(config_key(record.config), []).append(record)
    keys = sorted(groups, key=lambda k: tuple(-1 if v is None else v for v in k[1:]) + (k[0],))
    gen = np.random.default_rng(spec.seed)
    keys = [keys[i] for i in gen.permutation(len(keys))]
    n_train, n_val, _ = _largest_remainder_sizes(
        len(keys), (spec.train_fraction, spec.val_fraction, spec.test_fraction)
    )
    parts: tuple[list, list, list] = ([], [], [])
    for pos, key in enumerate(keys):
        bucket = 0 if pos < n_train else (1 if pos < n_train + n_val else 2)
        parts[bucket].extend(groups[key])
    return parts


def merge_real_configs(
    train: list[MeasurementRecord], real: list[MeasurementRecord]
) -> list[MeasurementRecord]:
    """Enrich a training set with measurements of real-architecture layer configs."""
    kinds = {r.module for r in train} | {r.module for r in real}
    if len(kinds) > 1:
        raise KindMismatchError(f"cannot merge records of mixed kinds {sorted(k.value for k in kinds)}")
    return list(train) + list(real)


def modelwise_to_layerwise(records: list["ModelWiseRecord"]) -> list[MeasurementRecord]:
    """Per-layer measurements of real architectures as training records."""
    out = []
    for record in records:
        for layer in record.layers:
            out.append(
                MeasurementRecord(
                    module=layer.module,
                    config=layer.config,
                    macs=layer.macs,
                    cpu_energy_j=layer.cpu_energy_j,
                    repeat=1,
                    source=SOURCE_REAL,
                )
            )
    return out


LAYERWISE_HEADER = (
    "module",
    "batch_size",
    "image_size",
    "kernel_size",
    "in_channels",
    "out_channels",
    "stride",
    "padding",
    "macs",
    "cpu_energy_j",
    "repeat",
    "source",
)

_PARAM_COLUMNS = ("batch_size", "image_size", "kernel_size", "in_channels", "out_channels", "stride", "padding")


def _config_from_row(kind: LayerKind, row: dict) -> LayerConfig:
    fields = {}
    for name in _PARAM_COLUMNS:
        raw = row.get(name, "")
        if raw not in ("", None):
            fields[name] = int(raw)
    return LayerConfig(kind=kind, **fields)


def write_layerwise_csv(path, records: list[MeasurementRecord], append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(LAYERWISE_HEADER)
        for record in records:
            cfg = record.config
            writer.writerow(
                [record.module.value]
                + ["" if getattr(cfg, name) is None else getattr(cfg, name) for name in _PARAM_COLUMNS]
                + [record.macs, repr(float(record.cpu_energy_j)), record.repeat, record.source]
            )


def load_layerwise_csv(path, verify_macs: bool = True) -> list[MeasurementRecord]:
    """Read layer-wise rows; rows with missing or negative energy are dropped with a warning."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = set(LAYERWISE_HEADER) - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                kind = LayerKind(row["module"])
                raw_energy = (row["cpu_energy_j"] or "").strip()
                energy = float(raw_energy) if raw_energy else None
                config = _config_from_row(kind, row)
                config.require_standalone()
                macs = int(row["macs"])
                repeat = int(row["repeat"] or 1)
                source = row["source"] or SOURCE_RANDOM
            except (ValueError, ValidationError) as exc:
                raise ParseError(f"{path}: row {line}: {exc}") from exc
            if energy is None or energy < 0:
                warnings.warn(
                    f"{path}: row {line}: dropped erroneous energy reading {raw_energy!r}",
                    UserWarning,
                    stacklevel=2,
                )
                continue
            if verify_macs:
                recomputed = standalone_macs(config)
                if recomputed != macs:
                    warnings.warn(
                        f"{path}: row {line}: stored macs {macs} != recomputed {recomputed}",
                        ConsistencyWarning,
                        stacklevel=2,
                    )
            records.append(
                MeasurementRecord(
                    module=kind, config=config, macs=macs, cpu_energy_j=energy, repeat=repeat, source=source
                )
            )
    return records


MODELWISE_HEADER = (
    "architecture",
    "batch_size",
    "row_type",
    "layer_index",
    "module",
    "image_size",
    "kernel_size",
    "in_channels",
    "out_channels",
    "stride",
    "padding",
    "macs",
    "cpu_energy_j",
)


def write_modelwise_csv(path, records: list[ModelWiseRecord], append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(MODELWISE_HEADER)
        for record in records:
            writer.writerow(
                [record.architecture, record.batch_size, "total", "", "", "", "", "", "", "", "",
                 record.total_macs, repr(float(record.total_energy_j))]
            )
            for layer in record.layers:
                cfg = layer.config
                writer.writerow(
                    [record.architecture, record.batch_size, "layer", layer.layer_index, layer.module.value]
                    + ["" if getattr(cfg, name) is None else getattr(cfg, name)
                       for name in _PARAM_COLUMNS if name != "batch_size"]
                    + [layer.macs, repr(float(layer.cpu_energy_j))]
                )


def load_modelwise_csv(path) -> list[ModelWiseRecord]:
    """Read model-wise rows grouped as one total row followed by its layer rows."""
    records: list[ModelWiseRecord] = []
    current: ModelWiseRecord | None = None
    layers: list[ModelWiseLayer] = []

    def flush():
        nonlocal current
        if current is not None:
            records.append(replace(current, layers=tuple(layers)))
            current = None
            layers.clear()

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = set(MODELWISE_HEADER) - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                raw_energy = (row["cpu_energy_j"] or "").strip()
                energy = float(raw_energy) if raw_energy else None
                if row["row_type"] == "total":
                    flush()
                    if energy is None or energy < 0:
                        warnings.warn(
                            f"{path}: row {line}: dropped erroneous total {raw_energy!r}",
                            UserWarning,
                            stacklevel=2,
                        )
                        continue
                    current = ModelWiseRecord(
                        architecture=row["architecture"],
                        batch_size=int(row["batch_size"]),
                        total_energy_j=energy,
                        total_macs=int(row["macs"] or 0),
                    )
                elif row["row_type"] == "layer":
                    if current is None:
                        raise ParseError(f"{path}: row {line}: layer row before any total row")
                    if energy is None or energy < 0:
                        warnings.warn(
                            f"{path}: row {line}: dropped erroneous layer energy {raw_energy!r}",
                            UserWarning,
                            stacklevel=2,
                        )
                        continue
                    kind = LayerKind(row["module"])
                    config = _config_from_row(kind, {**row, "batch_size": row["batch_size"]})
                    layers.append(
                        ModelWiseLayer(
                            layer_index=int(row["layer_index"]),
                            module=kind,
                            config=config,
                            macs=int(row["macs"]),
                            cpu_energy_j=energy,
                        )
                    )
                else:
                    raise ValueError(f"unknown row_type {row['row_type']!r}")
            except ParseError:
                raise
            except (ValueError, ValidationError) as exc:
                raise ParseError(f"{path}: row {line}: {exc}") from exc
    flush()
    return records
