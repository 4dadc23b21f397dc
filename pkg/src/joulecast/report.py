"""Report artifacts: each chart is written as a CSV plus an SVG rendered from
the same in-memory rows, so the CSV alone can regenerate the image."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

from .arch import LayerKind
from .errors import ParseError, SchemaError
from .predict import AblationRow, LayerPoint, TotalPoint
from .svgplot import scatter_svg, stacked_bar_svg


@dataclass(frozen=True)
class ReportArtifact:
    kind: str  # scatter | contribution_bars | aggregate_vs_total | ablation_scatter
    csv_path: str
    svg_path: str


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path, required) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = set(required) - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        try:
            return list(reader)
        except csv.Error as exc:
            raise ParseError(f"{path}: {exc}") from exc


LAYER_SCATTER_HEADER = ("architecture", "batch_size", "layer_index", "module", "measured_j", "predicted_j")
TOTALS_HEADER = ("architecture", "batch_size", "measured_j", "predicted_j", "layer_measured_sum_j")
ABLATION_HEADER = ("mask", "features", "contains_mac", "r2", "mse")


def write_layer_scatter_csv(path, points: tuple[LayerPoint, ...]) -> None:
    _write_csv(
        path,
        LAYER_SCATTER_HEADER,
        [
            (p.architecture, p.batch_size, p.layer_index, p.kind.value,
             repr(float(p.measured_j)), repr(float(p.predicted_j)))
            for p in points
        ],
    )


def write_totals_csv(path, points: tuple[TotalPoint, ...]) -> None:
    _write_csv(
        path,
        TOTALS_HEADER,
        [
            (p.architecture, p.batch_size, repr(float(p.measured_j)), repr(float(p.predicted_j)),
             repr(float(p.layer_measured_sum_j)))
            for p in points
        ],
    )


def write_ablation_csv(path, rows: list[AblationRow]) -> None:
    _write_csv(
        path,
        ABLATION_HEADER,
        [
            (row.mask, "+".join(row.features), int("macs" in row.features),
             repr(float(row.r2)), repr(float(row.mse)))
            for row in rows
        ],
    )


def layer_scatter_artifacts(csv_path, out_dir) -> list[ReportArtifact]:
    """One measured-vs-predicted scatter per layer kind (ground truth on x)."""
    rows = _read_csv(csv_path, LAYER_SCATTER_HEADER)
    artifacts = []
    kinds = sorted({row["module"] for row in rows})
    for kind in kinds:
        pts = [
            (float(r["measured_j"]), float(r["predicted_j"])) for r in rows if r["module"] == kind
        ]
        svg = scatter_svg(
            [(kind, pts)],
            title=f"{kind}: measured vs predicted energy per pass",
            xlabel="measured energy (J)",
            ylabel="predicted energy (J)",
        )
        svg_path = os.path.join(out_dir, f"scatter_{kind.lower()}.svg")
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        artifacts.append(ReportArtifact("scatter", str(csv_path), svg_path))
    return artifacts


def totals_scatter_artifact(csv_path, out_dir) -> ReportArtifact:
    """Measured totals vs summed per-layer predictions, grouped by architecture."""
    rows = _read_csv(csv_path, TOTALS_HEADER)
    by_arch: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        by_arch.setdefault(row["architecture"], []).append(
            (float(row["measured_j"]), float(row["predicted_j"]))
        )
    svg = scatter_svg(
        sorted(by_arch.items()),
        title="Full-architecture energy: measured vs predicted",
        xlabel="measured energy (J)",
        ylabel="sum of layer predictions (J)",
    )
    svg_path = os.path.join(out_dir, "scatter_totals.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return ReportArtifact("scatter", str(csv_path), svg_path)


def aggregate_vs_total_artifact(csv_path, out_dir) -> ReportArtifact:
    """Measured totals vs the sum of the per-layer measurements (consistency check)."""
    rows = _read_csv(csv_path, TOTALS_HEADER)
    by_arch: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        by_arch.setdefault(row["architecture"], []).append(
            (float(row["measured_j"]), float(row["layer_measured_sum_j"]))
        )
    svg = scatter_svg(
        sorted(by_arch.items()),
        title="Total measured energy vs layer-wise aggregate",
        xlabel="total measured energy (J)",
        ylabel="sum of layer measurements (J)",
    )
    svg_path = os.path.join(out_dir, "aggregate_vs_total.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return ReportArtifact("aggregate_vs_total", str(csv_path), svg_path)


def contribution_artifact(layer_csv_path, out_dir) -> ReportArtifact:
    """Relative per-kind contribution to each architecture's measured energy."""
    rows = _read_csv(layer_csv_path, LAYER_SCATTER_HEADER)
    totals: dict[str, dict[str, float]] = {}
    for row in rows:
        arch = totals.setdefault(row["architecture"], {})
        arch[row["module"]] = arch.get(row["module"], 0.0) + float(row["measured_j"])
    kind_order = [k.value for k in LayerKind]
    bars = [
        (arch, [(kind, parts[kind]) for kind in kind_order if kind in parts])
        for arch, parts in sorted(totals.items())
    ]
    svg = stacked_bar_svg(
        bars,
        title="Layer-type contributions to measured energy",
        ylabel="fraction of measured energy",
    )
    svg_path = os.path.join(out_dir, "contribution_bars.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return ReportArtifact("contribution_bars", str(layer_csv_path), svg_path)


def ablation_artifact(csv_path, out_dir) -> ReportArtifact:
    """Subset index vs test score, split by MAC membership."""
    rows = _read_csv(csv_path, ABLATION_HEADER)
    with_mac = [(float(r["mask"]), float(r["r2"])) for r in rows if r["contains_mac"] == "1"]
    without = [(float(r["mask"]), float(r["r2"])) for r in rows if r["contains_mac"] != "1"]
    svg = scatter_svg(
        [("with MAC count", with_mac), ("without MAC count", without)],
        title="Feature-subset scores",
        xlabel="feature subset index",
        ylabel="test R^2",
        diagonal=False,
    )
    svg_path = os.path.join(out_dir, "ablation_scatter.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return ReportArtifact("ablation_scatter", str(csv_path), svg_path)
