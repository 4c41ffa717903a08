"""Figure builders and file writers.

Every draw call uses numbers taken verbatim from a parsed report or field
dump.  Rendering is deterministic: the SVG hash salt is pinned and no
timestamps are embedded, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import glob
import math
import os
import warnings
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import hsv_to_rgb  # noqa: E402

from .report import Report, ReportParseError, fields_dir, load_report  # noqa: E402

AO_ON_COLOR = "#2ca02c"  # green
AO_OFF_COLOR = "#1f77b4"  # blue
THRESHOLD_STYLES = {"bb84": ("black", "BB84 threshold"), "mub": ("dimgray", "MUB threshold")}

FIGURE_KINDS = ("heatmap-triptych", "qder-bars", "mode-gallery")

plt.rcParams["svg.hashsalt"] = "turbfigs"


@dataclass(frozen=True)
class FigureSpec:
    """What to draw, from which reports, and where to write it."""

    kind: str
    reports: tuple[str, ...]
    out: str  # output path without extension
    formats: tuple[str, ...] = ("png", "svg")
    label: str | None = None  # basis label to select; default: first result
    cmap: str = "viridis"
    threshold_lines: bool = True
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        if not self.reports:
            raise ValueError("at least one report path is required")
        for fmt in self.formats:
            if fmt not in ("png", "svg"):
                raise ValueError(f"unsupported format {fmt!r}")
        object.__setattr__(self, "reports", tuple(self.reports))
        object.__setattr__(self, "formats", tuple(self.formats))


def _save(fig, spec: FigureSpec) -> list[str]:
    os.makedirs(os.path.dirname(spec.out) or ".", exist_ok=True)
    written = []
    for fmt in spec.formats:
        path = f"{spec.out}.{fmt}"
        # Date: None strips the SVG timestamp; PNG carries no date by default
        fig.savefig(path, dpi=spec.dpi, metadata={"Date": None} if fmt == "svg" else None)
        written.append(path)
    plt.close(fig)
    return written


def build_heatmap_figure(reports: list[Report], spec: FigureSpec):
    """Side-by-side crosstalk heatmaps with one shared color scale."""
    if not 1 <= len(reports) <= 3:
        raise ValueError("heatmap triptych takes 1 to 3 reports")
    results = [r.result(spec.label) for r in reports]
    dims = {(res.dim, res.kind, res.label) for res in results}
    if len(dims) > 1:
        raise ReportParseError(f"panel dimension/basis mismatch across reports: {sorted(dims)}")
    vmax = max(float(res.values.max()) for res in results)
    size = results[0].values.shape[0]

    fig, axes = plt.subplots(
        1, len(results), figsize=(3.4 * len(results) + 1.0, 3.4), squeeze=False
    )
    images = []
    for ax, report, res in zip(axes[0], reports, results):
        im = ax.imshow(res.values, cmap=spec.cmap, vmin=0.0, vmax=vmax, origin="upper")
        images.append(im)
        ax.set_title(f"{res.label} ({report.panel_title})")
        ax.set_xlabel("sent mode")
        ax.set_ylabel("detected mode")
        ticks = range(size) if size <= 10 else range(0, size, max(1, size // 8))
        ax.set_xticks(list(ticks))
        ax.set_yticks(list(ticks))
    fig.colorbar(images[-1], ax=axes[0], shrink=0.85, label="probability")
    return fig


def render_heatmaps(spec: FigureSpec) -> list[str]:
    reports = [load_report(p) for p in spec.reports]
    return _save(build_heatmap_figure(reports, spec), spec)


def build_qder_bar_figure(reports: list[Report], spec: FigureSpec):
    """Grouped QDER bars (green AO on, blue AO off) with dotted threshold lines."""
    labels = reports[0].labels()
    for r in reports[1:]:
        if r.labels() != labels:
            raise ReportParseError(
                f"reports cover different bases: {labels} vs {r.labels()}"
            )
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(labels), 3.6))
    group_width = 0.8
    bar_width = group_width / len(reports)
    missing_thresholds = False
    for k, report in enumerate(reports):
        color = AO_ON_COLOR if report.ao_enabled else AO_OFF_COLOR
        xs = [i - group_width / 2 + (k + 0.5) * bar_width for i in range(len(labels))]
        heights = [res.qder for res in report.results]
        errs = [res.qder_stddev for res in report.results]
        ax.bar(
            xs,
            heights,
            width=bar_width,
            color=color,
            yerr=errs,
            capsize=3,
            label=report.panel_title,
        )
    if spec.threshold_lines:
        drawn = set()
        for i, res in enumerate(reports[0].results):
            if not res.thresholds:
                missing_thresholds = True
            for protocol, verdict in sorted(res.thresholds.items()):
                color, line_label = THRESHOLD_STYLES.get(protocol, ("firebrick", protocol))
                ax.hlines(
                    verdict["threshold"],
                    i - group_width / 2,
                    i + group_width / 2,
                    colors=color,
                    linestyles="dotted",
                    label=line_label if protocol not in drawn else None,
                )
                drawn.add(protocol)
        if missing_thresholds:
            warnings.warn("some bases have no stored thresholds; lines omitted for them")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("QDER")
    ax.set_ylim(bottom=0.0)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def render_qder_bars(spec: FigureSpec) -> list[str]:
    reports = [load_report(p) for p in spec.reports]
    return _save(build_qder_bar_figure(reports, spec), spec)


def complex_to_rgb(amplitudes: np.ndarray, vmax: float) -> np.ndarray:
    """Phase as hue, intensity as brightness, on a scale shared via vmax."""
    intensity = np.abs(amplitudes) ** 2
    hue = (np.angle(amplitudes) + np.pi) / (2 * np.pi)
    value = np.clip(intensity / vmax, 0.0, 1.0)
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    return hsv_to_rgb(hsv)


def build_gallery_figure(dumps: list[tuple[str, np.ndarray]], spec: FigureSpec):
    vmax = max(float((np.abs(a) ** 2).max()) for _, a in dumps)
    cols = min(len(dumps), 4)
    rows = math.ceil(len(dumps) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.4 * rows), squeeze=False)
    for ax in axes.flat:
        ax.set_axis_off()
    for ax, (name, amplitudes) in zip(axes.flat, dumps):
        ax.imshow(complex_to_rgb(amplitudes, vmax), origin="upper")
        ax.set_title(name, fontsize="small")
    fig.tight_layout()
    return fig


def load_field_dumps(directory: str) -> list[tuple[str, np.ndarray]]:
    paths = sorted(glob.glob(os.path.join(directory, "*.npz")))
    if not paths:
        raise ReportParseError(f"{directory}: no field dumps found")
    dumps = []
    for path in paths:
        with np.load(path) as data:
            dumps.append((os.path.splitext(os.path.basename(path))[0],
                          data["real"] + 1j * data["imag"]))
    return dumps


def render_mode_gallery(spec: FigureSpec) -> list[str]:
    report = load_report(spec.reports[0])
    dumps = load_field_dumps(fields_dir(report))
    if spec.label is not None:
        prefix = spec.label.replace(":", "_")
        dumps = [d for d in dumps if d[0].startswith(prefix)]
        if not dumps:
            raise ReportParseError(f"no field dumps match label {spec.label!r}")
    return _save(build_gallery_figure(dumps, spec), spec)


RENDERERS = {
    "heatmap-triptych": render_heatmaps,
    "qder-bars": render_qder_bars,
    "mode-gallery": render_mode_gallery,
}


def render(spec: FigureSpec) -> list[str]:
    return RENDERERS[spec.kind](spec)
