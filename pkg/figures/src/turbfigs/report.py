"""Parsing and validation of the simulator's report JSON schema."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np


class ReportParseError(ValueError):
    """A report file is missing or does not follow the documented schema."""


@dataclass(frozen=True)
class BasisResult:
    dim: int
    label: str
    kind: str
    values: np.ndarray
    stddev: np.ndarray
    qder: float
    qder_stddev: float
    thresholds: dict


@dataclass(frozen=True)
class Report:
    path: str
    config: dict
    config_hash: str
    results: tuple[BasisResult, ...]

    @property
    def ao_enabled(self) -> bool:
        return bool(self.config.get("ao_enabled", False))

    @property
    def panel_title(self) -> str:
        return "AO on" if self.ao_enabled else "AO off"

    def labels(self) -> list[str]:
        return [r.label for r in self.results]

    def result(self, label: str | None) -> BasisResult:
        if label is None:
            return self.results[0]
        for r in self.results:
            if r.label == label:
                return r
        raise ReportParseError(
            f"{self.path}: no result labeled {label!r}; have {self.labels()}"
        )


def _require(payload: dict, key: str, path: str):
    if key not in payload:
        raise ReportParseError(f"{path}: missing required key {key!r}")
    return payload[key]


def _parse_result(entry: dict, path: str) -> BasisResult:
    crosstalk = _require(entry, "crosstalk", path)
    q = _require(entry, "qder", path)
    dim = int(_require(entry, "dim", path))
    kind = str(_require(entry, "kind", path))
    values = np.asarray(_require(crosstalk, "values", path), dtype=float)
    stddev = np.asarray(_require(crosstalk, "stddev", path), dtype=float)
    size = dim if kind == "mub" else dim * dim
    if values.shape != (size, size) or stddev.shape != (size, size):
        raise ReportParseError(
            f"{path}: crosstalk for {entry.get('label')} is {values.shape}, "
            f"expected {(size, size)}"
        )
    qder = float(_require(q, "qder", path))
    if not (0.0 <= qder <= 1.0):
        raise ReportParseError(f"{path}: qder {qder} outside [0, 1]")
    return BasisResult(
        dim=dim,
        label=str(_require(entry, "label", path)),
        kind=kind,
        values=values,
        stddev=stddev,
        qder=qder,
        qder_stddev=float(q.get("stddev", 0.0)),
        thresholds=dict(q.get("thresholds", {})),
    )


def load_report(path) -> Report:
    """Parse a report.json (or the directory containing one)."""
    path = str(path)
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ReportParseError(f"{path}: no such report file")
    except json.JSONDecodeError as exc:
        raise ReportParseError(f"{path}: invalid JSON ({exc})")
    results = tuple(
        _parse_result(entry, path) for entry in _require(payload, "results", path)
    )
    if not results:
        raise ReportParseError(f"{path}: report contains no results")
    return Report(
        path=path,
        config=_require(payload, "config", path),
        config_hash=str(_require(payload, "config_hash", path)),
        results=results,
    )


def fields_dir(report: Report) -> str:
    return os.path.join(os.path.dirname(report.path), "fields")
