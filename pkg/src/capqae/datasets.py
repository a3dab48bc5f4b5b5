"""YAML market-data files.

A file is a single mapping::

    name: example
    provenance: free text
    units: decimal            # or "percent": rates, strike and vols are divided by 100
    tenor:
      dates: [1.0, 2.0, 3.0]
      fractions: [1.0, 1.0]   # optional, defaults to date differences
    stub_rate: 0.0469         # optional, defaults to the first forward
    forwards: [0.05, 0.055]
    vols:                     # row i holds sigma_{i,1..i}
      - [0.2]
      - [0.2, 0.2]
    correlation: null         # optional M x M matrix
    cap: {strike: 0.06, first: 1, last: 2, notional: 1.0}   # optional
    expected_value: 0.0123    # optional recorded analytic value

With ``units: decimal`` any rate or volatility above 1.0 is taken as a
percent-for-decimal slip and rejected unless ``allow_large=True``.
"""

from __future__ import annotations

import warnings
from importlib import resources
from pathlib import Path

import yaml

from .errors import ContractViolation, DatasetError, UnitWarning
from .lmm import CapSpec, ForwardCurve, MarketDataset, TenorStructure, VolSurface

__all__ = ["load_dataset", "parse_dataset", "dump_dataset", "save_dataset", "benchmark_path",
           "load_benchmark"]

_KEYS = {"name", "provenance", "units", "tenor", "stub_rate", "forwards", "vols",
         "correlation", "cap", "expected_value"}
_REQUIRED = ("tenor", "forwards", "vols")


def benchmark_path():
    return resources.files("capqae") / "data" / "benchmark.yaml"


def load_benchmark():
    with resources.as_file(benchmark_path()) as path:
        return load_dataset(path)


def _line_index(text):
    """Line numbers (1-based) of top-level keys and of the rows of ``vols``."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, value in root.value:
        lines[key.value] = key.start_mark.line + 1
        if key.value == "vols" and isinstance(value, yaml.SequenceNode):
            for r, row in enumerate(value.value):
                lines[("vols", r)] = row.start_mark.line + 1
    return lines


def _floats(value, field, line):
    if not isinstance(value, list) or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
    ):
        raise DatasetError("expected a list of numbers", field, line)
    return [float(v) for v in value]


def _number(value, field, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetError("expected a number", field, line)
    return float(value)


def _check_magnitudes(values, field, line, allow_large):
    big = [v for v in values if abs(v) > 1.0]
    if not big:
        return
    msg = f"{field} holds {big[0]!r}, which looks like a percentage; rates and vols are decimals"
    warnings.warn(msg, UnitWarning, stacklevel=4)
    if not allow_large:
        raise DatasetError(msg + " (set 'units: percent' or allow_large=True)", field, line)


def parse_dataset(text, allow_large=False):
    """Parse the YAML text of a dataset file.

    Raises:
        DatasetError: on malformed YAML, missing or unknown fields, wrong
            shapes, suspected percent units, or any model invariant.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise DatasetError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                           line=None if mark is None else mark.line + 1) from exc
    if not isinstance(raw, dict):
        raise DatasetError("dataset file must be a mapping")
    lines = _line_index(text)
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise DatasetError("unknown field", unknown[0], lines.get(unknown[0]))
    for key in _REQUIRED:
        if key not in raw:
            raise DatasetError("missing required field", key)

    units = raw.get("units", "decimal")
    if units not in ("decimal", "percent"):
        raise DatasetError("units must be 'decimal' or 'percent'", "units", lines.get("units"))
    scale = 0.01 if units == "percent" else 1.0

    tenor_raw = raw["tenor"]
    if not isinstance(tenor_raw, dict) or "dates" not in tenor_raw:
        raise DatasetError("tenor needs a 'dates' list", "tenor", lines.get("tenor"))
    dates = _floats(tenor_raw["dates"], "tenor.dates", lines.get("tenor"))
    fractions = tenor_raw.get("fractions")
    if fractions is not None:
        fractions = _floats(fractions, "tenor.fractions", lines.get("tenor"))

    forwards = _floats(raw["forwards"], "forwards", lines.get("forwards"))
    vols_raw = raw["vols"]
    if not isinstance(vols_raw, list):
        raise DatasetError("vols must be a list of rows", "vols", lines.get("vols"))
    vols = []
    for r, row in enumerate(vols_raw):
        where = lines.get(("vols", r), lines.get("vols"))
        row = _floats(row, f"vols[{r}]", where)
        if len(row) != r + 1:
            raise DatasetError(f"row {r + 1} must hold {r + 1} entries, got {len(row)}",
                               f"vols[{r}]", where)
        vols.append(row)

    stub = raw.get("stub_rate")
    if stub is not None:
        stub = _number(stub, "stub_rate", lines.get("stub_rate"))
    cap = raw.get("cap")
    if cap is not None:
        if not isinstance(cap, dict) or "strike" not in cap:
            raise DatasetError("cap needs a strike", "cap", lines.get("cap"))
        extra = set(cap) - {"strike", "first", "last", "notional"}
        if extra:
            raise DatasetError("unknown field", f"cap.{sorted(extra)[0]}", lines.get("cap"))
        strike = _number(cap["strike"], "cap.strike", lines.get("cap"))

    if units == "decimal":
        _check_magnitudes(forwards, "forwards", lines.get("forwards"), allow_large)
        if stub is not None:
            _check_magnitudes([stub], "stub_rate", lines.get("stub_rate"), allow_large)
        if cap is not None:
            _check_magnitudes([strike], "cap.strike", lines.get("cap"), allow_large)
        for r, row in enumerate(vols):
            _check_magnitudes(row, f"vols[{r}]", lines.get(("vols", r)), allow_large)

    correlation = raw.get("correlation")
    if correlation is not None:
        if not isinstance(correlation, list):
            raise DatasetError("correlation must be a matrix", "correlation",
                               lines.get("correlation"))
        correlation = tuple(tuple(_floats(row, "correlation", lines.get("correlation")))
                            for row in correlation)
    expected = raw.get("expected_value")
    if expected is not None:
        expected = _number(expected, "expected_value", lines.get("expected_value"))

    field = "tenor"
    try:
        tenor = TenorStructure(tuple(dates), None if fractions is None else tuple(fractions))
        field = "forwards"
        curve = ForwardCurve(tuple(f * scale for f in forwards))
        field = "vols"
        surface = VolSurface(tuple(tuple(v * scale for v in row) for row in vols))
        spec = None
        if cap is not None:
            field = "cap"
            spec = CapSpec(strike * scale, int(cap.get("first", 1)), int(cap.get("last", 1)),
                           float(cap.get("notional", 1.0)))
        field = "dataset"
        return MarketDataset(
            tenor=tenor,
            curve=curve,
            vols=surface,
            stub_rate=None if stub is None else stub * scale,
            correlation=correlation,
            name=str(raw.get("name", "")),
            provenance=str(raw.get("provenance", "")),
            cap=spec,
            expected_value=expected,
        )
    except ContractViolation as exc:
        raise DatasetError(str(exc), field, lines.get(field)) from exc


def load_dataset(path, allow_large=False):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_dataset(text, allow_large)


def dump_dataset(dataset):
    """YAML text that parses back to an equal dataset (decimal units)."""
    doc = {
        "name": dataset.name,
        "provenance": dataset.provenance,
        "units": "decimal",
        "tenor": {"dates": list(dataset.tenor.dates), "fractions": list(dataset.tenor.fractions)},
        "stub_rate": dataset.stub_rate,
        "forwards": list(dataset.curve.forwards),
        "vols": [list(row) for row in dataset.vols.table],
        "correlation": None if dataset.correlation is None
        else [list(row) for row in dataset.correlation],
        "cap": None if dataset.cap is None else {
            "strike": dataset.cap.strike, "first": dataset.cap.first,
            "last": dataset.cap.last, "notional": dataset.cap.notional,
        },
        "expected_value": dataset.expected_value,
    }
    doc = {k: v for k, v in doc.items() if v is not None}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def save_dataset(dataset, path):
    Path(path).write_text(dump_dataset(dataset), encoding="utf-8")
