"""Deterministic CSV and JSON emission.

Every file carries the hash of the resolved experiment spec: CSV tables as a
trailing ``spec_hash`` column, JSON documents as a top-level key.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from fractions import Fraction
from pathlib import Path


def _plain(obj):
    """Convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Fraction):
        return {"numerator": str(obj.numerator), "denominator": str(obj.denominator)}
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(doc):
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def spec_hash(resolved):
    blob = json.dumps(_plain(resolved), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cell(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def csv_text(header, rows, hash_value):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(list(header) + ["spec_hash"])
    for row in rows:
        w.writerow([_cell(v) for v in row] + [hash_value])
    return buf.getvalue()


class OutputSink:
    """Collects report files for one experiment run and writes them in name order."""

    def __init__(self, directory, formats, hash_value):
        self.directory = Path(directory) if directory else None
        self.formats = set(formats)
        self.hash = hash_value
        self.files = {}

    def table(self, name, header, rows):
        if "csv" in self.formats:
            self.files[f"{name}.csv"] = csv_text(header, rows, self.hash)

    def json(self, name, doc):
        if "json" in self.formats:
            self.files[f"{name}.json"] = dumps(dict(doc, spec_hash=self.hash))

    def svg(self, name, text):
        if "svg" in self.formats:
            self.files[f"{name}.svg"] = text

    def write(self):
        if self.directory is None:
            return []
        self.directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in sorted(self.files):
            p = self.directory / name
            p.write_text(self.files[name], encoding="utf-8", newline="")
            paths.append(p)
        return paths
