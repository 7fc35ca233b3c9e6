"""Dataset CSV and model JSON files.

Dataset CSV: a header of ``f0..f{d-1}`` feature columns, optionally followed
by a ``label`` column whose empty cells mean "unlabeled". Floats are written
in shortest round-trip form so files re-parse to identical values.
"""
from __future__ import annotations

import csv
import json
import math
import os
from typing import Iterable

import numpy as np

from .dimred import PcaMap
from .errors import MarsslError
from .ssl import MarModel


class MalformedCsv(MarsslError, ValueError):
    """A CSV file does not follow the expected layout."""


def fmt_float(v) -> str:
    return repr(float(v))


def parse_label(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def _normalize_labels(raw: list):
    """Labels as ints when every present label is an integer literal, else strings."""
    present = [s for s in raw if s is not None]
    try:
        conv = {s: int(s) for s in set(present)}
    except ValueError:
        return raw
    return [None if s is None else conv[s] for s in raw]


def read_dataset(path) -> tuple[np.ndarray, list]:
    """Read a dataset CSV.

    Returns ``(X, labels)`` where ``labels[i]`` is ``None`` for unlabeled rows
    (and for every row when the file has no ``label`` column). An empty file
    yields a ``(0, 0)`` matrix.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return np.zeros((0, 0)), []
        has_label = bool(header) and header[-1] == "label"
        feat_cols = header[:-1] if has_label else header
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if feat_cols != expected:
            raise MalformedCsv(f"{path}: row 1 (header): expected columns {expected[:3]}... "
                               f"optionally followed by 'label', got {header}")
        width = len(header)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedCsv(f"{path}: row {lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[: len(feat_cols)]]
            except ValueError:
                raise MalformedCsv(f"{path}: row {lineno}: non-numeric feature value") from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedCsv(f"{path}: row {lineno}: non-finite feature value")
            rows.append(vals)
            lab = row[-1].strip() if has_label else ""
            labels.append(lab if lab != "" else None)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_cols))
    return X, _normalize_labels(labels)


def write_dataset(path, X, labels: Iterable | None = None) -> None:
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"f{i}" for i in range(d)]
        labs = None if labels is None else list(labels)
        if labs is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(X):
            out = [fmt_float(v) for v in row]
            if labs is not None:
                out.append("" if labs[i] is None else str(labs[i]))
            w.writerow(out)


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Header and string rows of a generic CSV, with row-numbered errors."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return [], []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return header, rows


def write_truth(path, labels, rare=None) -> None:
    """Sidecar ground truth: ``index,label[,rare]``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"] + (["rare"] if rare is not None else []))
        for i, lab in enumerate(labels):
            row = [i, str(lab)]
            if rare is not None:
                row.append(int(bool(rare[i])))
            w.writerow(row)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False, default=_json_default) + "\n"


def save_model(path, model: MarModel, pca: PcaMap | None = None) -> None:
    doc = model.to_dict()
    if pca is not None:
        doc["pca"] = pca.to_dict()
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))
    os.replace(tmp, path)


def load_model(path) -> tuple[MarModel, PcaMap | None]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    pca = PcaMap.from_dict(doc["pca"]) if doc.get("pca") else None
    return MarModel.from_dict(doc), pca
