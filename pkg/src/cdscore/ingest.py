"""CSV ingestion: comma-separated, header row required, '.' decimal point."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import MissingColumn, NonNumericCell, ParseError, ValidationError
from .model_data import (
    Dataset,
    ReplicateMatrix,
    StandardizationRecord,
    estimate_error_moments,
    standardize,
    surrogate_from_replicates,
)

__all__ = ["ColumnSpec", "Ingested", "ingest_csv", "read_table"]


@dataclass(frozen=True)
class ColumnSpec:
    """Column roles.  Two or more surrogate columns are treated as replicates;
    ``covariates=None`` takes every column not otherwise named."""

    response: str
    surrogate: tuple
    covariates: tuple | None = None

    def __post_init__(self):
        sur = (self.surrogate,) if isinstance(self.surrogate, str) else tuple(self.surrogate)
        if not sur:
            raise ValidationError("at least one surrogate column is required")
        object.__setattr__(self, "surrogate", sur)
        if self.covariates is not None:
            cov = ((self.covariates,) if isinstance(self.covariates, str)
                   else tuple(self.covariates))
            object.__setattr__(self, "covariates", cov)
        named = [self.response, *self.surrogate, *(self.covariates or ())]
        dup = sorted({c for c in named if named.count(c) > 1})
        if dup:
            raise ValidationError(f"columns assigned more than one role: {dup}")

    @property
    def replicated(self) -> bool:
        return len(self.surrogate) > 1


@dataclass(frozen=True)
class Ingested:
    raw: Dataset
    standardized: Dataset
    record: StandardizationRecord
    moments: dict
    columns: ColumnSpec


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Parse a numeric CSV into ``(header, values)``.

    Cell errors carry the 1-based file line and the column name.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        except UnicodeDecodeError:
            raise ParseError(f"{path}: not valid UTF-8", row=1) from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise ParseError(f"{path}: blank column name in header", row=1)
        rows = []
        try:
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(
                        f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}",
                        row=line_no)
                vals = []
                for col, cell in zip(header, row):
                    text = cell.strip()
                    try:
                        if not text:
                            raise ValueError
                        vals.append(float(text))
                    except ValueError:
                        raise NonNumericCell(
                            f"{path}:{line_no}: column {col!r} has non-numeric cell {cell!r}",
                            row=line_no, column=col) from None
                rows.append(vals)
        except UnicodeDecodeError:
            raise ParseError(f"{path}: not valid UTF-8") from None
    if not rows:
        raise ParseError(f"{path}: no data rows", row=2)
    return header, np.array(rows, dtype=float)


def _pick(header, values, names, path):
    idx = []
    for name in names:
        if name not in header:
            raise MissingColumn(f"{path}: no column named {name!r}", column=name)
        idx.append(header.index(name))
    return values[:, idx]


def ingest_csv(path, spec: ColumnSpec, sigma_u2: float | None = None,
               eu4: float | None = None) -> Ingested:
    """Read, validate and standardize a data file.

    With a single surrogate column ``sigma_u2`` is required and ``eu4``
    defaults to the Gaussian value.  With replicate columns, whichever of
    the two moments is not supplied is estimated from the replicates and the
    row mean becomes the surrogate.
    """
    header, values = read_table(path)
    y = _pick(header, values, [spec.response], path)[:, 0]
    cov = spec.covariates
    if cov is None:
        taken = {spec.response, *spec.surrogate}
        cov = tuple(h for h in header if h not in taken)
    if not cov:
        raise ValidationError(f"{path}: no covariate columns")
    z = _pick(header, values, cov, path)
    sur = _pick(header, values, spec.surrogate, path)
    if spec.replicated:
        reps = ReplicateMatrix(sur)
        est_s2, est_u4 = estimate_error_moments(reps)
        single_s2 = est_s2 if sigma_u2 is None else float(sigma_u2)
        single_u4 = est_u4 if eu4 is None else float(eu4)
        avg = surrogate_from_replicates(reps, single_s2, single_u4)
        w, s2, u4 = avg.w, avg.sigma_u2, avg.eu4
        moments = {"source": "replicates", "replicates": reps.m,
                   "sigma_u2_single": single_s2, "eu4_single": single_u4,
                   "sigma_u2_estimated": est_s2, "eu4_estimated": est_u4,
                   "sigma_u2": s2, "eu4": u4}
    else:
        if sigma_u2 is None:
            raise ValidationError("a single surrogate column needs --sigma-u2 "
                                  "(or give two or more replicate columns)")
        w = sur[:, 0]
        s2 = float(sigma_u2)
        u4 = None if eu4 is None else float(eu4)
        moments = {"source": "given", "replicates": 1, "sigma_u2": s2}
    raw = Dataset(y, w, z, s2, u4)
    moments["eu4"] = raw.eu4
    std, rec = standardize(raw)
    return Ingested(raw, std, rec, moments, ColumnSpec(spec.response, spec.surrogate, cov))
