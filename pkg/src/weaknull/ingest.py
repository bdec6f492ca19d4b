"""CSV input."""

from __future__ import annotations

import csv
import re

import numpy as np

from .data import ExperimentDataset
from .errors import ParseError

_VECTOR_COL = re.compile(r"^outcome_(\d+)$")


def _outcome_columns(header: list[str]) -> list[int]:
    if "outcome" in header:
        if any(_VECTOR_COL.match(h) for h in header):
            raise ParseError("use either 'outcome' or 'outcome_1..outcome_d', not both", 1)
        return [header.index("outcome")]
    numbered = sorted((int(m.group(1)), k) for k, h in enumerate(header) if (m := _VECTOR_COL.match(h)))
    if not numbered:
        raise ParseError("missing 'outcome' column", 1)
    if [n for n, _ in numbered] != list(range(1, len(numbered) + 1)):
        raise ParseError("vector outcome columns must be outcome_1..outcome_d without gaps", 1)
    return [k for _, k in numbered]


def read_csv(path, stratified: bool | None = None, clustered: bool | None = None) -> ExperimentDataset:
    """Read a dataset; row order is preserved.

    Required columns: ``treatment`` and ``outcome`` (or ``outcome_1`` ..
    ``outcome_d``). Optional: ``stratum``, ``cluster``, ``unit_id``. The
    design follows from which optional columns are present unless
    ``stratified`` / ``clustered`` say otherwise (``False`` ignores the
    column, ``True`` requires it).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if "treatment" not in header:
            raise ParseError("missing 'treatment' column", 1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names", 1)
        out_cols = _outcome_columns(header)
        t_col = header.index("treatment")
        s_col = header.index("stratum") if "stratum" in header else None
        c_col = header.index("cluster") if "cluster" in header else None
        u_col = header.index("unit_id") if "unit_id" in header else None
        if stratified is True and s_col is None:
            raise ParseError("stratified analysis requested but no 'stratum' column", 1)
        if clustered is True and c_col is None:
            raise ParseError("cluster analysis requested but no 'cluster' column", 1)
        if stratified is False:
            s_col = None
        if clustered is False:
            c_col = None

        treat, ys, strata, clusters, ids = [], [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            cells = [c.strip() for c in row]
            if not cells[t_col]:
                raise ParseError("empty treatment label", line)
            try:
                ys.append([float(cells[k]) for k in out_cols])
            except ValueError:
                raise ParseError("non-numeric outcome", line) from None
            if not np.all(np.isfinite(ys[-1])):
                raise ParseError("non-finite outcome", line)
            treat.append(cells[t_col])
            if s_col is not None:
                strata.append(cells[s_col])
            if c_col is not None:
                clusters.append(cells[c_col])
            if u_col is not None:
                ids.append(cells[u_col])
    if not treat:
        raise ParseError("no data rows", 2)
    return ExperimentDataset.from_arrays(
        treat,
        np.array(ys),
        stratum=strata if s_col is not None else None,
        cluster=clusters if c_col is not None else None,
        unit_ids=ids if u_col is not None else None,
        arm_order=_arm_order(treat),
    )


def _arm_order(labels: list[str]) -> list[str]:
    """Numeric labels sort by value (so "10" follows "9"), others lexically."""
    distinct = sorted(set(labels))
    try:
        return sorted(distinct, key=float)
    except ValueError:
        return distinct


ingest_csv = read_csv
