"""CSV formats written and read by the command line front end.

Numbers are printed with 17 significant digits so doubles round-trip.
Lines starting with ``#`` carry run summaries.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import InputError
from .exchange import Allocation

HOMOGENEOUS_HEADER = ["state_value", "probability", "x0", "x_reinsurer", "multiplicity"]
SWEEP_HEADER = ["n", "a", "sup_err_x0", "sup_x1"]


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_comments(out: TextIO, comments: Iterable[str]):
    for line in comments:
        out.write(f"# {line}\n")


def write_allocation(out: TextIO, alloc: Allocation, comments: Iterable[str] = ()):
    """Homogeneous pools (one reinsurer row) use the five-column header;
    other pools get one ``x_reinsurer_<k>`` column per reinsurer."""
    w = csv.writer(out, lineterminator="\n")
    if alloc.rows <= 2:
        w.writerow(HOMOGENEOUS_HEADER)
        mult = int(alloc.multiplicity[1]) if alloc.rows == 2 else 0
        for k in range(alloc.support.size):
            x_re = alloc.shares[1, k] if alloc.rows == 2 else 0.0
            w.writerow([fmt(alloc.support[k]), fmt(alloc.probabilities[k]), fmt(alloc.shares[0, k]),
                        fmt(x_re), str(mult)])
    else:
        full = alloc.expanded()
        w.writerow(["state_value", "probability", "x0"] + [f"x_reinsurer_{i}" for i in range(1, full.rows)])
        for k in range(full.support.size):
            w.writerow([fmt(full.support[k]), fmt(full.probabilities[k])] + [fmt(v) for v in full.shares[:, k]])
    _write_comments(out, comments)


def read_allocation(path) -> Allocation:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read allocation file: {exc.strerror}", source=path) from exc
    rows = [(i, ln) for i, ln in enumerate(lines, start=1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise InputError("empty allocation file", source=path)
    header = [h.strip() for h in rows[0][1].split(",")]
    homogeneous = header == HOMOGENEOUS_HEADER
    if not homogeneous and (header[:3] != ["state_value", "probability", "x0"]
                            or any(h != f"x_reinsurer_{i}" for i, h in enumerate(header[3:], start=1))):
        raise InputError(f"unrecognised header {rows[0][1]!r}", line=rows[0][0], source=path)
    data = []
    for lineno, ln in rows[1:]:
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != len(header):
            raise InputError(f"expected {len(header)} fields, got {len(fields)}", line=lineno, source=path)
        try:
            data.append([float(f) for f in fields])
        except ValueError:
            raise InputError(f"non-numeric field in {ln!r}", line=lineno, source=path) from None
    if not data:
        raise InputError("allocation file has no rows", source=path)
    arr = np.array(data)
    support, probs = arr[:, 0], arr[:, 1]
    if homogeneous:
        mult = arr[:, 4]
        if np.any(mult != mult[0]) or mult[0] < 0 or mult[0] != int(mult[0]):
            raise InputError("multiplicity must be one non-negative integer for all rows", source=path)
        if mult[0] == 0:
            return Allocation(support, probs, arr[:, 2][None, :], [1.0])
        return Allocation(support, probs, arr[:, 2:4].T, [1.0, mult[0]])
    return Allocation(support, probs, arr[:, 2:].T, np.ones(arr.shape[1] - 2))


def write_sweep(out: TextIO, points, comments: Iterable[str] = ()):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for pt in points:
        w.writerow([fmt(pt.n), fmt(pt.aggregate_a), fmt(pt.sup_err_originator), fmt(pt.sup_reinsurer)])
    _write_comments(out, comments)
