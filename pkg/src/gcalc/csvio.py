"""CSV emission with fixed 17-significant-digit formatting."""

from __future__ import annotations

import contextlib
import io
import os
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (str, bytes)):
        return value if isinstance(value, str) else value.decode()
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    v = float(value)
    if v == 0.0:
        v = 0.0  # drop the sign of negative zero
    return format(v, ".17g")


@contextlib.contextmanager
def _open(target):
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="") as fh:
            yield fh
    else:
        yield target


def write_rows(target, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with _open(target) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def rows_to_string(header, rows) -> str:
    buf = io.StringIO()
    write_rows(buf, header, rows)
    return buf.getvalue()
