"""Atomic artifact writing and CSV helpers."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

from .model import SCHEMA_VERSION


def atomic_write_bytes(path, data: bytes):
    """Write ``data`` to a temp file in the target directory and rename it in place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def format_value(v) -> str:
    """Deterministic text form: ``repr`` of floats round-trips exactly."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(columns, rows, config_hash="", seed=None, extra=None) -> str:
    """CSV body preceded by ``#`` comment lines with schema version, config hash and seed."""
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# config_hash: {config_hash or 'none'}\n")
    buf.write(f"# seed: {seed if seed is not None else 'none'}\n")
    for key, val in (extra or {}).items():
        buf.write(f"# {key}: {val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, **header):
    atomic_write_text(path, csv_text(columns, rows, **header))


def read_csv(path):
    """Return ``(header_dict, columns, rows)``; values stay as strings."""
    header, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                header[key.strip()] = val.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        return header, [], []
    return header, columns, [row for row in reader]
