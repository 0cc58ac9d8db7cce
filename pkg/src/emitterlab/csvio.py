"""Strict numeric CSV reading with byte-offset diagnostics."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Malformed input file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def read_columns(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Read a headed numeric CSV and return the named columns as float arrays.

    Every data row must have as many fields as the header, all numeric.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", 0) from exc
    offset = 0
    header = None
    rows: list[list[float]] = []
    for line in raw.splitlines(keepends=True):
        text = line.decode("utf-8", errors="replace").strip()
        if text and not text.startswith("#"):
            cells = [c.strip() for c in text.split(",")]
            if header is None:
                header = cells
                missing = [c for c in required if c not in header]
                if missing:
                    raise InputError(f"{path}: missing column(s) {missing}", offset)
            else:
                if len(cells) != len(header):
                    raise InputError(f"{path}: expected {len(header)} fields, found {len(cells)}", offset)
                try:
                    rows.append([float(c) for c in cells])
                except ValueError:
                    raise InputError(f"{path}: non-numeric field", offset) from None
        offset += len(line)
    if header is None:
        raise InputError(f"{path}: empty file", 0)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, header.index(name)] for name in header}


def read_matrix(path) -> np.ndarray:
    """Headerless numeric CSV matrix (scan maps)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", 0) from exc
    rows, offset, width = [], 0, None
    for line in raw.splitlines(keepends=True):
        text = line.decode("utf-8", errors="replace").strip()
        if text:
            try:
                vals = [float(c) for c in text.split(",")]
            except ValueError:
                raise InputError(f"{path}: non-numeric field", offset) from None
            if width is not None and len(vals) != width:
                raise InputError(f"{path}: ragged row", offset)
            width = len(vals)
            rows.append(vals)
        offset += len(line)
    if not rows:
        raise InputError(f"{path}: empty file", 0)
    return np.array(rows)
