"""WTTAG001 binary time-tag files and their text metadata sidecar.

Layout (little-endian): the 8-byte magic ``WTTAG001`` followed by 12-byte
records ``{u64 t_ps, u8 channel, u8 flags, u16 pol_centidegrees}``. A
polarization of 0xFFFF marks a record without one. The sidecar
``<file>.meta`` holds ``key=value`` lines, including ``n_records`` and the
seed, plus an echo of the generating configuration.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .csvio import InputError
from .photon_stream import TimeTagStream

MAGIC = b"WTTAG001"
RECORD = np.dtype([("t", "<u8"), ("channel", "u1"), ("flags", "u1"), ("pol", "<u2")])
NO_POL = 0xFFFF
MAX_CHANNEL = 1


class TagFileError(InputError):
    """Malformed time-tag file; ``offset`` is the byte where reading failed."""


def meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta")


def _meta_value(v) -> str:
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True, default=float)
    return str(v)


def write_tags(stream: TimeTagStream, path, extra: dict | None = None) -> None:
    rec = np.empty(len(stream), dtype=RECORD)
    rec["t"] = stream.t
    rec["channel"] = stream.channel
    rec["flags"] = stream.flags
    if stream.pol_angle is None:
        rec["pol"] = NO_POL
    else:
        rec["pol"] = np.rint(np.asarray(stream.pol_angle) % 360.0 * 100).astype(np.uint16) % 36000
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(rec.tobytes())
    meta = {"format": "WTTAG001", "n_records": len(stream), "duration_ps": stream.duration_ps}
    meta.update(stream.metadata)
    meta.update(extra or {})
    meta["n_records"] = len(stream)
    with open(meta_path(path), "w") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={_meta_value(meta[k])}\n")


def read_meta(path) -> dict:
    """Parse the sidecar; values stay strings except JSON-looking ones."""
    out: dict = {}
    p = meta_path(path)
    if not p.exists():
        return out
    for n, line in enumerate(p.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise TagFileError(f"{p}: line {n} is not key=value", 0)
        k, v = line.split("=", 1)
        if v[:1] in "{[":
            try:
                v = json.loads(v)
            except json.JSONDecodeError:
                pass
        out[k.strip()] = v
    return out


def read_tags(path) -> TimeTagStream:
    """Read and validate a WTTAG001 file.

    Raises TagFileError on a bad magic, a partial trailing record, an
    unknown channel, unsorted timestamps or a count differing from the
    sidecar's ``n_records``.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise TagFileError(f"cannot read {path}: {exc.strerror}", 0) from exc
    if data[: len(MAGIC)] != MAGIC:
        raise TagFileError("bad magic, not a WTTAG001 file", 0)
    body = len(data) - len(MAGIC)
    n, rem = divmod(body, RECORD.itemsize)
    if rem:
        raise TagFileError("truncated record", len(MAGIC) + n * RECORD.itemsize)
    rec = np.frombuffer(data, dtype=RECORD, offset=len(MAGIC), count=n)

    def at(i):
        return len(MAGIC) + int(i) * RECORD.itemsize

    bad = np.flatnonzero(rec["channel"] > MAX_CHANNEL)
    if bad.size:
        raise TagFileError(f"channel {rec['channel'][bad[0]]} out of range", at(bad[0]) + 8)
    if np.any(rec["t"] >= 2**63):
        i = np.flatnonzero(rec["t"] >= 2**63)[0]
        raise TagFileError("timestamp overflows int64", at(i))
    t = rec["t"].astype(np.int64)
    dt = np.diff(t)
    dch = np.diff(rec["channel"].astype(np.int16))
    down = np.flatnonzero((dt < 0) | ((dt == 0) & (dch < 0)))
    if down.size:
        raise TagFileError("records not sorted by time", at(down[0] + 1))
    meta = read_meta(path)
    if "n_records" in meta and int(meta["n_records"]) != n:
        raise TagFileError(f"sidecar declares {meta['n_records']} records, file holds {n}", len(data))
    pol = rec["pol"]
    pol_angle = None if pol.size == 0 or np.all(pol == NO_POL) else np.where(pol == NO_POL, np.nan, pol / 100.0)
    duration = int(meta.get("duration_ps", 0) or 0) or (int(t[-1]) + 1 if n else 0)
    return TimeTagStream(
        t=t, channel=rec["channel"].copy(), flags=rec["flags"].copy(), pol_angle=pol_angle,
        duration_ps=duration, metadata=meta,
    )
