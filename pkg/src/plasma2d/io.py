"""Atomic artifact writing and the provenance stamp carried by every output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

from plasma2d import __version__


# keys that change where or how fast a run goes but not what it computes
NON_SEMANTIC = ("out", "workers")


def config_hash(resolved: dict) -> str:
    kept = {k: v for k, v in resolved.items() if k not in NON_SEMANTIC}
    blob = json.dumps(kept, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def stamp(resolved: dict) -> dict:
    return {"seed": resolved.get("seed"), "config_hash": config_hash(resolved),
            "version": __version__}


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def csv_text(header, rows, meta: dict | None = None) -> str:
    """CSV with optional '# key=value' comment lines ahead of the header."""
    buf = io.StringIO()
    if meta:
        for k in sorted(meta):
            buf.write(f"# {k}={meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def append_csv_row(path, header, row) -> None:
    path = Path(path)
    new = not path.exists()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv_rows(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))
