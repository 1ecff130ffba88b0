"""Output files: CSV curves, JSON verdicts and flat binary fields.

Every file starts with a provenance block holding the resolved configuration
and a version hash.  The hash covers the package sources, so reruns of the
same code and configuration produce byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .fracops import GridField, GridSpec
from .reports import _plain

FIELD_MAGIC = "fracdrift-field"


@lru_cache(maxsize=1)
def source_hash() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def provenance(config: dict | None = None, **extra) -> dict:
    out = {"package": "fracdrift", "version": __version__, "source_hash": source_hash()}
    if config is not None:
        out["config"] = _plain(config)
    out.update(_plain(extra))
    return out


def _comment_block(prov: dict) -> str:
    text = json.dumps(prov, sort_keys=True, indent=1)
    return "".join(f"# {line}\n" for line in text.splitlines())


def write_csv(path, columns, rows, prov: dict) -> Path:
    """CSV with a '#'-prefixed JSON provenance block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(_comment_block(prov))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Return (provenance, columns, rows as floats where possible)."""
    lines = Path(path).read_text().splitlines()
    head = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    prov = json.loads("\n".join(head)) if head else {}
    reader = csv.reader(body)
    columns = next(reader)
    rows = []
    for row in reader:
        conv = []
        for v in row:
            try:
                conv.append(float(v))
            except ValueError:
                conv.append(v)
        rows.append(conv)
    return prov, columns, rows


def write_json(path, payload: dict, prov: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = _plain(payload)
    # a report's own provenance (seed, grid) is merged under the file-level one
    doc = {**body, "provenance": {**body.get("provenance", {}), **prov}}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


def write_field(path, field: GridField, prov: dict | None = None) -> Path:
    """Text preamble (magic line, 'd n L', provenance, END) then row-major float64."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = field.spec
    head = f"{FIELD_MAGIC}\n{spec.d} {spec.n} {spec.L!r}\n"
    if prov:
        head += _comment_block(prov)
    head += "END\n"
    with open(path, "wb") as fh:
        fh.write(head.encode())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_field(path) -> tuple[GridField, dict]:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != FIELD_MAGIC:
            raise ValueError(f"{path} is not a field file")
        d, n, L = fh.readline().decode().split()
        prov_lines = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("truncated field header")
            text = line.decode()
            if text.strip() == "END":
                break
            prov_lines.append(text[2:] if text.startswith("# ") else text)
        data = np.frombuffer(fh.read(), dtype="<f8")
    spec = GridSpec(int(d), int(n), float(L))
    prov = json.loads("".join(prov_lines)) if prov_lines else {}
    return GridField(spec, data.reshape(spec.shape).copy()), prov
