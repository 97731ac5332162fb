"""Artifact I/O: atomic writes, CSV text, PPM (P6) images, JSON manifests, strict configs."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputError


def atomic_write_bytes(path, data: bytes) -> None:
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


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def ppm_bytes(mask: np.ndarray) -> bytes:
    """Boolean raster to binary PPM; inside = white."""
    mask = np.asarray(mask, bool)
    ny, nx = mask.shape
    rgb = np.repeat((mask.astype(np.uint8) * 255)[..., None], 3, axis=2)
    return f"P6\n{nx} {ny}\n255\n".encode() + rgb.tobytes()


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError("truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise InputError("not a binary PPM (P6)")
    try:
        nx, ny, mx = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise InputError("bad PPM header") from exc
    body = data[pos + 1:]
    if mx != 255 or len(body) != nx * ny * 3:
        raise InputError("PPM body size does not match header")
    return np.frombuffer(body, np.uint8).reshape(ny, nx, 3)


def mask_bytes(mask: np.ndarray, meta: dict) -> bytes:
    """Mask container: JSON header line, then packed bits."""
    mask = np.asarray(mask, bool)
    head = dict(meta, shape=list(mask.shape))
    return json.dumps(head, sort_keys=True).encode() + b"\n" + np.packbits(mask.ravel()).tobytes()


def read_mask(path):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise InputError("malformed mask file")
    try:
        meta = json.loads(data[:nl])
        ny, nx = meta["shape"]
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError("malformed mask header") from exc
    bits = np.frombuffer(data[nl + 1:], np.uint8)
    if bits.size != (nx * ny + 7) // 8:
        raise InputError("mask body size does not match header")
    return np.unpackbits(bits)[:nx * ny].reshape(ny, nx).astype(bool), meta


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    return str(x)


def parse_config(text: str, schema: dict) -> dict:
    """Strict `key = value` parser; schema maps key -> converter.  Unknown keys are errors."""
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise InputError(f"line {no}: expected 'key = value'")
        if key not in schema:
            raise InputError(f"line {no}: unknown key {key!r}")
        if key in out:
            raise InputError(f"line {no}: duplicate key {key!r}")
        try:
            out[key] = schema[key](val)
        except (ValueError, TypeError) as exc:
            raise InputError(f"line {no}: bad value for {key}: {val!r}") from exc
    return out
