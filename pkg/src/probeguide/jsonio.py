"""Deterministic JSON interchange helpers.

All files the package reads or writes are plain JSON with an explicit
"schema_version". Large numeric tensors are base64-encoded little-endian
arrays (float32 for reals, int32 for indices) so files stay portable and
diffable without a custom binary parser. Writing is canonical: sorted keys,
two-space indent, trailing newline, no timestamps, so identical inputs
produce byte-identical outputs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
from typing import Iterable

import numpy as np

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A file's structure does not match the expected schema."""


def encode_array(a: np.ndarray, dtype: str = "<f4") -> dict:
    """Pack an ndarray as {"shape", "dtype", "data"} with base64 payload."""
    a = np.asarray(a)
    if dtype not in ("<f4", "<i4"):
        raise ValueError(f"unsupported encode dtype {dtype!r}")
    raw = np.ascontiguousarray(a, dtype=np.dtype(dtype))
    return {
        "shape": list(a.shape),
        "dtype": dtype,
        "data": base64.b64encode(raw.tobytes()).decode("ascii"),
    }


def decode_array(d: dict, expect_dtype: str | None = None) -> np.ndarray:
    """Inverse of encode_array. Returns float64 for "<f4", int64 for "<i4"."""
    if not isinstance(d, dict):
        raise SchemaError("array field is not an object")
    missing = {"shape", "dtype", "data"} - set(d)
    if missing:
        raise SchemaError(f"array object missing keys: {sorted(missing)}")
    dtype = d["dtype"]
    if dtype not in ("<f4", "<i4"):
        raise SchemaError(f"unsupported array dtype {dtype!r}")
    if expect_dtype is not None and dtype != expect_dtype:
        raise SchemaError(f"expected dtype {expect_dtype!r}, found {dtype!r}")
    try:
        raw = base64.b64decode(d["data"], validate=True)
    except Exception as exc:
        raise SchemaError(f"invalid base64 array payload: {exc}") from exc
    arr = np.frombuffer(raw, dtype=np.dtype(dtype))
    shape = tuple(int(s) for s in d["shape"])
    n = int(np.prod(shape)) if shape else 1
    if arr.size != n:
        raise SchemaError(f"array payload has {arr.size} elements, shape {shape} wants {n}")
    arr = arr.reshape(shape)
    out_dtype = np.float64 if dtype == "<f4" else np.int64
    return arr.astype(out_dtype)


def check_keys(obj: dict, required: Iterable[str], optional: Iterable[str] = (), where: str = "object"):
    """Strict key validation: everything required present, nothing unknown."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    req = set(required)
    opt = set(optional)
    missing = req - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing required fields {sorted(missing)}")
    unknown = set(obj) - req - opt
    if unknown:
        raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")


def check_schema_version(obj: dict, where: str = "file"):
    v = obj.get("schema_version")
    if v != SCHEMA_VERSION:
        raise SchemaError(f"{where}: unsupported schema_version {v!r} (this build reads {SCHEMA_VERSION})")


def dumps_canonical(obj) -> str:
    """Canonical serialization: sorted keys, indent 2, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | os.PathLike, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_canonical(obj))


def read_json(path: str | os.PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: top level must be a JSON object")
    return obj


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
