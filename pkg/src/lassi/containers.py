"""On-disk container format for tensors.

Every stored object is a pair of files: ``<name>.json`` holding a small
header and ``<name>.bin`` holding the raw little-endian payload.  Complex
data is stored as interleaved (re, im) 32-bit floats; masks as uint8.
Payload element order is x-fastest (Fortran order of the stored shape); a
4-d ``(Nc, Nx, Ny, Nt)`` array is stored as consecutive per-coil volumes so
that the spatial ordering stays x-fastest within each coil.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .model import DynamicSequence, SamplingMask

__all__ = [
    "ContainerError",
    "write_tensor",
    "read_tensor",
    "read_array",
    "read_raw",
    "read_sequence",
    "read_mask",
]

FORMAT_VERSION = 1

_DTYPES = {
    "complex64": np.dtype("<c8"),
    "uint8": np.dtype("u1"),
}


class ContainerError(ValueError):
    """Raised for malformed or inconsistent container files."""


def _base_path(path) -> str:
    path = os.fspath(path)
    if path.endswith(".json") or path.endswith(".bin"):
        path = path[: path.rfind(".")]
    return path


def _to_payload_order(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 4:
        arr = np.moveaxis(arr, 0, -1)
    return arr.ravel(order="F")


def _from_payload_order(flat: np.ndarray, shape) -> np.ndarray:
    if len(shape) == 4:
        nc, nx, ny, nt = shape
        return np.moveaxis(flat.reshape((nx, ny, nt, nc), order="F"), -1, 0)
    return flat.reshape(shape, order="F")


def write_tensor(obj, path, kind: str | None = None, extra: dict | None = None) -> None:
    """Write a tensor container.

    ``obj`` may be a :class:`DynamicSequence`, :class:`SamplingMask`, or a
    plain complex/uint8 ndarray (2-d to 4-d).  ``kind`` labels the payload so
    :func:`read_tensor` can reconstruct the right type; it is inferred for
    the known domain types.  ``extra`` adds custom header fields.
    """
    if isinstance(obj, DynamicSequence):
        arr, dtype_name, kind = obj.data, "complex64", kind or "sequence"
    elif isinstance(obj, SamplingMask):
        arr, dtype_name, kind = obj.mask, "uint8", kind or "mask"
    else:
        arr = np.asarray(obj)
        if np.issubdtype(arr.dtype, np.complexfloating) or np.issubdtype(
            arr.dtype, np.floating
        ):
            dtype_name = "complex64"
        elif arr.dtype == np.uint8:
            dtype_name = "uint8"
        else:
            raise ContainerError(f"unsupported array dtype {arr.dtype}")
    if not 2 <= arr.ndim <= 4:
        raise ContainerError(f"unsupported rank {arr.ndim}")

    base = _base_path(path)
    header = {
        "version": FORMAT_VERSION,
        "shape": [int(s) for s in arr.shape],
        "dtype": dtype_name,
        "order": "x-fastest",
    }
    if kind is not None:
        header["kind"] = kind
    if extra:
        header.update(extra)

    payload = _to_payload_order(arr.astype(_DTYPES[dtype_name], copy=False))
    with open(base + ".json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
    with open(base + ".bin", "wb") as fh:
        fh.write(payload.tobytes())


def read_raw(path) -> tuple[np.ndarray, dict]:
    """Read a container as (stored-precision array, header dict)."""
    base = _base_path(path)
    header_path, payload_path = base + ".json", base + ".bin"
    if not os.path.exists(header_path):
        raise FileNotFoundError(f"missing container header {header_path}")
    if not os.path.exists(payload_path):
        raise FileNotFoundError(f"missing container payload {payload_path}")
    with open(header_path, "r", encoding="ascii") as fh:
        header = json.load(fh)

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version!r}")
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise ContainerError(f"unsupported dtype {dtype_name!r}")
    shape = tuple(int(s) for s in header.get("shape", ()))
    if not shape:
        raise ContainerError("header is missing the shape field")

    dtype = _DTYPES[dtype_name]
    expected = int(np.prod(shape)) * dtype.itemsize
    raw = open(payload_path, "rb").read()
    if len(raw) != expected:
        raise ContainerError(
            f"payload size mismatch for {payload_path}: header implies "
            f"{expected} bytes, file has {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype=dtype)
    return _from_payload_order(flat, shape), header


def read_array(path) -> np.ndarray:
    """Read the raw payload (complex64 promoted to complex128)."""
    arr, _ = read_raw(path)
    if np.issubdtype(arr.dtype, np.complexfloating):
        arr = arr.astype(np.complex128)
    return arr


def read_tensor(path):
    """Read a container, reconstructing the stored domain type.

    Returns a :class:`DynamicSequence` for 3-d complex payloads labelled (or
    inferrable) as sequences, a :class:`SamplingMask` for uint8 payloads, and
    a plain ndarray otherwise (k-t samples, coil maps, dictionaries).
    """
    arr, header = read_raw(path)
    kind = header.get("kind")
    if header["dtype"] == "uint8":
        if kind not in (None, "mask"):
            raise ContainerError(f"uint8 payload with unexpected kind {kind!r}")
        return SamplingMask(arr)
    arr = arr.astype(np.complex128)
    if kind == "sequence" or (kind is None and arr.ndim == 3):
        return DynamicSequence(arr)
    return arr


def read_sequence(path) -> DynamicSequence:
    obj = read_tensor(path)
    if not isinstance(obj, DynamicSequence):
        raise ContainerError(f"{_base_path(path)} does not hold a dynamic sequence")
    return obj


def read_mask(path) -> SamplingMask:
    arr, header = read_raw(path)
    if header["dtype"] != "uint8":
        raise ContainerError(
            f"{_base_path(path)} holds dtype {header['dtype']!r}, not a uint8 mask"
        )
    return SamplingMask(arr)
