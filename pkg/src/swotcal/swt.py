"""SWT container: ``SWT1\\n`` + one JSON header line + raw little-endian float64 payload.

The header is a single JSON object ``{kind, dtype, names, dims, meta, ...}``;
``dims[i]`` is the shape of array ``names[i]`` and the payload holds the arrays
back to back in row-major order. Headers are written with sorted keys and no
whitespace so identical content gives identical bytes.
"""
import json
import os
import tempfile

import numpy as np

MAGIC = b"SWT1\n"
DTYPE = "f64le"


class SwtFormatError(ValueError):
    pass


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def encode(kind, arrays, meta=None, **extra):
    """Serialize an ordered mapping name -> array to bytes."""
    names = list(arrays)
    blobs = []
    dims = []
    for name in names:
        a = np.asarray(arrays[name], dtype=np.float64)
        dims.append([int(d) for d in a.shape])
        blobs.append(np.ascontiguousarray(a).astype("<f8", copy=False).tobytes())
    header = {"kind": kind, "dtype": DTYPE, "names": names, "dims": dims, "meta": meta or {}}
    for key, value in extra.items():
        if value is not None:
            header[key] = value
    line = _canonical_json(header).encode("utf-8")
    if b"\n" in line:
        raise SwtFormatError("header must fit on one line")
    return MAGIC + line + b"\n" + b"".join(blobs)


def decode(data):
    """Inverse of :func:`encode`; returns (header dict, {name: array})."""
    if not data.startswith(MAGIC):
        raise SwtFormatError("not an SWT file (bad magic)")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise SwtFormatError("truncated header")
    try:
        header = json.loads(data[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SwtFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise SwtFormatError("header must be a JSON object")
    if header.get("dtype") != DTYPE:
        raise SwtFormatError(f"unsupported dtype {header.get('dtype')!r}")
    names = header.get("names", [])
    dims = header.get("dims", [])
    if len(names) != len(dims):
        raise SwtFormatError("names and dims differ in length")
    payload = memoryview(data)[end + 1:]
    expected = sum(8 * int(np.prod(d, dtype=np.int64)) for d in dims)
    if len(payload) != expected:
        raise SwtFormatError(f"payload is {len(payload)} bytes, header declares {expected}")
    arrays = {}
    pos = 0
    for name, shape in zip(names, dims):
        n = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(payload[pos:pos + 8 * n], dtype="<f8").astype(np.float64).reshape(shape)
        pos += 8 * n
    return header, arrays


def atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".swt")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write(path, kind, arrays, meta=None, **extra):
    atomic_write(path, encode(kind, arrays, meta, **extra))


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


# typed helpers ---------------------------------------------------------------

def write_field(path, field, meta=None):
    """Swath field (has ``grid``) or Field2D (has ``pixel_km`` only)."""
    grid = getattr(field, "grid", None)
    if grid is not None:
        m = {"grid": grid.to_dict(), **(meta or {})}
        write(path, "swath_field", {"values": field.values}, m)
    else:
        write(path, "field2d", {"values": field.values}, {"pixel_km": field.pixel_km, **(meta or {})})


def read_field(path):
    from .fieldgen import Field2D
    from .swath_geom import SwathField, SwathGrid

    header, arrays = read(path)
    if header["kind"] == "swath_field":
        return SwathField(SwathGrid.from_dict(header["meta"]["grid"]), arrays["values"])
    if header["kind"] == "field2d":
        return Field2D(arrays["values"], header["meta"]["pixel_km"])
    raise SwtFormatError(f"expected a field, found kind {header['kind']!r}")


def write_stack(path, stack, meta=None):
    write(path, "scale_stack", {"bands": stack.bands}, {"grid": stack.grid.to_dict(), **(meta or {})},
          sigmas_km=list(stack.scales.sigmas_km))


def read_stack(path):
    from .scale_space import ScaleList, ScaleStack
    from .swath_geom import SwathGrid

    header, arrays = read(path)
    if header["kind"] != "scale_stack":
        raise SwtFormatError(f"expected a scale stack, found kind {header['kind']!r}")
    return ScaleStack(SwathGrid.from_dict(header["meta"]["grid"]),
                      ScaleList(tuple(header["sigmas_km"])), arrays["bands"])
