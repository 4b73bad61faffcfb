"""Readers and writers: XYZ and PLY point clouds, OBJ meshes, model checkpoints.

Every reader reports malformed input as :class:`~flowup.errors.FileFormatError`
(or its :class:`ParseError` subclass) carrying the path and, when known, the
offending 1-based line number.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, FileFormatError, ParseError
from .metrics import TriangleMesh
from .net import PARAM_ORDER, AdamState, NetArch, NetParams

# ---------------------------------------------------------------------------
# helpers


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read file: {exc.strerror or exc}", path) from exc


def _decode(data: bytes, path) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise ParseError("invalid UTF-8 text", path, line) from None


def _finite_float(tok: str, path, lineno) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok[:40]!r}", path, lineno) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite coordinate {tok[:40]!r}", path, lineno)
    return val


# ---------------------------------------------------------------------------
# XYZ


def read_xyz(path) -> np.ndarray:
    text = _decode(_read_bytes(path), path)
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 3:
            raise ParseError(f"expected at least 3 fields, got {len(fields)}", path, lineno)
        rows.append([_finite_float(f, path, lineno) for f in fields[:3]])
    if not rows:
        raise ParseError("file contains no points", path)
    return np.array(rows, dtype=np.float64)


def write_xyz(cloud, path) -> None:
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in pts.tolist():
            fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply"):
        raise FileFormatError("missing 'ply' magic", path, 1)
    if end < 0:
        raise FileFormatError("missing end_header", path)
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise FileFormatError("header is not ASCII", path) from None
    fmt = None
    elements = []  # (name, count, [(name, dtype, list_count_dtype or None)], line)
    for lineno, raw in enumerate(header.splitlines(), start=1):
        tok = raw.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise FileFormatError(f"unsupported format line {raw.strip()!r}", path, lineno)
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise FileFormatError(f"unsupported format {tok[1]!r} in header line {raw.strip()!r}",
                                      path, lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise FileFormatError(f"bad element line {raw.strip()!r}", path, lineno)
            elements.append((tok[1], int(tok[2]), [], lineno))
        elif tok[0] == "property":
            if not elements:
                raise FileFormatError("property before any element", path, lineno)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise FileFormatError(f"unsupported property line {raw.strip()!r}", path, lineno)
                if _PLY_TYPES[tok[2]][0] == "f":
                    raise FileFormatError(f"list count must be integral: {raw.strip()!r}", path, lineno)
                elements[-1][2].append((tok[4], _PLY_TYPES[tok[3]], _PLY_TYPES[tok[2]]))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]], None))
            else:
                raise FileFormatError(f"unsupported property line {raw.strip()!r}", path, lineno)
        else:
            raise FileFormatError(f"unexpected header line {raw.strip()!r}", path, lineno)
    if fmt is None:
        raise FileFormatError("missing format line", path)
    return fmt, elements, body_start, header.count("\n") + 2


def _vertex_columns(elements, path):
    for name, count, props, lineno in elements:
        if name != "vertex":
            continue
        if any(p[2] is not None for p in props):
            raise FileFormatError("list properties on the vertex element are not supported", path, lineno)
        names = [p[0] for p in props]
        cols = []
        for axis in "xyz":
            if axis not in names:
                raise FileFormatError(f"vertex element lacks property {axis!r}", path, lineno)
            i = names.index(axis)
            if props[i][2] is not None or props[i][1][0] != "f":
                raise FileFormatError(f"vertex property {axis!r} must be float or double", path, lineno)
            cols.append(i)
        return cols
    raise FileFormatError("no vertex element in header", path)


def read_ply(path, dtype=None) -> np.ndarray:
    """Vertex positions of an ASCII or binary little-endian PLY file.

    The result keeps the file's precision (float32 when x, y, z are all
    ``float``) unless ``dtype`` is given.
    """
    data = _read_bytes(path)
    fmt, elements, body, first_body_line = _parse_ply_header(data, path)
    cols = _vertex_columns(elements, path)
    vprops = next(p for n, _, p, _ in elements if n == "vertex")
    native = np.result_type(*[np.dtype("<" + vprops[c][1]) for c in cols])
    if fmt == "ascii":
        pts = _read_ply_ascii(data[body:], elements, cols, path, first_body_line)
    else:
        pts = _read_ply_binary(data[body:], elements, cols, path)
    pts = pts.astype(dtype or native)
    if len(pts) == 0:
        raise ParseError("PLY file has no vertices", path)
    if not np.all(np.isfinite(pts)):
        raise ParseError("PLY vertices contain non-finite coordinates", path)
    return pts


def _read_ply_ascii(body: bytes, elements, cols, path, first_line):
    try:
        lines = body.decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise ParseError("non-ASCII byte in ASCII PLY body", path) from None
    pos = 0
    out = None
    for name, count, props, _ in elements:
        if count > len(lines) - pos:
            raise ParseError(f"element {name!r} declares {count} rows, file has fewer", path)
        if name == "vertex":
            out = np.empty((count, 3), dtype=np.float64)
        for r in range(count):
            lineno = first_line + pos
            tok = lines[pos].split()
            pos += 1
            if name == "vertex":
                if len(tok) < len(props):
                    raise ParseError(f"expected {len(props)} values, got {len(tok)}", path, lineno)
                for k, c in enumerate(cols):
                    out[r, k] = _finite_float(tok[c], path, lineno)
        if name == "vertex":
            return out
    return out


def _read_ply_binary(body: bytes, elements, cols, path):
    pos = 0
    for name, count, props, _ in elements:
        has_list = any(p[2] is not None for p in props)
        if not has_list:
            rec = np.dtype([(f"p{i}", "<" + p[1]) for i, p in enumerate(props)])
            need = rec.itemsize * count
            if need > len(body) - pos:
                raise ParseError(f"truncated binary data in element {name!r}", path)
            if name == "vertex":
                arr = np.frombuffer(body, dtype=rec, count=count, offset=pos)
                return np.stack([arr[f"p{c}"] for c in cols], axis=1)
            pos += need
            continue
        for _ in range(count):
            for _, item, count_t in props:
                if count_t is None:
                    pos += np.dtype(item).itemsize
                    continue
                size = np.dtype(count_t).itemsize
                if pos + size > len(body):
                    raise ParseError(f"truncated binary data in element {name!r}", path)
                n = int(np.frombuffer(body, dtype="<" + count_t, count=1, offset=pos)[0])
                if n < 0:
                    raise ParseError(f"negative list length in element {name!r}", path)
                pos += size + n * np.dtype(item).itemsize
            if pos > len(body):
                raise ParseError(f"truncated binary data in element {name!r}", path)
    raise FileFormatError("no vertex element in header", path)


def write_ply(cloud, path, binary: bool = True) -> None:
    """Write vertices only; float32 input is stored as ``float``, else ``double``."""
    pts = np.asarray(cloud)
    if pts.dtype != np.float32:
        pts = pts.astype(np.float64)
    pts = pts.reshape(-1, 3)
    ptype = "float" if pts.dtype == np.float32 else "double"
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
        f"property {ptype} x\nproperty {ptype} y\nproperty {ptype} z\nend_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(pts.astype(pts.dtype.newbyteorder("<"), copy=False).tobytes())
        else:
            fh.write("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()).encode("ascii"))


# ---------------------------------------------------------------------------
# OBJ


def read_obj(path) -> TriangleMesh:
    """``v`` and ``f`` records; polygons are fan-triangulated."""
    text = _decode(_read_bytes(path), path)
    verts = []
    faces = []  # (a, b, c, lineno)
    for lineno, line in enumerate(text.splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "v":
            if len(tok) < 4:
                raise ParseError("vertex needs 3 coordinates", path, lineno)
            verts.append([_finite_float(t, path, lineno) for t in tok[1:4]])
        elif tok[0] == "f":
            if len(tok) < 4:
                raise ParseError("face needs at least 3 vertices", path, lineno)
            idx = []
            for ref in tok[1:]:
                head = ref.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise ParseError(f"bad face index {ref[:40]!r}", path, lineno) from None
                if k == 0:
                    raise ParseError("face index 0 is invalid", path, lineno)
                k = k - 1 if k > 0 else len(verts) + k
                if k < 0:
                    raise ParseError(f"face index {ref[:40]!r} out of range", path, lineno)
                idx.append(k)
            for j in range(1, len(idx) - 1):
                faces.append((idx[0], idx[j], idx[j + 1], lineno))
    nv = len(verts)
    for a, b, c, lineno in faces:
        if max(a, b, c) >= nv:
            raise ParseError(f"face index out of range ({nv} vertices)", path, lineno)
    if nv == 0:
        raise ParseError("OBJ file has no vertices", path)
    return TriangleMesh(np.array(verts, dtype=np.float64),
                        np.array([f[:3] for f in faces], dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


# ---------------------------------------------------------------------------
# checkpoint
#
#   b"PUFM" | u32 version
#   u32 n_pairs, then n_pairs x (u16 len, key, u32 len, value)   utf-8 strings
#   u64 n_params | n_params x f32                                 parameters
#   u8 has_optimizer [ u64 step | 4 x f64 hyper | 2 x n_params f32 ]
#
# all little-endian; the key-value block holds the architecture (``arch.*``)
# and free-form metadata (``meta.*``)

MAGIC = b"PUFM"
VERSION = 1


def _pack_str(s: str, width: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<" + width, len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}", self.path)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def string(self, width: str, what: str) -> str:
        (n,) = self.unpack(width, what)
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"invalid UTF-8 in {what}", self.path) from None


def save_checkpoint(params: NetParams, state: AdamState | None, meta: dict, path) -> None:
    """Write parameters (as float32), optional Adam state and string metadata."""
    arch = params.arch
    pairs = [(f"arch.{k}", str(v)) for k, v in vars(arch).items()]
    pairs += [(f"meta.{k}", str(v)) for k, v in sorted(meta.items())]
    flat = params.flat().astype("<f4")
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(pairs))]
    for k, v in pairs:
        out.append(_pack_str(k, "H"))
        out.append(_pack_str(v, "I"))
    out.append(struct.pack("<Q", flat.size))
    out.append(flat.tobytes())
    if state is None or not state.m:
        out.append(b"\x00")
    else:
        out.append(b"\x01")
        out.append(struct.pack("<Q4d", state.step, state.lr, state.beta1, state.beta2, state.eps))
        for moments in (state.m, state.v):
            out.append(np.concatenate([moments[k].ravel() for k in PARAM_ORDER]).astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> tuple[NetParams, AdamState | None, dict]:
    data = _read_bytes(path)
    r = _Reader(data, path)
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)", path)
    r.take(4, "magic")
    (version,) = r.unpack("I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})", path)
    (n_pairs,) = r.unpack("I", "record count")
    arch_fields, meta = {}, {}
    for _ in range(n_pairs):
        k = r.string("H", "record key")
        v = r.string("I", "record value")
        if k.startswith("arch."):
            arch_fields[k[5:]] = v
        elif k.startswith("meta."):
            meta[k[5:]] = v
    try:
        arch = NetArch(**{k: int(v) for k, v in arch_fields.items()})
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid architecture record: {exc}", path) from None
    (n,) = r.unpack("Q", "parameter count")
    if n != arch.num_params():
        raise CheckpointError(
            f"payload length mismatch: architecture needs {arch.num_params()} parameters, header says {n}",
            path)
    if len(data) - r.pos < 4 * n:
        raise CheckpointError(
            f"payload length mismatch: expected {4 * n} bytes, found {len(data) - r.pos}", path)
    flat = np.frombuffer(r.take(4 * n, "parameters"), dtype="<f4").astype(np.float32)
    params = NetParams.from_flat(arch, flat)
    (flag,) = r.unpack("B", "optimizer flag")
    state = None
    if flag == 1:
        step, lr, b1, b2, eps = r.unpack("Q4d", "optimizer header")
        state = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, step=step)
        for target in (state.m, state.v):
            moments = NetParams.from_flat(
                arch, np.frombuffer(r.take(4 * n, "optimizer moments"), dtype="<f4").astype(np.float32))
            target.update(moments.tensors)
    elif flag != 0:
        raise CheckpointError(f"bad optimizer flag {flag}", path)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint", path)
    return params, state, meta
