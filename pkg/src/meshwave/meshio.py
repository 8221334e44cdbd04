"""Triangle-mesh file readers and writers.

Readers: OFF and OBJ (ASCII), PLY (ASCII and binary little-endian).
Writer: PLY, optionally with per-vertex uchar red/green/blue columns.
All readers return raw (vertices, triangles) arrays; structural
validation lives in mesh.load_mesh.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

_PLY_DTYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}


def _data_lines(text):
    """Significant lines: comments and blanks stripped."""
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def read_off(path):
    text = Path(path).read_text()
    lines = _data_lines(text)
    try:
        first = next(lines)
    except StopIteration:
        raise DataError(f"{path}: empty OFF file") from None
    if first.startswith("OFF"):
        rest = first[3:].strip()
        counts = rest.split() if rest else next(lines, "").split()
    else:
        # headerless variant: counts on the first line
        counts = first.split()
    if len(counts) < 2:
        raise DataError(f"{path}: malformed OFF counts line")
    try:
        n_vert, n_face = int(counts[0]), int(counts[1])
    except ValueError as exc:
        raise DataError(f"{path}: malformed OFF counts line") from exc
    vertices = np.empty((n_vert, 3), dtype=np.float64)
    triangles = np.empty((n_face, 3), dtype=np.int64)
    try:
        for i in range(n_vert):
            parts = next(lines).split()
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        for i in range(n_face):
            parts = next(lines).split()
            if int(parts[0]) != 3:
                raise DataError(f"{path}: face {i} has {parts[0]} vertices, need 3")
            triangles[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
    except (StopIteration, IndexError, ValueError) as exc:
        raise DataError(f"{path}: truncated or malformed OFF body") from exc
    return vertices, triangles


def read_obj(path):
    vertices = []
    faces = []
    for line in _data_lines(Path(path).read_text()):
        parts = line.split()
        if parts[0] == "v":
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: malformed vertex line {line!r}") from exc
        elif parts[0] == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise DataError(f"{path}: face {line!r} has {len(refs)} vertices, need 3")
            idx = []
            for ref in refs:
                try:
                    value = int(ref.split("/")[0])
                except ValueError as exc:
                    raise DataError(f"{path}: malformed face line {line!r}") from exc
                if value < 0:
                    raise DataError(f"{path}: negative OBJ indices are not supported")
                idx.append(value - 1)  # OBJ counts from 1
            faces.append(idx)
    if not vertices:
        raise DataError(f"{path}: no vertices found")
    return (
        np.asarray(vertices, dtype=np.float64),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


class _PlyElement:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, dtype) or (name, count_dtype, item_dtype)


def _parse_ply_header(handle, path):
    magic = handle.readline().strip()
    if magic != b"ply":
        raise DataError(f"{path}: not a PLY file")
    fmt = None
    elements = []
    while True:
        raw = handle.readline()
        if not raw:
            raise DataError(f"{path}: unterminated PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append(_PlyElement(parts[1], int(parts[2])))
        elif parts[0] == "property":
            if not elements:
                raise DataError(f"{path}: property before element in PLY header")
            if parts[1] == "list":
                elements[-1].properties.append((parts[4], parts[2], parts[3]))
            else:
                elements[-1].properties.append((parts[2], parts[1]))
        elif parts[0] == "end_header":
            break
        else:
            raise DataError(f"{path}: unrecognized PLY header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def _ply_vertex_dtype(element, path):
    fields = []
    for prop in element.properties:
        if len(prop) != 2:
            raise DataError(f"{path}: list property in vertex element")
        name, kind = prop
        if kind not in _PLY_DTYPES:
            raise DataError(f"{path}: unsupported PLY type {kind!r}")
        fields.append((name, "<" + _PLY_DTYPES[kind]))
    names = [f[0] for f in fields]
    if not all(axis in names for axis in "xyz"):
        raise DataError(f"{path}: vertex element lacks x/y/z properties")
    return np.dtype(fields)


def read_ply(path):
    with open(path, "rb") as handle:
        fmt, elements = _parse_ply_header(handle, path)
        by_name = {e.name: e for e in elements}
        if "vertex" not in by_name or "face" not in by_name:
            raise DataError(f"{path}: PLY file needs vertex and face elements")
        vertices = None
        triangles = None
        for element in elements:  # header order is the storage order
            if element.name == "vertex":
                vdt = _ply_vertex_dtype(element, path)
                if fmt == "ascii":
                    rows = []
                    for _ in range(element.count):
                        rows.append(tuple(handle.readline().split()))
                    data = np.array(rows, dtype=vdt)
                else:
                    buf = handle.read(vdt.itemsize * element.count)
                    if len(buf) != vdt.itemsize * element.count:
                        raise DataError(f"{path}: truncated PLY vertex data")
                    data = np.frombuffer(buf, dtype=vdt)
                vertices = np.stack(
                    [data["x"], data["y"], data["z"]], axis=1
                ).astype(np.float64)
            elif element.name == "face":
                prop = element.properties[0]
                if len(prop) != 3:
                    raise DataError(f"{path}: face element lacks a list property")
                _, count_kind, item_kind = prop
                triangles = np.empty((element.count, 3), dtype=np.int64)
                if fmt == "ascii":
                    for i in range(element.count):
                        parts = handle.readline().split()
                        if not parts or int(parts[0]) != 3:
                            raise DataError(f"{path}: face {i} is not a triangle")
                        triangles[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
                else:
                    cfmt = "<" + np.dtype(_PLY_DTYPES[count_kind]).char
                    idt = np.dtype("<" + _PLY_DTYPES[item_kind])
                    csize = struct.calcsize(cfmt)
                    for i in range(element.count):
                        cbuf = handle.read(csize)
                        if len(cbuf) != csize:
                            raise DataError(f"{path}: truncated PLY face data")
                        (count,) = struct.unpack(cfmt, cbuf)
                        if count != 3:
                            raise DataError(f"{path}: face {i} is not a triangle")
                        ibuf = handle.read(idt.itemsize * 3)
                        if len(ibuf) != idt.itemsize * 3:
                            raise DataError(f"{path}: truncated PLY face data")
                        triangles[i] = np.frombuffer(ibuf, dtype=idt)
            else:
                # skip unknown elements conservatively (ascii lines / raw guess
                # is impossible without fixed-size rows, so refuse)
                raise DataError(f"{path}: unsupported PLY element {element.name!r}")
        return vertices, triangles


def write_ply(path, vertices, triangles, colors=None, comment=None):
    """Write an ASCII PLY file, optionally with uchar red/green/blue."""
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    lines = ["ply", "format ascii 1.0"]
    if comment:
        lines.append(f"comment {comment}")
    lines.append(f"element vertex {len(vertices)}")
    lines += ["property double x", "property double y", "property double z"]
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape != (len(vertices), 3):
            raise DataError("colors must be (n_vertices, 3)")
        colors = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
        lines += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    lines.append(f"element face {len(triangles)}")
    lines.append("property list uchar int vertex_indices")
    lines.append("end_header")
    for i, v in enumerate(vertices):
        row = f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}"
        if colors is not None:
            c = colors[i]
            row += f" {c[0]} {c[1]} {c[2]}"
        lines.append(row)
    for t in triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


_READERS = {".off": read_off, ".obj": read_obj, ".ply": read_ply}


def read_mesh_file(path):
    """Dispatch on extension; returns raw (vertices, triangles)."""
    suffix = Path(path).suffix.lower()
    reader = _READERS.get(suffix)
    if reader is None:
        raise DataError(f"{path}: unsupported mesh format {suffix!r}")
    if not Path(path).exists():
        raise DataError(f"{path}: no such file")
    return reader(path)
