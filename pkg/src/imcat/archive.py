"""Archive persistence: header, object records, vertices, optional images.

The archive is one container file with four sections.  The header stores
the record counts, the attribute schema with its sampling bounds and the
direct plus inverse registration transforms; the objects section holds
fixed-size records (image id, attribute vector, vertex span); vertices are
a flat list of coordinate pairs shared by all objects; embedded images are
optional.  All integers are little-endian and sizes live in the header, so
a round trip through save and load is byte-identical.  An export mode
splits the container into the four classic files.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import IdOutOfRangeError, IoError, SchemaMismatchError
from .geom import PolyTransform2D, identity_transform
from .kdindex import Bounds, KdIndex

_MAGIC = b"IMCATAR1"


@dataclass
class ObjectRecord:
    """One cataloged object: source image, attributes, vertex span."""

    image_id: int
    attributes: tuple[float, ...]
    vertex_offset: int = 0
    vertex_count: int = 0
    closed: bool = True


@dataclass
class Archive:
    """In-memory archive; persisted through save/load."""

    schema: tuple[str, ...]
    bounds: Bounds
    direct: PolyTransform2D = field(default_factory=identity_transform)
    inverse: PolyTransform2D = field(default_factory=identity_transform)
    objects: list[ObjectRecord] = field(default_factory=list)
    vertices: list[tuple[float, float]] = field(default_factory=list)
    images: list[tuple[int, int, int, bytes]] = field(default_factory=list)

    @property
    def object_count(self) -> int:
        return len(self.objects)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def image_count(self) -> int:
        return len(self.images)


def archive_create(schema, bounds: Bounds, direct: PolyTransform2D | None = None,
                   inverse: PolyTransform2D | None = None) -> Archive:
    schema = tuple(schema)
    if len(schema) != bounds.dimension:
        raise SchemaMismatchError("schema arity differs from bounds")
    return Archive(schema, bounds,
                   direct or identity_transform(),
                   inverse or identity_transform())


def archive_add_object(arc: Archive, image_id: int, attributes,
                       vertices=(), closed: bool = True) -> int:
    """Append an object and its polyline vertices; returns the object id."""
    attributes = tuple(float(a) for a in attributes)
    if len(attributes) != len(arc.schema):
        raise SchemaMismatchError(
            f"expected {len(arc.schema)} attributes, got {len(attributes)}")
    offset = len(arc.vertices)
    pts = [(float(x), float(y)) for x, y in vertices]
    arc.vertices.extend(pts)
    arc.objects.append(ObjectRecord(int(image_id), attributes, offset,
                                    len(pts), closed))
    return len(arc.objects) - 1


def archive_read_object(arc: Archive, object_id: int
                        ) -> tuple[ObjectRecord, list[tuple[float, float]]]:
    if not 0 <= object_id < len(arc.objects):
        raise IdOutOfRangeError(f"object {object_id} of {len(arc.objects)}")
    rec = arc.objects[object_id]
    pts = arc.vertices[rec.vertex_offset: rec.vertex_offset + rec.vertex_count]
    return rec, pts


def archive_add_image(arc: Archive, img) -> int:
    arc.images.append((img.width, img.height, img.max_grey,
                       img.data.astype("<u2").tobytes()))
    return len(arc.images) - 1


def archive_read_image(arc: Archive, image_id: int):
    from .raster import GreyImage

    if not 0 <= image_id < len(arc.images):
        raise IdOutOfRangeError(f"image {image_id} of {len(arc.images)}")
    w, h, mg, blob = arc.images[image_id]
    data = np.frombuffer(blob, dtype="<u2").reshape(h, w).astype(np.int32)
    return GreyImage(data, mg)


def _pack_transform(t: PolyTransform2D) -> bytes:
    out = struct.pack("<II", t.order, len(t.a))
    out += b"".join(struct.pack("<d", float(v)) for v in t.a)
    out += b"".join(struct.pack("<d", float(v)) for v in t.b)
    out += struct.pack("<d", float(t.rms))
    return out


def _unpack_transform(buf: io.BytesIO) -> PolyTransform2D:
    order, n = struct.unpack("<II", buf.read(8))
    a = np.array(struct.unpack(f"<{n}d", buf.read(8 * n)))
    b = np.array(struct.unpack(f"<{n}d", buf.read(8 * n)))
    rms, = struct.unpack("<d", buf.read(8))
    return PolyTransform2D(order, a, b, rms)


def _header_bytes(arc: Archive) -> bytes:
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<IQQI", len(arc.schema), len(arc.objects),
                       len(arc.vertices), len(arc.images))
    for name, lo, hi in zip(arc.schema, arc.bounds.lower, arc.bounds.upper):
        raw = name.encode("ascii")[:32]
        out += raw + b"\x00" * (32 - len(raw))
        out += struct.pack("<dd", lo, hi)
    out += _pack_transform(arc.direct)
    out += _pack_transform(arc.inverse)
    return bytes(out)


def _objects_bytes(arc: Archive) -> bytes:
    out = bytearray()
    for rec in arc.objects:
        out += struct.pack("<IQIB", rec.image_id, rec.vertex_offset,
                           rec.vertex_count, 1 if rec.closed else 0)
        out += b"".join(struct.pack("<d", a) for a in rec.attributes)
    return bytes(out)


def _vertices_bytes(arc: Archive) -> bytes:
    return b"".join(struct.pack("<dd", x, y) for x, y in arc.vertices)


def _images_bytes(arc: Archive) -> bytes:
    out = bytearray()
    for w, h, mg, blob in arc.images:
        out += struct.pack("<IIIQ", w, h, mg, len(blob))
        out += blob
    return bytes(out)


def archive_to_bytes(arc: Archive) -> bytes:
    header = _header_bytes(arc)
    objects = _objects_bytes(arc)
    vertices = _vertices_bytes(arc)
    images = _images_bytes(arc)
    sizes = struct.pack("<QQQQ", len(header), len(objects), len(vertices),
                        len(images))
    return sizes + header + objects + vertices + images


def archive_save(arc: Archive, path) -> None:
    """Atomic write: the container lands under its final name or not at all."""
    blob = archive_to_bytes(arc)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def archive_from_bytes(blob: bytes) -> Archive:
    try:
        h_len, o_len, v_len, i_len = struct.unpack("<QQQQ", blob[:32])
        cursor = 32
        header = io.BytesIO(blob[cursor: cursor + h_len])
        cursor += h_len
        objects = blob[cursor: cursor + o_len]
        cursor += o_len
        vertices = blob[cursor: cursor + v_len]
        cursor += v_len
        images = blob[cursor: cursor + i_len]
        if header.read(8) != _MAGIC:
            raise IoError("bad archive magic")
        k, n_obj, n_vtx, n_img = struct.unpack("<IQQI", header.read(24))
        schema = []
        lower = []
        upper = []
        for _ in range(k):
            name = header.read(32).rstrip(b"\x00").decode("ascii")
            lo, hi = struct.unpack("<dd", header.read(16))
            schema.append(name)
            lower.append(lo)
            upper.append(hi)
        direct = _unpack_transform(header)
        inverse = _unpack_transform(header)
        arc = Archive(tuple(schema), Bounds(tuple(lower), tuple(upper)),
                      direct, inverse)
        rec_size = 17 + 8 * k
        for i in range(n_obj):
            chunk = objects[i * rec_size: (i + 1) * rec_size]
            image_id, offset, count, closed = struct.unpack("<IQIB", chunk[:17])
            attrs = struct.unpack(f"<{k}d", chunk[17:])
            arc.objects.append(ObjectRecord(image_id, attrs, offset, count,
                                            bool(closed)))
        for i in range(n_vtx):
            x, y = struct.unpack("<dd", vertices[16 * i: 16 * i + 16])
            arc.vertices.append((x, y))
        buf = io.BytesIO(images)
        for _ in range(n_img):
            w, h, mg, size = struct.unpack("<IIIQ", buf.read(20))
            arc.images.append((w, h, mg, buf.read(size)))
        return arc
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise IoError(f"corrupt archive: {exc}") from exc


def archive_load(path) -> Archive:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return archive_from_bytes(blob)


def archive_export(arc: Archive, prefix) -> None:
    """Write the four classic files: header, objects, vertices, images."""
    for name, blob in (("header", _header_bytes(arc)),
                       ("objects", _objects_bytes(arc)),
                       ("vertices", _vertices_bytes(arc)),
                       ("images", _images_bytes(arc))):
        with open(f"{prefix}.{name}", "wb") as f:
            f.write(blob)


def build_index(arc: Archive, dims, depth: int) -> KdIndex:
    """Index the archive objects on an attribute dimension subset."""
    dims = tuple(dims)
    if not dims:
        from .errors import EmptySelectionError

        raise EmptySelectionError("no attribute dimensions selected")
    bounds = Bounds(tuple(arc.bounds.lower[d] for d in dims),
                    tuple(arc.bounds.upper[d] for d in dims))
    idx = KdIndex(bounds, depth, dims)
    for oid, rec in enumerate(arc.objects):
        idx.add_object(oid, np.asarray(rec.attributes))
    return idx


def extract_subarchive(arc: Archive, object_ids) -> Archive:
    """Materialize a selection into a new archive with the same schema."""
    out = Archive(arc.schema, arc.bounds, arc.direct, arc.inverse)
    kept_images = {}
    for oid in sorted(object_ids):
        rec, pts = archive_read_object(arc, oid)
        if rec.image_id not in kept_images and rec.image_id < len(arc.images):
            kept_images[rec.image_id] = len(out.images)
            out.images.append(arc.images[rec.image_id])
        new_image = kept_images.get(rec.image_id, rec.image_id)
        archive_add_object(out, new_image, rec.attributes, pts, rec.closed)
    return out
