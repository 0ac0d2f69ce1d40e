"""Command-line drivers for the analysis and cataloging chain.

Commands: analyze, classify, catalog, index, query, render, train,
identify.  Every command is deterministic given its inputs; archive writes
go through a lock file and a write-then-rename commit so a failed run
never leaves a partial archive.  Error families map to distinct exit
codes (see EXIT_CODES).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import archive as ar
from . import boundary as bd
from . import classify as cf
from . import geom
from . import pgm
from . import region
from . import vectorize as vz
from .errors import (
    BrokenContourError,
    DegenerateError,
    DimensionMismatchError,
    EmptyClassError,
    EmptyHistogramError,
    EmptyListError,
    EmptyMaskError,
    EmptyObjectError,
    EmptySelectionError,
    IdOutOfRangeError,
    ImcatError,
    InvalidIntervalError,
    IoError,
    MissingImageError,
    NotBinaryError,
    NotInvertibleError,
    RankDeficientError,
    SchemaMismatchError,
    ShapeMismatchError,
    SingularCovarianceError,
    TooFewPointsError,
    TooSmallError,
    UnbalancedError,
    UnframedError,
    UnimodalError,
    ZeroLengthError,
)
from .kdindex import Bounds, KdIndex
from .moments import format_features, parse_features, shape_features
from .raster import Connectivity, GreyImage, LabelImage, black, binarize, \
    compute_histogram, draw_frame, find_valley_threshold

EXIT_CODES = {
    IoError: 2,
    SchemaMismatchError: 3,
    DimensionMismatchError: 4,
    ShapeMismatchError: 4,
    UnimodalError: 5,
    UnframedError: 5,
    NotBinaryError: 5,
    TooSmallError: 5,
    UnbalancedError: 5,
    BrokenContourError: 5,
    EmptyObjectError: 5,
    EmptyListError: 5,
    TooFewPointsError: 5,
    ZeroLengthError: 5,
    EmptyHistogramError: 5,
    EmptyMaskError: 5,
    IdOutOfRangeError: 6,
    InvalidIntervalError: 6,
    EmptySelectionError: 6,
    RankDeficientError: 7,
    SingularCovarianceError: 7,
    EmptyClassError: 7,
    DegenerateError: 7,
    NotInvertibleError: 8,
    MissingImageError: 8,
}

FEATURE_SCHEMA = ("center_x", "center_y", "angle", "scale",
                  "surface_ratio", "eccentricity", "asym1", "asym2")
DEFAULT_BOUNDS = Bounds(
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.25, -0.25),
    (4096.0, 4096.0, 360.0, 4096.0, 2.0, 1.001, 0.25, 0.25))

#: attribute columns invariant to translation and rotation
INVARIANT_DIMS = (4, 5, 6, 7)


@dataclass
class PipelineConfig:
    """Validated knobs shared by the pipeline commands."""

    threshold: str = "auto"
    connectivity: int = 4
    precision: float = 1.0
    background: str = "dark"
    attrs: tuple[int, ...] = INVARIANT_DIMS
    depth: int = 6
    overlay_grey: int = 255
    min_surface: int = 1

    def validate(self) -> None:
        if self.threshold != "auto":
            int(self.threshold)
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.precision < 0:
            raise ValueError("precision must be non-negative")
        if self.background not in ("dark", "bright"):
            raise ValueError("background must be dark or bright")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not self.attrs:
            raise ValueError("attrs must select at least one column")
        if self.min_surface < 1:
            raise ValueError("min-surface must be >= 1")

    @property
    def conn(self) -> Connectivity:
        return Connectivity.FOUR if self.connectivity == 4 else Connectivity.EIGHT


def load_config(path) -> dict:
    """Line-oriented ``key = value`` file."""
    out = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise IoError(f"malformed config line: {line!r}")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return out


def config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig()
    fields = ("threshold", "connectivity", "precision", "background",
              "attrs", "depth", "overlay_grey", "min_surface")
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for name in fields:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    for name, value in values.items():
        if name not in fields:
            raise ValueError(f"unknown config key {name}")
        if name in ("connectivity", "depth", "overlay_grey", "min_surface"):
            value = int(value)
        elif name == "precision":
            value = float(value)
        elif name == "attrs" and isinstance(value, str):
            value = tuple(int(v) for v in value.split(","))
        setattr(cfg, name, value)
    cfg.validate()
    return cfg


@dataclass
class AnalyzedObject:
    blob_id: int
    features_row: str
    polyline: vz.Polyline | None
    record: region.BlobRecord


def analyze_image(img: GreyImage, cfg: PipelineConfig) -> list[AnalyzedObject]:
    """Segment, measure and vectorize every object of a grey image."""
    if cfg.threshold == "auto":
        hist = compute_histogram(img)
        threshold = find_valley_threshold(hist)
    else:
        threshold = int(cfg.threshold)
    bg = 0 if cfg.background == "dark" else img.max_grey
    binary = draw_frame(binarize(img, threshold), 0 if bg == 0 else black(img.max_grey))
    labels = LabelImage((binary.data == black(img.max_grey)).astype(np.int64)
                        if cfg.background == "dark"
                        else (binary.data == 0).astype(np.int64))
    blob_image, _count = region.segment_blobs(labels, cfg.conn)
    table = region.blob_attributes(blob_image, cfg.conn)
    region.blob_inclusion(blob_image, table)
    outline = region.extract_boundaries(blob_image)
    out = []
    for bid in sorted(table):
        rec = table[bid]
        if rec.moments.m0 < cfg.min_surface:
            continue
        sf, _comp = shape_features(rec.moments, rec.perimeter)
        poly = None
        try:
            pts = region.trace_contour(outline, bid, rec.xmin, rec.ymin)
            if len(pts) >= 2:
                poly = vz.vectorize([(float(x), float(y)) for x, y in pts],
                                    cfg.precision, closed=True)
        except BrokenContourError:
            poly = None  # 8-connected neck: object kept without a polyline
        out.append(AnalyzedObject(bid, format_features(sf), poly, rec))
    return out


def run_analyze(args) -> int:
    cfg = config_from_args(args)
    img = pgm.read_pgm(args.input)
    objects = analyze_image(img, cfg)
    prefix = args.out_prefix
    with open(prefix + ".blobs.txt", "w") as f:
        for obj in objects:
            rec = obj.record
            m = rec.moments
            f.write(f"{obj.blob_id} {rec.dimension} {rec.xmin} {rec.xmax} "
                    f"{rec.ymin} {rec.ymax} {rec.perimeter} {m.m0} {m.mx} "
                    f"{m.my} {m.mxx} {m.mxy} {m.myy} {m.mxxx} {m.mxxy} "
                    f"{m.mxyy} {m.myyy} {rec.father}\n")
    with open(prefix + ".features.txt", "w") as f:
        for obj in objects:
            f.write(obj.features_row + "\n")
    with open(prefix + ".polylines.txt", "w") as f:
        for obj in objects:
            if obj.polyline is None:
                f.write("poly open 0\n")
            else:
                f.write(vz.polyline_to_text(obj.polyline) + "\n")
    print(f"{len(objects)} objects")
    return 0


def run_classify(args) -> int:
    if args.mono:
        img = pgm.read_pgm(args.mono)
        planes = cf.derivative_stack(img, args.order)
        bands = planes if len(planes) >= 2 else planes * 2
    else:
        if len(args.bands) < 2:
            raise DimensionMismatchError("need at least two bands")
        bands = [pgm.read_pgm(p) for p in args.bands]
    labels = cf.sequential_classify(bands)
    pgm.write_label_image(labels, args.out)
    print(f"{int(labels.data.max())} classes")
    return 0


class _ArchiveLock:
    def __init__(self, path):
        self.lock_path = str(path) + ".lock"
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise IoError(f"archive locked: {self.lock_path}") from exc
        return self

    def __exit__(self, *exc_info):
        if self.fd is not None:
            os.close(self.fd)
            os.remove(self.lock_path)
        return False


def _parse_bounds(text: str) -> Bounds:
    pairs = [p.split(":") for p in text.split(",")]
    return Bounds(tuple(float(p[0]) for p in pairs),
                  tuple(float(p[1]) for p in pairs))


def run_catalog(args) -> int:
    with _ArchiveLock(args.archive):
        if os.path.exists(args.archive):
            arc = ar.archive_load(args.archive)
        else:
            bounds = _parse_bounds(args.bounds) if args.bounds else DEFAULT_BOUNDS
            direct = inverse = None
            if args.transform:
                with open(args.transform) as f:
                    blocks = f.read().split("\n\n")
                direct = geom.transform_from_text(blocks[0])
                inverse = (geom.transform_from_text(blocks[1])
                           if len(blocks) > 1 else None)
            arc = ar.archive_create(FEATURE_SCHEMA, bounds, direct, inverse)
        with open(args.features) as f:
            rows = [parse_features(line) for line in f if line.strip()]
        polylines = []
        with open(args.polylines) as f:
            for line in f:
                if line.strip():
                    polylines.append(vz.polyline_from_text(line.strip()))
        if len(rows) != len(polylines):
            raise SchemaMismatchError("features and polylines disagree in count")
        image_id = args.image_id
        if args.image:
            img = pgm.read_pgm(args.image)
            image_id = ar.archive_add_image(arc, img)
        for row, poly in zip(rows, polylines):
            mapped = geom.transform_polyline(arc.direct, poly) if len(poly) else poly
            ar.archive_add_object(arc, image_id, row, mapped.vertices,
                                  mapped.closed)
        ar.archive_save(arc, args.archive)
    print(f"archive: {arc.object_count} objects, {arc.vertex_count} vertices, "
          f"{arc.image_count} images")
    return 0


def run_index(args) -> int:
    cfg = config_from_args(args)
    arc = ar.archive_load(args.archive)
    idx = ar.build_index(arc, cfg.attrs, cfg.depth)
    with open(args.out, "w") as f:
        f.write("imcat-index 1\n")
        f.write("attrs " + ",".join(str(d) for d in cfg.attrs) + "\n")
        f.write(f"depth {cfg.depth}\n")
        f.write(f"clamped {idx.clamped}\n")
        for path in sorted(idx.leaves):
            bits = "".join(str(b) for b in path)
            ids = " ".join(str(i) for i in sorted(idx.leaves[path]))
            f.write(f"{bits} {ids}\n")
    print(f"{len(idx.leaves)} leaves, {idx.clamped} clamped")
    return 0


def _load_index_params(path) -> tuple[tuple[int, ...], int]:
    with open(path) as f:
        header = f.readline().strip()
        if header != "imcat-index 1":
            raise IoError("not an index file")
        attrs = tuple(int(v) for v in f.readline().split()[1].split(","))
        depth = int(f.readline().split()[1])
    return attrs, depth


def run_query(args) -> int:
    cfg = config_from_args(args)
    arc = ar.archive_load(args.archive)
    attrs, depth = cfg.attrs, cfg.depth
    if args.index:
        attrs, depth = _load_index_params(args.index)
    idx = ar.build_index(arc, attrs, depth)
    if args.mode == "interval":
        intervals = [tuple(float(x) for x in p.split(":"))
                     for p in args.interval.split(",")]
        ids = sorted(idx.query_interval(intervals))
        ranking = [(oid, 1.0) for oid in ids]
    elif args.mode == "nearest":
        key = np.zeros(len(arc.schema))
        for d, v in zip(attrs, (float(x) for x in args.key.split(","))):
            key[d] = v
        ranking = idx.query_nearest(key, args.max_results)
    else:  # example
        probe = pgm.read_pgm(args.probe)
        objects = analyze_image(probe, cfg)
        if not objects:
            raise EmptyObjectError("probe image holds no object")
        main = max(objects, key=lambda o: o.record.moments.m0)
        key = np.array(parse_features(main.features_row))
        ranking = idx.query_nearest(key, args.max_results)
    lines = []
    for rank, (oid, sim) in enumerate(ranking, start=1):
        rec, _ = ar.archive_read_object(arc, oid)
        lines.append(f"{rank} {oid} {rec.image_id} {sim:.6f}")
    output = "\n".join(lines)
    print(output if output else "(empty)")
    if args.extract:
        sub = ar.extract_subarchive(arc, [oid for oid, _ in ranking])
        ar.archive_save(sub, args.extract)
    return 0


def run_render(args) -> int:
    arc = ar.archive_load(args.archive)
    if args.image:
        img = pgm.read_pgm(args.image)
    elif arc.image_count:
        img = ar.archive_read_image(arc, args.image_id or 0)
    else:
        raise MissingImageError("no source image available")
    if args.selection == "all":
        ids = list(range(arc.object_count))
    else:
        ids = [int(v) for v in args.selection.split(",") if v != ""]
    data = img.data.copy()
    grey = min(args.grey, img.max_grey)
    for oid in ids:
        rec, pts = ar.archive_read_object(arc, oid)
        if len(pts) < 2:
            continue
        poly = vz.Polyline(tuple(pts), rec.closed)
        back = geom.transform_polyline(arc.inverse, poly)
        for x, y in vz.digitalize_polyline(back):
            if 0 <= x < img.width and 0 <= y < img.height:
                data[y, x] = grey
    pgm.write_pgm(GreyImage(data, img.max_grey), args.out)
    print(f"rendered {len(ids)} objects")
    return 0


def _model_to_text(model: cf.DiscriminantModel) -> str:
    lines = ["imcat-discriminant 1",
             "classes " + " ".join(str(c) for c in model.classes),
             "mean_x " + " ".join(repr(float(v)) for v in model.mean_x),
             "mean_v " + " ".join(repr(float(v)) for v in model.mean_v)]
    for row in model.gain:
        lines.append("gain " + " ".join(repr(float(v)) for v in row))
    if model.thresholds is not None:
        lines.append("thresholds "
                     + " ".join(repr(float(v)) for v in model.thresholds))
    lines.append(f"ridged {1 if model.ridged else 0}")
    return "\n".join(lines) + "\n"


def _model_from_text(text: str) -> cf.DiscriminantModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "imcat-discriminant 1":
        raise IoError("not a discriminant model file")
    classes = tuple(int(v) for v in lines[1].split()[1:])
    mean_x = np.array([float(v) for v in lines[2].split()[1:]])
    mean_v = np.array([float(v) for v in lines[3].split()[1:]])
    gain = []
    thresholds = None
    ridged = False
    for line in lines[4:]:
        kind, *vals = line.split()
        if kind == "gain":
            gain.append([float(v) for v in vals])
        elif kind == "thresholds":
            thresholds = np.array([float(v) for v in vals])
        elif kind == "ridged":
            ridged = vals[0] == "1"
    return cf.DiscriminantModel(mean_x, mean_v, np.array(gain), classes,
                                thresholds, ridged)


def _read_feature_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for line in f:
            if line.strip():
                rows.append([float(v) for v in line.split()])
    if not rows:
        raise EmptyListError("no feature rows")
    arity = len(rows[0])
    if any(len(r) != arity for r in rows):
        raise DimensionMismatchError("ragged feature rows")
    return np.array(rows)


def run_train(args) -> int:
    x = _read_feature_matrix(args.features)
    with open(args.labels) as f:
        labels = [int(line.split()[0]) for line in f if line.strip()]
    if len(labels) != len(x):
        raise DimensionMismatchError("labels and features disagree in count")
    model = cf.fit_discriminant(x, labels, with_thresholds=args.with_thresholds)
    with open(args.out, "w") as f:
        f.write(_model_to_text(model))
    print(f"model over {len(model.classes)} classes"
          + (" (ridged)" if model.ridged else ""))
    return 0


def run_identify(args) -> int:
    with open(args.model) as f:
        model = _model_from_text(f.read())
    x = _read_feature_matrix(args.features)
    for i, row in enumerate(x):
        label, scores = cf.identify(model, row)
        name = "REJECT" if label == cf.REJECT else str(label)
        print(f"{i} {name} " + " ".join(f"{v:.6f}" for v in scores))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imcat",
        description="Image analysis and content-based shape cataloging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--threshold", help="grey threshold or 'auto'")
        p.add_argument("--connectivity", type=int, choices=(4, 8))
        p.add_argument("--precision", type=float,
                       help="vectorization error bound")
        p.add_argument("--background", choices=("dark", "bright"))
        p.add_argument("--attrs", help="attribute columns, e.g. 4,5,6,7")
        p.add_argument("--depth", type=int, help="index depth in bits")
        p.add_argument("--min-surface", type=int, dest="min_surface")

    p = sub.add_parser("analyze", help="segment and measure one image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-prefix", required=True)
    add_config_flags(p)
    p.set_defaults(func=run_analyze)

    p = sub.add_parser("classify", help="thematic conversion of band images")
    p.add_argument("--bands", nargs="*", default=[])
    p.add_argument("--mono", help="single band: classify derivative stack")
    p.add_argument("--order", type=int, default=2, choices=(0, 1, 2))
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_classify)

    p = sub.add_parser("catalog", help="register analyze outputs in an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--polylines", required=True)
    p.add_argument("--image-id", type=int, default=0, dest="image_id")
    p.add_argument("--image", help="embed this PGM and use its id")
    p.add_argument("--bounds", help="per-attribute lo:hi, comma separated")
    p.add_argument("--transform", help="registration transform text file")
    p.set_defaults(func=run_catalog)

    p = sub.add_parser("index", help="build the 2^k-tree index of an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    add_config_flags(p)
    p.set_defaults(func=run_index)

    p = sub.add_parser("query", help="interval, nearest or example query")
    p.add_argument("--archive", required=True)
    p.add_argument("--index", help="reuse attrs/depth of an index file")
    p.add_argument("--mode", required=True,
                   choices=("interval", "nearest", "example"))
    p.add_argument("--interval", help="lo:hi per indexed attribute")
    p.add_argument("--key", help="comma separated attribute values")
    p.add_argument("--probe", help="example image for example mode")
    p.add_argument("--max-results", type=int, default=None, dest="max_results")
    p.add_argument("--extract", help="materialize the answer as a sub-archive")
    add_config_flags(p)
    p.set_defaults(func=run_query)

    p = sub.add_parser("render", help="overlay selected contours on an image")
    p.add_argument("--archive", required=True)
    p.add_argument("--selection", default="all")
    p.add_argument("--image", help="source PGM (default: embedded image)")
    p.add_argument("--image-id", type=int, default=None, dest="image_id")
    p.add_argument("--grey", type=int, default=255)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_render)

    p = sub.add_parser("train", help="fit the discriminant model")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--with-thresholds", action="store_true",
                   dest="with_thresholds")
    p.set_defaults(func=run_train)

    p = sub.add_parser("identify", help="classify feature rows with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=run_identify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ImcatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(type(exc), 1)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, OSError) else 1


if __name__ == "__main__":
    sys.exit(main())
