"""File formats: the AVOL volume container, adjprior/1 JSON priors, metric reports and traces.

AVOL layout (little-endian throughout)::

    8 bytes   magic b"AVOL0001"
    4 bytes   uint32 header length N
    N bytes   UTF-8 JSON header {dims, spacing, num_classes, kind, dtype[, rng_algorithm]}
    payload   raw values, x fastest then y then z; for prob/logit volumes the
              class index varies fastest within each voxel
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from adjprior.adjacency import AdjCounts, BinaryAdj, PriorAdj
from adjprior.metrics import LabelMetrics, MetricReport
from adjprior.validation import ValidationError
from adjprior.volumes import GridDims, LabelMap, LogitMap, ProbMap, Spacing

MAGIC = b"AVOL0001"
PRIOR_FORMAT = "adjprior/1"
DTYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
KIND_DTYPES = {"label": ("u8", "u16"), "prob": ("f32",), "logit": ("f32",)}
REPORT_COLUMNS = (
    "label", "name", "vol_gt_cm3", "vol_pred_cm3", "err_cm3", "err_pct", "dsc", "hd95_mm",
)


class VolumeFormatError(ValidationError):
    """Base class for malformed AVOL files."""


class BadMagicError(VolumeFormatError):
    pass


class HeaderError(VolumeFormatError):
    pass


class TruncatedPayloadError(VolumeFormatError):
    pass


class PayloadSizeMismatchError(VolumeFormatError):
    pass


class LabelRangeError(VolumeFormatError):
    pass


class PriorFormatError(ValidationError):
    pass


# --- volumes -------------------------------------------------------------

def _encode(v):
    if isinstance(v, LabelMap):
        dtype = "u8" if v.num_classes <= 256 else "u16"
        payload = v.voxels.ravel(order="F").astype(DTYPES[dtype])
        return "label", dtype, v.num_classes, payload
    if isinstance(v, (ProbMap, LogitMap)):
        kind = "prob" if isinstance(v, ProbMap) else "logit"
        payload = np.transpose(v.values, (3, 0, 1, 2)).ravel(order="F").astype(DTYPES["f32"])
        return kind, "f32", v.num_classes, payload
    raise TypeError(f"cannot serialize {type(v).__name__}")


def volume_bytes(v, rng_algorithm=None) -> bytes:
    kind, dtype, num_classes, payload = _encode(v)
    header = {
        "dims": list(v.dims.shape),
        "spacing": list(v.spacing.as_tuple()),
        "num_classes": int(num_classes),
        "kind": kind,
        "dtype": dtype,
    }
    if rng_algorithm is not None:
        header["rng_algorithm"] = str(rng_algorithm)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + payload.tobytes()


def save_volume(v, path, rng_algorithm=None) -> None:
    Path(path).write_bytes(volume_bytes(v, rng_algorithm))


def _parse_header(raw: bytes) -> dict:
    try:
        h = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"unreadable header: {exc}") from None
    if not isinstance(h, dict):
        raise HeaderError("header must be a JSON object")
    for key in ("dims", "spacing", "num_classes", "kind", "dtype"):
        if key not in h:
            raise HeaderError(f"header missing {key!r}")
    kind, dtype = h["kind"], h["dtype"]
    if kind not in KIND_DTYPES:
        raise HeaderError(f"unknown kind {kind!r}")
    if dtype not in KIND_DTYPES[kind]:
        raise HeaderError(f"kind {kind!r} cannot use dtype {dtype!r}")
    try:
        GridDims(*h["dims"])
        Spacing(*h["spacing"])
    except (TypeError, ValidationError) as exc:
        raise HeaderError(f"invalid grid: {exc}") from None
    nc = h["num_classes"]
    if not isinstance(nc, int) or nc < 1:
        raise HeaderError(f"invalid num_classes {nc!r}")
    return h


def parse_volume(data: bytes):
    """Decode AVOL bytes; returns ``(volume, header)``."""
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic")
    if len(data) < len(MAGIC) + 4:
        raise HeaderError("truncated header length")
    (n,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    if len(data) < start + n:
        raise HeaderError("truncated header")
    h = _parse_header(data[start:start + n])
    dims = tuple(h["dims"])
    nc = h["num_classes"]
    dtype = DTYPES[h["dtype"]]
    count = int(np.prod(dims)) * (1 if h["kind"] == "label" else nc)
    payload = data[start + n:]
    expected = count * dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"truncated payload: {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise PayloadSizeMismatchError(
            f"payload has {len(payload) - expected} trailing bytes beyond the header's extent"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    spacing = Spacing(*h["spacing"])
    if h["kind"] == "label":
        vox = flat.reshape(dims, order="F").astype(np.int64)
        if vox.size and vox.max() >= nc:
            raise LabelRangeError(f"label {int(vox.max())} >= num_classes {nc}")
        return LabelMap(vox, nc, spacing), h
    values = flat.reshape((nc,) + dims, order="F").transpose(1, 2, 3, 0).astype(np.float64)
    cls = ProbMap if h["kind"] == "prob" else LogitMap
    return cls(values, spacing), h


def load_volume(path):
    return parse_volume(Path(path).read_bytes())[0]


def read_header(path) -> dict:
    return parse_volume(Path(path).read_bytes())[1]


# --- priors --------------------------------------------------------------

def _prior_kind(m):
    if isinstance(m, PriorAdj):
        return "probabilistic"
    if isinstance(m, BinaryAdj):
        return "binary"
    if isinstance(m, AdjCounts):
        return "counts"
    raise TypeError(f"cannot serialize {type(m).__name__} as a prior")


def _number(x: float) -> str:
    if not math.isfinite(x):
        raise PriorFormatError("matrix entries must be finite")
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return format(float(x), ".17g")


def prior_text(m, labels=None, num_subjects=None) -> str:
    kind = _prior_kind(m)
    if num_subjects is None:
        num_subjects = m.num_subjects if isinstance(m, PriorAdj) else 1
    head = {
        "format": PRIOR_FORMAT,
        "num_classes": m.num_classes,
        "num_subjects": int(num_subjects),
        "kind": kind,
        "labels": list(labels) if labels is not None else None,
    }
    # matrix written by hand so probabilities carry 17 significant digits
    body = json.dumps(head, indent=1)[:-2]
    matrix = ", ".join(_number(v) for v in np.asarray(m.matrix).ravel())
    return body + f',\n "matrix": [{matrix}]\n}}\n'


def save_prior(m, path, labels=None, num_subjects=None) -> None:
    Path(path).write_text(prior_text(m, labels, num_subjects), encoding="utf-8")


def parse_prior(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != PRIOR_FORMAT:
        raise PriorFormatError(f"expected format {PRIOR_FORMAT!r}")
    try:
        c = int(doc["num_classes"])
        n_sub = int(doc["num_subjects"])
        kind = doc["kind"]
        flat = np.asarray(doc["matrix"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise PriorFormatError(f"malformed prior document: {exc}") from None
    if flat.ndim != 1 or flat.size != c * c:
        raise PriorFormatError(f"matrix must hold {c * c} numbers, got {flat.size}")
    labels = doc.get("labels")
    if labels is not None and len(labels) != c:
        raise PriorFormatError(f"labels list has {len(labels)} names for {c} classes")
    m = flat.reshape(c, c)
    if kind == "probabilistic":
        return PriorAdj(m, n_sub)
    if kind == "binary":
        return BinaryAdj(m)
    if kind == "counts":
        return AdjCounts(m)
    raise PriorFormatError(f"unknown kind {kind!r}")


def load_prior(path):
    """Load a prior file; the result type follows its ``kind`` field."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PriorFormatError(f"invalid JSON: {exc}") from None
    return parse_prior(doc)


def load_prior_labels(path):
    return json.loads(Path(path).read_text(encoding="utf-8")).get("labels")


# --- reports and traces --------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(r: MetricReport) -> list:
    return [
        {col: getattr(m, col) for col in REPORT_COLUMNS}
        for m in r.labels
    ]


def save_report(r: MetricReport, path, fmt: str = "json") -> None:
    rows = report_rows(r)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(REPORT_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(_cell(row[c]) for c in REPORT_COLUMNS) + "\n")
    elif fmt == "json":
        doc = {
            "dims": list(r.dims.shape),
            "spacing": list(r.spacing.as_tuple()),
            "labels": rows,
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report(path) -> MetricReport:
    """Read a report written by :func:`save_report` in either format."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = doc["labels"]
        dims, spacing = GridDims(*doc["dims"]), Spacing(*doc["spacing"])
    else:
        rows = []
        for raw in csv.DictReader(text.splitlines()):
            row = {}
            for col in REPORT_COLUMNS:
                cell = raw[col]
                if col == "label":
                    row[col] = int(cell)
                elif col == "name":
                    row[col] = cell
                else:
                    row[col] = float(cell) if cell != "" else None
            rows.append(row)
        dims, spacing = None, None
    metrics = [LabelMetrics(**row) for row in rows]
    return MetricReport(metrics, dims, spacing)


def save_trace(trace, path) -> None:
    from adjprior.phantom import TRACE_COLUMNS

    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in trace:
            fh.write(",".join(_cell(getattr(row, c)) for c in TRACE_COLUMNS) + "\n")
