"""Two-file grid containers, the sweep report CSV, and PNG export.

A grid container is a pair ``base.json`` + ``base.bin``: the JSON header
describes dims/dtype/layout/kind, the binary payload holds the samples as
32-bit little-endian floats (complex interleaved re, im) in row-major
order, coil-major when a leading coil dimension is present.  The payload
is written and renamed into place before the header, so a visible header
always refers to a complete payload.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .acquisition import MASK_KINDS
from .errors import DimensionError, FormatError, ParameterError

GRID_KINDS = ("image", "kspace", "mask", "maps")

_HEADER_KEYS = ("dims", "dtype", "order", "endian", "kind")
_DTYPES = {"complex64": np.dtype("<c8"), "float32": np.dtype("<f4")}


def _paths(base) -> tuple[str, str]:
    base = os.fspath(base)
    return base + ".json", base + ".bin"


def _replace_into(data: bytes, target: str):
    d = os.path.dirname(os.path.abspath(target))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(target))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_grid(path, grid: np.ndarray, kind: str):
    """Write a grid container (header ``path.json`` + payload ``path.bin``).

    Complex grids are stored as complex64, real ones as float32; both
    reload at that precision.  ``kind`` tags what the grid represents.
    """
    if kind not in GRID_KINDS:
        raise ParameterError(f"unknown grid kind {kind!r}; expected one of {GRID_KINDS}")
    arr = np.asarray(grid)
    if arr.ndim not in (2, 3):
        raise DimensionError(f"grids are 2-D or 3-D (coil-stacked), got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"grid has an empty dimension: shape {arr.shape}")
    if np.iscomplexobj(arr):
        dtype_name, payload = "complex64", np.ascontiguousarray(arr, dtype="<c8")
    else:
        dtype_name, payload = "float32", np.ascontiguousarray(arr.astype(np.float64), dtype="<f4")
    header = {"dims": [int(d) for d in arr.shape], "dtype": dtype_name,
              "order": "row-major", "endian": "little", "kind": kind}
    hpath, bpath = _paths(path)
    _replace_into(payload.tobytes(), bpath)
    _replace_into((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"), hpath)


def load_grid(path, kind: str | None = None) -> np.ndarray:
    """Read a grid container back as complex128 / float64.

    Pass ``kind`` to insist the container holds that kind of grid.  Raises
    :class:`FormatError` naming the offending field on any malformed
    header or payload-length mismatch.
    """
    hpath, bpath = _paths(path)
    try:
        with open(hpath, "rb") as fh:
            header = json.loads(fh.read().decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"header {hpath} is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError(f"header {hpath} must be a JSON object")
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"header field {missing[0]!r} is missing")
    unknown = [k for k in header if k not in _HEADER_KEYS]
    if unknown:
        raise FormatError(f"header field {unknown[0]!r} is not recognized")

    dims = header["dims"]
    if (not isinstance(dims, list) or len(dims) not in (2, 3)
            or not all(isinstance(d, int) and d > 0 for d in dims)):
        raise FormatError(f"header field 'dims' must list 2 or 3 positive sizes, got {dims!r}")
    if header["dtype"] not in _DTYPES:
        raise FormatError(f"header field 'dtype' must be one of {sorted(_DTYPES)}, got {header['dtype']!r}")
    if header["order"] != "row-major":
        raise FormatError(f"header field 'order' must be 'row-major', got {header['order']!r}")
    if header["endian"] != "little":
        raise FormatError(f"header field 'endian' must be 'little', got {header['endian']!r}")
    if header["kind"] not in GRID_KINDS:
        raise FormatError(f"header field 'kind' must be one of {GRID_KINDS}, got {header['kind']!r}")
    if kind is not None and header["kind"] != kind:
        raise FormatError(f"header field 'kind' is {header['kind']!r}, expected {kind!r}")

    dt = _DTYPES[header["dtype"]]
    expected = int(np.prod(dims)) * dt.itemsize
    with open(bpath, "rb") as fh:
        blob = fh.read()
    if len(blob) != expected:
        raise FormatError(
            f"payload {bpath} holds {len(blob)} bytes, dims {dims} require {expected}")
    arr = np.frombuffer(blob, dtype=dt).reshape(dims)
    out_dtype = np.complex128 if header["dtype"] == "complex64" else np.float64
    return arr.astype(out_dtype)


@dataclass(frozen=True)
class SweepRow:
    """One experiment cell of the mask-ratio sweep report."""

    mask_kind: str
    target_ratio: float
    measured_ratio: float
    seed: int
    psnr_db: float
    rel_err: float
    ssim: float
    iters: int
    wall_ms: float


REPORT_COLUMNS = ("mask_kind", "target_ratio", "measured_ratio", "seed",
                  "psnr_db", "rel_err", "ssim", "iters", "wall_ms")


def _row_sort_key(row: SweepRow):
    try:
        kind_rank = MASK_KINDS.index(row.mask_kind)
    except ValueError:
        kind_rank = len(MASK_KINDS)
    return (kind_rank, row.mask_kind, -row.target_ratio)


def write_report_csv(path, rows):
    """Write sweep rows sorted by mask kind, then descending target ratio.

    Non-finite metrics are rendered as ``inf`` / ``-inf`` / ``nan``.
    """
    ordered = sorted(rows, key=_row_sort_key)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in ordered:
                w.writerow([r.mask_kind, repr(float(r.target_ratio)), repr(float(r.measured_ratio)),
                            int(r.seed), repr(float(r.psnr_db)), repr(float(r.rel_err)),
                            repr(float(r.ssim)), int(r.iters), repr(float(r.wall_ms))])
    except OSError as exc:
        raise OSError(f"could not write report {path}: {exc}") from exc


def read_report_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != REPORT_COLUMNS:
            raise FormatError(f"report header {header} does not match {REPORT_COLUMNS}")
        rows = []
        for rec in reader:
            rows.append(SweepRow(
                mask_kind=rec[0], target_ratio=float(rec[1]), measured_ratio=float(rec[2]),
                seed=int(rec[3]), psnr_db=float(rec[4]), rel_err=float(rec[5]),
                ssim=float(rec[6]), iters=int(rec[7]), wall_ms=float(rec[8])))
    return rows


def export_png(path, grid: np.ndarray, window: tuple[float, float] | None = None):
    """Save a real grid as an 8-bit grayscale PNG with linear windowing.

    ``window`` is (min, max); values at or below min map to 0, at or above
    max to 255.  Default window is [0, peak] (or [0, 1] for an all-zero
    grid).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise DimensionError(f"PNG export needs a 2-D real grid, got shape {grid.shape}")
    if window is None:
        peak = float(grid.max()) if grid.size else 0.0
        window = (0.0, peak if peak > 0.0 else 1.0)
    lo, hi = float(window[0]), float(window[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ParameterError(f"window must satisfy min < max, got ({lo}, {hi})")
    unit = np.clip((grid - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.floor(unit * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")
