"""Histogram ingestion and result emission.

Grid values are held in lattice index order: ``values[i0, i1]`` is node
``(i0, i1)``.  CSV files map directly (row r, column c is node (r, c)).  PGM
images follow the usual picture convention instead: column c becomes the
first coordinate and image rows run downwards, so row r becomes second
coordinate ``height - 1 - r``.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .newton import SolveResult


class HistogramError(ValueError):
    """Unreadable or invalid histogram input."""


@dataclass(frozen=True)
class InputHistogram:
    values: np.ndarray
    source: str
    format: str

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def n_pts(self) -> int:
        return self.values.shape[0]


def read_histogram_csv(path) -> InputHistogram:
    """One value per row (1D) or rectangular comma-separated rows (2D)."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh)]
    rows = [[c for c in row if c != ""] for row in rows]
    rows = [row for row in rows if row]
    if not rows:
        raise HistogramError(f"{path}: empty file")
    try:
        data = [[float(c) for c in row] for row in rows]
    except ValueError as exc:
        raise HistogramError(f"{path}: {exc}") from None
    widths = {len(row) for row in data}
    if len(widths) != 1:
        raise HistogramError(f"{path}: ragged rows (widths {sorted(widths)})")
    arr = np.array(data)
    if arr.shape[1] == 1 or arr.shape[0] == 1:
        arr = arr.ravel()
    if not np.all(np.isfinite(arr)):
        raise HistogramError(f"{path}: non-finite values")
    if np.any(arr < 0):
        raise HistogramError(f"{path}: negative values")
    return InputHistogram(values=arr, source=str(path), format="csv")


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n\r]*[\n\r]?)*([^\s#]+)")


def _pgm_header(buf: bytes):
    pos, tokens = 0, []
    for _ in range(4):
        match = _PGM_TOKEN.match(buf, pos)
        if match is None:
            raise HistogramError("malformed PGM header")
        tokens.append(match.group(1))
        pos = match.end()
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise HistogramError(f"not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise HistogramError("malformed PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise HistogramError(f"bad PGM dimensions {width}x{height} maxval {maxval}")
    return magic, width, height, maxval, pos


def read_pgm(path) -> InputHistogram:
    """Read a P2 or P5 greymap; intensity v becomes raw mass ``v / maxval``.

    Node ``(i, j)`` of a 2D result is the pixel in column ``i`` counted from
    the left and row ``j`` counted from the bottom, so image rows run down
    the second coordinate.
    """
    path = Path(path)
    buf = path.read_bytes()
    try:
        magic, width, height, maxval, pos = _pgm_header(buf)
    except HistogramError as exc:
        raise HistogramError(f"{path}: {exc}") from None
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        pos += 1
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        if len(buf) - pos < count * dtype.itemsize:
            raise HistogramError(f"{path}: truncated PGM payload")
        pix = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(float)
    else:
        fields = buf[pos:].split()
        if len(fields) < count:
            raise HistogramError(f"{path}: truncated PGM payload")
        pix = np.array([int(f) for f in fields[:count]], dtype=float)
    if np.any(pix > maxval):
        raise HistogramError(f"{path}: pixel exceeds maxval")
    image = pix.reshape(height, width)
    if height == 1 or width == 1:
        values = image.ravel()
    else:
        # column -> first coordinate, rows run down the second coordinate
        values = image[::-1].T.copy()
    return InputHistogram(values=values / maxval, source=str(path), format="pgm")


def read_histogram(path, fmt: str | None = None) -> InputHistogram:
    if fmt is None:
        fmt = "pgm" if str(path).lower().endswith((".pgm", ".pnm")) else "csv"
    if fmt == "pgm":
        return read_pgm(path)
    if fmt == "csv":
        return read_histogram_csv(path)
    raise HistogramError(f"unknown format {fmt!r}")


def normalize_with_floor(h, floor: float = 0.01) -> np.ndarray:
    """Add ``floor * max(raw)`` to every value, then normalize to unit mass.

    Accepts an :class:`InputHistogram` or a raw array; returns a flat array
    in node order.  An all-zero input with a positive floor becomes uniform.
    """
    raw = np.asarray(h.values if isinstance(h, InputHistogram) else h, dtype=float).ravel()
    if floor < 0:
        raise HistogramError("floor must be nonnegative")
    if raw.size == 0 or np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise HistogramError("raw values must be finite and nonnegative")
    peak = raw.max()
    if peak == 0:
        if floor == 0:
            raise HistogramError("all-zero histogram cannot be normalized without a floor")
        return np.full(raw.size, 1.0 / raw.size)
    out = raw + floor * peak
    return out / out.sum()


def write_pgm(path, image: np.ndarray, maxval: int = 65535):
    """Write a P5 greymap from integer intensities in picture (row, col) order."""
    image = np.asarray(image)
    height, width = image.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=dtype).tobytes())


def write_frames(result: SolveResult, out_dir, maxval: int = 65535) -> list[Path]:
    """Write one frame per time level plus ``trace.csv``.

    1D frames are CSV with round-trip exact floats; 2D frames are P5 PGM
    scaled so the largest mass of the whole movie maps to ``maxval``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lat = result.problem.lattice
    written = []
    width = max(4, len(str(result.p.shape[0] - 1)))
    if lat.dimension == 1:
        for l, level in enumerate(result.p):
            path = out / f"frame_{l:0{width}d}.csv"
            path.write_text("".join(f"{v!r}\n" for v in level.tolist()))
            written.append(path)
    else:
        peak = result.p.max()
        for l, level in enumerate(result.p):
            grid = level.reshape(lat.shape)
            image = np.rint(grid.T[::-1] / peak * maxval).astype(np.int64)
            path = out / f"frame_{l:0{width}d}.pgm"
            write_pgm(path, image, maxval)
            written.append(path)
    trace = out / "trace.csv"
    with open(trace, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        for k, f in enumerate(result.trace.tolist()):
            w.writerow([k, repr(f)])
    written.append(trace)
    return written


def run_report(result: SolveResult, extra: dict | None = None) -> dict:
    """Structured run summary with a fixed key order."""
    prob, cfg = result.problem, result.config
    lat = prob.lattice
    report = {
        "config": {
            "beta2": prob.beta2,
            "alpha": cfg.alpha,
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
            "tau": cfg.tau,
            "kkt_tol": cfg.kkt_tol,
            "kinetic_weight": prob.kinetic_weight,
            "time_steps": prob.time.n_interior,
            "dt": prob.time.dt,
            "grid": {
                "dimension": lat.dimension,
                "n_pts": lat.spec.n_pts,
                "domain": [list(ax) for ax in lat.spec.domain],
                "dx": lat.dx,
            },
        },
        "iterations": result.iterations,
        "termination": result.reason,
        "final_objective": result.objective,
        "kinetic": result.kinetic,
        "fisher": result.fisher,
        "distance_estimate": result.distance_estimate,
        "entropy_gap": result.entropy_gap,
        "max_feasibility_residual": float(result.residuals.max()),
        "min_interior_mass": float(result.min_mass.min()),
        "max_mass_error": float(result.mass_error.max()),
        "trace": [float(f) for f in result.trace],
    }
    if extra:
        report.update(extra)
    report["wall_time_s"] = result.wall_time
    return report


def write_report(result: SolveResult, path, extra: dict | None = None) -> dict:
    report = run_report(result, extra)
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
    return report
