"""Plain-file outputs: binary PGM snapshots, trace and histogram CSVs, run manifests."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

TRACE_HEADER = ("iter", "fidelity", "perimeter", "total", "volume", "multiplier",
                "phi_change_l2", "wall_ms")
HISTOGRAM_BINS = 64


def write_pgm(path, phi: np.ndarray) -> None:
    """Write ``phi`` as an 8-bit P5 image, ``[0, 1] -> [0, 255]``.

    Array axis 0 is ``x`` and axis 1 is ``y``; the image is stored with
    ``y`` pointing up, i.e. row 0 of the file is the top row ``iy = ny - 1``.
    """
    phi = np.asarray(phi, dtype=float)
    pixels = np.rint(255.0 * np.clip(phi, 0.0, 1.0)).astype(np.uint8)
    raster = np.ascontiguousarray(pixels.T[::-1])
    rows, cols = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm`; returns ``uint8`` values indexed ``[ix, iy]``."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    magic, cols, rows, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5" or maxval != 255:
        raise ValueError(f"unsupported PGM header {tokens}")
    raster = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos + 1)
    return raster.reshape(rows, cols)[::-1].T.copy()


def trace_rows(trace, changes, wall_ms) -> list[dict]:
    """Trace rows for iterations ``1..K`` from reports, L2 changes and timings."""
    return [
        {"iter": k, "fidelity": r.fidelity, "perimeter": r.perimeter, "total": r.total,
         "volume": r.volume, "multiplier": r.multiplier, "phi_change_l2": c, "wall_ms": int(w)}
        for k, (r, c, w) in enumerate(zip(trace, changes, wall_ms), start=1)
    ]


def write_trace_csv(path, rows: Iterable[Mapping], extra: tuple[str, ...] = ()) -> None:
    """Trace CSV with the fixed header plus optional trailing columns.

    Reals are written with ``repr`` precision so reruns compare bit for bit.
    """
    header = TRACE_HEADER + tuple(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(key)) for key in header])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = list(zip(*reader)) or [()] * len(header)
    return {name: np.array([float(v) for v in col]) for name, col in zip(header, cols)}


def histogram(phi: np.ndarray, bins: int = HISTOGRAM_BINS):
    """Counts of ``phi`` over ``bins`` equal bins of ``[0, 1]`` (1 falls in the last bin)."""
    counts, edges = np.histogram(np.clip(phi, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return counts, edges


def write_histogram(path, phi: np.ndarray, bins: int = HISTOGRAM_BINS) -> None:
    counts, edges = histogram(phi, bins)
    total = counts.sum()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("bin_lo", "bin_hi", "count", "fraction"))
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow((_fmt(lo), _fmt(hi), int(c), _fmt(c / total)))


def read_histogram(path) -> dict[str, np.ndarray]:
    return read_trace_csv(path)


def write_manifest(path, params: Mapping[str, object]) -> None:
    """``key = value`` lines, one per resolved parameter, values in TOML/JSON literal form."""
    with open(path, "w") as fh:
        for key in sorted(params):
            fh.write(f"{key} = {_literal(params[key])}\n")


def write_rows_csv(path, header: tuple[str, ...], rows: Iterable[Mapping]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[key]) for key in header])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _literal(v) -> str:
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict, str, bool, int)) or v is None:
        return json.dumps(v, default=_jsonable)
    return json.dumps(str(v))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return str(v)
