"""Field artifacts: exact CSV and 16-bit graymap (binary PGM) images."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import Grid2D, PermittivityField

FORMATS = ("csv", "graymap")
LEVELS = 65535


@dataclass
class ImageArtifact:
    extent: tuple[float, float, float, float]
    vmin: float
    vmax: float
    pixels: np.ndarray          # uint16, row 0 = largest y
    header: dict

    def values(self) -> np.ndarray:
        """Dequantized values on the (nx, ny) cell layout."""
        span = self.vmax - self.vmin
        v = self.vmin + self.pixels.astype(float) * (span / LEVELS if span > 0 else 0.0)
        return v[::-1].T


def _header_lines(field: PermittivityField, header: dict | None) -> list[str]:
    g = field.grid
    head = {"nx": g.nx, "ny": g.ny, "spacing": repr(g.spacing), "origin_x": repr(g.origin[0]),
            "origin_y": repr(g.origin[1]), "eps0": repr(float(field.eps0))}
    head.update(header or {})
    return [f"{k}={v}" for k, v in head.items()]


def emit_field(field: PermittivityField, path, format: str = "csv", header: dict | None = None,
               value_range: tuple[float, float] | None = None) -> Path:
    """Write ``field`` as CSV (exact, 17 significant digits) or as a 16-bit PGM.

    The graymap maps ``value_range`` (default: the field's min and max)
    linearly onto 0..65535; values outside are clipped.  The range, grid
    geometry and ``header`` entries are stored as PGM comment lines.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown field format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    lines = _header_lines(field, header)
    v = np.asarray(field.values, float)
    if format == "csv":
        with open(path, "w") as f:
            for ln in lines:
                f.write(f"# {ln}\n")
            for row in v:
                f.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return path
    vmin, vmax = (float(v.min()), float(v.max())) if value_range is None else map(float, value_range)
    if not vmax >= vmin:
        raise ValueError("value range must satisfy vmin <= vmax")
    span = vmax - vmin
    q = np.zeros(v.shape) if span == 0 else np.clip((v - vmin) / span, 0.0, 1.0) * LEVELS
    img = np.rint(q).astype(">u2").T[::-1]      # rows from top (max y) down, columns along x
    g = field.grid
    with open(path, "wb") as f:
        f.write(b"P5\n")
        for ln in lines + [f"vmin={vmin!r}", f"vmax={vmax!r}", "quantization=linear16"]:
            f.write(f"# {ln}\n".encode())
        f.write(f"{g.nx} {g.ny}\n{LEVELS}\n".encode())
        f.write(np.ascontiguousarray(img).tobytes())
    return path


def read_header(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        for raw in f:
            ln = raw.decode("ascii", "replace").strip()
            if ln.startswith("P5"):
                continue
            if not ln.startswith("#"):
                break
            k, _, v = ln[1:].strip().partition("=")
            out[k.strip()] = v.strip()
    return out


def _grid_from_header(h: dict) -> Grid2D:
    return Grid2D(int(h["nx"]), int(h["ny"]), float(h["spacing"]), (float(h["origin_x"]), float(h["origin_y"])))


def read_field_csv(path) -> PermittivityField:
    h = read_header(path)
    v = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    g = _grid_from_header(h)
    if v.shape != g.shape:
        raise ValueError(f"{path}: data shape {v.shape} does not match header {g.shape}")
    return PermittivityField(g, v, float(h["eps0"]))


def read_graymap(path) -> ImageArtifact:
    data = Path(path).read_bytes()
    h = read_header(path)
    # skip magic, comments, size and maxval tokens
    pos, tokens = 0, []
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    w, hgt, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] != b"P5" or maxval != LEVELS:
        raise ValueError(f"{path}: not a 16-bit binary graymap")
    px = np.frombuffer(data, dtype=">u2", count=w * hgt, offset=pos).reshape(hgt, w).astype(np.uint16)
    g = _grid_from_header(h)
    return ImageArtifact(g.extent, float(h["vmin"]), float(h["vmax"]), px, h)
