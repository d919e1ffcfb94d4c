"""Permittivity models: solver grid, Gaussian-bump lattice and shape scenes.

Lengths are in units of the central wavelength and permittivities in units
of the background value, unless a different ``eps0`` is passed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SceneError(ValueError):
    """Invalid scene, lattice or rasterization request."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centred grid.

    Cell ``(i, j)`` has its centre at ``origin + ((i + 1/2) * spacing,
    (j + 1/2) * spacing)``; arrays on the grid have shape ``(nx, ny)``.
    """

    nx: int
    ny: int
    spacing: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise SceneError(f"grid needs at least 3x3 cells, got {self.nx}x{self.ny}")
        if not self.spacing > 0:
            raise SceneError(f"grid spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(cls, center, size: float, spacing: float) -> "Grid2D":
        """Square grid of side ``size`` (rounded up to whole cells) around ``center``."""
        n = int(np.ceil(size / spacing - 1e-9))
        half = 0.5 * n * spacing
        return cls(n, n, spacing, (center[0] - half, center[1] - half))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.spacing

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.spacing

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the cell edges."""
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.spacing, y0, y0 + self.ny * self.spacing)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def padded(self, cells: int) -> "Grid2D":
        """Same spacing, ``cells`` extra cells on every side."""
        s = self.spacing
        return Grid2D(self.nx + 2 * cells, self.ny + 2 * cells, s,
                      (self.origin[0] - cells * s, self.origin[1] - cells * s))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Grid-weighted L2 inner product (numpy pairwise summation, thread independent)."""
        return float(np.sum(a * b)) * self.cell_area

    def index_of(self, point) -> tuple[int, int]:
        i = int(np.floor((point[0] - self.origin[0]) / self.spacing))
        j = int(np.floor((point[1] - self.origin[1]) / self.spacing))
        return i, j


@dataclass(frozen=True)
class Lattice:
    """Nodes of an equilateral triangular lattice inside the imaging disk."""

    nodes: np.ndarray  # (Q, 2)
    h: float
    sigma: float
    center: tuple[float, float]
    radius: float

    @property
    def Q(self) -> int:
        return len(self.nodes)

    def basis(self, points: np.ndarray) -> np.ndarray:
        """Gaussian bump values, shape ``(len(points), Q)``."""
        d2 = _sqdist(np.asarray(points, float), self.nodes)
        return np.exp(-d2 / (2.0 * self.sigma**2))

    def basis_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """x- and y-derivatives of every bump at ``points``, each ``(len(points), Q)``."""
        points = np.asarray(points, float)
        g = self.basis(points)
        dx = points[:, :1] - self.nodes[None, :, 0]
        dy = points[:, 1:] - self.nodes[None, :, 1]
        s2 = self.sigma**2
        return -dx / s2 * g, -dy / s2 * g

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, float)
        return np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) <= self.radius

    def permute(self, order) -> "Lattice":
        return Lattice(self.nodes[np.asarray(order)], self.h, self.sigma, self.center, self.radius)

    def nearest(self, point) -> int:
        d = np.hypot(self.nodes[:, 0] - point[0], self.nodes[:, 1] - point[1])
        return int(np.argmin(d))


def _sqdist(points: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    dx = points[:, None, 0] - nodes[None, :, 0]
    dy = points[:, None, 1] - nodes[None, :, 1]
    return dx * dx + dy * dy


def build_lattice(center, radius: float, h: float, sigma: float | None = None,
                  anchor=None) -> Lattice:
    """All triangular-lattice nodes within ``radius`` of ``center``.

    The lattice is spanned by ``h*(1, 0)`` and ``h*(1/2, sqrt(3)/2)`` from
    ``anchor`` (default: the centre).  Nodes are ordered row by row along the
    second lattice axis, then along the first.
    """
    if not radius > 0 or not h > 0:
        raise SceneError("lattice radius and spacing must be positive")
    sigma = 0.5 * h if sigma is None else float(sigma)
    cx, cy = float(center[0]), float(center[1])
    ax, ay = (cx, cy) if anchor is None else (float(anchor[0]), float(anchor[1]))
    row = h * np.sqrt(3.0) / 2.0
    dist_anchor = np.hypot(ax - cx, ay - cy)
    jmax = int(np.ceil((radius + dist_anchor) / row)) + 1
    imax = int(np.ceil((radius + dist_anchor) / h)) + jmax + 1
    nodes = []
    for j in range(-jmax, jmax + 1):
        for i in range(-imax, imax + 1):
            x = ax + h * (i + 0.5 * j)
            y = ay + row * j
            if np.hypot(x - cx, y - cy) <= radius * (1 + 1e-12):
                nodes.append((x, y))
    if not nodes:
        raise SceneError("empty lattice: no node falls inside the imaging disk")
    return Lattice(np.array(nodes), float(h), sigma, (cx, cy), float(radius))


def evaluate_permittivity(lattice: Lattice, alpha, points, eps0: float = 1.0) -> np.ndarray:
    """eps0 + sum_q alpha_q exp(-|x - z_q|^2 / (2 sigma^2)) at each point."""
    alpha = np.asarray(alpha, float)
    if alpha.shape != (lattice.Q,):
        raise SceneError(f"coefficient vector has length {alpha.size}, lattice has Q={lattice.Q}")
    points = np.atleast_2d(np.asarray(points, float))
    return eps0 + lattice.basis(points) @ alpha


@dataclass
class PermittivityField:
    grid: Grid2D
    values: np.ndarray
    eps0: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != self.grid.shape:
            raise SceneError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        bad = np.argwhere(~(self.values > 0))
        if len(bad):
            i, j = bad[0]
            raise SceneError(
                f"non-positive permittivity {self.values[i, j]:.6g} at cell ({i}, {j})")

    @classmethod
    def uniform(cls, grid: Grid2D, eps0: float = 1.0) -> "PermittivityField":
        return cls(grid, np.full(grid.shape, float(eps0)), eps0)

    def speed(self, mu: float = 1.0) -> np.ndarray:
        return 1.0 / np.sqrt(mu * self.values)


def _bump_window(grid: Grid2D, node, radius: float):
    i0 = max(int(np.floor((node[0] - radius - grid.origin[0]) / grid.spacing)), 0)
    i1 = min(int(np.ceil((node[0] + radius - grid.origin[0]) / grid.spacing)) + 1, grid.nx)
    j0 = max(int(np.floor((node[1] - radius - grid.origin[1]) / grid.spacing)), 0)
    j1 = min(int(np.ceil((node[1] + radius - grid.origin[1]) / grid.spacing)) + 1, grid.ny)
    return slice(i0, i1), slice(j0, j1)


def contrast_image(lattice: Lattice, alpha, grid: Grid2D) -> np.ndarray:
    """sum_q alpha_q g_q at the cell centres.

    Each bump is summed over a window of 10 sigma, beyond which it is below
    1e-21 of its peak.
    """
    alpha = np.asarray(alpha, float)
    if alpha.shape != (lattice.Q,):
        raise SceneError(f"coefficient vector has length {alpha.size}, lattice has Q={lattice.Q}")
    out = np.zeros(grid.shape)
    x, y = grid.x, grid.y
    w = 10.0 * lattice.sigma
    s2 = 2.0 * lattice.sigma**2
    for a, z in zip(alpha, lattice.nodes):
        if a == 0.0:
            continue
        si, sj = _bump_window(grid, z, w)
        gx = np.exp(-(x[si] - z[0]) ** 2 / s2)
        gy = np.exp(-(y[sj] - z[1]) ** 2 / s2)
        out[si, sj] += a * np.outer(gx, gy)
    return out


def rasterize(lattice: Lattice, alpha, grid: Grid2D, eps0: float = 1.0) -> PermittivityField:
    """Sample the bump expansion at cell centres; raises on non-positive cells."""
    return PermittivityField(grid, eps0 + contrast_image(lattice, alpha, grid), eps0)


# --- shape primitives for ground-truth scenes -----------------------------

@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float
    contrast: float

    def mask(self, X, Y):
        return (X - self.center[0]) ** 2 + (Y - self.center[1]) ** 2 <= self.radius**2


@dataclass(frozen=True)
class Rectangle:
    center: tuple[float, float]
    size: tuple[float, float]
    contrast: float
    angle: float = 0.0  # degrees, counter-clockwise

    def mask(self, X, Y):
        t = np.deg2rad(self.angle)
        dx, dy = X - self.center[0], Y - self.center[1]
        u = np.cos(t) * dx + np.sin(t) * dy
        v = -np.sin(t) * dx + np.cos(t) * dy
        return (np.abs(u) <= 0.5 * self.size[0]) & (np.abs(v) <= 0.5 * self.size[1])


@dataclass(frozen=True)
class Polyline:
    """Thick polyline: every cell within ``width/2`` of a segment."""

    points: tuple[tuple[float, float], ...]
    width: float
    contrast: float

    def mask(self, X, Y):
        pts = np.asarray(self.points, float)
        out = np.zeros(X.shape, bool)
        for p, q in zip(pts[:-1], pts[1:]):
            d = q - p
            L2 = float(d @ d)
            t = np.clip(((X - p[0]) * d[0] + (Y - p[1]) * d[1]) / L2, 0.0, 1.0) if L2 > 0 else 0.0
            out |= (X - p[0] - t * d[0]) ** 2 + (Y - p[1] - t * d[1]) ** 2 <= (0.5 * self.width) ** 2
        return out


@dataclass(frozen=True)
class Bump:
    """Single Gaussian bump; used for smooth non-lattice truths."""

    center: tuple[float, float]
    sigma: float
    contrast: float

    def values(self, X, Y):
        r2 = (X - self.center[0]) ** 2 + (Y - self.center[1]) ** 2
        return np.exp(-r2 / (2 * self.sigma**2))


Shape = Disk | Rectangle | Polyline | Bump


@dataclass
class ShapeScene:
    """Ground truth built from explicit shapes; contrasts add where shapes overlap."""

    shapes: list = field(default_factory=list)
    eps0: float = 1.0

    def rasterize(self, grid: Grid2D) -> PermittivityField:
        X, Y = grid.mesh()
        v = np.full(grid.shape, 1.0)
        for s in self.shapes:
            if isinstance(s, Bump):
                v += s.contrast * s.values(X, Y)
            else:
                v += s.contrast * s.mask(X, Y)
        return PermittivityField(grid, self.eps0 * v, self.eps0)


def shape_from_dict(d: dict):
    kind = d.get("kind")
    contrast = float(d["contrast"])
    if kind == "disk":
        return Disk(tuple(d["center"]), float(d["radius"]), contrast)
    if kind == "rectangle":
        return Rectangle(tuple(d["center"]), tuple(d["size"]), contrast, float(d.get("angle", 0.0)))
    if kind == "polyline":
        return Polyline(tuple(tuple(p) for p in d["points"]), float(d["width"]), contrast)
    if kind == "bump":
        return Bump(tuple(d["center"]), float(d["sigma"]), contrast)
    raise SceneError(f"unknown shape kind {kind!r}")


SHAPE_KEYS = {
    "disk": {"kind", "center", "radius", "contrast"},
    "rectangle": {"kind", "center", "size", "contrast", "angle"},
    "polyline": {"kind", "points", "width", "contrast"},
    "bump": {"kind", "center", "sigma", "contrast"},
}


def lattice_truth(lattice: Lattice, bumps: Sequence[Sequence[float]]) -> np.ndarray:
    """Coefficient vector with ``amplitude`` at the node nearest each ``(x, y, amplitude)``."""
    alpha = np.zeros(lattice.Q)
    for x, y, a in bumps:
        alpha[lattice.nearest((x, y))] += a
    return alpha
