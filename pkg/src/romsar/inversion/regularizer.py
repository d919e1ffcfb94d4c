"""Multiplicative regularization factor on the imaging disk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scene import Grid2D, Lattice


@dataclass
class RegularizerQuadrature:
    """Cell-centre quadrature of the imaging disk with the bump gradients.

    |Omega_im| is taken as the quadrature measure (cells x cell area), so the
    factor is exactly one at zero update.
    """

    gx: np.ndarray   # (cells, Q)
    gy: np.ndarray
    weight: float    # cell area
    area: float

    @classmethod
    def build(cls, lattice: Lattice, grid: Grid2D) -> "RegularizerQuadrature":
        pts = grid.points()
        pts = pts[lattice.contains(pts)]
        if len(pts) == 0:
            raise ValueError("no grid cell inside the imaging disk")
        gx, gy = lattice.basis_gradient(pts)
        return cls(gx, gy, grid.cell_area, len(pts) * grid.cell_area)

    def weights(self, alpha, O_current: float, h: float) -> np.ndarray | None:
        """eta(x) at the quadrature cells; None in the degenerate case O = 0."""
        if not O_current > 0:
            return None
        a = np.asarray(alpha, float)
        ex, ey = self.gx @ a, self.gy @ a
        return 1.0 / (self.area * (ex * ex + ey * ey + O_current / h**2))

    def value(self, alpha, dalpha, O_current: float, h: float) -> float:
        w = self.weights(alpha, O_current, h)
        if w is None or not np.any(dalpha):
            return 1.0
        b = np.asarray(alpha, float) + np.asarray(dalpha, float)
        ex, ey = self.gx @ b, self.gy @ b
        return float(np.sum(w * (ex * ex + ey * ey + O_current / h**2)) * self.weight)

    def quadratic(self, alpha, O_current: float, h: float) -> np.ndarray | None:
        """K with R(d) = (alpha + d)^T K (alpha + d) + const."""
        w = self.weights(alpha, O_current, h)
        if w is None:
            return None
        ww = (w * self.weight)[:, None]
        return self.gx.T @ (ww * self.gx) + self.gy.T @ (ww * self.gy)


def multiplicative_regularizer(alpha, dalpha, lattice: Lattice, O_current: float, h: float,
                               grid: Grid2D) -> float:
    """R = int_im eta(x) [|grad sum (alpha + dalpha) g|^2 + O/h^2] dx with
    eta = [|grad sum alpha g|^2 + O/h^2]^{-1} / |Omega_im|.

    Defined as 1 when O_current = 0 (nothing left to regularize; the weight
    would be singular).
    """
    if O_current < 0:
        raise ValueError("objective value must be non-negative")
    return RegularizerQuadrature.build(lattice, grid).value(alpha, dalpha, O_current, h)
