"""Paraxial Gaussian beam and the initial state of each slow time.

Non-dimensional units: lengths in central wavelengths, c_o = 1, so the
central wavenumber is k_o = 2*pi and time is measured in periods.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .scene import Grid2D

log = logging.getLogger(__name__)

# e^{-x^2/2} < 1e-8  <=>  |x| > sqrt(2 ln 1e8)
_BAND_SIGMAS = math.sqrt(2.0 * math.log(1e8))


class BeamError(ValueError):
    pass


@dataclass(frozen=True)
class BeamParams:
    r0: float                 # initial radius
    q0: float = 0.0           # initial quadratic phase (lambda^-2)
    T_b: float = 1.68         # pulse half duration
    k_o: float = 2 * math.pi
    c_o: float = 1.0
    n_k: int = 129            # Gauss-Legendre nodes for the wavenumber integral

    def __post_init__(self):
        if not self.r0 > 0:
            raise BeamError("beam radius r0 must be positive")
        if not self.T_b > 0:
            raise BeamError("pulse half duration T_b must be positive")
        if self.k_o <= 5.0 * (self.r0**-4 + self.q0**2) ** 0.25:
            log.warning("beam outside the paraxial regime: k_o=%.3g vs (r0^-4+q0^2)^(1/4)=%.3g",
                        self.k_o, (self.r0**-4 + self.q0**2) ** 0.25)

    @property
    def omega_o(self) -> float:
        return self.k_o * self.c_o

    def envelope(self, omega):
        """Spectrum f(omega) = exp(-omega^2 (T_b/3)^2 / 2)."""
        return np.exp(-0.5 * (np.asarray(omega) * self.T_b / 3.0) ** 2)

    def band(self) -> tuple[float, float]:
        """Wavenumbers where f[c_o (k - k_o)] exceeds 1e-8 of its peak, clipped at k = 0."""
        w = _BAND_SIGMAS / (self.c_o * self.T_b / 3.0)
        return max(self.k_o - w, 0.0), self.k_o + w

    def relative_bandwidth(self, level: float = 0.5) -> float:
        """Full width of f where it exceeds ``level`` of its peak, over omega_o."""
        half = 3.0 * math.sqrt(-2.0 * math.log(level)) / self.T_b
        return 2.0 * half / self.omega_o


@dataclass(frozen=True)
class SlowTimeGeometry:
    """Beam axis at ``theta`` degrees from the +x axis, aimed at ``target``.

    The antenna sits ``range`` behind the target along the axis; local
    coordinates are ``y_s`` along the axis and ``x_s`` to its left.
    """

    s: int
    theta: float
    target: tuple[float, float]
    range: float

    @property
    def axis(self) -> np.ndarray:
        t = math.radians(self.theta)
        return np.array([math.cos(t), math.sin(t)])

    @property
    def normal(self) -> np.ndarray:
        t = math.radians(self.theta)
        return np.array([-math.sin(t), math.cos(t)])

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.target, float) - self.range * self.axis

    def to_local(self, X, Y) -> tuple[np.ndarray, np.ndarray]:
        o = self.origin
        dx, dy = X - o[0], Y - o[1]
        n, a = self.normal, self.axis
        return n[0] * dx + n[1] * dy, a[0] * dx + a[1] * dy


def aperture(S: int, angle_min: float, angle_max: float, target, range_: float) -> list[SlowTimeGeometry]:
    if S < 1:
        raise BeamError("need at least one slow time")
    angles = [0.5 * (angle_min + angle_max)] if S == 1 else np.linspace(angle_min, angle_max, S)
    return [SlowTimeGeometry(s, float(th), (float(target[0]), float(target[1])), float(range_))
            for s, th in enumerate(angles)]


def beam_radius(y, k, r0, q0):
    """r_y = r0 sqrt((1 + q0 y / k)^2 + (y / L_R)^2) with L_R = k r0^2."""
    LR = k * r0**2
    return r0 * np.sqrt((1 + q0 * y / k) ** 2 + (y / LR) ** 2)


def curvature_radius(y, k, r0, q0):
    """Wavefront curvature radius; ``inf`` where the beam is locally collimated."""
    LR = k * r0**2
    bracket = y / LR**2 + (q0 / k) * (1 + q0 * y / k)
    ratio = (beam_radius(y, k, r0, q0) / r0) ** 2
    with np.errstate(divide="ignore"):
        out = np.where(bracket == 0, np.inf, ratio / np.where(bracket == 0, 1.0, bracket))
    return float(out) if np.ndim(out) == 0 else out


def focal_params(r0: float, q0: float, k: float) -> tuple[float, float]:
    """Focal length and waist radius of a beam with negative initial phase."""
    if not q0 < 0:
        raise BeamError("no finite focus: the quadratic phase q0 must be negative")
    L = abs(q0) * k / (q0**2 + r0**-4)
    r = r0 / math.sqrt(1 + q0**2 * r0**4)
    return L, r


def gouy_phase(y, k, r0, q0):
    # phase of the complex amplitude factor (1 + q0 y/k) + i y/L_R; equals
    # arctan(y/L_R) for q0 = 0
    LR = k * r0**2
    return np.arctan2(y / LR, 1 + q0 * y / k)


def _k_nodes(beam: BeamParams, n: int):
    """Quadrature over the band, in the variable kappa = sqrt(k)."""
    klo, khi = beam.band()
    xg, wg = np.polynomial.legendre.leggauss(n)
    a, b = math.sqrt(klo), math.sqrt(khi)
    kappa = 0.5 * (b - a) * xg + 0.5 * (b + a)
    k = kappa**2
    w = 0.5 * (b - a) * wg * 2 * kappa
    return k, w


def beam_field(beam: BeamParams, xs, ys, t: float, derivative: bool = False,
               n_k: int | None = None, amplitude: float = 1.0) -> np.ndarray:
    """Paraxial beam field u(x_s, y_s, t) (or its time derivative).

    u = (1/2pi) Re int dk f[c(k - k_o)] (r0/r_y)^(1/2)
          exp(-i k c t - x^2/(2 r_y^2) + i k x^2/(2 chi) - i gouy/2 + i k y)

    with r_y, chi and the Rayleigh length depending on k.  ``amplitude``
    scales the spectrum.
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    n_k = beam.n_k if n_k is None else n_k
    ks, ws = _k_nodes(beam, n_k)
    c = beam.c_o
    out = np.zeros(np.broadcast(xs, ys).shape)
    x2 = xs * xs
    for k, w in zip(ks, ws):
        fk = amplitude * beam.envelope(c * (k - beam.k_o))
        if fk == 0.0:
            continue
        ry = beam_radius(ys, k, beam.r0, beam.q0)
        chi = curvature_radius(ys, k, beam.r0, beam.q0)
        phase = k * (ys - c * t) + k * x2 / (2 * chi) - 0.5 * gouy_phase(ys, k, beam.r0, beam.q0)
        amp = fk * np.sqrt(beam.r0 / ry) * np.exp(-x2 / (2 * ry * ry))
        if derivative:
            # d/dt brings down -i k c
            term = amp * (k * c) * np.sin(phase)
        else:
            term = amp * np.cos(phase)
        out += w * term
    return out / (2 * math.pi)


def check_even_signal(beam: BeamParams) -> None:
    """The probing signal is even in time iff its spectrum is real; checked numerically."""
    om = np.linspace(0.1, 4.0, 17) * beam.omega_o
    f = beam.envelope(om)
    if not (np.isrealobj(f) and np.allclose(f, beam.envelope(-om), rtol=0, atol=0)):
        raise BeamError("probing signal is not even in time")


def emission_time(beam: BeamParams, geom: SlowTimeGeometry, eps_radius: float) -> float:
    """Time T at which the pulse front reaches the disk of radius ``eps_radius`` around the target."""
    T = (geom.range - eps_radius) / beam.c_o - beam.T_b
    if T <= 2 * beam.T_b:
        raise BeamError(f"standoff range too short: T={T:.3g} must exceed 2 T_b")
    return T


def support_box(beam: BeamParams, geom: SlowTimeGeometry, T: float) -> np.ndarray:
    """Corners (global coordinates) of the 3 r_y by c T_b box around the pulse at time T."""
    y = beam.c_o * T
    ry = float(beam_radius(y, beam.k_o, beam.r0, beam.q0))
    o, a, n = geom.origin, geom.axis, geom.normal
    corners = []
    for sx in (-3 * ry, 3 * ry):
        for sy in (y - beam.c_o * beam.T_b, y + beam.c_o * beam.T_b):
            corners.append(o + sx * n + sy * a)
    return np.array(corners)


def check_homogeneous_support(beam, geom, T, grid: Grid2D, eps_center, eps_radius,
                              pml_cells: int = 0) -> None:
    corners = support_box(beam, geom, T)
    x0, x1, y0, y1 = grid.extent
    m = pml_cells * grid.spacing
    inside = ((corners[:, 0] >= x0 + m) & (corners[:, 0] <= x1 - m)
              & (corners[:, 1] >= y0 + m) & (corners[:, 1] <= y1 - m))
    if not inside.all():
        raise BeamError("initial condition not homogeneous-supported: "
                        f"beam box leaves the interior grid at slow time {geom.s}")
    # the box is convex: it misses the disk iff the disk centre is farther
    # than the radius from the box
    c = np.asarray(eps_center, float)
    o = geom.origin
    rel = c - o
    u = rel @ geom.normal
    v = rel @ geom.axis
    y = beam.c_o * T
    ry = float(beam_radius(y, beam.k_o, beam.r0, beam.q0))
    du = max(abs(u) - 3 * ry, 0.0)
    dv = max(abs(v - y) - beam.c_o * beam.T_b, 0.0)
    if math.hypot(du, dv) < eps_radius * (1 - 1e-9):   # the default T puts the box edge exactly on the disk
        raise BeamError("initial condition not homogeneous-supported: "
                        f"beam box meets the heterogeneous region at slow time {geom.s}")


def initial_condition(beam: BeamParams, geom: SlowTimeGeometry, grid: Grid2D, T: float,
                      n_k: int | None = None, derivative: bool = False,
                      window: float | None = None) -> np.ndarray:
    """Beam field at time T sampled at the cell centres of ``grid``.

    Cells farther than ``window`` from the pulse centre along the axis are
    left at zero; the default window is 14 temporal standard deviations plus
    the wavefront sag, where the envelope is below 1e-40.
    """
    check_even_signal(beam)
    X, Y = grid.mesh()
    xs, ys = geom.to_local(X, Y)
    c = beam.c_o
    if window is None:
        window = 14.0 * c * beam.T_b / 3.0 + 1.0
    sag = xs**2 / (2 * max(c * T, 1.0))
    sel = np.abs(ys - c * T) <= window + sag
    out = np.zeros(grid.shape)
    if sel.any():
        out[sel] = beam_field(beam, xs[sel], ys[sel], T, derivative=derivative, n_k=n_k)
    return out
