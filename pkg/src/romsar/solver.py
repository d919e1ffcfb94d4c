"""Leapfrog FDTD solver for the even wave equation u_tt + A u = 0.

A_h = a (-Lap_h) a with a = 1/sqrt(mu eps) at cell centres and the 5-point
Laplacian, so A_h is symmetric positive semi-definite in the grid inner
product.  Boundaries are homogeneous Dirichlet (reflecting), periodic, or a
Dirichlet wall behind an absorbing layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .scene import Grid2D, PermittivityField

CFL = 0.7


class SolverError(RuntimeError):
    pass


# --- kernels ---------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def _apply_A(u, a, inv_d2, periodic, out, w):
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            w[i, j] = a[i, j] * u[i, j]
    for i in range(nx):
        for j in range(ny):
            c = w[i, j]
            if periodic:
                s = (w[(i - 1) % nx, j] + w[(i + 1) % nx, j]
                     + w[i, (j - 1) % ny] + w[i, (j + 1) % ny])
            else:
                s = 0.0
                if i > 0:
                    s += w[i - 1, j]
                if i < nx - 1:
                    s += w[i + 1, j]
                if j > 0:
                    s += w[i, j - 1]
                if j < ny - 1:
                    s += w[i, j + 1]
            out[i, j] = a[i, j] * (4.0 * c - s) * inv_d2


@nb.njit(cache=True, nogil=True)
def _leapfrog(u, up, a, inv_d2, dt2, periodic, out, w):
    # out = 2 u - up - dt^2 A u
    _apply_A(u, a, inv_d2, periodic, out, w)
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 2.0 * u[i, j] - up[i, j] - dt2 * out[i, j]


@nb.njit(cache=True, nogil=True)
def _leapfrog_dirichlet(u, up, a, inv_d2, dt2, out, wp):
    # wp is (nx+2, ny+2) with a zero ghost frame
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            wp[i + 1, j + 1] = a[i, j] * u[i, j]
    f = dt2 * inv_d2
    for i in range(nx):
        for j in range(ny):
            lap = 4.0 * wp[i + 1, j + 1] - wp[i, j + 1] - wp[i + 2, j + 1] - wp[i + 1, j] - wp[i + 1, j + 2]
            out[i, j] = 2.0 * u[i, j] - up[i, j] - f * a[i, j] * lap


@nb.njit(cache=True, nogil=True)
def _pml_step(u, up, a, inv_d, dt, zx, zy, zxf, zyf, px, py, out, w):
    """Second-order wave equation with auxiliary face fields px, py."""
    nx, ny = u.shape
    inv_d2 = inv_d * inv_d
    _apply_A(u, a, inv_d2, False, out, w)
    # face fields to n + 1/2; w holds the divergence of their average
    for i in range(nx):
        for j in range(ny):
            w[i, j] = 0.0
    for i in range(nx - 1):
        for j in range(ny):
            z = zxf[i]
            c2 = a[i, j] * a[i + 1, j]
            g = (u[i + 1, j] - u[i, j]) * inv_d
            old = px[i, j]
            new = ((1.0 - 0.5 * dt * z) * old + dt * c2 * (zy[j] - z) * g) / (1.0 + 0.5 * dt * z)
            px[i, j] = new
            avg = 0.5 * (old + new) * inv_d
            # divergence: a face adds to the cell on its left, subtracts on its right
            w[i, j] += avg
            w[i + 1, j] -= avg
    for i in range(nx):
        for j in range(ny - 1):
            z = zyf[j]
            c2 = a[i, j] * a[i, j + 1]
            g = (u[i, j + 1] - u[i, j]) * inv_d
            old = py[i, j]
            new = ((1.0 - 0.5 * dt * z) * old + dt * c2 * (zx[i] - z) * g) / (1.0 + 0.5 * dt * z)
            py[i, j] = new
            avg = 0.5 * (old + new) * inv_d
            w[i, j] += avg
            w[i, j + 1] -= avg
    dt2 = dt * dt
    for i in range(nx):
        for j in range(ny):
            s = zx[i] + zy[j]
            p = zx[i] * zy[j]
            num = 2.0 * u[i, j] - (1.0 - 0.5 * dt * s + 0.5 * dt2 * p) * up[i, j] \
                - dt2 * (out[i, j] - w[i, j])
            out[i, j] = num / (1.0 + 0.5 * dt * s + 0.5 * dt2 * p)


# --- types -------------------------------------------------------------------

@dataclass(frozen=True)
class PmlSpec:
    """Absorbing layer of ``width`` cells with a quartic damping profile.

    sigma_max is set so that a normally incident wave loses a factor
    ``reflection`` over one crossing of the layer.  Only kappa_max = 1 (no
    coordinate stretching) is implemented.
    """

    width: int = 0
    enabled: bool = False
    reflection: float = 1e-6
    order: int = 4
    kappa_max: float = 1.0

    def __post_init__(self):
        if self.enabled and self.width < 8:
            raise SolverError(f"PML width must be at least 8 cells, got {self.width}")
        if self.kappa_max != 1.0:
            raise SolverError("only kappa_max = 1 is supported")
        if not 0 < self.reflection < 1:
            raise SolverError("PML reflection target must lie in (0, 1)")

    @classmethod
    def off(cls) -> "PmlSpec":
        return cls(0, False)

    def sigma_max(self, c: float, spacing: float) -> float:
        W = self.width * spacing
        return (self.order + 1) * c * math.log(1.0 / self.reflection) / W

    def profiles(self, n: int, spacing: float, c: float):
        """Damping at cell centres (n,) and interior faces (n-1,) along one axis."""
        if not self.enabled:
            return np.zeros(n), np.zeros(n - 1)
        smax = self.sigma_max(c, spacing)
        W = self.width * spacing

        def prof(pos):
            d = np.maximum(np.maximum(W - pos, pos - (n * spacing - W)), 0.0)
            return smax * (d / W) ** self.order

        centres = (np.arange(n) + 0.5) * spacing
        faces = np.arange(1, n) * spacing
        return prof(centres), prof(faces)


@dataclass
class WaveState:
    u_curr: np.ndarray
    u_prev: np.ndarray
    n: int
    dt: float
    px: np.ndarray | None = None
    py: np.ndarray | None = None

    def copy(self) -> "WaveState":
        return WaveState(self.u_curr.copy(), self.u_prev.copy(), self.n, self.dt,
                         None if self.px is None else self.px.copy(),
                         None if self.py is None else self.py.copy())


@dataclass
class SnapshotSet:
    """Even-wave snapshots on the tau grid.

    ``data[j] = <u_0, u(j tau)>`` for every j = 0..J.  ``snapshots`` holds
    the full fields for ``indices`` (by default all of them).  If a history
    window was requested, ``history[n]`` is the field at fine step n
    restricted to ``window``.
    """

    grid: Grid2D
    tau: float
    J: int
    n_sub: int
    dt: float
    data: np.ndarray
    indices: list[int] = field(default_factory=list)
    snapshots: np.ndarray | None = None
    history: np.ndarray | None = None
    window: tuple[slice, slice] | None = None

    def __getitem__(self, j: int) -> np.ndarray:
        if self.snapshots is None or j not in self.indices:
            raise KeyError(f"snapshot {j} was not recorded")
        return self.snapshots[self.indices.index(j)]


def substeps(tau: float, spacing: float, c_max: float, cfl: float = CFL) -> int:
    """Smallest n_sub with tau / n_sub <= cfl * spacing / c_max."""
    return max(1, int(math.ceil(tau * c_max / (cfl * spacing) - 1e-12)))


class WaveSolver:
    def __init__(self, eps: PermittivityField, dt: float, pml: PmlSpec | None = None,
                 mu: float = 1.0, boundary: str = "dirichlet"):
        if boundary not in ("dirichlet", "periodic"):
            raise SolverError(f"unknown boundary {boundary!r}")
        self.pml = pml or PmlSpec.off()
        if self.pml.enabled and boundary == "periodic":
            raise SolverError("PML requires a Dirichlet outer boundary")
        self.grid = eps.grid
        self.eps = eps
        self.mu = mu
        self.a = 1.0 / np.sqrt(mu * eps.values)
        self.c_max = float(self.a.max())
        bound = CFL * self.grid.spacing / self.c_max
        if not dt > 0 or dt > bound * (1 + 1e-12):
            raise SolverError(f"CFL violated: dt={dt:.6g} exceeds {CFL}*spacing/c_max={bound:.6g}")
        self.dt = float(dt)
        self.periodic = boundary == "periodic"
        self._w = np.empty(self.grid.shape)
        self._wp = np.zeros((self.grid.nx + 2, self.grid.ny + 2))
        if self.pml.enabled:
            d = self.grid.spacing
            co = 1.0 / math.sqrt(mu * eps.eps0)
            self.zx, self.zxf = self.pml.profiles(self.grid.nx, d, co)
            self.zy, self.zyf = self.pml.profiles(self.grid.ny, d, co)

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        _apply_A(np.ascontiguousarray(u, dtype=float), self.a, self.grid.spacing**-2,
                 self.periodic, out, np.empty_like(out))
        return out

    def start(self, u0: np.ndarray) -> WaveState:
        """Zero-velocity start u1 = u0 - (dt^2/2) A u0 (exact for the cosine propagator)."""
        u0 = np.ascontiguousarray(u0, dtype=float)
        if u0.shape != self.grid.shape:
            raise SolverError(f"initial field shape {u0.shape} != grid {self.grid.shape}")
        st = WaveState(u0.copy(), u0.copy(), 0, self.dt)
        if self.pml.enabled:
            st.px = np.zeros((self.grid.nx - 1, self.grid.ny))
            st.py = np.zeros((self.grid.nx, self.grid.ny - 1))
        # a fictitious u^{-1} = u^1 makes the first regular step the Taylor start
        st.u_prev = u0 - 0.5 * self.dt**2 * self.apply_A(u0)
        return st

    def step(self, st: WaveState) -> WaveState:
        if not self.pml.enabled and not self.periodic:
            # the kernel reads u_prev[i, j] only before writing out[i, j]: update in place
            _leapfrog_dirichlet(st.u_curr, st.u_prev, self.a, self.grid.spacing**-2, self.dt**2,
                                st.u_prev, self._wp)
            st.u_prev, st.u_curr = st.u_curr, st.u_prev
            st.n += 1
            return st
        out = np.empty_like(st.u_curr)
        if self.pml.enabled:
            _pml_step(st.u_curr, st.u_prev, self.a, 1.0 / self.grid.spacing, self.dt,
                      self.zx, self.zy, self.zxf, self.zyf, st.px, st.py, out, self._w)
        else:
            _leapfrog(st.u_curr, st.u_prev, self.a, self.grid.spacing**-2, self.dt**2,
                      True, out, self._w)
        st.u_prev, st.u_curr = st.u_curr, out
        st.n += 1
        return st


def leapfrog_step(state: WaveState, eps: PermittivityField, pml: PmlSpec | None = None,
                  mu: float = 1.0, boundary: str = "dirichlet") -> WaveState:
    """One step on a copy of ``state``; convenience wrapper around :class:`WaveSolver`."""
    solver = WaveSolver(eps, state.dt, pml, mu, boundary)
    st = state.copy()
    if pml is not None and pml.enabled and st.px is None:
        st.px = np.zeros((solver.grid.nx - 1, solver.grid.ny))
        st.py = np.zeros((solver.grid.nx, solver.grid.ny - 1))
    solver.step(st)
    if not np.isfinite(st.u_curr).all():
        raise SolverError(f"blow-up at step {st.n}")
    return st


def support_box(u: np.ndarray, margin: int = 0) -> tuple[slice, slice]:
    nz = np.nonzero(u)
    if len(nz[0]) == 0:
        return slice(0, 0), slice(0, 0)
    n0, n1 = u.shape
    return (slice(max(nz[0].min() - margin, 0), min(nz[0].max() + 1 + margin, n0)),
            slice(max(nz[1].min() - margin, 0), min(nz[1].max() + 1 + margin, n1)))


def run_even_wave(u0: np.ndarray, eps: PermittivityField, tau: float, J: int,
                  pml: PmlSpec | None = None, *, n_sub: int | None = None,
                  c_max: float | None = None, mu: float = 1.0, boundary: str = "dirichlet",
                  keep: str | list[int] = "all", history_window: tuple[slice, slice] | None = None,
                  memory_budget: float = 2e9, check_every: int = 50) -> SnapshotSet:
    """Solve with u(0) = u0, u_t(0) = 0 and record on the grid j*tau, j = 0..J.

    ``n_sub`` defaults to the smallest admissible count for the speed bound
    ``c_max`` (default: the fastest cell of ``eps``).  ``keep`` selects which
    full snapshots to store ("all", "none" or a list of indices).
    """
    if J < 0:
        raise SolverError("J must be non-negative")
    grid = eps.grid
    if n_sub is None:
        cm = c_max if c_max is not None else float(np.max(1.0 / np.sqrt(mu * eps.values)))
        n_sub = substeps(tau, grid.spacing, cm)
    dt = tau / n_sub
    solver = WaveSolver(eps, dt, pml, mu, boundary)
    indices = list(range(J + 1)) if keep == "all" else ([] if keep == "none" else sorted(set(keep)))
    if indices and max(indices) > J:
        raise SolverError("requested snapshot index beyond J")
    nfine = J * n_sub
    need = 8.0 * len(indices) * grid.nx * grid.ny
    if history_window is not None:
        hx, hy = history_window
        need += 8.0 * (nfine + 1) * (hx.stop - hx.start) * (hy.stop - hy.start)
    if need > memory_budget:
        raise SolverError(f"snapshot storage {need / 1e9:.2f} GB exceeds the memory budget "
                          f"{memory_budget / 1e9:.2f} GB; reduce M or the domain")

    u0 = np.ascontiguousarray(u0, dtype=float)
    box = support_box(u0)
    u0b = u0[box]
    data = np.zeros(J + 1)
    snaps = np.empty((len(indices),) + grid.shape) if indices else None
    hist = None
    if history_window is not None:
        hist = np.empty((nfine + 1, hx.stop - hx.start, hy.stop - hy.start))
        hist[0] = u0[history_window]

    st = solver.start(u0)
    data[0] = grid.inner(u0b, u0b)
    if indices and indices[0] == 0:
        snaps[0] = u0
    k = 1 if (indices and indices[0] == 0) else 0
    for n in range(1, nfine + 1):
        solver.step(st)
        if hist is not None:
            hist[n] = st.u_curr[history_window]
        if n % n_sub == 0:
            j = n // n_sub
            data[j] = grid.inner(u0b, st.u_curr[box])
            if k < len(indices) and indices[k] == j:
                snaps[k] = st.u_curr
                k += 1
        if n % check_every == 0 or n == nfine:
            if not np.isfinite(st.u_curr).all():
                raise SolverError(f"blow-up at step {n}")
    return SnapshotSet(grid, tau, J, n_sub, dt, data, indices, snaps, hist, history_window)


def discrete_energy(state: WaveState, solver: WaveSolver) -> float:
    """Leapfrog energy 1/2 |(u - u_prev)/dt|^2 + 1/2 <A u, u_prev>; conserved without PML."""
    g = solver.grid
    v = (state.u_curr - state.u_prev) / state.dt
    return 0.5 * g.inner(v, v) + 0.5 * g.inner(solver.apply_A(state.u_curr), state.u_prev)
