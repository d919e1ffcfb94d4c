"""Forward model over all slow times and adjoint-state data sensitivities."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..scene import Grid2D, Lattice, PermittivityField, _bump_window, rasterize
from ..solver import PmlSpec, SnapshotSet, SolverError, run_even_wave

log = logging.getLogger(__name__)


@dataclass
class Problem:
    """Everything needed to map a coefficient vector to predicted even data.

    ``u0[s]`` is the initial field of slow time s on ``grid``.  The time step
    is fixed by ``n_sub`` for every iterate; an iterate faster than ``c_max``
    violates the CFL bound and is rejected by the solver.
    """

    grid: Grid2D
    lattice: Lattice
    u0: list
    tau: float
    M: int
    n_sub: int
    eps0: float = 1.0
    mu: float = 1.0
    pml: PmlSpec = field(default_factory=PmlSpec.off)
    memory_budget: float = 2e9
    threads: int = 1

    def __post_init__(self):
        self._window = None
        self._basis = None

    @property
    def S(self) -> int:
        return len(self.u0)

    @property
    def J(self) -> int:
        return 2 * (self.M - 1)

    @property
    def dt(self) -> float:
        return self.tau / self.n_sub

    def eps(self, alpha) -> PermittivityField:
        return rasterize(self.lattice, alpha, self.grid, self.eps0)

    # -- sensitivity window ------------------------------------------------
    def window(self) -> tuple[slice, slice]:
        """Union of the bumps' 10 sigma rasterization windows plus a one-cell
        ring for the Laplacian."""
        if self._window is None:
            g, lat = self.grid, self.lattice
            wins = [_bump_window(g, z, 10.0 * lat.sigma) for z in lat.nodes]
            i0 = min(w[0].start for w in wins)
            i1 = max(w[0].stop for w in wins)
            j0 = min(w[1].start for w in wins)
            j1 = max(w[1].stop for w in wins)
            if i0 < 1 or j0 < 1 or i1 > g.nx - 1 or j1 > g.ny - 1:
                raise SolverError("imaging disk plus bump tails must lie inside the grid interior")
            self._window = (slice(i0 - 1, i1 + 1), slice(j0 - 1, j1 + 1))
        return self._window

    def inner_basis(self) -> np.ndarray:
        """Bump values at the inner window cells, shape (cells, Q), truncated
        exactly as the rasterizer truncates them."""
        if self._basis is None:
            g, lat = self.grid, self.lattice
            wx, wy = self.window()
            ix0, iy0 = wx.start + 1, wy.start + 1
            nxi, nyi = wx.stop - wx.start - 2, wy.stop - wy.start - 2
            B = np.zeros((nxi, nyi, lat.Q))
            x, y = g.x, g.y
            s2 = 2.0 * lat.sigma**2
            for q, z in enumerate(lat.nodes):
                si, sj = _bump_window(g, z, 10.0 * lat.sigma)
                gx = np.exp(-(x[si] - z[0]) ** 2 / s2)
                gy = np.exp(-(y[sj] - z[1]) ** 2 / s2)
                B[si.start - ix0:si.stop - ix0, sj.start - iy0:sj.stop - iy0, q] = np.outer(gx, gy)
            self._basis = B.reshape(nxi * nyi, lat.Q)
        return self._basis

    # -- solves ---------------------------------------------------------------
    def solve(self, alpha, s: int, history: bool = False, keep="none",
              eps: PermittivityField | None = None) -> SnapshotSet:
        eps = self.eps(alpha) if eps is None else eps
        return run_even_wave(self.u0[s], eps, self.tau, self.J, self.pml, n_sub=self.n_sub,
                             mu=self.mu, keep=keep,
                             history_window=self.window() if history else None,
                             memory_budget=self.memory_budget)

    def predict(self, alpha, s: int) -> np.ndarray:
        return self.solve(alpha, s).data.copy()

    def map_slow_times(self, fn):
        """fn(s) for every slow time, results ordered by s."""
        if self.threads <= 1 or self.S == 1:
            return [fn(s) for s in range(self.S)]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, range(self.S)))

    def predict_all(self, alpha) -> list[np.ndarray]:
        eps = self.eps(alpha)
        return self.map_slow_times(lambda s: self.solve(alpha, s, eps=eps).data.copy())

    def sensitivity(self, alpha, s: int, eps: PermittivityField | None = None):
        """(D_ev, dD_ev/dalpha) at slow time s; the Jacobian has shape (2M-1, Q)."""
        eps = self.eps(alpha) if eps is None else eps
        snaps = self.solve(alpha, s, history=True, eps=eps)
        return snaps.data.copy(), data_sensitivity_from_history(self, snaps, eps)


def data_sensitivity(problem: Problem, alpha, s: int) -> np.ndarray:
    """dD_ev(j tau)/dalpha_q for j = 0..2(M-1), q = 1..Q."""
    return problem.sensitivity(alpha, s)[1]


def data_sensitivity_from_history(problem: Problem, snaps: SnapshotSet, eps: PermittivityField,
                                  chunk_rows: int = 8) -> np.ndarray:
    """Adjoint-state sensitivities from the stored fine-step history.

    With P = I - (dt^2/2) A the leapfrog iterates are u_k = T_k(P) u0 and
    D(N dt) = <u0, T_N(P) u0>.  Differentiating the Chebyshev recursion gives

        dD = (dt^2/4) d^2 sum_x (a/eps) g_q S_N,
        S_N = sum_{k<N} c_k [v_{N-1-k} L(a u_k) + u_k L(a v_{N-1-k})],

    with v_m = U_m(P) u0 (second kind, v_m = v_{m-2} + 2 u_m), c_0 = 1,
    c_k = 2, L the negative 5-point Laplacian.  The time sums are
    convolutions, done per cell by FFT.
    """
    H = snaps.history
    if H is None:
        raise SolverError("sensitivities need the fine-step history")
    n_sub, J = snaps.n_sub, snaps.J
    N = J * n_sub
    wx, wy = snaps.window
    a_w = 1.0 / np.sqrt(problem.mu * eps.values[wx, wy])
    weight = (a_w / eps.values[wx, wy])[1:-1, 1:-1]
    B = problem.inner_basis()
    Q = B.shape[1]
    nxi, nyi = H.shape[1] - 2, H.shape[2] - 2
    inv_d2 = problem.grid.spacing**-2
    targets = np.arange(1, J + 1) * n_sub - 1   # conv index N_j - 1
    out = np.zeros((J + 1, Q))
    if N == 0:
        return out
    nfft = 1 << int(np.ceil(np.log2(2 * N)))
    c = np.full(N, 2.0)
    c[0] = 1.0
    Bg = B.reshape(nxi, nyi, Q)
    for r0 in range(0, nxi, chunk_rows):
        r1 = min(r0 + chunk_rows, nxi)
        Hc = H[:N, r0:r1 + 2, :]                        # k = 0..N-1 with ring rows
        W = Hc * a_w[None, r0:r1 + 2, :]
        U = Hc[:, 1:-1, 1:-1]
        LU = (4.0 * W[:, 1:-1, 1:-1] - W[:, :-2, 1:-1] - W[:, 2:, 1:-1]
              - W[:, 1:-1, :-2] - W[:, 1:-1, 2:]) * inv_d2
        del W
        P = U.shape[1] * U.shape[2]
        U = U.reshape(N, P)
        LU = LU.reshape(N, P)
        V = np.empty_like(U)
        LV = np.empty_like(LU)
        for arr, src in ((V, U), (LV, LU)):
            arr[0::2] = 2.0 * np.cumsum(src[0::2], axis=0) - src[0]
            arr[1::2] = 2.0 * np.cumsum(src[1::2], axis=0)
        fA = np.fft.rfft(c[:, None] * LU, nfft, axis=0)
        fA *= np.fft.rfft(V, nfft, axis=0)
        fB = np.fft.rfft(c[:, None] * U, nfft, axis=0)
        fB *= np.fft.rfft(LV, nfft, axis=0)
        del U, LU, V, LV
        conv = np.fft.irfft(fA + fB, nfft, axis=0)[targets]   # (J, P)
        del fA, fB
        w = weight[r0:r1].reshape(P)
        out[1:] += (conv * w[None, :]) @ Bg[r0:r1].reshape(P, Q)
    out *= 0.25 * snaps.dt**2 * problem.grid.cell_area
    return out
