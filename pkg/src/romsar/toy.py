"""Small exactly solvable model of the measurement setup.

The first-order system phi_t + L phi = J with L = [[0, B], [-B^T, 0]] has
first component u(t) = sum_k beta_k H(t - t_k) cos((t - t_k) Omega) g when
the source is a train of impulses beta_k delta(t - t_k) g, with
Omega = sqrt(B B^T) and H the Heaviside step with H(0) = 1/2.  Everything
is evaluated in closed form through the eigen-decomposition of Omega, so
the raw-data relations can be checked to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import RawDataSeries


@dataclass
class CosineToy:
    omega: np.ndarray   # (n,) eigenfrequencies of Omega
    W: np.ndarray       # (n, n) orthonormal eigenvectors
    g: np.ndarray       # (n,) spatial profile of the source
    t_k: np.ndarray     # impulse times, symmetric about 0
    beta: np.ndarray    # impulse weights, even in time
    T: float

    @classmethod
    def random(cls, n: int = 12, pulses: int = 3, T: float = 9.0, seed: int = 0) -> "CosineToy":
        rng = np.random.default_rng(seed)
        omega = rng.uniform(0.5, 3.0, n)
        W, _ = np.linalg.qr(rng.standard_normal((n, n)))
        g = rng.standard_normal(n)
        t = np.sort(rng.uniform(0.05, 0.9, pulses))
        b = rng.uniform(0.5, 1.5, pulses)
        t_k = np.concatenate([-t[::-1], t])
        beta = np.concatenate([b[::-1], b])
        return cls(omega, W, g, t_k, beta, T)

    @property
    def T_b(self) -> float:
        return float(np.max(np.abs(self.t_k)))

    def _modal(self, t: float) -> np.ndarray:
        gh = self.W.T @ self.g
        acc = np.zeros_like(self.omega)
        for tk, b in zip(self.t_k, self.beta):
            d = t - tk
            if d < 0:
                continue
            h = 0.5 if d == 0 else 1.0
            acc += b * h * np.cos(d * self.omega)
        return acc * gh

    def u(self, t: float) -> np.ndarray:
        return self.W @ self._modal(t)

    def D(self, t: float) -> float:
        """Source-correlated measurement D(t) = sum_k beta_k <g, u(t + t_k)>."""
        return float(sum(b * (self.g @ self.u(t + tk)) for tk, b in zip(self.t_k, self.beta)))

    def snapshots(self, tau: float, M: int) -> np.ndarray:
        """u(T + m tau), m = 0..M-1, as rows."""
        return np.array([self.u(self.T + m * tau) for m in range(M)])

    def even_snapshots(self, tau: float, J: int) -> np.ndarray:
        return np.array([0.5 * (self.u(self.T + j * tau) + self.u(self.T - j * tau)) for j in range(J + 1)])

    def raw(self, tau: float, K: int) -> RawDataSeries:
        js = np.arange(-K, K + 1)
        near = np.array([self.D(j * tau) for j in js])
        far = np.array([self.D(2 * self.T + j * tau) for j in js])
        return RawDataSeries(near, far, tau, self.T)
