"""Even-snapshot Gramians from data series, Cholesky square roots, Lambda."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class GramianError(ValueError):
    pass


class CholeskyError(GramianError):
    """Non-positive pivot; carries its index and value."""

    def __init__(self, index: int, value: float):
        super().__init__(f"non-positive pivot {value:.6g} at index {index}; increase the boost eta")
        self.index = index
        self.value = value


@dataclass
class EvenGramian:
    matrix: np.ndarray
    eta: float = 0.0

    @property
    def M(self) -> int:
        return self.matrix.shape[0]


@dataclass
class TriangularFactor:
    R: np.ndarray  # upper triangular, positive diagonal

    @property
    def M(self) -> int:
        return self.R.shape[0]

    def gramian(self) -> np.ndarray:
        return self.R.T @ self.R


def _values(series) -> np.ndarray:
    return np.asarray(getattr(series, "values", series), float)


def toeplitz_hankel_index(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays |m - l| and m + l of an M x M Toeplitz-plus-Hankel matrix."""
    m = np.arange(M)
    return np.abs(m[:, None] - m[None, :]), m[:, None] + m[None, :]


def gramian_from_even_data(series, M: int, eta: float = 0.0) -> EvenGramian:
    """G[m, l] = (D[m + l] + D[|m - l|]) / 2 with D[0] boosted to (1 + eta) D[0]."""
    d = _values(series)
    if M < 1:
        raise GramianError("M must be at least 1")
    if d.size < 2 * M - 1:
        raise GramianError(f"series too short: need {2 * M - 1} lags, got {d.size}")
    if eta < 0:
        raise GramianError("boost eta must be non-negative")
    d = d[: 2 * M - 1].copy()
    d[0] *= 1.0 + eta
    T, H = toeplitz_hankel_index(M)
    return EvenGramian(0.5 * (d[H] + d[T]), float(eta))


def cholesky(G) -> TriangularFactor:
    """Upper-triangular R with R^T R = G; raises :class:`CholeskyError` on a non-positive pivot."""
    A = np.array(getattr(G, "matrix", G), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GramianError("Gramian must be square")
    R, info = linalg.lapack.dpotrf(A, lower=0, clean=1)
    if info == 0:
        return TriangularFactor(R)
    if info < 0:
        raise GramianError(f"LAPACK dpotrf argument error {info}")
    # recompute the failing pivot with a plain outer-product elimination
    n = A.shape[0]
    S = A.copy()
    for k in range(n):
        p = S[k, k]
        if not p > 0:
            raise CholeskyError(k, float(p))
        r = S[k, k + 1:] / np.sqrt(p)
        S[k + 1:, k + 1:] -= np.outer(r, r)
    raise CholeskyError(info - 1, float("nan"))


def min_eigenvalue(G) -> float:
    A = np.asarray(getattr(G, "matrix", G), float)
    return float(linalg.eigvalsh(A, subset_by_index=[0, 0])[0])


ETA_LADDER = (0.0,) + tuple(10.0**k for k in range(-6, 1))


def choose_eta(series, M: int, ladder=ETA_LADDER, rel_floor: float = 1e-10) -> float:
    """Smallest eta on the decade ladder with min eigenvalue > rel_floor * trace / M
    and a successful Cholesky factorization."""
    for eta in ladder:
        G = gramian_from_even_data(series, M, eta)
        lam = min_eigenvalue(G)
        if lam > rel_floor * np.trace(G.matrix) / M:
            try:
                cholesky(G)
            except CholeskyError:
                continue
            return float(eta)
    raise GramianError(f"no boost up to eta={ladder[-1]:g} makes the Gramian positive definite")


def lambda_matrix(raw, M: int) -> np.ndarray:
    """Lambda[m, m+j] = (D(j) + D(-j) - D(2T - (2m+j))) / 2 - (D(2m+j) + D(-(2m+j))),
    lags in units of tau, completed by symmetry."""
    L = np.empty((M, M))
    for m in range(M):
        for j in range(M - m):
            k = 2 * m + j
            v = 0.5 * (raw.D(j) + raw.D(-j) - raw.D2T(-k)) - (raw.D(k) + raw.D(-k))
            L[m, m + j] = L[m + j, m] = v
    return L


def write_matrix_csv(path, A: np.ndarray) -> None:
    with open(path, "w") as f:
        for row in np.atleast_2d(A):
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
