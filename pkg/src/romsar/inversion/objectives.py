"""ROM and FWI residual blocks, their Jacobians and objective values."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..gramian import cholesky, gramian_from_even_data, toeplitz_hankel_index

log = logging.getLogger(__name__)


def phi(X: np.ndarray) -> np.ndarray:
    """Strict upper triangle plus half the diagonal (acts on the last two axes)."""
    out = np.triu(X, 1)
    d = np.einsum("...ii->...i", X)
    idx = np.arange(X.shape[-1])
    out[..., idx, idx] = 0.5 * d
    return out


def cholesky_sensitivity(G, R: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """dR = Phi(R^{-T} dG R^{-1}) R for R^T R = G; dG may carry leading batch axes."""
    R = np.asarray(R, float)
    if np.any(np.diag(R) == 0):
        raise linalg.LinAlgError("singular Cholesky factor")
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]), lower=False)
    X = Rinv.T @ np.asarray(dG, float) @ Rinv
    return phi(X) @ R


def gramian_derivative(dD: np.ndarray, M: int) -> np.ndarray:
    """dG[q, m, l] = (dD[m + l, q] + dD[|m - l|, q]) / 2 for a (2M-1, Q) data Jacobian."""
    T, H = toeplitz_hankel_index(M)
    dDt = np.asarray(dD, float).T            # (Q, 2M-1)
    return 0.5 * (dDt[:, H] + dDt[:, T])


@dataclass
class DataFactor:
    """Cholesky square root of one slow time's measured Gramian."""

    R: np.ndarray
    Rinv: np.ndarray
    eta: float
    series: np.ndarray

    @classmethod
    def from_series(cls, series, M: int, eta: float = 0.0) -> "DataFactor":
        d = np.asarray(getattr(series, "values", series), float)
        R = cholesky(gramian_from_even_data(d, M, eta)).R
        Rinv = linalg.solve_triangular(R, np.eye(M), lower=False)
        cond = np.linalg.cond(R)
        if cond > 1e12:
            log.warning("data factor is ill conditioned (cond %.3g); no truncation applied", cond)
        return cls(R, Rinv, float(eta), d[: 2 * M - 1].copy())

    @property
    def M(self) -> int:
        return self.R.shape[0]


def rom_block(D_pred, factor: DataFactor) -> tuple[np.ndarray, np.ndarray]:
    """B = I - R(pred) R_s^{-1} and the predicted factor R(pred)."""
    M = factor.M
    Rp = cholesky(gramian_from_even_data(D_pred, M, factor.eta)).R
    return np.eye(M) - Rp @ factor.Rinv, Rp


def rom_residual(D_pred, factor: DataFactor) -> np.ndarray:
    B, _ = rom_block(D_pred, factor)
    return B[np.triu_indices(factor.M)]


def rom_jacobian(D_pred, dD, factor: DataFactor) -> tuple[np.ndarray, np.ndarray]:
    """(residual, Jacobian) of the upper-triangular entries of B; Jacobian is (M(M+1)/2, Q)."""
    M = factor.M
    B, Rp = rom_block(D_pred, factor)
    dG = gramian_derivative(dD, M)
    dD0 = np.asarray(dD)[0]
    if np.any(dD0 != 0):
        # the boosted lag 0 enters (0, 0) through both terms and the diagonal through one
        dG[:, 0, 0] += 0.5 * factor.eta * dD0
        idx = np.arange(M)
        dG[:, idx, idx] += 0.5 * factor.eta * dD0[:, None]
    dR = cholesky_sensitivity(None, Rp, dG)
    dB = -dR @ factor.Rinv
    iu = np.triu_indices(M)
    return B[iu], dB[:, iu[0], iu[1]].T


def fwi_residual(D_pred, series) -> np.ndarray:
    d = np.asarray(getattr(series, "values", series), float)
    return np.asarray(D_pred, float)[: d.size] - d


def rom_objective_from_data(D_preds, factors) -> float:
    """sum_s |I - R_s(pred) R_s^{-1}|_F^2, summed in slow-time order."""
    total = 0.0
    for D, f in zip(D_preds, factors):
        B, _ = rom_block(D, f)
        total += float(np.sum(B * B))
    return total


def fwi_objective_from_data(D_preds, data) -> float:
    total = 0.0
    for D, d in zip(D_preds, data):
        r = fwi_residual(D, d)
        total += float(np.sum(r * r))
    return total


def rom_objective(problem, alpha, factors) -> float:
    return rom_objective_from_data(problem.predict_all(alpha), factors)


def fwi_objective(problem, alpha, data) -> float:
    return fwi_objective_from_data(problem.predict_all(alpha), data)
