"""Inversion loop for the ROM and FWI objectives, and internal-wave diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..gramian import cholesky, gramian_from_even_data
from ..scene import PermittivityField
from ..solver import SnapshotSet
from .forward import Problem
from .gauss_newton import GNState, HistoryRow, Model, gauss_newton_step
from .objectives import (DataFactor, fwi_objective_from_data, fwi_residual, rom_jacobian,
                         rom_objective_from_data)
from .regularizer import RegularizerQuadrature

log = logging.getLogger(__name__)

# per-entry squared residual treated as an exact fit (identical data up to round-off)
ROUNDOFF = (1e3 * np.finfo(float).eps) ** 2


@dataclass
class InversionResult:
    alpha: np.ndarray
    history: list
    field: PermittivityField
    iterates: list
    stop_reason: str


def _values(d):
    return np.asarray(getattr(d, "values", d), float)


def data_factors(data, M: int, eta) -> list[DataFactor]:
    etas = eta if np.ndim(eta) else [eta] * len(data)
    return [DataFactor.from_series(_values(d), M, float(e)) for d, e in zip(data, etas)]


def build_model(problem: Problem, data, factors, mode: str, regularize: bool = True) -> Model:
    """Residual/Jacobian callbacks over all slow times (index-ordered reduction)."""
    if mode not in ("rom", "fwi"):
        raise ValueError(f"unknown objective {mode!r}")
    series = [_values(d) for d in data]

    def linearize(alpha):
        eps = problem.eps(alpha)
        parts = problem.map_slow_times(lambda s: problem.sensitivity(alpha, s, eps=eps))
        rs, Js = [], []
        for s, (D, dD) in enumerate(parts):
            if mode == "rom":
                r, J = rom_jacobian(D, dD, factors[s])
            else:
                r, J = fwi_residual(D, series[s]), dD
            rs.append(r)
            Js.append(J)
        linearize.last = [p[0] for p in parts]
        return np.concatenate(rs), np.vstack(Js)

    def objective(alpha):
        preds = problem.predict_all(alpha)
        objective.last = preds
        if mode == "rom":
            return rom_objective_from_data(preds, factors)
        return fwi_objective_from_data(preds, series)

    reg = RegularizerQuadrature.build(problem.lattice, problem.grid) if regularize else None
    return Model(linearize, objective, reg, problem.lattice.h)


def invert(problem: Problem, data, mode: str = "rom", iterations: int = 20, eta=0.0,
           regularize: bool = True, tol: float = 1e-4, alpha0=None, callback=None) -> InversionResult:
    """Gauss-Newton from alpha = 0 (or ``alpha0``), recording both objectives per iterate.

    Stops after ``iterations`` updates, when the minimized objective drops by
    less than ``tol`` (relative) over 3 iterations, when it reaches zero, or
    when the line search fails.
    """
    factors = data_factors(data, problem.M, eta)
    series = [_values(d) for d in data]
    model = build_model(problem, data, factors, mode, regularize)
    alpha = np.zeros(problem.lattice.Q) if alpha0 is None else np.asarray(alpha0, float).copy()
    state = GNState(alpha)
    rows: list[HistoryRow] = []
    iterates = [alpha.copy()]
    step, regv = 0.0, 1.0
    stop = "max_iterations"
    chosen = []
    # the minimized objective is normalized by its starting value, which makes
    # the O / h^2 term of the regularizer independent of the data amplitude
    scale = None
    for i in range(iterations + 1):
        last = i == iterations and i > 0
        if last:
            preds = problem.predict_all(state.alpha)
        else:
            r, J = model.linearize(state.alpha)
            preds = model.linearize.last
            if scale is None:
                O_start = float(r @ r)
                scale = 1.0 / O_start if O_start > 0 else 1.0
                scaled = Model(lambda a: None, lambda a: scale * model.objective(a), model.regularizer, model.h)
            r, J = r * np.sqrt(scale), J * np.sqrt(scale)
        O = rom_objective_from_data(preds, factors)
        Of = fwi_objective_from_data(preds, series)
        rows.append(HistoryRow(i, O, Of, step, regv))
        if callback is not None:
            callback(i, state.alpha, rows[-1])
        log.info("iteration %d: O=%.6g O_fwi=%.6g step=%.3g R=%.6g", i, O, Of, step, regv)
        chosen.append(O if mode == "rom" else Of)
        if last or i == iterations:
            break
        # B is dimensionless; the FWI misfit is measured against the data energy
        ref = r.size if mode == "rom" else sum(float(d @ d) for d in series)
        if chosen[-1] <= ROUNDOFF * ref:
            stop = "zero_objective"
            break
        if i >= 3 and chosen[i - 3] - chosen[i] < tol * chosen[i - 3]:
            stop = "stalled"
            break
        state.objective = scale * chosen[-1]
        _, step, new_state, regv = gauss_newton_step(state, scaled, r, J)
        if step == 0.0:
            stop = "line_search_failed"
            break
        state = new_state
        iterates.append(state.alpha.copy())
    return InversionResult(state.alpha, rows, problem.eps(state.alpha), iterates, stop)


@dataclass
class InternalWaves:
    waves: SnapshotSet      # data-consistent internal waves U R(pred)^{-1} R_s
    search: np.ndarray      # snapshots U at the search medium, (M, nx, ny)
    R_pred: np.ndarray


def internal_wave_snapshots(problem: Problem, alpha, s: int, R_data: np.ndarray, eta: float = 0.0) -> InternalWaves:
    """U~ = U(alpha) R(alpha)^{-1} R_s without forming the orthonormal basis."""
    M = problem.M
    snaps = problem.solve(alpha, s, keep=list(range(M)))
    U = snaps.snapshots
    Rp = cholesky(gramian_from_even_data(snaps.data, M, eta)).R
    C = linalg.solve_triangular(Rp, np.asarray(R_data, float), lower=False)
    Ut = np.tensordot(C.T, U, axes=1)
    g = problem.grid
    d = np.array([g.inner(problem.u0[s], Ut[j]) for j in range(M)])
    waves = SnapshotSet(g, problem.tau, M - 1, snaps.n_sub, snaps.dt, d, list(range(M)), Ut)
    return InternalWaves(waves, U, Rp)
