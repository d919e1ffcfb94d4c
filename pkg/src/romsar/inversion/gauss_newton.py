"""Gauss-Newton with multiplicative regularization and a backtracking line search."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from ..gramian import CholeskyError
from ..scene import SceneError
from ..solver import SolverError

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 12
LEVENBERG = 1e-12


class GaussNewtonError(RuntimeError):
    pass


@dataclass
class HistoryRow:
    iteration: int
    objective: float        # ROM objective O
    objective_fwi: float    # FWI objective
    step: float
    regularizer: float


@dataclass
class GNState:
    alpha: np.ndarray
    iteration: int = 0
    objective: float = math.nan   # value of the minimized objective at alpha
    history: list = field(default_factory=list)


@dataclass
class Model:
    """Callbacks defining one least-squares problem.

    ``linearize(alpha)`` returns (residual, Jacobian); ``objective(alpha)``
    returns the sum of squared residuals and may raise to signal an
    inadmissible iterate.  ``regularizer`` is None or a
    :class:`RegularizerQuadrature`-like object; ``h`` its length scale.
    """

    linearize: Callable
    objective: Callable
    regularizer: object | None = None
    h: float = 1.0


INADMISSIBLE = (SolverError, SceneError, CholeskyError, np.linalg.LinAlgError, FloatingPointError)


def gauss_newton_step(state: GNState, model: Model, r=None, Jac=None):
    """One regularized GN step; returns (dalpha, step length, new state, reg value).

    A step length of 0 means the line search found no acceptable point.
    """
    alpha = state.alpha
    if r is None:
        r, Jac = model.linearize(alpha)
    O = float(r @ r)
    Q = alpha.size
    if O == 0.0:
        return np.zeros(Q), 0.0, state, 1.0
    JtJ = Jac.T @ Jac
    rhs = Jac.T @ r
    K = None
    if model.regularizer is not None:
        K = model.regularizer.quadratic(alpha, O, model.h)
    if K is not None:
        A = JtJ + O * K
        rhs = rhs + O * (K @ alpha)
    else:
        A = JtJ.copy()
    A[np.diag_indices(Q)] += LEVENBERG * np.trace(A) + 1e-300
    try:
        c, low = linalg.cho_factor(A, lower=False, check_finite=True)
        dalpha = -linalg.cho_solve((c, low), rhs)
    except linalg.LinAlgError:
        try:
            dalpha = -linalg.solve(A, rhs, assume_a="sym")
        except linalg.LinAlgError as exc:
            raise GaussNewtonError(f"normal equations singular (cond ~ {np.linalg.cond(A):.3g})") from exc
    slope = 2.0 * float(rhs @ dalpha)    # directional derivative of O * R at 0
    if not slope < 0:
        log.warning("GN direction is not a descent direction (slope %.3g)", slope)
        return dalpha, 0.0, state, 1.0

    def reg(d):
        if model.regularizer is None:
            return 1.0
        return model.regularizer.value(alpha, d, O, model.h)

    l = 1.0
    for _ in range(MAX_HALVINGS + 1):
        trial = alpha + l * dalpha
        try:
            O_new = float(model.objective(trial))
        except INADMISSIBLE as exc:
            log.info("step %.4g rejected: %s", l, exc)
            l *= 0.5
            continue
        R_new = reg(l * dalpha)
        if np.isfinite(O_new) and O_new * R_new <= O + ARMIJO * l * slope and O_new <= O:
            new = GNState(trial, state.iteration + 1, O_new, state.history)
            return dalpha, l, new, R_new
        l *= 0.5
    return dalpha, 0.0, state, 1.0


def write_history_csv(path, rows, header: dict | None = None) -> None:
    with open(path, "w", newline="") as f:
        for k, v in (header or {}).items():
            f.write(f"# {k}={v}\n")
        w = csv.writer(f)
        w.writerow(["iteration", "objective", "objective_fwi", "step", "regularizer"])
        for r in rows:
            w.writerow([r.iteration, f"{r.objective:.17g}", f"{r.objective_fwi:.17g}",
                        f"{r.step:.17g}", f"{r.regularizer:.17g}"])


def read_history_csv(path) -> list[HistoryRow]:
    rows = []
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    for rec in csv.DictReader(lines):
        rows.append(HistoryRow(int(rec["iteration"]), float(rec["objective"]),
                               float(rec["objective_fwi"]), float(rec["step"]),
                               float(rec["regularizer"])))
    return rows
