"""Identity and gradient checks shared by the ``validate`` subcommand and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gramian import cholesky, gramian_from_even_data, lambda_matrix
from .inversion import DataFactor, Problem, internal_wave_snapshots, rom_jacobian, rom_residual
from .inversion.objectives import cholesky_sensitivity
from .inversion.regularizer import multiplicative_regularizer
from .scene import Grid2D, PermittivityField, build_lattice
from .solver import WaveSolver, discrete_energy, run_even_wave, substeps
from .toy import CosineToy


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (tol {self.tol:.0e})"


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def small_problem(M: int = 8, n_sub: int = 11, seed: int = 0) -> Problem:
    """A few-second forward problem with one slow time: a modulated Gaussian
    pulse next to a small imaging disk."""
    g = Grid2D(140, 120, 0.04)
    X, Y = g.mesh()
    lat = build_lattice((3.0, 2.2), 0.5, 0.25)
    u0 = np.exp(-((X - 1.2) ** 2 + (Y - 2.2) ** 2) / 0.08) * np.cos(2 * np.pi * X)
    return Problem(g, lat, [u0], 1 / 4.4, M, n_sub)


def random_spd(n: int, rng) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def direct_snapshot_gramian(u0, eps, tau, M, pml=None, n_sub=None, mu=1.0):
    """(data-built Gramian, Gramian of the stored snapshots u(m tau), m < M)."""
    snaps = run_even_wave(u0, eps, tau, 2 * (M - 1), pml, n_sub=n_sub, mu=mu, keep=list(range(M)))
    g = eps.grid
    U = snaps.snapshots.reshape(M, -1)
    direct = (U @ U.T) * g.cell_area
    return gramian_from_even_data(snaps.data, M, 0.0).matrix, direct


def check_even_gramian(exp, s: int = 0) -> CheckResult:
    p = exp.problem
    G, direct = direct_snapshot_gramian(p.u0[s], exp.truth, p.tau, p.M, p.pml, p.n_sub, p.mu)
    return CheckResult("even-data Gramian equals snapshot Gramian", _rel(G, direct), 1e-11)


def check_energy(M: int = 24, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = Grid2D(96, 80, 0.05)
    X, Y = g.mesh()
    v = 1.0 + 0.5 * np.exp(-((X - 2.4) ** 2 + (Y - 2.0) ** 2) / 0.3) + 0.05 * rng.random(g.shape)
    eps = PermittivityField(g, v)
    u0 = np.exp(-((X - 2.0) ** 2 + (Y - 2.0) ** 2) / 0.05)
    tau = 1 / 4.4
    n_sub = substeps(tau, g.spacing, 1.0)
    sol = WaveSolver(eps, tau / n_sub)
    st = sol.start(u0)
    e0 = discrete_energy(st, sol)
    drift = 0.0
    for _ in range(2 * (M - 1) * n_sub):
        sol.step(st)
        drift = max(drift, abs(discrete_energy(st, sol) - e0))
    return CheckResult("leapfrog discrete energy drift", drift / e0, 1e-10)


def check_cholesky_sensitivity(trials: int = 5, n: int = 8, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        G = random_spd(n, rng)
        dG = rng.standard_normal((n, n))
        dG = dG + dG.T
        R = cholesky(G).R
        h = 1e-6
        fd = (cholesky(G + h * dG).R - cholesky(G - h * dG).R) / (2 * h)
        worst = max(worst, _rel(cholesky_sensitivity(G, R, dG), fd))
    return CheckResult("Cholesky differential vs finite differences", worst, 1e-7)


def check_rom_jacobian(directions: int = 3, seed: int = 0, problem: Problem | None = None) -> CheckResult:
    p = small_problem() if problem is None else problem
    rng = np.random.default_rng(seed)
    truth = 0.15 * rng.standard_normal(p.lattice.Q)
    factor = DataFactor.from_series(p.predict(truth, 0), p.M)
    alpha = 0.1 * rng.standard_normal(p.lattice.Q)
    D, dD = p.sensitivity(alpha, 0)
    _, J = rom_jacobian(D, dD, factor)
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(p.lattice.Q)
        h = 1e-4
        fd = (rom_residual(p.predict(alpha + h * v, 0), factor)
              - rom_residual(p.predict(alpha - h * v, 0), factor)) / (2 * h)
        worst = max(worst, _rel(J @ v, fd))
    return CheckResult("ROM residual Jacobian vs finite differences", worst, 1e-4)


def check_regularizer_unity(trials: int = 5, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = Grid2D(100, 100, 0.04)
    lat = build_lattice((2.0, 2.0), 1.0, 0.3)
    worst = 0.0
    for _ in range(trials):
        a = 0.3 * rng.standard_normal(lat.Q)
        O = float(rng.uniform(1e-4, 2.0))
        worst = max(worst, abs(multiplicative_regularizer(a, np.zeros(lat.Q), lat, O, lat.h, g) - 1.0))
    return CheckResult("multiplicative regularizer is one at zero update", worst, 1e-12)


def toy_raw_relation_residual(toy: CosineToy, tau: float, M: int) -> float:
    """|G_ev - [(G + G_0j) - (Lambda + Lambda_0j)] / 4| / |G_ev| on the toy model."""
    raw = toy.raw(tau, 2 * M + 2)
    ue = toy.even_snapshots(tau, M - 1)
    Gev = ue @ ue.T
    U = toy.snapshots(tau, M)
    G = U @ U.T
    L = lambda_matrix(raw, M)
    rhs = np.empty((M, M))
    for m in range(M):
        for j in range(M - m):
            v = 0.25 * (G[m, m + j] + G[0, j]) - 0.25 * (L[m, m + j] + L[0, j])
            rhs[m, m + j] = rhs[m + j, m] = v
    return _rel(rhs, Gev)


def check_raw_path(seed: int = 0) -> CheckResult:
    toy = CosineToy.random(T=12.0, seed=seed)
    return CheckResult("raw-data relation G_ev, G, Lambda (toy model)", toy_raw_relation_residual(toy, 0.37, 8), 1e-12)


def check_internal_waves(problem: Problem | None = None, seed: int = 0) -> tuple[CheckResult, CheckResult]:
    p = small_problem() if problem is None else problem
    rng = np.random.default_rng(seed)
    truth = 0.15 * rng.standard_normal(p.lattice.Q)
    snaps = p.solve(truth, 0, keep=list(range(p.M)))
    Rs = cholesky(gramian_from_even_data(snaps.data, p.M)).R
    alpha = 0.1 * rng.standard_normal(p.lattice.Q)
    iw = internal_wave_snapshots(p, alpha, 0, Rs)
    Ut = iw.waves.snapshots.reshape(p.M, -1)
    Gt = (Ut @ Ut.T) * p.grid.cell_area
    fit = CheckResult("internal-wave Gramian equals data Gramian", _rel(Gt, Rs.T @ Rs), 1e-10)
    U = iw.search.reshape(p.M, -1)
    lhs = float(np.sum((Ut - U) ** 2)) * p.grid.cell_area
    rhs = float(np.sum((Rs - iw.R_pred) ** 2))
    misfit = CheckResult("internal-wave misfit equals factor misfit", abs(lhs - rhs) / rhs, 1e-9)
    return fit, misfit


def run_all(exp=None) -> list[CheckResult]:
    out = []
    if exp is not None:
        out.append(check_even_gramian(exp))
    out.append(check_energy())
    out.append(check_cholesky_sensitivity())
    out.append(check_rom_jacobian())
    out.append(check_regularizer_unity())
    out.append(check_raw_path())
    out.extend(check_internal_waves())
    return out
