"""End-to-end acceptance checks; each test records one PASS/FAIL line (see conftest)."""

import functools
import math
import time

import numpy as np
import pytest

from romsar.beam import BeamParams, SlowTimeGeometry, beam_radius, initial_condition
from romsar.cli import main
from romsar.config import preset
from romsar.gramian import choose_eta
from romsar.inversion import read_history_csv
from romsar.pipeline import build_experiment, noise_from_config, relative_error, run_inversion, synthesize
from romsar.scene import Grid2D, PermittivityField
from romsar.solver import WaveSolver
from romsar.toy import CosineToy
from romsar.validate import (check_cholesky_sensitivity, check_energy, check_internal_waves,
                             check_regularizer_unity, check_rom_jacobian, check_even_gramian, toy_raw_relation_residual)

THREE_BUMPS = [[0.3, 0.3, 0.4], [-0.5, -0.2, 0.3], [0.2, -0.6, 0.35]]


@functools.lru_cache
def ci_crack():
    exp = build_experiment(preset("ci"))
    return exp, synthesize(exp)


def _monotone(v):
    return all(b <= a for a, b in zip(v, v[1:]))


# 1 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_gramian_identity_desk(report):
    exp = build_experiment(preset("desk"), pml=False)
    t = time.perf_counter()
    r = check_even_gramian(exp, 0)
    dt = time.perf_counter() - t
    ok = r.passed and dt < 60
    report(1, ok, f"even-data Gramian vs snapshot Gramian (desk, no PML): rel Frobenius {r.value:.2e} "
                  f"(< 1e-11), {dt:.1f} s per slow time (< 60 s)")
    assert r.passed and dt < 60


# 2, 3 --------------------------------------------------------------------------

@pytest.mark.slow
def test_internal_wave_data_fit(report):
    exp, _ = ci_crack()
    fit, _ = check_internal_waves(exp.problem, seed=11)
    report(2, fit.passed, f"internal-wave Gramian vs data Gramian at random alpha: {fit.value:.2e} (< 1e-10)")
    assert fit.passed


@pytest.mark.slow
def test_solution_misfit_identity(report):
    exp, _ = ci_crack()
    vals = [check_internal_waves(exp.problem, seed=s)[1].value for s in (0, 1, 2)]
    ok = max(vals) < 1e-9
    report(3, ok, f"field misfit equals factor misfit, 3 random alpha: worst {max(vals):.2e} (< 1e-9)")
    assert ok


# 4 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_gradient_correctness(report):
    exp, _ = ci_crack()
    jac = check_rom_jacobian(directions=10, problem=exp.problem)
    chol = check_cholesky_sensitivity(trials=5, n=8)
    ok = jac.passed and chol.passed
    report(4, ok, f"ROM Jacobian vs central FD, 10 directions: {jac.value:.2e} (< 1e-4); "
                  f"Cholesky differential 8x8: {chol.value:.2e} (< 1e-7)")
    assert ok


# 5 -----------------------------------------------------------------------------

def test_energy_conservation(report):
    r = check_energy(M=48)
    report(5, r.passed, f"leapfrog energy drift over 2(M-1) n_sub steps: {r.value:.2e} (< 1e-10)")
    assert r.passed


# 6 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_beam_propagation(report):
    # k_o r0 = 20, 25 points per wavelength, propagated L_R / 2 along the grid diagonal
    h = 1 / 25
    r0 = 20 / (2 * math.pi)
    beam = BeamParams(r0, 0.0, 1.68)
    dist = beam.k_o * r0**2 / 2
    T = dist + 6.0
    geo = SlowTimeGeometry(0, 45.0, (0.0, 0.0), T)
    ry = float(beam_radius(T + dist, beam.k_o, r0, 0.0))
    corners = np.array([sa * geo.axis * (dist + 5) + sn * geo.normal * 3.5 * ry
                        for sa in (-1, 1) for sn in (-1, 1)])
    lo, hi = corners.min(0), corners.max(0)
    g = Grid2D(int((hi[0] - lo[0]) / h), int((hi[1] - lo[1]) / h), h, tuple(lo))
    steps = int(round(dist / (0.7 * h)))
    sol = WaveSolver(PermittivityField.uniform(g), dist / steps)
    st = sol.start(initial_condition(beam, geo, g, T))
    for _ in range(steps):
        sol.step(st)
    # even wave after time dist: mean of the paraxial fields at T + dist and T - dist
    ref = 0.5 * (initial_condition(beam, geo, g, T + dist) + initial_condition(beam, geo, g, T - dist))
    err = np.linalg.norm(st.u_curr - ref) / np.linalg.norm(ref)
    report(6, err < 0.05, f"FDTD vs paraxial beam after L_R/2, k_o r0 = 20: rel L2 {err:.3%} (< 5%)")
    assert err < 0.05


# 7 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_inverse_crime_recovery(report):
    exp = build_experiment(preset("ci", scene={"bumps": THREE_BUMPS}, shapes=[]))
    assert exp.truth_alpha is not None
    data = synthesize(exp)
    res = run_inversion(exp, data, mode="rom", iterations=20)
    obj = [r.objective for r in res.history]
    err = relative_error(exp, res.field)
    ok = _monotone(obj) and err < 0.05 and len(res.history) <= 21
    report(7, ok, f"inverse crime, 3 bumps: O monotone {_monotone(obj)}, final permittivity error "
                  f"{err:.2e} (< 5%) after {len(res.history) - 1} iterations")
    assert ok


# 8 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_convergence_behaviour(report):
    exp, data = ci_crack()
    rom = run_inversion(exp, data, mode="rom", iterations=20)
    fwi = run_inversion(exp, data, mode="fwi", iterations=20)
    r0, f0 = rom.history[0], fwi.history[0]
    rom_O = min(r.objective for r in rom.history) / r0.objective
    rom_F = min(r.objective_fwi for r in rom.history) / r0.objective_fwi
    fwi_F = fwi.history[-1].objective_fwi / f0.objective_fwi
    fwi_O = min(r.objective for r in fwi.history) / f0.objective
    ok = rom_O <= 1 / 3 and rom_F <= 1 / 3 and fwi_F <= 1 / 3 and fwi_O >= 0.5
    ok = ok and _monotone([r.objective for r in rom.history]) and _monotone([r.objective_fwi for r in fwi.history])
    report(8, ok, f"ROM iterates O {rom_O:.3f}, O_FWI {rom_F:.3f} (both <= 1/3); "
                  f"FWI iterates O_FWI {fwi_F:.3f} (<= 1/3), O stays >= {fwi_O:.3f} (>= 0.5)")
    assert ok


# 9 -----------------------------------------------------------------------------

def test_regularizer_unity(report):
    r = check_regularizer_unity(trials=5)
    report(9, r.passed, f"regularizer at zero update, 5 random alpha: |R - 1| = {r.value:.1e} (< 1e-12)")
    assert r.passed


# 10 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_noise_robustness(report):
    exp, clean = ci_crack()
    noisy = synthesize(exp, noise_from_config(exp.cfg, snr=20.0, seed=1))
    etas = [choose_eta(d.values, exp.M) for d in noisy]      # raises if no rung makes G factorable
    base = relative_error(exp, run_inversion(exp, clean, mode="rom", iterations=20).field)
    res = run_inversion(exp, noisy, mode="rom", iterations=20, eta=etas)
    err = relative_error(exp, res.field)
    ok = np.isfinite(err) and err <= 2 * base
    report(10, ok, f"SNR 20, eta by decade rule {sorted(set(etas))}: error {err:.3f} vs noiseless "
                   f"{base:.3f} (<= 2x)")
    assert ok


# 11 ----------------------------------------------------------------------------

def test_raw_data_path(report):
    worst = max(toy_raw_relation_residual(CosineToy.random(T=12.0, seed=s), 0.37, 8) for s in range(3))
    report(11, worst < 1e-12, f"raw-data relation on the cosine toy: {worst:.2e} (< 1e-12)")
    assert worst < 1e-12


# 12 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_determinism_across_threads(report, tmp_path):
    outs = []
    for threads in (1, 8):
        out = tmp_path / f"t{threads}"
        args = ["--config", "configs/ci.toml", "--out", str(out), "--seed", "5", "--noise-snr", "20",
                "--threads", str(threads)]
        assert main(["synth", *args]) == 0
        assert main(["invert", *args, "--iterations", "6"]) == 0
        outs.append(out)
    conv = [(o / "convergence.csv").read_bytes() for o in outs]
    data = [[f.read_bytes() for f in sorted((o / "data").glob("*.csv"))] for o in outs]
    same_conv = conv[0] == conv[1] and len(read_history_csv(outs[0] / "convergence.csv")) > 1
    same_data = len(data[0]) == 5 and data[0] == data[1]
    ok = same_conv and same_data
    report(12, ok, f"threads 1 vs 8: convergence CSVs bitwise equal {same_conv}, data CSVs bitwise equal {same_data}")
    assert ok
