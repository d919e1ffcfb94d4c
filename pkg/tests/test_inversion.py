import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from romsar.gramian import cholesky, gramian_from_even_data
from romsar.inversion import (DataFactor, GNState, HistoryRow, Model, Problem, cholesky_sensitivity,
                              data_sensitivity, fwi_objective, fwi_objective_from_data, fwi_residual,
                              gauss_newton_step, internal_wave_snapshots, invert, multiplicative_regularizer,
                              read_history_csv, rom_block, rom_jacobian, rom_objective, rom_objective_from_data,
                              rom_residual, write_history_csv)
from romsar.inversion.regularizer import RegularizerQuadrature
from romsar.scene import Grid2D, build_lattice
from romsar.validate import (check_cholesky_sensitivity, check_internal_waves, check_regularizer_unity,
                             check_rom_jacobian, random_spd, small_problem)


@functools.lru_cache
def problem():
    return small_problem(M=8)


@functools.lru_cache
def truth_and_data():
    p = problem()
    rng = np.random.default_rng(0)
    truth = 0.15 * rng.standard_normal(p.lattice.Q)
    return truth, p.predict_all(truth)


# --- objectives ----------------------------------------------------------------

def test_rom_objective_zero_at_data():
    p = problem()
    truth, data = truth_and_data()
    factors = [DataFactor.from_series(d, p.M) for d in data]
    # R R^-1 = I up to round-off
    assert rom_objective_from_data(data, factors) < 1e-26


def test_rom_objective_half_factor():
    _, data = truth_and_data()
    M = 8
    f = DataFactor.from_series(4.0 * data[0], M)       # R_s = 2 R(pred)
    B, _ = rom_block(data[0], f)
    assert rom_objective_from_data([data[0]], [f]) == pytest.approx(M / 4, rel=1e-12)
    np.testing.assert_allclose(B, 0.5 * np.eye(M), atol=1e-12)


def test_rom_objective_at_truth_vs_background():
    p = problem()
    truth, data = truth_and_data()
    factors = [DataFactor.from_series(d, p.M) for d in data]
    O0 = rom_objective(p, np.zeros(p.lattice.Q), factors)
    assert O0 > 0
    assert rom_objective(p, truth, factors) < 1e-10 * O0
    F0 = fwi_objective(p, np.zeros(p.lattice.Q), data)
    assert fwi_objective(p, truth, data) < 1e-12 * F0


def test_fwi_objective_simple():
    d = np.arange(1.0, 16.0)
    assert fwi_objective_from_data([d], [d]) == 0.0
    assert fwi_objective_from_data([d + 0.3], [d]) == pytest.approx(15 * 0.09, rel=1e-12)
    np.testing.assert_allclose(fwi_residual(d + 1, d), 1.0)


def test_rom_block_is_upper_triangular():
    p = problem()
    _, data = truth_and_data()
    f = DataFactor.from_series(data[0], p.M)
    B, _ = rom_block(p.predict(np.zeros(p.lattice.Q), 0), f)
    np.testing.assert_array_equal(np.tril(B, -1), 0.0)
    assert np.abs(B).max() > 0


def test_rom_residual_invariant_under_amplitude():
    p = problem()
    truth, data = truth_and_data()
    c = 7.3
    ps = Problem(p.grid, p.lattice, [np.sqrt(c) * u for u in p.u0], p.tau, p.M, p.n_sub)
    alpha = 0.05 * np.ones(p.lattice.Q)
    B1 = rom_residual(p.predict(alpha, 0), DataFactor.from_series(data[0], p.M))
    B2 = rom_residual(ps.predict(alpha, 0), DataFactor.from_series(ps.predict(truth, 0), p.M))
    np.testing.assert_allclose(B2, B1, rtol=0, atol=1e-12)


# --- sensitivities -------------------------------------------------------------

def test_rom_jacobian_finite_differences():
    assert check_rom_jacobian(directions=10, problem=problem()).passed


def test_data_sensitivity_finite_differences():
    p = problem()
    rng = np.random.default_rng(4)
    alpha = 0.1 * rng.standard_normal(p.lattice.Q)
    D, dD = p.sensitivity(alpha, 0)
    np.testing.assert_array_equal(D, p.predict(alpha, 0))
    for _ in range(10):
        v = rng.standard_normal(p.lattice.Q)
        step = np.sqrt(np.finfo(float).eps) * max(1.0, np.abs(alpha).max()) / np.linalg.norm(v) * 10
        fd = (p.predict(alpha + step * v, 0) - p.predict(alpha - step * v, 0)) / (2 * step)
        assert np.linalg.norm(dD @ v - fd) / np.linalg.norm(fd) < 1e-4


def test_sensitivity_vanishes_away_from_field():
    # nodes well outside everything the wave can reach have no sensitivity
    h = 0.04
    g = Grid2D(300, 220, h)
    X, Y = g.mesh()
    src = (3.5, 4.4)
    u0 = np.exp(-((X - src[0]) ** 2 + (Y - src[1]) ** 2) / 0.03) * np.cos(2 * np.pi * X)
    lat = build_lattice((7.0, 4.4), 1.5, 0.5)
    p = Problem(g, lat, [u0], 0.1, 4, 4)
    dD = data_sensitivity(p, np.zeros(lat.Q), 0)
    # travel J tau = 0.7, pulse envelope below 1e-12 beyond 0.3
    reach = 0.7 + 0.3
    far = np.hypot(lat.nodes[:, 0] - src[0], lat.nodes[:, 1] - src[1]) > reach + 8 * lat.sigma
    assert far.any()
    assert np.abs(dD[:, far]).max() < 1e-10 * np.abs(dD).max()


def test_mirror_symmetric_sensitivities():
    h = 0.04
    g = Grid2D(130, 110, h, (0.0, -55 * h))      # symmetric about y = 0
    X, Y = g.mesh()
    u0 = np.exp(-((X - 1.2) ** 2 + Y**2) / 0.08) * np.cos(2 * np.pi * X)
    lat = build_lattice((3.0, 0.0), 0.6, 0.25)
    p = Problem(g, lat, [u0], 1 / 4.4, 6, 9)
    dD = data_sensitivity(p, np.zeros(lat.Q), 0)
    scale = np.abs(dD).max()
    pairs = 0
    for q, z in enumerate(lat.nodes):
        d = np.hypot(lat.nodes[:, 0] - z[0], lat.nodes[:, 1] + z[1])
        m = int(np.argmin(d))
        assert d[m] < 1e-12
        if m != q:
            pairs += 1
            np.testing.assert_allclose(dD[:, q], dD[:, m], rtol=0, atol=1e-8 * scale)
    assert pairs > 0


def test_cholesky_sensitivity_identity_case():
    a = 0.7
    np.testing.assert_allclose(cholesky_sensitivity(np.eye(5), np.eye(5), 2 * a * np.eye(5)), a * np.eye(5),
                               atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cholesky_sensitivity_defining_identity(seed):
    rng = np.random.default_rng(seed)
    G = random_spd(6, rng)
    dG = rng.standard_normal((6, 6))
    dG = dG + dG.T
    R = cholesky(G).R
    dR = cholesky_sensitivity(G, R, dG)
    assert np.allclose(np.tril(dR, -1), 0.0)
    np.testing.assert_allclose(dR.T @ R + R.T @ dR, dG, rtol=0, atol=1e-12 * np.abs(dG).max() * 10)


def test_cholesky_sensitivity_finite_differences():
    assert check_cholesky_sensitivity(trials=5, n=8).passed


def test_rom_jacobian_with_boost():
    p = problem()
    _, data = truth_and_data()
    f = DataFactor.from_series(data[0], p.M, eta=0.1)
    rng = np.random.default_rng(2)
    alpha = 0.05 * rng.standard_normal(p.lattice.Q)
    D, dD = p.sensitivity(alpha, 0)
    _, J = rom_jacobian(D, dD, f)
    v = rng.standard_normal(p.lattice.Q)
    s = 1e-4
    fd = (rom_residual(p.predict(alpha + s * v, 0), f) - rom_residual(p.predict(alpha - s * v, 0), f)) / (2 * s)
    assert np.linalg.norm(J @ v - fd) / np.linalg.norm(fd) < 1e-4


# --- regularizer -----------------------------------------------------------------

def _five_node_lattice():
    lat = build_lattice((0.0, 0.0), 0.36, 0.3, anchor=(0.08, 0.05))
    assert lat.Q == 5
    return lat


def test_regularizer_unity():
    assert check_regularizer_unity(trials=5).passed
    lat = _five_node_lattice()
    g = Grid2D(40, 40, 0.025, (-0.5, -0.5))
    assert multiplicative_regularizer(np.zeros(5), np.zeros(5), lat, 0.3, 0.3, g) == 1.0
    assert multiplicative_regularizer(np.zeros(5), np.zeros(5), lat, 0.0, 0.3, g) == 1.0


def _regularizer_oracle(alpha, dalpha, lat, O, h, spacing):
    # independent direct evaluation on a fine cell-centred grid over the disk
    n = int(np.ceil(2 * lat.radius / spacing)) + 2
    xs = lat.center[0] - 0.5 * n * spacing + (np.arange(n) + 0.5) * spacing
    ys = lat.center[1] - 0.5 * n * spacing + (np.arange(n) + 0.5) * spacing
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = np.hypot(X - lat.center[0], Y - lat.center[1]) <= lat.radius
    gx = np.zeros(X.shape)
    gy = np.zeros(X.shape)
    hx = np.zeros(X.shape)
    hy = np.zeros(X.shape)
    for a, b, z in zip(alpha, np.asarray(alpha) + dalpha, lat.nodes):
        e = np.exp(-((X - z[0]) ** 2 + (Y - z[1]) ** 2) / (2 * lat.sigma**2))
        fx = -(X - z[0]) / lat.sigma**2 * e
        fy = -(Y - z[1]) / lat.sigma**2 * e
        gx += a * fx
        gy += a * fy
        hx += b * fx
        hy += b * fy
    area = inside.sum() * spacing**2
    eta = 1.0 / (area * (gx**2 + gy**2 + O / h**2))
    return float(np.sum((eta * (hx**2 + hy**2 + O / h**2))[inside]) * spacing**2)


def test_regularizer_against_refined_quadrature():
    lat = _five_node_lattice()
    rng = np.random.default_rng(7)
    spacing = 1 / 100
    n = int(np.ceil(2 * lat.radius / spacing)) + 2
    g = Grid2D(n, n, spacing, (-0.5 * n * spacing, -0.5 * n * spacing))
    for _ in range(5):
        a = 0.3 * rng.standard_normal(5)
        d = 0.2 * rng.standard_normal(5)
        O = float(rng.uniform(0.05, 1.0))
        got = multiplicative_regularizer(a, d, lat, O, lat.h, g)
        ref = _regularizer_oracle(a, d, lat, O, lat.h, spacing / 4)
        assert got == pytest.approx(ref, rel=1e-3)


def test_regularizer_quadratic_form():
    lat = _five_node_lattice()
    g = Grid2D(40, 40, 0.025, (-0.5, -0.5))
    quad = RegularizerQuadrature.build(lat, g)
    rng = np.random.default_rng(3)
    a, d = rng.standard_normal((2, 5))
    O, h = 0.4, 0.3
    K = quad.quadratic(a, O, h)
    base = quad.value(a, -a, O, h)          # the constant part
    assert quad.value(a, d, O, h) == pytest.approx(base + (a + d) @ K @ (a + d), rel=1e-12)


# --- Gauss-Newton ----------------------------------------------------------------

def _linear_model(A, b):
    return Model(lambda x: (A @ x - b, A), lambda x: float(np.sum((A @ x - b) ** 2)), None, 1.0)


def test_gn_zero_residual():
    A = np.eye(3)
    st0 = GNState(np.array([1.0, 2.0, 3.0]))
    d, l, new, _ = gauss_newton_step(st0, _linear_model(A, A @ st0.alpha))
    assert not d.any() and new is st0


def test_gn_linear_least_squares_one_step():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 6))
    b = rng.standard_normal(30)
    _, l, new, _ = gauss_newton_step(GNState(np.zeros(6)), _linear_model(A, b))
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    assert l == 1.0
    assert np.linalg.norm(A.T @ (A @ new.alpha - b)) < 1e-10
    np.testing.assert_allclose(new.alpha, x_ls, rtol=1e-9)


def test_gn_model_decrease_nonnegative():
    p = problem()
    truth, data = truth_and_data()
    factors = [DataFactor.from_series(d, p.M) for d in data]
    from romsar.inversion import build_model
    model = build_model(p, data, factors, "rom", regularize=True)
    alpha = np.zeros(p.lattice.Q)
    r, J = model.linearize(alpha)
    d, l, new, _ = gauss_newton_step(GNState(alpha), model, r, J)
    assert l > 0
    O = float(r @ r)
    K = model.regularizer.quadratic(alpha, O, model.h)
    m0 = O + O * alpha @ K @ alpha
    m1 = float(np.sum((r + J @ d) ** 2)) + O * (alpha + d) @ K @ (alpha + d)
    assert m0 - m1 >= 0
    assert new.objective <= O


def test_invert_zero_contrast():
    p = problem()
    data = p.predict_all(np.zeros(p.lattice.Q))
    res = invert(p, data, "rom", iterations=3)
    assert not res.alpha.any()
    assert res.history[0].objective < 1e-26 and res.history[0].objective_fwi == 0.0
    assert res.stop_reason == "zero_objective"
    np.testing.assert_array_equal(res.field.values, 1.0)


@pytest.mark.parametrize("mode", ["rom", "fwi"])
def test_invert_monotone_small(mode):
    p = problem()
    _, data = truth_and_data()
    res = invert(p, data, mode, iterations=4)
    key = "objective" if mode == "rom" else "objective_fwi"
    vals = [getattr(r, key) for r in res.history]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0]
    assert res.history[0].step == 0.0 and res.history[0].regularizer == 1.0


def test_invert_zero_iterations():
    p = problem()
    _, data = truth_and_data()
    res = invert(p, data, "rom", iterations=0)
    assert len(res.history) == 1 and not res.alpha.any()


def test_history_csv_round_trip(tmp_path):
    rows = [HistoryRow(0, 1.5, 2.25, 0.0, 1.0), HistoryRow(1, 0.1 / 3, 1e-20, 0.5, 0.999)]
    write_history_csv(tmp_path / "h.csv", rows, {"config_hash": "x"})
    assert read_history_csv(tmp_path / "h.csv") == rows


# --- internal waves ----------------------------------------------------------------

def test_internal_waves_at_truth():
    p = problem()
    truth, data = truth_and_data()
    Rs = cholesky(gramian_from_even_data(data[0], p.M)).R
    iw = internal_wave_snapshots(p, truth, 0, Rs)
    true = p.solve(truth, 0, keep=list(range(p.M))).snapshots
    assert np.linalg.norm(iw.waves.snapshots - true) / np.linalg.norm(true) < 1e-10


def test_internal_waves_fit_and_misfit():
    fit, misfit = check_internal_waves(problem())
    assert fit.passed, fit.line()
    assert misfit.passed, misfit.line()
